#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "emonas/autodiff/gradcheck.hpp"
#include "emonas/darts/bilevel.hpp"
#include "emonas/darts/network.hpp"
#include "emonas/darts/search.hpp"
#include "emonas/errors.hpp"

namespace emonas::darts {
namespace {

using space::CnnOp;

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-1, 1);
  return t;
}

ad::ParamId find_param(const ad::ParameterStore& store, const std::string& name) {
  for (auto id : store.all()) {
    if (store.name(id) == name) return id;
  }
  throw std::runtime_error("no parameter " + name);
}

TEST(Config, ReductionPlacement) {
  EXPECT_EQ(default_reduction_positions(3), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(default_reduction_positions(8), (std::vector<std::size_t>{2, 5}));
  EXPECT_TRUE(default_reduction_positions(1).empty());
  NetworkConfig c;
  EXPECT_EQ(c.num_cells, 3u);
  EXPECT_EQ(c.channels, 6u);
  EXPECT_EQ(c.num_nodes, 4u);
  EXPECT_EQ(c.ops.size(), 8u);
  c.reduction_positions = {3};
  EXPECT_THROW(c.validate(), ConfigError);
  c.reduction_positions = {};
  c.num_cells = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, EdgeCounting) {
  EXPECT_EQ(edge_count(4), 14u);
  EXPECT_EQ(edge_count(2), 5u);
  EXPECT_EQ(first_edge(0), 0u);
  EXPECT_EQ(first_edge(1), 2u);
  EXPECT_EQ(first_edge(3), 9u);
}

TEST(MixedOp, EdgeWeightsOfLog2) {
  const Tensor w = edge_weights(Tensor({3}, {std::log(2.0), 0, 0}));
  EXPECT_NEAR(w[0], 0.5, 1e-15);
  EXPECT_NEAR(w[1], 0.25, 1e-15);
  EXPECT_NEAR(w[2], 0.25, 1e-15);
}

struct EdgeFixture {
  ad::ParameterStore store;
  Rng rng{17};
  std::vector<CnnOp> ops;
  MixedEdge edge;
  ad::ParamId x;
  ad::ParamId theta;
  explicit EdgeFixture(std::size_t stride, std::vector<CnnOp> op_set = {})
      : ops(op_set.empty() ? std::vector<CnnOp>(space::kAllCnnOps.begin(), space::kAllCnnOps.end())
                           : std::move(op_set)),
        edge(ops, 4, stride, store, rng, "edge"),
        x(store.add("x", random_tensor({2, 4, 6, 5}, rng))),
        theta(store.add_zeros("theta", {ops.size()})) {}
  Tensor mixed() {
    ad::Tape t(&store);
    return mixed_op_forward(edge, t.param(x), ad::softmax(t.param(theta))).value();
  }
  Tensor candidate(std::size_t o) {
    ad::Tape t(&store);
    const auto& c = edge.candidates()[o];
    return space::cnn_op_apply(c.kind, t.param(x), edge.stride(), c).value();
  }
};

TEST(MixedOp, UniformThetaIsMeanOfCandidates) {
  for (std::size_t stride : {1, 2}) {
    EdgeFixture f(stride);
    const Tensor y = f.mixed();
    Tensor mean(y.shape(), 0.0);
    for (std::size_t o = 0; o < 8; ++o) {
      const Tensor c = f.candidate(o);
      for (std::size_t i = 0; i < c.numel(); ++i) mean[i] += c[i] / 8.0;
    }
    for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], mean[i], 1e-12);
  }
}

TEST(MixedOp, SaturatedSkipIsIdentity) {
  EdgeFixture f(1);
  f.store.value(f.theta)[space::index_of(CnnOp::skip_connect)] = 40;
  const Tensor y = f.mixed();
  const Tensor& x = f.store.value(f.x);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], x[i], 1e-6);
}

TEST(MixedOp, NoneTermIsAdditiveIdentity) {
  EdgeFixture f(1);
  Rng r(3);
  for (auto& v : f.store.value(f.theta).data()) v = r.uniform(-2, 2);
  const Tensor y = f.mixed();
  const Tensor w = edge_weights(f.store.value(f.theta));
  Tensor manual(y.shape(), 0.0);
  for (std::size_t o = 0; o < 7; ++o) {
    const Tensor c = f.candidate(o);
    for (std::size_t i = 0; i < c.numel(); ++i) manual[i] += w[o] * c[i];
  }
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], manual[i], 1e-12);
}

TEST(MixedOp, ThetaGradientMatchesFiniteDifferences) {
  for (std::size_t stride : {1, 2}) {
    EdgeFixture f(stride);
    Rng r(5 + stride);
    for (auto& v : f.store.value(f.theta).data()) v = r.uniform(-1, 1);
    Tensor readout(space::cnn_op_output_shape(f.store.value(f.x).shape(), stride));
    for (auto& v : readout.data()) v = r.uniform(-1, 1);
    auto build = [&](ad::Tape& t) {
      auto y = mixed_op_forward(f.edge, t.param(f.x), ad::softmax(t.param(f.theta)));
      return ad::sum(ad::mul(y, t.constant(readout)));
    };
    auto rep = ad::grad_check(f.store, {f.theta}, build);
    EXPECT_LT(rep.max_rel_error, 1e-3);
    EXPECT_EQ(rep.probes + rep.excluded, 8u);
  }
}

TEST(MixedOp, RejectsWrongWeightCount) {
  EdgeFixture f(1);
  ad::Tape t(&f.store);
  EXPECT_THROW(mixed_op_forward(f.edge, t.param(f.x), t.constant(Tensor({3}, 1.0))), ShapeError);
}

// ---- cells ----

struct CellFixture {
  ad::ParameterStore store;
  Rng rng{23};
  std::vector<CnnOp> ops;
  SearchCell cell;
  ad::ParamId theta;
  CellFixture(std::size_t nodes, std::vector<CnnOp> op_set, CellType type = CellType::normal)
      : ops(std::move(op_set)),
        cell(type, nodes, 3, ops, store, rng, "cell"),
        theta(store.add_zeros("theta", {edge_count(nodes), ops.size()})) {}
  std::vector<Tensor> nodes(const Tensor& s0, const Tensor& s1) {
    ad::Tape t(&store);
    auto n = cell.nodes(t.input("s0", s0), t.input("s1", s1), ad::softmax(t.param(theta)));
    std::vector<Tensor> out;
    for (auto v : n) out.push_back(v.value());
    return out;
  }
  Tensor forward(const Tensor& s0, const Tensor& s1) {
    ad::Tape t(&store);
    return cell.forward(t.input("s0", s0), t.input("s1", s1), ad::softmax(t.param(theta)))
        .value();
  }
};

TEST(Cell, IncomingEdgeCounts) {
  CellFixture f(4, {space::kAllCnnOps.begin(), space::kAllCnnOps.end()}, CellType::reduction);
  ASSERT_EQ(f.cell.edges().size(), 14u);
  for (std::size_t j = 0; j < 4; ++j) {
    for (std::size_t s = 0; s < j + 2; ++s) {
      EXPECT_EQ(f.cell.edges()[first_edge(j) + s].stride(), s < 2 ? 2u : 1u);
    }
  }
}

TEST(Cell, SingleSkipFromPreviousCellPassesThrough) {
  CellFixture f(1, {space::kAllCnnOps.begin(), space::kAllCnnOps.end()});
  Rng r(1);
  const Tensor s0 = random_tensor({2, 3, 4, 4}, r);
  const Tensor s1 = random_tensor({2, 3, 4, 4}, r);
  Tensor& th = f.store.value(f.theta);
  th[0 * 8 + space::index_of(CnnOp::none)] = 40;
  th[1 * 8 + space::index_of(CnnOp::skip_connect)] = 40;
  const Tensor y = f.forward(s0, s1);
  ASSERT_EQ(y.shape(), s1.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], s1[i], 1e-6);
}

TEST(Cell, AllNoneIsZero) {
  CellFixture f(3, {space::kAllCnnOps.begin(), space::kAllCnnOps.end()});
  Rng r(2);
  Tensor& th = f.store.value(f.theta);
  for (std::size_t e = 0; e < edge_count(3); ++e) th[e * 8 + space::index_of(CnnOp::none)] = 1000;
  const Tensor y = f.forward(random_tensor({2, 3, 4, 4}, r), random_tensor({2, 3, 4, 4}, r));
  EXPECT_EQ(y.shape(), (Shape{2, 9, 4, 4}));
  for (auto v : y.data()) EXPECT_EQ(v, 0.0);
}

// Independent window oracles on [C,H,W] planes with a 3x3 window, padding 1.
Tensor oracle_pool(const Tensor& x, bool max) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor out(x.shape());
  for (std::size_t p = 0; p < B * C; ++p) {
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        real acc = max ? -std::numeric_limits<real>::infinity() : 0;
        for (int di = -1; di <= 1; ++di) {
          for (int dj = -1; dj <= 1; ++dj) {
            const long a = static_cast<long>(i) + di, b = static_cast<long>(j) + dj;
            if (a < 0 || b < 0 || a >= static_cast<long>(H) || b >= static_cast<long>(W)) continue;
            const real v = x[p * H * W + a * W + b];
            acc = max ? std::max(acc, v) : acc + v;
          }
        }
        out[p * H * W + i * W + j] = max ? acc : acc / 9.0;
      }
    }
  }
  return out;
}

TEST(Cell, TwoNodeHandEvaluation) {
  const std::vector<CnnOp> ops{CnnOp::max_pool_3x3, CnnOp::avg_pool_3x3, CnnOp::skip_connect,
                               CnnOp::none};
  CellFixture f(2, ops);
  Rng r(9);
  for (auto& v : f.store.value(f.theta).data()) v = r.uniform(-2, 2);
  const Tensor s0 = random_tensor({1, 3, 2, 2}, r);
  const Tensor s1 = random_tensor({1, 3, 2, 2}, r);
  const auto nodes = f.nodes(s0, s1);

  const Tensor w = edge_weights(f.store.value(f.theta));
  auto edge_value = [&](std::size_t e, const Tensor& in) {
    const Tensor mx = oracle_pool(in, true), av = oracle_pool(in, false);
    Tensor out(in.shape(), 0.0);
    for (std::size_t i = 0; i < in.numel(); ++i) {
      out[i] = w[e * 4 + 0] * mx[i] + w[e * 4 + 1] * av[i] + w[e * 4 + 2] * in[i];
    }
    return out;
  };
  auto plus = [](Tensor a, const Tensor& b) {
    for (std::size_t i = 0; i < a.numel(); ++i) a[i] += b[i];
    return a;
  };
  const Tensor n0 = plus(edge_value(0, s0), edge_value(1, s1));
  const Tensor n1 = plus(plus(edge_value(2, s0), edge_value(3, s1)), edge_value(4, n0));
  for (std::size_t i = 0; i < n0.numel(); ++i) {
    EXPECT_NEAR(nodes[0][i], n0[i], 1e-12);
    EXPECT_NEAR(nodes[1][i], n1[i], 1e-12);
  }
}

TEST(Cell, RejectsMismatchedInputs) {
  CellFixture f(2, {CnnOp::skip_connect, CnnOp::none});
  Rng r(1);
  EXPECT_THROW(f.forward(random_tensor({1, 3, 4, 4}, r), random_tensor({1, 3, 2, 2}, r)),
               ShapeError);
  EXPECT_THROW(f.forward(random_tensor({1, 2, 4, 4}, r), random_tensor({1, 2, 4, 4}, r)),
               ShapeError);
}

TEST(Cell, MixedCellGradientMatchesFiniteDifferences) {
  CellFixture f(2, {space::kAllCnnOps.begin(), space::kAllCnnOps.end()});
  Rng r(31);
  for (auto& v : f.store.value(f.theta).data()) v = r.uniform(-1, 1);
  const auto s0 = f.store.add("s0", random_tensor({2, 3, 5, 5}, r));
  const auto s1 = f.store.add("s1", random_tensor({2, 3, 5, 5}, r));
  Tensor readout({2, 6, 5, 5});
  for (auto& v : readout.data()) v = r.uniform(-1, 1);
  auto build = [&](ad::Tape& t) {
    auto y = f.cell.forward(t.param(s0), t.param(s1), ad::softmax(t.param(f.theta)));
    return ad::sum(ad::mul(y, t.constant(readout)));
  };
  auto params = f.store.all();
  auto rep = ad::grad_check(f.store, params, build, {.max_probes = 300, .seed = 4});
  EXPECT_GE(rep.probes, 100u);
  EXPECT_LT(rep.max_rel_error, 1e-3);
}

// ---- networks ----

NetworkConfig tiny_config() {
  NetworkConfig c;
  c.num_cells = 3;
  c.channels = 2;
  c.num_nodes = 2;
  c.input_height = 8;
  c.input_width = 8;
  return c;
}

TEST(Network, DefaultLogitShapeAndParameterCount) {
  NetworkConfig c;
  SearchNetwork net(c, 1);
  // supernet weights at (L=3, C=6): the reported figure is 0.13M
  EXPECT_GT(net.weight_count(), 0.7 * 0.13e6);
  EXPECT_LT(net.weight_count(), 1.3 * 0.13e6);
  Rng r(1);
  Tensor one = random_tensor({1, 1, 140, 140}, r);
  Tensor two({2, 1, 140, 140});
  std::copy(one.data().begin(), one.data().end(), two.raw());
  std::copy(one.data().begin(), one.data().end(), two.raw() + one.numel());
  ad::Tape t(&net.store());
  t.set_grad_enabled(false);
  const Tensor logits = net.forward(t, two).value();
  ASSERT_EQ(logits.shape(), (Shape{2, 4}));
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(logits[k], logits[4 + k]);
}

TEST(Network, SingleMiddleReductionShape) {
  NetworkConfig c;
  c.reduction_positions = {1};
  c.input_pool = 4;
  SearchNetwork net(c, 2);
  Rng r(1);
  ad::Tape t(&net.store());
  t.set_grad_enabled(false);
  EXPECT_EQ(net.forward(t, random_tensor({3, 1, 140, 140}, r)).shape(), (Shape{3, 4}));
}

TEST(Network, InputMismatch) {
  SearchNetwork net(tiny_config(), 1);
  Rng r(1);
  ad::Tape t(&net.store());
  EXPECT_THROW(net.forward(t, random_tensor({1, 1, 8, 9}, r)), ShapeError);
  EXPECT_THROW(net.forward(t, random_tensor({1, 2, 8, 8}, r)), ShapeError);
}

TEST(Network, WeightsAndArchitectureAreDisjoint) {
  SearchNetwork net(tiny_config(), 1);
  auto w = net.weights();
  for (auto a : net.architecture()) {
    EXPECT_EQ(std::find(w.begin(), w.end(), a), w.end());
  }
  EXPECT_EQ(net.weight_count() + net.architecture_count(), net.store().numel());
  EXPECT_NO_THROW(BilevelState(net.store(), net.weights(), net.architecture()));
  EXPECT_THROW(BilevelState(net.store(), net.store().all(), net.architecture()), ConfigError);
}

// ---- derivation ----

TEST(Derive, ArgmaxAndNoneExclusion) {
  const std::vector<CnnOp> ops{CnnOp::max_pool_3x3, CnnOp::skip_connect, CnnOp::none};
  // one node, two edges
  Tensor theta({2, 3}, {std::log(2.0), 0, 0, 0, 1, 5});
  const auto cell = derive_cell(theta, ops, 1);
  ASSERT_EQ(cell.nodes.size(), 1u);
  EXPECT_EQ(cell.nodes[0][0].op, CnnOp::max_pool_3x3);
  EXPECT_EQ(cell.nodes[0][1].op, CnnOp::skip_connect);
  for (const auto& e : cell.nodes[0]) EXPECT_NE(e.op, CnnOp::none);
}

TEST(Derive, UniformThetaTieBreak) {
  const NetworkConfig c;
  const auto cell = derive_cell(Tensor({14, 8}, 0.0), c.ops, 4);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_EQ(cell.nodes[j][0], (GenotypeEdge{0, CnnOp::max_pool_3x3}));
    EXPECT_EQ(cell.nodes[j][1], (GenotypeEdge{1, CnnOp::max_pool_3x3}));
  }
}

TEST(Derive, AllNoneIsAnError) {
  EXPECT_THROW(derive_cell(Tensor({2, 1}, 0.0), {CnnOp::none}, 1), ConfigError);
}

// Exhaustive reference: strongest op per edge, then the source pair ranked
// by its stronger and then its weaker member.
GenotypeCell brute_force(const Tensor& theta, const std::vector<CnnOp>& ops, std::size_t n) {
  const Tensor w = edge_weights(theta);
  GenotypeCell cell;
  for (std::size_t j = 0; j < n; ++j) {
    // strongest non-none op per edge, first index on ties
    std::vector<std::pair<real, std::size_t>> best(j + 2, {-1, 0});
    for (std::size_t s = 0; s < j + 2; ++s) {
      for (std::size_t o = 0; o < ops.size(); ++o) {
        if (ops[o] == CnnOp::none) continue;
        const real v = w[(first_edge(j) + s) * ops.size() + o];
        if (v > best[s].first) best[s] = {v, o};
      }
    }
    // every unordered pair of sources; keep the one whose weaker member is
    // strongest, then whose stronger member is strongest
    std::pair<std::size_t, std::size_t> pick{0, 1};
    auto key = [&](std::size_t a, std::size_t b) {
      return std::make_pair(std::max(best[a].first, best[b].first),
                            std::min(best[a].first, best[b].first));
    };
    for (std::size_t a = 0; a < j + 2; ++a) {
      for (std::size_t b = a + 1; b < j + 2; ++b) {
        const auto k = key(a, b), kp = key(pick.first, pick.second);
        if (k.first > kp.first || (k.first == kp.first && k.second > kp.second)) pick = {a, b};
      }
    }
    cell.nodes.push_back({GenotypeEdge{pick.first, ops[best[pick.first].second]},
                          GenotypeEdge{pick.second, ops[best[pick.second].second]}});
  }
  return cell;
}

TEST(Derive, MatchesBruteForceOnRandomTheta) {
  const std::vector<CnnOp> ops{space::kAllCnnOps.begin(), space::kAllCnnOps.end()};
  Rng r(77);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor theta({5, 8});
    for (auto& v : theta.data()) v = r.uniform(-3, 3);
    EXPECT_EQ(derive_cell(theta, ops, 2), brute_force(theta, ops, 2)) << "trial " << trial;
  }
}

TEST(Derive, InvariantUnderConstantShift) {
  const std::vector<CnnOp> ops{space::kAllCnnOps.begin(), space::kAllCnnOps.end()};
  Rng r(78);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor theta({14, 8});
    for (auto& v : theta.data()) v = r.uniform(-3, 3);
    Tensor shifted = theta;
    for (std::size_t e = 0; e < 14; ++e) {
      const real c = r.uniform(-50, 50);
      for (std::size_t o = 0; o < 8; ++o) shifted[e * 8 + o] += c;
    }
    const auto a = derive_cell(theta, ops, 4);
    EXPECT_EQ(a, derive_cell(shifted, ops, 4));
    for (const auto& node : a.nodes) {
      EXPECT_NE(node[0].source, node[1].source);
      for (const auto& e : node) EXPECT_NE(e.op, CnnOp::none);
    }
  }
}

// ---- genotype files ----

Genotype sample_genotype() {
  Genotype g;
  g.normal.nodes = {{GenotypeEdge{0, CnnOp::sep_conv_3x3}, GenotypeEdge{1, CnnOp::skip_connect}},
                    {GenotypeEdge{1, CnnOp::dil_conv_5x5}, GenotypeEdge{2, CnnOp::max_pool_3x3}}};
  g.reduction.nodes = {
      {GenotypeEdge{0, CnnOp::avg_pool_3x3}, GenotypeEdge{1, CnnOp::sep_conv_5x5}},
      {GenotypeEdge{0, CnnOp::skip_connect}, GenotypeEdge{2, CnnOp::dil_conv_3x3}}};
  g.num_cells = 3;
  g.reduction_positions = {1, 2};
  g.metadata = {12345678901234ULL, 7, 0.1234567890123};
  return g;
}

TEST(GenotypeFile, RoundTrip) {
  const Genotype g = sample_genotype();
  const std::string text = to_json(g);
  EXPECT_EQ(genotype_from_json(text), g);
  EXPECT_EQ(to_json(genotype_from_json(text)), text);
  EXPECT_NE(text.find("\"sep_conv_3x3\""), std::string::npos);
}

TEST(GenotypeFile, RejectsBadContent) {
  std::string text = to_json(sample_genotype());
  EXPECT_THROW(genotype_from_json("{"), FormatError);
  std::string bad_version = text;
  bad_version.replace(bad_version.find("\"version\": 1"), 12, "\"version\": 9");
  EXPECT_THROW(genotype_from_json(bad_version), FormatError);
  std::string with_none = text;
  with_none.replace(with_none.find("sep_conv_3x3"), 12, "none");
  EXPECT_THROW(genotype_from_json(with_none), FormatError);
  std::string bad_op = text;
  bad_op.replace(bad_op.find("sep_conv_3x3"), 12, "conv_7x7");
  EXPECT_THROW(genotype_from_json(bad_op), FormatError);
}

// ---- derived networks ----

TEST(Derived, AllSkipDependsOnlyOnStemPreprocessingAndHead) {
  NetworkConfig c = tiny_config();
  c.num_cells = 2;
  c.reduction_positions = {};
  Genotype g;
  g.normal.nodes = {{GenotypeEdge{0, CnnOp::skip_connect}, GenotypeEdge{1, CnnOp::skip_connect}},
                    {GenotypeEdge{0, CnnOp::skip_connect}, GenotypeEdge{2, CnnOp::skip_connect}}};
  g.reduction = g.normal;
  g.num_cells = 2;
  DerivedNetwork net(g, c, 3);
  SearchNetwork super(c, 3);
  // no op carries weights: only stem, preprocessing and head remain
  std::size_t skeleton = 0;
  for (auto id : net.store().all()) {
    const auto& name = net.store().name(id);
    if (name.find(".n") == std::string::npos) skeleton += net.store().value(id).numel();
  }
  EXPECT_EQ(net.weight_count(), skeleton);
  EXPECT_LE(net.weight_count(), super.weight_count());
}

TEST(Derived, ParameterCountBelowSupernet) {
  NetworkConfig c;
  Genotype g = sample_genotype();
  g.normal.nodes.push_back(g.normal.nodes[1]);
  g.normal.nodes.push_back(g.normal.nodes[0]);
  g.reduction.nodes.push_back(g.reduction.nodes[1]);
  g.reduction.nodes.push_back(g.reduction.nodes[0]);
  DerivedNetwork net(g, c, 1);
  EXPECT_LT(net.weight_count(), SearchNetwork(c, 1).weight_count());
}

TEST(Derived, MatchesHandAssembledGraph) {
  NetworkConfig c = tiny_config();
  const Genotype g = sample_genotype();
  DerivedNetwork net(g, c, 5);
  Rng r(6);
  const Tensor input = random_tensor({2, 1, 8, 8}, r);
  ad::Tape t(&net.store());
  const Tensor logits = net.forward(t, input).value();

  // rebuild the same computation from named parameters
  auto& store = net.store();
  ad::Tape h(&store);
  auto P = [&](const std::string& n) { return h.param(find_param(store, n)); };
  auto conv1 = [&](ad::Var x, const std::string& n) {
    return ad::conv2d(ad::leaky_relu(x), P(n), {});
  };
  auto fr = [&](ad::Var x, const std::string& n) {
    std::vector<ad::ParamId> w{find_param(store, n + ".even"), find_param(store, n + ".odd")};
    return space::factorized_reduce(x, w);
  };
  auto op = [&](CnnOp kind, ad::Var x, std::size_t stride, std::size_t channels,
                const std::string& prefix) {
    space::CnnOpParams p{kind, channels, stride, {}};
    const std::string base = prefix + "." + std::string(space::to_string(kind));
    for (auto id : store.all()) {
      if (store.name(id).rfind(base, 0) == 0) p.weights.push_back(id);
    }
    return space::cnn_op_apply(kind, x, stride, p);
  };
  ad::Var stem = ad::conv2d(h.input("in", input), P("stem"), {});
  // cell 0: normal, 2 channels, inputs = stem
  ad::Var a0 = conv1(stem, "cell0.pre0"), a1 = conv1(stem, "cell0.pre1");
  ad::Var n00 = op(CnnOp::sep_conv_3x3, a0, 1, 2, "cell0.n0.0") +
                op(CnnOp::skip_connect, a1, 1, 2, "cell0.n0.1");
  ad::Var n01 = op(CnnOp::dil_conv_5x5, a1, 1, 2, "cell0.n1.0") +
                op(CnnOp::max_pool_3x3, n00, 1, 2, "cell0.n1.1");
  ad::Var c0 = ad::concat(std::vector<ad::Var>{n00, n01}, 1);
  // cell 1: reduction, 4 channels, inputs stem and c0
  ad::Var b0 = conv1(stem, "cell1.pre0"), b1 = conv1(c0, "cell1.pre1");
  ad::Var n10 = op(CnnOp::avg_pool_3x3, b0, 2, 4, "cell1.n0.0") +
                op(CnnOp::sep_conv_5x5, b1, 2, 4, "cell1.n0.1");
  ad::Var n11 = op(CnnOp::skip_connect, b0, 2, 4, "cell1.n1.0") +
                op(CnnOp::dil_conv_3x3, n10, 1, 4, "cell1.n1.1");
  ad::Var c1 = ad::concat(std::vector<ad::Var>{n10, n11}, 1);
  // cell 2: reduction, 8 channels, c_{k-2} = c0 at twice the resolution
  ad::Var d0 = fr(c0, "cell2.pre0"), d1 = conv1(c1, "cell2.pre1");
  ad::Var n20 = op(CnnOp::avg_pool_3x3, d0, 2, 8, "cell2.n0.0") +
                op(CnnOp::sep_conv_5x5, d1, 2, 8, "cell2.n0.1");
  ad::Var n21 = op(CnnOp::skip_connect, d0, 2, 8, "cell2.n1.0") +
                op(CnnOp::dil_conv_3x3, n20, 1, 8, "cell2.n1.1");
  ad::Var c2 = ad::concat(std::vector<ad::Var>{n20, n21}, 1);
  const Shape s = c2.shape();
  ad::Var pooled = ad::mean(ad::reshape(c2, {s[0], s[1], s[2] * s[3]}), 2);
  const Tensor expect = ad::affine(pooled, P("head.w"), P("head.b")).value();
  ASSERT_EQ(logits.shape(), expect.shape());
  for (std::size_t i = 0; i < logits.numel(); ++i) EXPECT_NEAR(logits[i], expect[i], 1e-12);
}

TEST(Derived, MismatchedConfig) {
  const Genotype g = sample_genotype();
  NetworkConfig c = tiny_config();
  c.num_nodes = 3;
  EXPECT_THROW(DerivedNetwork(g, c, 1), ConfigError);
  c = tiny_config();
  c.num_cells = 4;
  c.reduction_positions = {1, 2};
  EXPECT_THROW(DerivedNetwork(g, c, 1), ConfigError);
  c = tiny_config();
  c.reduction_positions = {1};
  EXPECT_THROW(DerivedNetwork(g, c, 1), ConfigError);
}

// ---- bilevel ----

TEST(Bilevel, ZeroArchitectureGradientLeavesThetaUnchanged) {
  // skip and max-pool agree on a constant input, so the mixed output does
  // not depend on theta
  ad::ParameterStore store;
  Rng rng(1);
  MixedEdge edge({CnnOp::max_pool_3x3, CnnOp::skip_connect}, 2, 1, store, rng, "e");
  auto scale = store.add("scale", Tensor({1}, 0.5));
  auto theta = store.add("theta", Tensor({2}, {0.3, -0.2}));
  const Tensor input({1, 2, 3, 3}, 1.5);
  auto loss = [&](ad::Tape& t) {
    auto y = mixed_op_forward(edge, t.input("x", input), ad::softmax(t.param(theta)));
    return ad::mean(ad::mul(y, t.param(scale)) * ad::mul(y, t.param(scale)));
  };
  BilevelState state(store, {scale}, {theta});
  for (int i = 0; i < 5; ++i) bilevel_step(state, loss, loss);
  EXPECT_NEAR(store.value(theta)[0], 0.3, 1e-9);
  EXPECT_NEAR(store.value(theta)[1], -0.2, 1e-9);
  EXPECT_EQ(state.architecture_optimizer().step_count(), 5u);
}

TEST(Bilevel, WeightStepFollowsSgdFormula) {
  ad::ParameterStore store;
  auto w = store.add("w", Tensor({2}, {1.0, -2.0}));
  auto a = store.add("a", Tensor({1}, 0.0));
  // L_train = sum(w^2) + a*sum(w): grad_w = 2w + a
  auto train = [&](ad::Tape& t) {
    ad::Var v = t.param(w);
    return ad::sum(v * v) + ad::mul(ad::sum(v), t.param(a));
  };
  auto val = [&](ad::Tape& t) { return ad::sum(t.param(w)); };
  const BilevelConfig cfg{{.lr = 0.1, .momentum = 0.9, .weight_decay = 0.01}, {.lr = 0}};
  BilevelState state(store, {w}, {a}, cfg);
  const auto l = bilevel_step(state, train, val);
  EXPECT_DOUBLE_EQ(l.train, 5.0);
  // one step from v=0: v = g + wd*w, w -= lr*v
  EXPECT_NEAR(store.value(w)[0], 1.0 - 0.1 * (2.0 + 0.01), 1e-15);
  EXPECT_NEAR(store.value(w)[1], -2.0 - 0.1 * (-4.0 - 0.02), 1e-15);
  EXPECT_NEAR(l.val, store.value(w)[0] + store.value(w)[1], 1e-15);
  EXPECT_EQ(store.value(a)[0], 0.0);
}

TEST(Bilevel, QuadraticSurrogateConverges) {
  const real target = 0.7;
  ad::ParameterStore store;
  auto w = store.add("w", Tensor({1}, 1.0));
  auto a = store.add("a", Tensor({1}, 0.0));
  auto train = [&](ad::Tape& t) {
    ad::Var v = t.param(w);
    return ad::sum(v * v);
  };
  auto val = [&](ad::Tape& t) {
    ad::Var d = ad::add(t.param(a), t.constant(Tensor({1}, -target)));
    return ad::sum(d * d);
  };
  // the search default (3e-4) cannot cover the distance in 1000 steps
  BilevelState state(store, {w}, {a}, {.architecture = {.lr = 1e-2}});
  for (int step = 0; step < 1000; ++step) bilevel_step(state, train, val);
  EXPECT_NEAR(store.value(a)[0], target, 1e-3);
}

TEST(Bilevel, NonFiniteLossRollsBack) {
  ad::ParameterStore store;
  auto w = store.add("w", Tensor({1}, 1.0));
  auto a = store.add("a", Tensor({1}, 0.0));
  auto train = [&](ad::Tape& t) { return ad::sum(t.param(w) * t.param(w)); };
  auto bad = [&](ad::Tape& t) {
    return ad::sum(t.param(a) + t.constant(Tensor({1}, std::numeric_limits<real>::infinity())));
  };
  BilevelState state(store, {w}, {a});
  try {
    bilevel_step(state, train, bad, "batch-7");
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("batch-7"), std::string::npos);
  }
  EXPECT_EQ(store.value(w)[0], 1.0);
  EXPECT_EQ(store.value(a)[0], 0.0);
}

// ---- search ----

train::Dataset tiny_images(std::size_t n, std::uint64_t seed) {
  train::Dataset d({1, 8, 8});
  Rng r(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 4);
    Tensor x({1, 8, 8});
    for (std::size_t p = 0; p < 64; ++p) {
      x[p] = 0.2 * r.uniform(-1, 1) + ((p / 16) == static_cast<std::size_t>(label) ? 1.0 : 0.0);
    }
    d.add("u" + std::to_string(i), x, label);
  }
  return d;
}

TEST(Search, ZeroEpochsYieldsInitialisationGenotype) {
  NetworkConfig c = tiny_config();
  SearchSchedule s;
  s.epochs = 0;
  const auto res = search(tiny_images(8, 1), tiny_images(8, 2), c, s);
  EXPECT_TRUE(res.history.empty());
  for (const auto& node : res.genotype.normal.nodes) {
    EXPECT_EQ(node[0], (GenotypeEdge{0, CnnOp::max_pool_3x3}));
    EXPECT_EQ(node[1], (GenotypeEdge{1, CnnOp::max_pool_3x3}));
  }
  EXPECT_FALSE(res.genotype.metadata.final_val_loss.has_value());
  EXPECT_EQ(SearchSchedule{}.epochs, 50u);
}

TEST(Search, DeterministicAndAudited) {
  NetworkConfig c = tiny_config();
  SearchSchedule s;
  s.epochs = 2;
  s.batch_size = 4;
  s.seed = 9;
  const auto a = search(tiny_images(12, 1), tiny_images(8, 2), c, s);
  const auto b = search(tiny_images(12, 1), tiny_images(8, 2), c, s);
  EXPECT_EQ(to_json(a.genotype), to_json(b.genotype));
  EXPECT_EQ(history_csv(a.history, c), history_csv(b.history, c));
  ASSERT_EQ(a.history.size(), 2u);
  EXPECT_EQ(a.history[0].alpha.size(), 2 * edge_count(2) * 8);
  for (const auto& rec : a.history) {
    for (std::size_t row = 0; row < rec.alpha.size() / 8; ++row) {
      real sum = 0;
      for (std::size_t o = 0; o < 8; ++o) sum += rec.alpha[row * 8 + o];
      EXPECT_NEAR(sum, 1.0, 1e-6);
    }
  }
  const std::string csv = history_csv(a.history, c);
  const auto header = csv.substr(0, csv.find('\n'));
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 2 + 2 * 5 * 8);
  EXPECT_EQ(header.rfind("epoch,L_train,L_val,alpha_normal_e0_max_pool_3x3", 0), 0u);
}

TEST(Search, ErrorsOnEmptySplitsAndNonFiniteStreak) {
  NetworkConfig c = tiny_config();
  SearchSchedule s;
  s.epochs = 1;
  EXPECT_THROW(search(train::Dataset({1, 8, 8}), tiny_images(4, 1), c, s), ConfigError);
  train::Dataset poisoned({1, 8, 8});
  Tensor inf({1, 8, 8}, std::numeric_limits<real>::infinity());
  for (int i = 0; i < 8; ++i) poisoned.add("p" + std::to_string(i), inf, i % 4);
  s.batch_size = 1;
  s.nonfinite_patience = 2;
  EXPECT_THROW(search(poisoned, tiny_images(4, 1), c, s), NumericError);
}

TEST(Enumerate, TwoNodeThreeOpSpace) {
  const std::vector<CnnOp> ops = {CnnOp::avg_pool_3x3, CnnOp::sep_conv_3x3, CnnOp::none};
  // Node 0: both inputs, 2x2 ops. Node 1: 3 source pairs, 2x2 ops.
  EXPECT_EQ(count_cells(ops, 2), 48u);
  const auto cells = enumerate_cells(ops, 2);
  ASSERT_EQ(cells.size(), 48u);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t j = i + 1; j < cells.size(); ++j) EXPECT_NE(cells[i], cells[j]);
    for (const auto& node : cells[i].nodes) {
      EXPECT_LT(node[0].source, node[1].source);
      for (const auto& e : node) EXPECT_NE(e.op, CnnOp::none);
    }
  }
  EXPECT_EQ(count_cells(ops, 4), enumerate_cells(ops, 4).size());
}

TEST(Enumerate, DerivedCellIsAlwaysEnumerated) {
  const std::vector<CnnOp> ops = {CnnOp::avg_pool_3x3, CnnOp::sep_conv_3x3, CnnOp::none};
  const auto cells = enumerate_cells(ops, 2);
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const GenotypeCell cell = derive_cell(random_tensor({edge_count(2), ops.size()}, rng), ops, 2);
    EXPECT_NE(std::find(cells.begin(), cells.end(), cell), cells.end());
  }
}

TEST(Enumerate, GenotypesFollowTheMacroLayout) {
  NetworkConfig c;
  c.num_cells = 1;
  c.reduction_positions = {};
  c.num_nodes = 2;
  c.ops = {CnnOp::avg_pool_3x3, CnnOp::sep_conv_3x3, CnnOp::none};
  const auto all = enumerate_genotypes(c);
  ASSERT_EQ(all.size(), 48u);
  for (const auto& g : all) {
    EXPECT_NO_THROW(g.validate());
    EXPECT_EQ(g.normal, g.reduction);
    EXPECT_EQ(g.num_cells, 1u);
  }
  c.num_cells = 3;
  c.reduction_positions = {1};
  EXPECT_EQ(enumerate_genotypes(c).size(), 48u * 48u);
  EXPECT_THROW(enumerate_genotypes(c, 1000), ConfigError);
}

}  // namespace
}  // namespace emonas::darts
