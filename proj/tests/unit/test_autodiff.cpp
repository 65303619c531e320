#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "emonas/autodiff/gradcheck.hpp"
#include "emonas/autodiff/ops.hpp"
#include "emonas/autodiff/optim.hpp"
#include "emonas/autodiff/tape.hpp"
#include "emonas/errors.hpp"
#include "primitive_cases.hpp"

namespace emonas::ad {
namespace {

Tensor random_tensor(Shape shape, Rng& rng, real lo = -1, real hi = 1) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<real>{1, 2, 3}), ShapeError);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.first_non_finite(), 6u);
}

TEST(Forward, AffineIdentity) {
  ParameterStore store;
  auto w = store.add("w", Tensor({2, 2}, {1, 0, 0, 1}));
  auto b = store.add_zeros("b", {2});
  Tape tape(&store);
  Var y = affine(tape.input("x", Tensor({1, 2}, {1, 2})), tape.param(w), tape.param(b));
  EXPECT_EQ(y.value(), Tensor({1, 2}, {1, 2}));
}

TEST(Forward, SoftmaxOfZerosIsUniform) {
  Tape tape;
  Var y = softmax(tape.input("x", Tensor({3}, 0.0)));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(y.value()[i], 1.0 / 3.0, 1e-15);
}

TEST(Forward, ConvCenterOfOnesIsNine) {
  Tape tape;
  Var x = tape.input("x", Tensor({1, 1, 4, 4}, 1.0));
  Var k = tape.constant(Tensor({1, 1, 3, 3}, 1.0));
  Var y = conv2d(x, k, {.padding = 1});
  ASSERT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
  EXPECT_DOUBLE_EQ(y.value()[1 * 4 + 1], 9.0);
  EXPECT_DOUBLE_EQ(y.value()[0], 4.0);
  EXPECT_DOUBLE_EQ(y.value()[1], 6.0);
}

TEST(Forward, ShapeMismatchNamesNode) {
  Tape tape;
  Var a = tape.input("a", Tensor({2, 3}));
  Var b = tape.input("b", Tensor({2, 2}));
  try {
    (void)matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
  }
  EXPECT_THROW((void)add(a, b), ShapeError);
}

TEST(Forward, NonFiniteNamesNodeAndIndex) {
  Tape tape;
  Var a = tape.input("a", Tensor({2}, {1, 1e300}));
  try {
    (void)mul(a, a);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("mul"), std::string::npos);
    EXPECT_NE(msg.find("index 1"), std::string::npos) << msg;
  }
}

TEST(Forward, ProgramRunsByName) {
  Program prog = [](Tape&, const std::map<std::string, Var>& in) {
    return std::map<std::string, Var>{{"y", tanh(in.at("x"))}};
  };
  Tape tape;
  auto out = forward(tape, prog, {{"x", Tensor({1}, 0.0)}});
  EXPECT_EQ(out.at("y").item(), 0.0);
}

TEST(Backward, SquareAtThree) {
  ParameterStore store;
  auto x = store.add("x", Tensor({1}, 3.0));
  Tape tape(&store);
  Var v = tape.param(x);
  auto grads = tape.backward(sum(v * v));
  EXPECT_DOUBLE_EQ(grads.at(x)[0], 6.0);
}

TEST(Backward, CrossEntropyAtZeroLogits) {
  ParameterStore store;
  auto z = store.add("z", Tensor({1, 2}, 0.0));
  Tape tape(&store);
  const int label[] = {0};
  auto grads = tape.backward(cross_entropy(tape.param(z), label));
  EXPECT_NEAR(grads.at(z)[0], -0.5, 1e-15);
  EXPECT_NEAR(grads.at(z)[1], 0.5, 1e-15);
}

TEST(Backward, UnreachedLeafIsZero) {
  ParameterStore store;
  auto a = store.add("a", Tensor({2}, 1.0));
  auto b = store.add("b", Tensor({3}, 2.0));
  Tape tape(&store);
  Var va = tape.param(a);
  (void)tape.param(b);
  auto grads = tape.backward(sum(va));
  EXPECT_EQ(grads.at(b), Tensor({3}, 0.0));
}

TEST(Backward, Errors) {
  ParameterStore store;
  auto a = store.add("a", Tensor({2}, 1.0));
  Tape empty(&store);
  EXPECT_THROW(empty.backward(Var{}), StateError);
  Tape tape(&store);
  Var v = tape.param(a);
  EXPECT_THROW(tape.backward(v), ShapeError);
  tape.backward(sum(v));
  EXPECT_THROW(tape.backward(sum(v)), StateError);
}

TEST(Backward, AccumulationIsAdditive) {
  Rng rng(7);
  ParameterStore store;
  auto w = store.add("w", random_tensor({3, 4}, rng));
  auto x = store.add("x", random_tensor({2, 3}, rng));
  auto loss1 = [&](Tape& t) { return sum(tanh(matmul(t.param(x), t.param(w)))); };
  auto loss2 = [&](Tape& t) { return mean(sigmoid(matmul(t.param(x), t.param(w)))); };
  Tape t1(&store), t2(&store), t3(&store);
  auto g1 = t1.backward(loss1(t1));
  auto g2 = t2.backward(loss2(t2));
  auto g12 = t3.backward(loss1(t3) + loss2(t3));
  for (auto id : {w, x}) {
    for (std::size_t i = 0; i < g12.at(id).numel(); ++i) {
      EXPECT_NEAR(g12.at(id)[i], g1.at(id)[i] + g2.at(id)[i], 1e-6);
    }
  }
  // store accumulators hold the sum of all three passes
  for (std::size_t i = 0; i < store.grad(w).numel(); ++i) {
    EXPECT_NEAR(store.grad(w)[i], 2 * g12.at(w)[i], 1e-9);
  }
}

TEST(Forward, BitwiseDeterministic) {
  Rng rng(3);
  ParameterStore store;
  auto x = store.add("x", random_tensor({2, 2, 5, 5}, rng));
  auto k = store.add("k", random_tensor({2, 1, 3, 3}, rng));
  auto run = [&] {
    Tape t(&store);
    return softmax(leaky_relu(conv2d(t.param(x), t.param(k), {.padding = 1, .groups = 2})))
        .value();
  };
  EXPECT_EQ(run(), run());
}

TEST(Softmax, RowsAreDistributions) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tape tape;
    Var y = softmax(tape.input("x", random_tensor({4, 7}, rng, -30, 30)));
    for (std::size_t r = 0; r < 4; ++r) {
      real s = 0;
      for (std::size_t c = 0; c < 7; ++c) {
        EXPECT_GE(y.value()[r * 7 + c], 0.0);
        s += y.value()[r * 7 + c];
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(Softmax, MaskedEntriesAreZero) {
  Tape tape;
  Var y = masked_softmax(tape.input("x", Tensor({2, 3}, {1, 2, 3, 4, 5, 6})),
                         Tensor({2, 3}, {1, 1, 0, 0, 1, 0}));
  EXPECT_EQ(y.value()[2], 0.0);
  EXPECT_EQ(y.value()[3], 0.0);
  EXPECT_DOUBLE_EQ(y.value()[4], 1.0);
  EXPECT_NEAR(y.value()[0] + y.value()[1], 1.0, 1e-15);
  EXPECT_THROW((void)masked_softmax(tape.input("z", Tensor({1, 2})), Tensor({1, 2}, 0.0)),
               ShapeError);
}

TEST(Pooling, AvgCountsPadding) {
  Tape tape;
  Var y = avg_pool2d(tape.input("x", Tensor({1, 1, 3, 3}, 9.0)), {});
  EXPECT_DOUBLE_EQ(y.value()[4], 9.0);
  EXPECT_DOUBLE_EQ(y.value()[0], 4.0);
  EXPECT_DOUBLE_EQ(y.value()[1], 6.0);
}

TEST(Pooling, MaxTieRoutesToFirst) {
  ParameterStore store;
  auto x = store.add("x", Tensor({1, 1, 3, 3}, {2, 2, 1, 0, 1, 0, -1, 0, 1}));
  Tape tape(&store);
  Var y = max_pool2d(tape.param(x), {.kernel = 3, .stride = 3, .padding = 0});
  EXPECT_TRUE(tape.has_ties());
  auto g = tape.backward(sum(y));
  EXPECT_EQ(g.at(x), Tensor({1, 1, 3, 3}, {1, 0, 0, 0, 0, 0, 0, 0, 0}));
}

TEST(MulBroadcast, ScalarOperandGradient) {
  ParameterStore store;
  auto s = store.add("s", Tensor({1}, 2.0));
  auto x = store.add("x", Tensor({3}, {1, 2, 3}));
  Tape tape(&store);
  Var y = mul(tape.param(x), tape.param(s));
  EXPECT_EQ(y.value(), Tensor({3}, {2, 4, 6}));
  auto g = tape.backward(sum(y));
  EXPECT_DOUBLE_EQ(g.at(s)[0], 6.0);
  EXPECT_EQ(g.at(x), Tensor({3}, 2.0));
}

// ---- gradient fidelity per primitive ----

using testing_support::primitive_cases;

class PrimitiveGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(PrimitiveGradient, MatchesFiniteDifferencesAtRandomPoints) {
  const auto cases = primitive_cases();
  const auto& pc = cases[GetParam()];
  Rng rng(derive_seed(42, pc.name));
  std::size_t probes = 0;
  real worst = 0;
  for (int point = 0; probes < 100; ++point) {
    ParameterStore store;
    std::vector<ParamId> ids;
    for (std::size_t i = 0; i < pc.shapes.size(); ++i) {
      ids.push_back(store.add("in" + std::to_string(i), random_tensor(pc.shapes[i], rng)));
    }
    auto build = [&](Tape& t) {
      std::vector<Var> vars;
      for (auto id : ids) vars.push_back(t.param(id));
      return pc.body(t, vars);
    };
    auto rep = grad_check(store, ids, build, {.max_probes = 40, .seed = rng.next()});
    probes += rep.probes;
    worst = std::max(worst, rep.max_rel_error);
    ASSERT_LT(point, 50) << "too many excluded probes";
  }
  EXPECT_LT(worst, 1e-3) << pc.name;
}

INSTANTIATE_TEST_SUITE_P(All, PrimitiveGradient,
                         ::testing::Range<std::size_t>(0, primitive_cases().size()),
                         [](const auto& info) { return primitive_cases()[info.param].name; });

TEST(GradCheck, LinearTapeIsExact) {
  Rng rng(5);
  ParameterStore store;
  auto w = store.add("w", random_tensor({3, 4}, rng));
  auto x = store.add("x", random_tensor({2, 3}, rng));
  auto rep = grad_check(store, {w}, [&](Tape& t) {
    return sum(matmul(t.param(x), t.param(w)));
  });
  EXPECT_LT(rep.max_rel_error, 1e-9);
  EXPECT_EQ(rep.probes, 12u);
}

TEST(GradCheck, TieProbesAreExcluded) {
  ParameterStore store;
  auto x = store.add("x", Tensor({1, 1, 3, 3}, {2, 2, 1, 0, 1, 0, -1, 0, 1}));
  auto rep = grad_check(store, {x}, [&](Tape& t) {
    return sum(max_pool2d(t.param(x), {.kernel = 3, .stride = 3, .padding = 0}));
  });
  EXPECT_TRUE(rep.base_has_ties);
  EXPECT_GE(rep.excluded, 1u);
  EXPECT_LT(rep.max_rel_error, 1e-6);
}

TEST(GradCheck, Preconditions) {
  ParameterStore store;
  auto x = store.add("x", Tensor({1}, 1.0));
  auto build = [&](Tape& t) { return sum(t.param(x)); };
  EXPECT_THROW(grad_check(store, {}, build), StateError);
  EXPECT_THROW(grad_check(store, {x}, build, {.epsilon = 0}), ConfigError);
  store.value(x)[0] = std::numeric_limits<real>::quiet_NaN();
  EXPECT_THROW(grad_check(store, {x}, build), NumericError);
}

TEST(GradCheck, LeavesStoreGradientsUntouched) {
  ParameterStore store;
  auto x = store.add("x", Tensor({2}, {1, 2}));
  store.grad(x)[0] = 5;
  (void)grad_check(store, {x}, [&](Tape& t) { return sum(t.param(x) * t.param(x)); });
  EXPECT_EQ(store.grad(x), Tensor({2}, {5, 0}));
}

// ---- optimisers ----

TEST(Sgd, UnitStep) {
  ParameterStore store;
  auto p = store.add("p", Tensor({1}, 1.0));
  store.grad(p)[0] = 1;
  Sgd sgd({p}, {.lr = 1, .momentum = 0, .weight_decay = 0});
  sgd.step(store);
  EXPECT_DOUBLE_EQ(store.value(p)[0], 0.0);
}

TEST(Sgd, DefaultsAndMomentumUnroll) {
  const SgdOptions d;
  EXPECT_DOUBLE_EQ(d.lr, 0.025);
  EXPECT_DOUBLE_EQ(d.momentum, 0.9);
  EXPECT_DOUBLE_EQ(d.weight_decay, 3e-4);
  ParameterStore store;
  auto p = store.add("p", Tensor({1}, 0.0));
  Sgd sgd({p}, {.lr = 1, .momentum = 0.9, .weight_decay = 0});
  for (int i = 0; i < 2; ++i) {
    store.grad(p)[0] = 1;
    sgd.step(store);
  }
  EXPECT_NEAR(store.value(p)[0], -2.9, 1e-12);
}

TEST(Sgd, WeightDecayFormula) {
  ParameterStore store;
  auto p = store.add("p", Tensor({2}, {2.0, -1.0}));
  store.grad(p) = Tensor({2}, {0.5, 0.25});
  Sgd sgd({p}, {.lr = 0.1, .momentum = 0.9, .weight_decay = 0.01});
  sgd.step(store);
  EXPECT_NEAR(store.value(p)[0], 2.0 - 0.1 * (0.5 + 0.02), 1e-15);
  EXPECT_NEAR(store.value(p)[1], -1.0 - 0.1 * (0.25 - 0.01), 1e-15);
}

TEST(Sgd, ShapeMismatch) {
  ParameterStore store;
  auto p = store.add("p", Tensor({2}, 0.0));
  store.grad(p) = Tensor({3}, 1.0);
  Sgd sgd({p});
  EXPECT_THROW(sgd.step(store), ShapeError);
}

TEST(Adam, ZeroGradientLeavesParams) {
  ParameterStore store;
  auto p = store.add("p", Tensor({3}, {1, -2, 3}));
  Adam adam({p});
  for (int i = 0; i < 5; ++i) adam.step(store);
  EXPECT_EQ(store.value(p), Tensor({3}, {1, -2, 3}));
  EXPECT_EQ(adam.step_count(), 5u);
}

TEST(Adam, FirstStepMovesByLr) {
  ParameterStore store;
  auto p = store.add("p", Tensor({1}, 0.0));
  store.grad(p)[0] = 1;
  Adam adam({p});
  adam.step(store);
  // m_hat = 1, v_hat = 1 -> lr * 1 / (1 + eps)
  EXPECT_NEAR(store.value(p)[0], -1e-3 / (1 + 1e-8), 1e-15);
}

TEST(Adam, LearningRateConstants) {
  EXPECT_DOUBLE_EQ(AdamOptions{}.lr, 1e-3);
  EXPECT_DOUBLE_EQ(kArchitectureAdamLr, 3e-4);
  EXPECT_DOUBLE_EQ(kTrainerAdamLr, 1e-3);
  const AdamOptions d;
  EXPECT_DOUBLE_EQ(d.beta1, 0.9);
  EXPECT_DOUBLE_EQ(d.beta2, 0.999);
}

TEST(Random, SeedDerivationIsStable) {
  EXPECT_EQ(derive_seed(1, "a"), derive_seed(1, "a"));
  EXPECT_NE(derive_seed(1, "a"), derive_seed(1, "b"));
  EXPECT_NE(derive_seed(1, "a"), derive_seed(2, "a"));
  Rng r(9);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(r.below(7), 7u);
  }
}

}  // namespace
}  // namespace emonas::ad
