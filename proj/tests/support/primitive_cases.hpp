#pragma once

// Every differentiable primitive with small random-input shapes, shared by
// the unit tests and the acceptance run.

#include <cstdint>
#include <functional>
#include <vector>

#include "emonas/autodiff/ops.hpp"
#include "emonas/autodiff/random.hpp"
#include "emonas/autodiff/tape.hpp"

namespace emonas::ad::testing_support {

struct PrimitiveCase {
  const char* name;
  std::vector<Shape> shapes;
  std::function<Var(Tape&, const std::vector<Var>&)> body;
};

inline std::vector<PrimitiveCase> primitive_cases() {
  const int labels[] = {2, 0, 1};
  std::vector<int> lab(labels, labels + 3);
  auto weigh = [](Var y, Tape& t, std::uint64_t seed) {
    // random linear readout so every output coordinate matters
    Rng r(seed);
    Tensor w(y.shape());
    for (auto& v : w.data()) v = r.uniform(-1, 1);
    return sum(mul(y, t.constant(w)));
  };
  return {
      {"matmul", {{3, 4}, {4, 2}},
       [=](Tape& t, auto& v) { return weigh(matmul(v[0], v[1]), t, 1); }},
      {"matmul_batched", {{2, 3, 4}, {2, 4, 2}},
       [=](Tape& t, auto& v) { return weigh(matmul(v[0], v[1]), t, 2); }},
      {"affine", {{3, 4}, {5, 4}, {5}},
       [=](Tape& t, auto& v) { return weigh(affine(v[0], v[1], v[2]), t, 3); }},
      {"conv2d", {{2, 2, 5, 5}, {3, 2, 3, 3}},
       [=](Tape& t, auto& v) { return weigh(conv2d(v[0], v[1], {.padding = 1}), t, 4); }},
      {"conv2d_strided_dilated", {{1, 2, 7, 6}, {2, 2, 3, 3}},
       [=](Tape& t, auto& v) {
         return weigh(conv2d(v[0], v[1], {.stride = 2, .dilation = 2, .padding = 2}), t, 5);
       }},
      {"conv2d_depthwise", {{2, 3, 5, 5}, {3, 1, 5, 5}},
       [=](Tape& t, auto& v) {
         return weigh(conv2d(v[0], v[1], {.padding = 2, .groups = 3}), t, 6);
       }},
      {"avg_pool2d", {{2, 2, 5, 4}},
       [=](Tape& t, auto& v) { return weigh(avg_pool2d(v[0], {.stride = 2}), t, 7); }},
      {"max_pool2d", {{2, 2, 5, 4}},
       [=](Tape& t, auto& v) { return weigh(max_pool2d(v[0], {}), t, 8); }},
      {"add", {{3, 4}, {3, 4}}, [=](Tape& t, auto& v) { return weigh(add(v[0], v[1]), t, 9); }},
      {"mul", {{3, 4}, {3, 4}}, [=](Tape& t, auto& v) { return weigh(mul(v[0], v[1]), t, 10); }},
      {"concat", {{2, 3}, {2, 2}},
       [=](Tape& t, auto& v) { return weigh(concat(std::vector<Var>{v[0], v[1]}, 1), t, 11); }},
      {"softmax", {{3, 5}}, [=](Tape& t, auto& v) { return weigh(softmax(v[0]), t, 12); }},
      {"masked_softmax", {{2, 4}},
       [=](Tape& t, auto& v) {
         return weigh(masked_softmax(v[0], Tensor({2, 4}, {1, 0, 1, 1, 0, 1, 1, 0})), t, 13);
       }},
      {"sigmoid", {{4, 3}}, [=](Tape& t, auto& v) { return weigh(sigmoid(v[0]), t, 14); }},
      {"tanh", {{4, 3}}, [=](Tape& t, auto& v) { return weigh(tanh(v[0]), t, 15); }},
      {"leaky_relu", {{4, 3}}, [=](Tape& t, auto& v) { return weigh(leaky_relu(v[0]), t, 16); }},
      {"mean", {{4, 3}}, [=](Tape& t, auto& v) { return weigh(mean(v[0], 1), t, 17); }},
      {"sum", {{4, 3}}, [=](Tape& t, auto& v) { return weigh(sum(v[0], 0), t, 18); }},
      {"cross_entropy", {{3, 4}}, [=](Tape&, auto& v) { return cross_entropy(v[0], lab); }},
  };
}

}  // namespace emonas::ad::testing_support
