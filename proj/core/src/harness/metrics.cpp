#include "emonas/harness/metrics.hpp"

#include <string>

#include "emonas/errors.hpp"

namespace emonas::harness {

namespace {

std::vector<std::vector<std::size_t>> confusion(std::span<const int> predictions,
                                                std::span<const int> labels,
                                                std::size_t num_classes) {
  if (predictions.size() != labels.size()) {
    throw ConfigError("predictions (" + std::to_string(predictions.size()) + ") and labels (" +
                      std::to_string(labels.size()) + ") differ in length");
  }
  if (labels.empty()) throw ConfigError("no labels to score");
  std::vector<std::vector<std::size_t>> m(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    const int p = predictions[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes || p < 0 ||
        static_cast<std::size_t>(p) >= num_classes) {
      throw ConfigError("class index out of range at position " + std::to_string(i));
    }
    ++m[y][p];
  }
  return m;
}

std::size_t support(const std::vector<std::size_t>& row) {
  std::size_t n = 0;
  for (auto v : row) n += v;
  return n;
}

}  // namespace

double unweighted_accuracy(std::span<const int> predictions, std::span<const int> labels,
                           std::size_t num_classes) {
  return evaluate(predictions, labels, num_classes).unweighted_accuracy;
}

double present_class_recall(std::span<const int> predictions, std::span<const int> labels,
                            std::size_t num_classes) {
  const auto m = confusion(predictions, labels, num_classes);
  double total = 0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::size_t n = support(m[c]);
    if (n == 0) continue;
    total += static_cast<double>(m[c][c]) / static_cast<double>(n);
    ++present;
  }
  return total / static_cast<double>(present);
}

MetricsReport evaluate(std::span<const int> predictions, std::span<const int> labels,
                       std::size_t num_classes) {
  MetricsReport r;
  r.num_classes = num_classes;
  r.confusion = confusion(predictions, labels, num_classes);
  std::size_t correct = 0;
  double total = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::size_t n = support(r.confusion[c]);
    if (n == 0) {
      throw ConfigError("class " + std::to_string(c) +
                        " has no support; unweighted accuracy is undefined");
    }
    r.recalls.push_back(static_cast<double>(r.confusion[c][c]) / static_cast<double>(n));
    total += r.recalls.back();
    correct += r.confusion[c][c];
  }
  r.unweighted_accuracy = total / static_cast<double>(num_classes);
  r.weighted_accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  return r;
}

}  // namespace emonas::harness
