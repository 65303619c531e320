#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace emonas::harness {

struct MetricsReport {
  std::size_t num_classes = 0;
  /// confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<double> recalls;
  double unweighted_accuracy = 0;
  double weighted_accuracy = 0;
  std::size_t parameter_count = 0;
};

/// Mean per-class recall. Throws ConfigError on unequal lengths, labels
/// outside [0, num_classes) or a class with no support.
double unweighted_accuracy(std::span<const int> predictions, std::span<const int> labels,
                           std::size_t num_classes);

/// Mean recall over the classes that occur in `labels`; used for model
/// selection on small validation splits.
double present_class_recall(std::span<const int> predictions, std::span<const int> labels,
                            std::size_t num_classes);

MetricsReport evaluate(std::span<const int> predictions, std::span<const int> labels,
                       std::size_t num_classes);

}  // namespace emonas::harness
