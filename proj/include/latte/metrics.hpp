#pragma once

#include <span>
#include <string>

#include "latte/tensor.hpp"

namespace latte {

/// Mann-Whitney AUC: the chance a random positive outscores a random
/// negative, ties counted half. Labels are 0/1.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Binary AUC on the class-1 column for two classes, one-vs-rest macro
/// average otherwise. Classes absent from `labels` are skipped.
double auc_multiclass(const Matrix& probabilities, std::span<const Index> labels);

double mse(std::span<const double> predictions, std::span<const double> targets);

struct MeanStd {
  double mean = 0.0;
  /// Population standard deviation (divide by N).
  double std = 0.0;
  std::size_t count = 0;
};

MeanStd mean_std(std::span<const double> values);

/// "m ± s" with fixed decimals, or just "m" for fewer than two values.
std::string format_fixed(const MeanStd& summary, int decimals = 2);
/// Same in scientific notation.
std::string format_scientific(const MeanStd& summary, int decimals = 2);

}  // namespace latte
