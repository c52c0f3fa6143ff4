#include "latte/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "latte/error.hpp"

namespace latte {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ContractViolation("auc needs one label per score");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the Mann-Whitney statistic stays integral, so the ratio is exact.
  std::uint64_t doubled = 0;
  std::uint64_t negatives_below = 0;
  std::uint64_t positives = 0;
  std::uint64_t negatives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos_tied = 0;
    std::uint64_t neg_tied = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      const int y = labels[order[j]];
      if (y != 0 && y != 1) throw ContractViolation("auc labels must be 0 or 1");
      (y == 1 ? pos_tied : neg_tied) += 1;
      ++j;
    }
    doubled += pos_tied * (2 * negatives_below + neg_tied);
    negatives_below += neg_tied;
    positives += pos_tied;
    negatives += neg_tied;
    i = j;
  }
  if (positives == 0 || negatives == 0) throw UndefinedMetricError("auc needs both classes present");
  return static_cast<double>(doubled) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

double auc_multiclass(const Matrix& probabilities, std::span<const Index> labels) {
  if (probabilities.rows() != static_cast<Index>(labels.size()))
    throw ContractViolation("auc needs one label per probability row");
  const Index classes = probabilities.cols();
  if (classes < 2) throw UndefinedMetricError("auc needs at least two classes");
  auto one_vs_rest = [&](Index c) {
    std::vector<double> scores(labels.size());
    std::vector<int> binary(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      scores[i] = probabilities(static_cast<Index>(i), c);
      binary[i] = labels[i] == c ? 1 : 0;
    }
    return auc(scores, binary);
  };
  if (classes == 2) return one_vs_rest(1);
  double total = 0.0;
  int used = 0;
  for (Index c = 0; c < classes; ++c) {
    const auto present = std::count(labels.begin(), labels.end(), c);
    if (present == 0 || present == static_cast<std::ptrdiff_t>(labels.size())) continue;
    total += one_vs_rest(c);
    ++used;
  }
  if (used == 0) throw UndefinedMetricError("auc needs at least two classes present");
  return total / used;
}

double mse(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) throw ContractViolation("mse needs equal-length inputs");
  if (predictions.empty()) throw ContractViolation("mse needs at least one value");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    total += d * d;
  }
  return total / static_cast<double>(predictions.size());
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  out.count = values.size();
  if (values.empty()) return out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(values.size()));
  return out;
}

namespace {

std::string format_with(const MeanStd& s, const char* spec, int decimals) {
  char mean[64];
  char std[64];
  std::snprintf(mean, sizeof mean, spec, decimals, s.mean);
  if (s.count < 2) return mean;
  std::snprintf(std, sizeof std, spec, decimals, s.std);
  return std::string(mean) + " ± " + std;
}

}  // namespace

std::string format_fixed(const MeanStd& summary, int decimals) { return format_with(summary, "%.*f", decimals); }

std::string format_scientific(const MeanStd& summary, int decimals) {
  return format_with(summary, "%.*e", decimals);
}

}  // namespace latte
