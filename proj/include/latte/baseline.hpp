#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "latte/data.hpp"
#include "latte/tensor.hpp"

namespace latte {

/// One-hot categorical columns (levels seen in the fitting rows) followed by
/// z-scored numerical columns.
class DesignEncoder {
 public:
  DesignEncoder(const Metadata& metadata, const NormStats& norm_stats, std::span<const Sample> fit_rows);

  Matrix encode(std::span<const Sample> rows) const;
  Index width() const { return width_; }

 private:
  Metadata metadata_;
  NormStats norm_stats_;
  std::vector<std::map<std::string, Index, std::less<>>> levels_;
  std::vector<Index> offsets_;
  Index width_ = 0;
};

struct LogisticOptions {
  double l2 = 1e-2;
  int max_iterations = 20000;
  double tolerance = 1e-8;
};

/// Softmax regression fitted by full-batch gradient descent on the mean
/// cross-entropy plus (l2 / 2) * |W|^2.
struct LogisticModel {
  Matrix weights;  // p x C
  RowVector bias;  // 1 x C
  int iterations = 0;

  Matrix predict_proba(const Matrix& x) const;
};

LogisticModel fit_logistic(const Matrix& x, std::span<const Index> labels, Index classes, LogisticOptions options = {});

/// Closed-form ridge regression with an unpenalized intercept.
struct RidgeModel {
  Vector weights;
  double bias = 0.0;

  Vector predict(const Matrix& x) const;
};

RidgeModel fit_ridge(const Matrix& x, std::span<const double> targets, double l2 = 1e-3);

/// Test AUC of the logistic baseline trained on `train` rows.
double logistic_baseline(const TabularDataset& dataset, std::span<const Sample> train, std::span<const Sample> test,
                         LogisticOptions options = {});

/// Test MSE (normalized target space) of the ridge baseline.
double linear_baseline(const TabularDataset& dataset, std::span<const Sample> train, std::span<const Sample> test,
                       double l2 = 1e-3);

}  // namespace latte
