#include "latte/baseline.hpp"

#include <Eigen/Cholesky>
#include <set>

#include "latte/error.hpp"
#include "latte/metrics.hpp"
#include "latte/nn/layers.hpp"

namespace latte {

DesignEncoder::DesignEncoder(const Metadata& metadata, const NormStats& norm_stats, std::span<const Sample> fit_rows)
    : metadata_(metadata), norm_stats_(norm_stats) {
  levels_.resize(metadata.features.size());
  for (std::size_t j = 0; j < metadata.features.size(); ++j) {
    offsets_.push_back(width_);
    if (metadata.features[j].kind == FeatureKind::numerical) {
      width_ += 1;
      continue;
    }
    std::set<std::string> seen;
    for (const auto& s : fit_rows) seen.insert(std::get<std::string>(s.values[j]));
    for (const auto& level : seen) levels_[j].emplace(level, static_cast<Index>(levels_[j].size()));
    width_ += static_cast<Index>(levels_[j].size());
  }
}

Matrix DesignEncoder::encode(std::span<const Sample> rows) const {
  Matrix x = Matrix::Zero(static_cast<Index>(rows.size()), width_);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    expects(rows[r].values.size() == metadata_.features.size(), "row does not match the metadata schema");
    for (std::size_t j = 0; j < metadata_.features.size(); ++j) {
      const auto& f = metadata_.features[j];
      if (f.kind == FeatureKind::numerical) {
        x(static_cast<Index>(r), offsets_[j]) = norm_stats_.normalize_value(f.name, std::get<double>(rows[r].values[j]));
      } else {
        auto it = levels_[j].find(std::get<std::string>(rows[r].values[j]));
        if (it != levels_[j].end()) x(static_cast<Index>(r), offsets_[j] + it->second) = 1.0;
      }
    }
  }
  return x;
}

Matrix LogisticModel::predict_proba(const Matrix& x) const {
  Matrix logits = x * weights;
  logits.rowwise() += bias;
  return nn::softmax(logits);
}

LogisticModel fit_logistic(const Matrix& x, std::span<const Index> labels, Index classes, LogisticOptions options) {
  if (x.rows() != static_cast<Index>(labels.size())) throw ContractViolation("one label per training row");
  std::set<Index> present(labels.begin(), labels.end());
  if (present.size() < 2) throw UndefinedMetricError("logistic regression needs at least two classes in training");
  const auto n = static_cast<double>(x.rows());
  Matrix y = Matrix::Zero(x.rows(), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) y(static_cast<Index>(i), labels[i]) = 1.0;

  // Step 1/L with L bounding the Hessian of the averaged softmax loss.
  const double curvature = 0.5 * (x.rowwise().squaredNorm().sum() / n + 1.0) + options.l2;
  const double step = 1.0 / curvature;
  LogisticModel m{Matrix::Zero(x.cols(), classes), RowVector::Zero(classes), 0};
  for (int it = 0; it < options.max_iterations; ++it) {
    const Matrix residual = (m.predict_proba(x) - y) / n;
    const Matrix grad_w = x.transpose() * residual + options.l2 * m.weights;
    const RowVector grad_b = residual.colwise().sum();
    m.weights -= step * grad_w;
    m.bias -= step * grad_b;
    m.iterations = it + 1;
    if (std::max(grad_w.cwiseAbs().maxCoeff(), grad_b.cwiseAbs().maxCoeff()) < options.tolerance) break;
  }
  return m;
}

Vector RidgeModel::predict(const Matrix& x) const { return (x * weights).array() + bias; }

RidgeModel fit_ridge(const Matrix& x, std::span<const double> targets, double l2) {
  if (x.rows() != static_cast<Index>(targets.size())) throw ContractViolation("one target per training row");
  if (x.rows() < 1) throw ContractViolation("ridge regression needs at least one row");
  const Vector y = Eigen::Map<const Vector>(targets.data(), static_cast<Index>(targets.size()));
  const RowVector x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Matrix xc = x.rowwise() - x_mean;
  const Vector yc = y.array() - y_mean;
  Matrix gram = xc.transpose() * xc;
  gram.diagonal().array() += l2 * static_cast<double>(x.rows());
  RidgeModel m;
  m.weights = gram.ldlt().solve(xc.transpose() * yc);
  m.bias = y_mean - x_mean.dot(m.weights);
  return m;
}

double logistic_baseline(const TabularDataset& dataset, std::span<const Sample> train, std::span<const Sample> test,
                         LogisticOptions options) {
  if (!dataset.metadata.is_classification()) throw ContractViolation("logistic baseline needs a classification task");
  DesignEncoder design(dataset.metadata, dataset.norm_stats, train);
  std::vector<Index> y;
  for (const auto& s : train) y.push_back(static_cast<Index>(s.class_index()));
  const auto classes = static_cast<Index>(dataset.metadata.num_classes());
  const auto model = fit_logistic(design.encode(train), y, classes, options);
  std::vector<Index> truth;
  for (const auto& s : test) truth.push_back(static_cast<Index>(s.class_index()));
  return auc_multiclass(model.predict_proba(design.encode(test)), truth);
}

double linear_baseline(const TabularDataset& dataset, std::span<const Sample> train, std::span<const Sample> test,
                       double l2) {
  if (dataset.metadata.is_classification()) throw ContractViolation("linear baseline needs a regression task");
  DesignEncoder design(dataset.metadata, dataset.norm_stats, train);
  std::vector<double> y;
  for (const auto& s : train) y.push_back(dataset.norm_stats.normalize_target(*s.label));
  const auto model = fit_ridge(design.encode(train), y, l2);
  const Vector pred = model.predict(design.encode(test));
  std::vector<double> truth;
  for (const auto& s : test) truth.push_back(dataset.norm_stats.normalize_target(*s.label));
  return mse(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())), truth);
}

}  // namespace latte
