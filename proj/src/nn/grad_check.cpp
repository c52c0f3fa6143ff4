#include "latte/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "latte/error.hpp"

namespace latte::nn {

namespace {

double checked(double v) {
  if (!std::isfinite(v)) throw NumericalError("grad_check: objective is not finite");
  return v;
}

std::vector<Index> pick_coordinates(Index size, Index limit, Rng& rng) {
  std::vector<Index> all(static_cast<std::size_t>(size));
  std::iota(all.begin(), all.end(), Index{0});
  if (limit <= 0 || size <= limit) return all;
  rng.shuffle(all);
  all.resize(static_cast<std::size_t>(limit));
  std::sort(all.begin(), all.end());
  return all;
}

void record(GradCheckReport& report, const std::string& name, Index i, double a, double n, double floor) {
  ++report.coordinates;
  const double err = relative_error(a, n, floor);
  if (err > report.max_relative_error || report.worst_index < 0) {
    report.max_relative_error = std::max(report.max_relative_error, err);
    report.worst_parameter = name;
    report.worst_index = i;
    report.analytic = a;
    report.numeric = n;
  }
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

GradCheckReport grad_check(const LossFunction& loss, ParameterStore& store, const GradCheckOptions& options) {
  store.zero_grad();
  checked(loss(true));
  Rng rng(options.seed);
  GradCheckReport report;
  for (auto* p : store.parameters()) {
    if (!p->trainable) continue;
    const Matrix analytic = p->grad;
    for (Index i : pick_coordinates(p->value.size(), options.coords_per_tensor, rng)) {
      double& x = p->value.data()[i];
      const double saved = x;
      x = saved + options.epsilon;
      const double up = checked(loss(false));
      x = saved - options.epsilon;
      const double down = checked(loss(false));
      x = saved;
      record(report, p->name, i, analytic.data()[i], (up - down) / (2.0 * options.epsilon), options.floor);
    }
  }
  store.zero_grad();
  return report;
}

GradCheckReport grad_check(const std::function<double(const Vector&)>& f, const Vector& analytic, Vector point,
                           const GradCheckOptions& options) {
  if (analytic.size() != point.size()) throw ShapeError("grad_check: gradient length differs from point");
  checked(f(point));
  GradCheckReport report;
  for (Index i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + options.epsilon;
    const double up = checked(f(point));
    point[i] = saved - options.epsilon;
    const double down = checked(f(point));
    point[i] = saved;
    record(report, "x", i, analytic[i], (up - down) / (2.0 * options.epsilon), options.floor);
  }
  return report;
}

}  // namespace latte::nn
