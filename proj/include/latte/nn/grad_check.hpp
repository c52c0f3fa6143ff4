#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "latte/nn/parameters.hpp"
#include "latte/tensor.hpp"

namespace latte::nn {

struct GradCheckOptions {
  double epsilon = 1e-5;
  /// Tensors larger than this are checked on a random subset of this many coordinates.
  Index coords_per_tensor = 50;
  /// Denominator floor of the relative error, so that vanishing gradients
  /// are compared on an absolute scale.
  double floor = 1e-6;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

double relative_error(double analytic, double numeric, double floor);

/// `loss` evaluates the scalar objective on a fresh tape; when called with
/// true it must also run backward so gradients land in the store.
using LossFunction = std::function<double(bool with_gradients)>;

/// Central differences against the backpropagated gradients of every
/// trainable parameter in `store`.
GradCheckReport grad_check(const LossFunction& loss, ParameterStore& store, const GradCheckOptions& options = {});

/// Same comparison for a plain function of a vector and a supplied gradient.
GradCheckReport grad_check(const std::function<double(const Vector&)>& f, const Vector& analytic, Vector point,
                           const GradCheckOptions& options = {});

}  // namespace latte::nn
