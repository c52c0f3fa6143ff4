#include "latte/nn/parameters.hpp"

#include <cmath>

#include "latte/error.hpp"

namespace latte::nn {

InitScheme parse_init_scheme(std::string_view name) {
  if (name == "kaiming") return InitScheme::kaiming;
  if (name == "xavier") return InitScheme::xavier;
  if (name == "zeros") return InitScheme::zeros;
  if (name == "ones") return InitScheme::ones;
  if (name == "identity") return InitScheme::identity;
  if (name == "normal") return InitScheme::normal;
  throw ConfigError("unknown initialization scheme '" + std::string(name) + "'");
}

std::string to_string(InitScheme scheme) {
  switch (scheme) {
    case InitScheme::kaiming: return "kaiming";
    case InitScheme::xavier: return "xavier";
    case InitScheme::zeros: return "zeros";
    case InitScheme::ones: return "ones";
    case InitScheme::identity: return "identity";
    case InitScheme::normal: return "normal";
  }
  return "unknown";
}

Matrix init_parameters(Index rows, Index cols, InitScheme scheme, Rng& rng) {
  if (rows < 1 || cols < 1) throw ShapeError("parameter shape must be positive");
  Matrix m(rows, cols);
  auto fill_normal = [&](double stddev) {
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
  };
  switch (scheme) {
    case InitScheme::kaiming: fill_normal(std::sqrt(2.0 / static_cast<double>(rows))); break;
    case InitScheme::xavier: fill_normal(std::sqrt(2.0 / static_cast<double>(rows + cols))); break;
    case InitScheme::zeros: m.setZero(); break;
    case InitScheme::ones: m.setOnes(); break;
    case InitScheme::identity: m.setIdentity(); break;
    case InitScheme::normal: fill_normal(1.0); break;
  }
  return m;
}

Parameter& ParameterStore::add(const std::string& name, Index rows, Index cols, InitScheme scheme, Rng& rng) {
  if (name.empty()) throw ContractViolation("parameter name must not be empty");
  if (by_name_.count(name)) throw ContractViolation("duplicate parameter '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->scheme = scheme;
  p->value = init_parameters(rows, cols, scheme, rng);
  p->zero_grad();
  auto* raw = p.get();
  order_.push_back(std::move(p));
  by_name_.emplace(name, raw);
  return *raw;
}

Parameter* ParameterStore::find(std::string_view name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

bool ParameterStore::contains(std::string_view name) const { return by_name_.find(name) != by_name_.end(); }

Parameter& ParameterStore::get(std::string_view name) {
  auto* p = find(name);
  if (p == nullptr) throw ContractViolation("unknown parameter '" + std::string(name) + "'");
  return *p;
}

const Parameter& ParameterStore::get(std::string_view name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ContractViolation("unknown parameter '" + std::string(name) + "'");
  return *it->second;
}

std::vector<Parameter*> ParameterStore::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : order_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& p : order_) out.push_back(p.get());
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : order_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : order_) p->zero_grad();
}

bool ParameterStore::all_finite() const {
  for (const auto& p : order_)
    if (!p->value.allFinite()) return false;
  return true;
}

void Adam::step(ParameterStore& store) {
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (auto* p : store.parameters()) {
    if (!p->trainable || p->grad.size() == 0) continue;
    auto& mo = moments_[p->name];
    if (mo.m.size() == 0) {
      mo.m = Matrix::Zero(p->value.rows(), p->value.cols());
      mo.v = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    mo.m = config_.beta1 * mo.m + (1.0 - config_.beta1) * p->grad;
    mo.v = config_.beta2 * mo.v + (1.0 - config_.beta2) * p->grad.cwiseProduct(p->grad);
    p->value.array() -= config_.learning_rate * (mo.m.array() / bc1) / ((mo.v.array() / bc2).sqrt() + config_.epsilon);
  }
}

}  // namespace latte::nn
