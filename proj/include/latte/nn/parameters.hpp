#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "latte/rng.hpp"
#include "latte/tensor.hpp"

namespace latte::nn {

enum class InitScheme {
  kaiming,  // N(0, 2 / fan_in)
  xavier,   // N(0, 2 / (fan_in + fan_out))
  zeros,
  ones,
  identity,
  normal,   // N(0, 1)
};

/// Accepts "kaiming", "xavier", "zeros", "ones", "identity", "normal".
InitScheme parse_init_scheme(std::string_view name);
std::string to_string(InitScheme scheme);

/// Fills a rows x cols tensor; fan_in is `rows` (inputs multiply from the left).
Matrix init_parameters(Index rows, Index cols, InitScheme scheme, Rng& rng);

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  InitScheme scheme = InitScheme::zeros;
  bool trainable = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Named tensors in insertion order. Names are unique; addresses are stable.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Index rows, Index cols, InitScheme scheme, Rng& rng);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  Parameter* find(std::string_view name);
  bool contains(std::string_view name) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t size() const { return order_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  bool all_finite() const;

 private:
  std::vector<std::unique_ptr<Parameter>> order_;
  std::map<std::string, Parameter*, std::less<>> by_name_;
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam without weight decay. State is keyed by parameter name.
class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  void step(ParameterStore& store);
  long steps() const { return step_; }
  const AdamConfig& config() const { return config_; }

 private:
  struct Moments {
    Matrix m;
    Matrix v;
  };
  AdamConfig config_;
  long step_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace latte::nn
