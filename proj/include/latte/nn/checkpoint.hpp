#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "latte/nn/parameters.hpp"
#include "latte/tensor.hpp"

namespace latte::nn {

struct NamedTensor {
  std::string name;
  Matrix value;
};

/// Binary container: magic, JSON manifest, then {name, shape, dtype, raw
/// little-endian float64} records. Serialization is byte-stable:
/// load followed by save reproduces the input bytes.
struct Checkpoint {
  nlohmann::json manifest = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const Matrix* find(std::string_view name) const;
  const Matrix& at(std::string_view name) const;
  void put(std::string name, Matrix value);

  std::string serialize() const;
  static Checkpoint deserialize(std::string_view bytes);

  /// Atomic write-then-rename.
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

/// Appends every parameter whose name starts with `prefix`.
void store_parameters(Checkpoint& checkpoint, const ParameterStore& store, std::string_view prefix = {});

/// Copies tensors into existing parameters whose names start with `prefix`.
/// Every such parameter must be present with a matching shape.
void restore_parameters(const Checkpoint& checkpoint, ParameterStore& store, std::string_view prefix = {});

}  // namespace latte::nn
