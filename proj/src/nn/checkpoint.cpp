#include "latte/nn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include "latte/error.hpp"
#include "latte/io.hpp"

namespace latte::nn {

namespace {

constexpr std::string_view kMagic = "LATTECK1";
constexpr std::uint8_t kFloat64 = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put_raw(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + at_, sizeof(T));
    at_ += sizeof(T);
    return value;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto view = bytes_.substr(at_, n);
    at_ += n;
    return view;
  }

  bool done() const { return at_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - at_ < n) throw FormatError("checkpoint is truncated");
  }
  std::string_view bytes_;
  std::size_t at_ = 0;
};

}  // namespace

const Matrix* Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.value;
  return nullptr;
}

const Matrix& Checkpoint::at(std::string_view name) const {
  const auto* m = find(name);
  if (m == nullptr) throw FormatError("checkpoint has no tensor '" + std::string(name) + "'");
  return *m;
}

void Checkpoint::put(std::string name, Matrix value) {
  for (auto& t : tensors)
    if (t.name == name) {
      t.value = std::move(value);
      return;
    }
  tensors.push_back({std::move(name), std::move(value)});
}

std::string Checkpoint::serialize() const {
  std::string out(kMagic);
  const std::string meta = manifest.dump();
  put_raw<std::uint64_t>(out, meta.size());
  out += meta;
  put_raw<std::uint64_t>(out, tensors.size());
  for (const auto& t : tensors) {
    put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_raw<std::uint32_t>(out, 2);
    put_raw<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.rows()));
    put_raw<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.cols()));
    put_raw<std::uint8_t>(out, kFloat64);
    out.append(reinterpret_cast<const char*>(t.value.data()), static_cast<std::size_t>(t.value.size()) * sizeof(double));
  }
  return out;
}

Checkpoint Checkpoint::deserialize(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(kMagic.size()) != kMagic) throw FormatError("not a checkpoint file");
  Checkpoint ckpt;
  const auto meta_len = in.get<std::uint64_t>();
  try {
    ckpt.manifest = nlohmann::json::parse(in.take(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint manifest: ") + e.what());
  }
  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = std::string(in.take(in.get<std::uint32_t>()));
    if (in.get<std::uint32_t>() != 2) throw FormatError("tensor '" + t.name + "' is not two-dimensional");
    const auto rows = in.get<std::uint64_t>();
    const auto cols = in.get<std::uint64_t>();
    if (in.get<std::uint8_t>() != kFloat64) throw FormatError("tensor '" + t.name + "' has an unsupported dtype");
    const auto raw = in.take(rows * cols * sizeof(double));
    t.value.resize(static_cast<Index>(rows), static_cast<Index>(cols));
    std::memcpy(t.value.data(), raw.data(), raw.size());
    ckpt.tensors.push_back(std::move(t));
  }
  if (!in.done()) throw FormatError("trailing bytes after checkpoint records");
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError("checkpoint " + path.string() + " does not exist");
  return deserialize(read_file(path));
}

void store_parameters(Checkpoint& checkpoint, const ParameterStore& store, std::string_view prefix) {
  for (const auto* p : store.parameters())
    if (p->name.starts_with(prefix)) checkpoint.put(p->name, p->value);
}

void restore_parameters(const Checkpoint& checkpoint, ParameterStore& store, std::string_view prefix) {
  for (auto* p : store.parameters()) {
    if (!p->name.starts_with(prefix)) continue;
    const auto& m = checkpoint.at(p->name);
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
      throw FormatError("tensor '" + p->name + "' has a different shape in the checkpoint");
    p->value = m;
  }
}

}  // namespace latte::nn
