#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include "../errors.hpp"
#include "layer.hpp"
#include "tensor.hpp"

namespace reidaug::nn {

/**
 * Binary parameter file.
 *
 *   magic "RDAGCKPT" | u32 version | u64 FNV-1a(descriptor) |
 *   u32 len, descriptor bytes | u32 record count | records...
 *   record: u32 len, name | u8 dtype (0 f32, 1 f64) | u32 rank | u64 dims[rank] | raw values
 *
 * All integers and values little-endian.
 */
inline constexpr std::array<char, 8> kCheckpointMagic{'R', 'D', 'A', 'G', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class Dtype : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T> constexpr Dtype dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? Dtype::f32 : Dtype::f64;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct CheckpointRecord {
  std::string name;
  Dtype dtype = Dtype::f32;
  Shape shape;
  std::vector<std::uint8_t> raw; // little-endian element bytes
  bool operator==(const CheckpointRecord &) const = default;
};

namespace detail {

template <typename U> void put_le(std::vector<std::uint8_t> &out, U v) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename U> U get_le(const std::uint8_t *p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

template <typename T> using bits_t = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;

class Reader {
public:
  explicit Reader(const std::vector<std::uint8_t> &buf) : buf_(buf) {}
  template <typename U> U read() {
    need(sizeof(U));
    U v = get_le<U>(buf_.data() + pos_);
    pos_ += sizeof(U);
    return v;
  }
  std::string read_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char *>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<std::uint8_t> read_bytes(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> v(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return v;
  }
  bool done() const { return pos_ == buf_.size(); }

private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size())
      throw IoError("checkpoint truncated");
  }
  const std::vector<std::uint8_t> &buf_;
  std::size_t pos_ = 0;
};

} // namespace detail

class Checkpoint {
public:
  Checkpoint() = default;
  explicit Checkpoint(std::string descriptor) : descriptor_(std::move(descriptor)) {}

  const std::string &descriptor() const noexcept { return descriptor_; }
  std::uint64_t descriptor_hash() const { return fnv1a64(descriptor_); }
  const std::vector<CheckpointRecord> &records() const noexcept { return records_; }

  template <typename T> void put(const std::string &name, const Tensor<T> &t) {
    if (index_.count(name))
      throw ArgumentError("checkpoint: duplicate record " + name);
    CheckpointRecord r{name, dtype_of<T>(), t.shape(), {}};
    r.raw.reserve(t.size() * sizeof(T));
    for (T v : t.vec())
      detail::put_le(r.raw, std::bit_cast<detail::bits_t<T>>(v));
    index_[name] = records_.size();
    records_.push_back(std::move(r));
  }

  bool contains(const std::string &name) const { return index_.count(name) > 0; }

  /// Reads a record, converting between f32 and f64 if needed.
  template <typename T> Tensor<T> get(const std::string &name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw IoError("checkpoint: missing record " + name);
    const auto &r = records_[it->second];
    Tensor<T> t(r.shape);
    const std::size_t width = r.dtype == Dtype::f32 ? 4 : 8;
    if (r.raw.size() != t.size() * width)
      throw IoError("checkpoint: record " + name + " has inconsistent size");
    for (std::size_t i = 0; i < t.size(); ++i) {
      const std::uint8_t *p = r.raw.data() + i * width;
      if (r.dtype == Dtype::f32)
        t[i] = static_cast<T>(std::bit_cast<float>(detail::get_le<std::uint32_t>(p)));
      else
        t[i] = static_cast<T>(std::bit_cast<double>(detail::get_le<std::uint64_t>(p)));
    }
    return t;
  }

  std::vector<std::uint8_t> serialize() const {
    std::vector<std::uint8_t> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
    detail::put_le(out, kCheckpointVersion);
    detail::put_le(out, descriptor_hash());
    detail::put_le(out, static_cast<std::uint32_t>(descriptor_.size()));
    out.insert(out.end(), descriptor_.begin(), descriptor_.end());
    detail::put_le(out, static_cast<std::uint32_t>(records_.size()));
    for (const auto &r : records_) {
      detail::put_le(out, static_cast<std::uint32_t>(r.name.size()));
      out.insert(out.end(), r.name.begin(), r.name.end());
      out.push_back(static_cast<std::uint8_t>(r.dtype));
      detail::put_le(out, static_cast<std::uint32_t>(r.shape.size()));
      for (auto d : r.shape)
        detail::put_le(out, static_cast<std::uint64_t>(d));
      out.insert(out.end(), r.raw.begin(), r.raw.end());
    }
    return out;
  }

  static Checkpoint deserialize(const std::vector<std::uint8_t> &buf) {
    detail::Reader rd(buf);
    if (rd.read_string(kCheckpointMagic.size()) != std::string(kCheckpointMagic.begin(), kCheckpointMagic.end()))
      throw IoError("checkpoint: bad magic");
    const auto version = rd.read<std::uint32_t>();
    if (version != kCheckpointVersion)
      throw IoError("checkpoint: unsupported version " + std::to_string(version));
    const auto hash = rd.read<std::uint64_t>();
    Checkpoint ck(rd.read_string(rd.read<std::uint32_t>()));
    if (ck.descriptor_hash() != hash)
      throw IoError("checkpoint: descriptor hash mismatch");
    const auto count = rd.read<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
      CheckpointRecord r;
      r.name = rd.read_string(rd.read<std::uint32_t>());
      const auto dt = rd.read<std::uint8_t>();
      if (dt > 1)
        throw IoError("checkpoint: unknown dtype in " + r.name);
      r.dtype = static_cast<Dtype>(dt);
      const auto rank = rd.read<std::uint32_t>();
      for (std::uint32_t k = 0; k < rank; ++k)
        r.shape.push_back(static_cast<std::size_t>(rd.read<std::uint64_t>()));
      r.raw = rd.read_bytes(shape_numel(r.shape) * (r.dtype == Dtype::f32 ? 4 : 8));
      ck.index_[r.name] = ck.records_.size();
      ck.records_.push_back(std::move(r));
    }
    if (!rd.done())
      throw IoError("checkpoint: trailing bytes");
    return ck;
  }

  void save(const std::filesystem::path &file) const {
    if (file.has_parent_path())
      std::filesystem::create_directories(file.parent_path());
    const auto bytes = serialize();
    std::ofstream out(file, std::ios::binary);
    if (!out)
      throw IoError("cannot write checkpoint: " + file.string());
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }

  static Checkpoint load(const std::filesystem::path &file) {
    std::ifstream in(file, std::ios::binary);
    if (!in)
      throw IoError("cannot open checkpoint: " + file.string());
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(buf);
  }

  /// Fails unless this checkpoint was written for `descriptor`.
  void expect_descriptor(const std::string &descriptor) const {
    if (fnv1a64(descriptor) != descriptor_hash())
      throw IoError("checkpoint architecture mismatch: expected " + descriptor + ", found " + descriptor_);
  }

private:
  std::string descriptor_;
  std::vector<CheckpointRecord> records_;
  std::map<std::string, std::size_t> index_;
};

/// Stores every parameter and buffer under its own name.
template <typename T>
void store_state(Checkpoint &ck, const std::vector<Parameter<T> *> &params, const std::vector<Buffer<T>> &buffers) {
  for (auto *p : params)
    ck.put(p->name, p->value);
  for (const auto &b : buffers)
    ck.put(b.name, *b.value);
}

template <typename T>
void restore_state(const Checkpoint &ck, const std::vector<Parameter<T> *> &params,
                   const std::vector<Buffer<T>> &buffers) {
  for (auto *p : params) {
    auto t = ck.get<T>(p->name);
    if (t.shape() != p->value.shape())
      throw IoError("checkpoint: shape mismatch for " + p->name);
    p->value = std::move(t);
  }
  for (const auto &b : buffers) {
    auto t = ck.get<T>(b.name);
    if (t.shape() != b.value->shape())
      throw IoError("checkpoint: shape mismatch for " + b.name);
    *b.value = std::move(t);
  }
}

} // namespace reidaug::nn
