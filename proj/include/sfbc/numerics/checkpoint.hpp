#pragma once

// Flat container of named real arrays.
//
// Layout, all integers and reals little-endian:
//   magic     8 bytes  "SFBCCKPT"
//   version   u32      (currently 1)
//   count     u32      number of arrays
//   per array:
//     name_len u32, name bytes (UTF-8, no terminator)
//     ndim     u32, dims u64[ndim]
//     data     f64[prod(dims)]  (column-major for matrices)

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "sfbc/error.hpp"
#include "sfbc/numerics/mlp.hpp"

namespace sfbc::numerics {

inline constexpr std::array<char, 8> kCheckpointMagic = {'S', 'F', 'B', 'C', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> data;

  bool operator==(const NamedArray&) const = default;
};

namespace detail {

template <class T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.append(bytes.data(), bytes.size());
}

class Reader {
 public:
  explicit Reader(std::string buf) : buf_(std::move(buf)) {}

  template <class T>
  T get() {
    require(pos_ + sizeof(T) <= buf_.size(), ErrorKind::Parse, "checkpoint truncated");
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }

  std::string get_bytes(std::size_t n) {
    require(pos_ + n <= buf_.size(), ErrorKind::Parse, "checkpoint truncated");
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == buf_.size(); }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const std::vector<NamedArray>& arrays) {
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    std::uint64_t n = 1;
    for (auto d : a.shape) n *= d;
    require(n == a.data.size(), ErrorKind::ShapeMismatch,
            "array '" + a.name + "' data length does not match its shape");
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) detail::put_le<std::uint64_t>(out, d);
    for (double v : a.data) detail::put_le<double>(out, v);
  }
  return out;
}

inline std::vector<NamedArray> decode_checkpoint(std::string bytes) {
  detail::Reader r(std::move(bytes));
  const std::string magic = r.get_bytes(kCheckpointMagic.size());
  require(std::equal(magic.begin(), magic.end(), kCheckpointMagic.begin()), ErrorKind::Parse,
          "bad checkpoint magic");
  const auto version = r.get<std::uint32_t>();
  require(version == kCheckpointVersion, ErrorKind::Parse,
          "unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedArray> arrays;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.get_bytes(r.get<std::uint32_t>());
    const auto ndim = r.get<std::uint32_t>();
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      a.shape.push_back(r.get<std::uint64_t>());
      n *= a.shape.back();
    }
    require(n < (std::uint64_t{1} << 40), ErrorKind::Parse, "implausible array size");
    a.data.resize(n);
    for (auto& v : a.data) v = r.get<double>();
    arrays.push_back(std::move(a));
  }
  require(r.done(), ErrorKind::Parse, "trailing bytes after checkpoint");
  return arrays;
}

inline void write_checkpoint(const std::string& path, const std::vector<NamedArray>& arrays) {
  const std::string bytes = encode_checkpoint(arrays);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(f), ErrorKind::Io, "write to '" + path + "' failed");
}

inline std::vector<NamedArray> read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(std::move(bytes));
}

/// Arrays named "<prefix>layer<i>.weight" / ".bias".
inline std::vector<NamedArray> to_named_arrays(const MlpParams& params, const std::string& prefix) {
  std::vector<NamedArray> out;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    const std::string base = prefix + "layer" + std::to_string(i);
    out.push_back({base + ".weight",
                   {static_cast<std::uint64_t>(l.weight.rows()),
                    static_cast<std::uint64_t>(l.weight.cols())},
                   std::vector<double>(l.weight.data(), l.weight.data() + l.weight.size())});
    out.push_back({base + ".bias",
                   {static_cast<std::uint64_t>(l.bias.size())},
                   std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())});
  }
  return out;
}

inline const NamedArray& find_array(const std::vector<NamedArray>& arrays, const std::string& name) {
  for (const auto& a : arrays)
    if (a.name == name) return a;
  throw Error(ErrorKind::Parse, "checkpoint has no array named '" + name + "'");
}

inline MlpParams from_named_arrays(const std::vector<NamedArray>& arrays, const MlpSpec& spec,
                                   const std::string& prefix) {
  MlpParams p;
  for (std::size_t i = 0; i < spec.num_layers(); ++i) {
    const std::string base = prefix + "layer" + std::to_string(i);
    const auto& w = find_array(arrays, base + ".weight");
    const auto& b = find_array(arrays, base + ".bias");
    const auto rows = static_cast<std::uint64_t>(spec.layer_widths[i + 1]);
    const auto cols = static_cast<std::uint64_t>(spec.layer_widths[i]);
    require(w.shape == std::vector<std::uint64_t>{rows, cols} &&
                b.shape == std::vector<std::uint64_t>{rows},
            ErrorKind::ShapeMismatch, "checkpoint layer " + std::to_string(i) + " shape mismatch");
    Layer l{Eigen::Map<const Matrix>(w.data.data(), static_cast<Eigen::Index>(rows),
                                     static_cast<Eigen::Index>(cols)),
            Eigen::Map<const Vector>(b.data.data(), static_cast<Eigen::Index>(rows))};
    p.layers.push_back(std::move(l));
  }
  return p;
}

}  // namespace sfbc::numerics
