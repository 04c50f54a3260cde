#pragma once

// "GZWT" weight files:
//   magic "GZWT" | u32 version | u32 layer count |
//   per layer: u32 kind tag | u32 tensor count |
//     per tensor: u32 rank | u64 dims[rank] | f64 data[prod(dims)]
// All integers and reals little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gazekit/error.hpp"
#include "gazekit/nn/layers.hpp"

namespace gazekit::nn {

inline constexpr char kWeightsMagic[4] = {'G', 'Z', 'W', 'T'};
inline constexpr std::uint32_t kWeightsVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "weight I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

struct Reader {
  const std::string& bytes;
  std::size_t pos = 0;

  template <typename T>
  T get() {
    require(pos + sizeof(T) <= bytes.size(), ErrorKind::Io, "truncated weight file");
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
};

}  // namespace detail

inline std::string serialize_weights(const std::vector<LayerState>& layers) {
  std::string out(kWeightsMagic, 4);
  detail::put<std::uint32_t>(out, kWeightsVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(layers.size()));
  for (const auto& layer : layers) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(layer.kind));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(layer.tensors.size()));
    for (const Tensor* t : layer.tensors) {
      detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t->rank()));
      for (std::size_t d : t->shape()) detail::put<std::uint64_t>(out, d);
      out.append(reinterpret_cast<const char*>(t->data()), t->size() * sizeof(double));
    }
  }
  return out;
}

/// Loads bytes into existing layer tensors; kinds and shapes must match exactly.
inline void deserialize_weights(const std::string& bytes, const std::vector<LayerState>& layers) {
  require(bytes.size() >= 12 && std::memcmp(bytes.data(), kWeightsMagic, 4) == 0, ErrorKind::Io,
          "not a GZWT weight file");
  detail::Reader in{bytes, 4};
  const auto version = in.get<std::uint32_t>();
  require(version == kWeightsVersion, ErrorKind::Io, "unsupported weight version " + std::to_string(version));
  const auto count = in.get<std::uint32_t>();
  require(count == layers.size(), ErrorKind::Dimension,
          "weight file has " + std::to_string(count) + " layers, network has " + std::to_string(layers.size()));
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto kind = static_cast<LayerKind>(in.get<std::uint32_t>());
    require(kind == layers[li].kind, ErrorKind::Dimension,
            "layer " + std::to_string(li) + ": expected " + std::string(to_string(layers[li].kind)) +
                ", file has " + std::string(to_string(kind)));
    const auto tensors = in.get<std::uint32_t>();
    require(tensors == layers[li].tensors.size(), ErrorKind::Dimension,
            "layer " + std::to_string(li) + ": tensor count mismatch");
    for (Tensor* t : layers[li].tensors) {
      const auto rank = in.get<std::uint32_t>();
      Shape shape(rank);
      for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());
      require(shape == t->shape(), ErrorKind::Dimension,
              "layer " + std::to_string(li) + ": shape " + shape_string(shape) + " vs " + shape_string(t->shape()));
      const std::size_t nbytes = t->size() * sizeof(double);
      require(in.pos + nbytes <= bytes.size(), ErrorKind::Io, "truncated weight file");
      std::memcpy(t->data(), bytes.data() + in.pos, nbytes);
      in.pos += nbytes;
    }
  }
  require(in.pos == bytes.size(), ErrorKind::Io, "trailing bytes in weight file");
}

inline void save_weights(const std::string& path, const std::vector<LayerState>& layers) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot write " + path);
  const std::string bytes = serialize_weights(layers);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline void load_weights(const std::string& path, const std::vector<LayerState>& layers) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot read " + path);
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  deserialize_weights(bytes, layers);
}

}  // namespace gazekit::nn
