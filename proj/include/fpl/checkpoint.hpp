#pragma once

// Binary network checkpoints. All integers and floats are little-endian.
//
//   offset  size        field
//   0       8           magic "FPLMLP\0\1"
//   8       4  u32      format version (1)
//   12      4  u32      output activation (0 identity, 1 tanh_scaled, 2 logistic)
//   16      4  u32      L, number of layer sizes
//   20      8L u64      layer sizes, input first
//   ...     8K f64      output low bounds, K = last layer size
//   ...     8K f64      output high bounds
//   ...     8P f64      parameters, P = sum (in + 1) * out; per layer the
//                       weights row-major (out x in) followed by the biases

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpl/mlp.hpp"

namespace fpl::nn {

inline constexpr std::array<char, 8> checkpoint_magic{'F', 'P', 'L', 'M', 'L', 'P', '\0', '\1'};
inline constexpr std::uint32_t checkpoint_version = 1;

class CheckpointError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <class T>
void put_le(std::vector<unsigned char>& out, T value) {
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>) {
    bits = std::bit_cast<std::uint64_t>(value);
  } else {
    bits = static_cast<std::uint64_t>(value);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

class Reader {
public:
  explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw CheckpointError("checkpoint: truncated file");
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      bits |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    if constexpr (std::is_same_v<T, double>) {
      return std::bit_cast<double>(bits);
    } else {
      return static_cast<T>(bits);
    }
  }

  void expect_magic() {
    if (bytes_.size() < checkpoint_magic.size() ||
        std::memcmp(bytes_.data(), checkpoint_magic.data(), checkpoint_magic.size()) != 0)
      throw CheckpointError("checkpoint: bad magic");
    pos_ = checkpoint_magic.size();
  }

  bool at_end() const { return pos_ == bytes_.size(); }

private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

} // namespace detail

inline std::vector<unsigned char> encode_checkpoint(const Mlp& net) {
  std::vector<unsigned char> out(checkpoint_magic.begin(), checkpoint_magic.end());
  detail::put_le<std::uint32_t>(out, checkpoint_version);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.output_activation()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.layer_sizes().size()));
  for (std::size_t s : net.layer_sizes()) detail::put_le<std::uint64_t>(out, s);
  for (Eigen::Index i = 0; i < net.output_low().size(); ++i) detail::put_le(out, net.output_low()(i));
  for (Eigen::Index i = 0; i < net.output_high().size(); ++i) detail::put_le(out, net.output_high()(i));
  for (double w : net.flat_parameters()) detail::put_le(out, w);
  return out;
}

inline Mlp decode_checkpoint(const std::vector<unsigned char>& bytes) {
  detail::Reader in(bytes);
  in.expect_magic();
  if (in.get<std::uint32_t>() != checkpoint_version)
    throw CheckpointError("checkpoint: unsupported version");
  const auto act = in.get<std::uint32_t>();
  if (act > 2) throw CheckpointError("checkpoint: unknown output activation");
  const auto count = in.get<std::uint32_t>();
  if (count < 2 || count > 64) throw CheckpointError("checkpoint: bad layer count");
  std::vector<std::size_t> sizes;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto s = in.get<std::uint64_t>();
    if (s == 0 || s > (1u << 20)) throw CheckpointError("checkpoint: bad layer size");
    sizes.push_back(static_cast<std::size_t>(s));
  }
  std::vector<double> low(sizes.back()), high(sizes.back());
  for (double& v : low) v = in.get<double>();
  for (double& v : high) v = in.get<double>();

  std::mt19937_64 unused(0);
  Mlp net(sizes, static_cast<OutputActivation>(act), unused, low, high);
  std::vector<double> params(net.parameter_count());
  for (double& v : params) v = in.get<double>();
  if (!in.at_end()) throw CheckpointError("checkpoint: trailing bytes");
  net.set_flat_parameters(params);
  return net;
}

inline void save_checkpoint(const std::string& path, const Mlp& net) {
  const auto bytes = encode_checkpoint(net);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline Mlp load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

} // namespace fpl::nn
