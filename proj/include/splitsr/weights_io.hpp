#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>

#include "splitsr/network.hpp"

namespace splitsr {

// Binary weight file, all integers little-endian:
//   "SSRW"  u16 version
//   u32 config length, config text (NetworkConfig::to_text), u64 FNV-1a of the text
//   u32 tensor count, then per tensor:
//     u32 name length, name, u8 dtype (0 = f32), u8 rank, rank × u32 dims, f32 values
// Each conv contributes "<name>.weight" (rank 4) and, if biased, "<name>.bias" (rank 1).

class WeightFileError : public std::runtime_error {
public:
  enum class Code { Io, BadMagic, BadVersion, Truncated, ConfigHash, BadConfig, ShapeMismatch, BadTensor };
  WeightFileError(Code c, const std::string& what) : std::runtime_error(what), code_(c) {}
  Code code() const noexcept { return code_; }

private:
  Code code_;
};

inline constexpr char kWeightMagic[4] = {'S', 'S', 'R', 'W'};
inline constexpr std::uint16_t kWeightVersion = 1;

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace detail {

template <typename U>
void put(std::ostream& os, U v) {
  unsigned char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(static_cast<std::uint64_t>(v) >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), sizeof(U));
}

inline void put_f32(std::ostream& os, float f) { put(os, std::bit_cast<std::uint32_t>(f)); }

class Reader {
public:
  explicit Reader(std::istream& is) : is_(is) {}

  void bytes(void* dst, std::size_t n, const char* what) {
    is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n)
      throw WeightFileError(WeightFileError::Code::Truncated, std::string("weight file truncated reading ") + what);
  }
  template <typename U>
  U get(const char* what) {
    unsigned char b[sizeof(U)];
    bytes(b, sizeof(U), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return static_cast<U>(v);
  }
  std::string str(std::size_t n, const char* what) {
    std::string s(n, '\0');
    if (n) bytes(s.data(), n, what);
    return s;
  }
  bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }

private:
  std::istream& is_;
};

}  // namespace detail

template <typename T>
void save_weights(const Network<T>& net, std::ostream& os) {
  const std::string cfg = net.config().to_text();
  os.write(kWeightMagic, 4);
  detail::put<std::uint16_t>(os, kWeightVersion);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  detail::put<std::uint64_t>(os, fnv1a(cfg));

  std::uint32_t count = 0;
  net.for_each_conv([&](const std::string&, const ConvWeights<T>& w) { count += w.has_bias() ? 2 : 1; });
  detail::put<std::uint32_t>(os, count);

  auto tensor = [&](const std::string& name, std::span<const std::uint32_t> dims, auto values) {
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put<std::uint8_t>(os, 0);
    detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(dims.size()));
    for (auto d : dims) detail::put<std::uint32_t>(os, d);
    for (T v : values) detail::put_f32(os, static_cast<float>(v));
  };
  net.for_each_conv([&](const std::string& name, const ConvWeights<T>& w) {
    const auto s = w.kernel.shape();
    const std::uint32_t kd[4] = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                                 static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
    tensor(name + ".weight", kd, w.kernel.data());
    if (w.has_bias()) {
      const std::uint32_t bd[1] = {static_cast<std::uint32_t>(w.bias.size())};
      tensor(name + ".bias", bd, std::span<const T>(w.bias));
    }
  });
  if (!os) throw WeightFileError(WeightFileError::Code::Io, "failed writing weight file");
}

inline void save_weights(const Network<float>& net, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw WeightFileError(WeightFileError::Code::Io, "cannot open '" + path + "' for writing");
  save_weights(net, os);
}

// Reads a weight file. If `expected` is given, the stored config must match
// it exactly, otherwise the stored config is used to rebuild the network.
inline Network<float> load_weights(std::istream& is, const std::optional<NetworkConfig>& expected = std::nullopt) {
  using Code = WeightFileError::Code;
  detail::Reader r(is);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kWeightMagic, 4) != 0) throw WeightFileError(Code::BadMagic, "not a weight file (bad magic)");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kWeightVersion)
    throw WeightFileError(Code::BadVersion, "unsupported weight file version " + std::to_string(version));
  const auto cfg_len = r.get<std::uint32_t>("config length");
  if (cfg_len > (1u << 20)) throw WeightFileError(Code::BadConfig, "config block too large");
  const std::string cfg_text = r.str(cfg_len, "config");
  const auto hash = r.get<std::uint64_t>("config hash");
  if (hash != fnv1a(cfg_text)) throw WeightFileError(Code::ConfigHash, "config hash mismatch");
  NetworkConfig cfg;
  try {
    cfg = NetworkConfig::parse(cfg_text);
  } catch (const std::exception& e) {
    throw WeightFileError(Code::BadConfig, std::string("invalid stored config: ") + e.what());
  }
  if (expected && !(*expected == cfg))
    throw WeightFileError(Code::ConfigHash, "stored config does not match the expected architecture");

  Network<float> net(cfg);
  std::map<std::string, std::pair<std::vector<std::uint32_t>, std::vector<float>>> table;
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = r.get<std::uint32_t>("tensor name length");
    if (name_len > 4096) throw WeightFileError(Code::BadTensor, "tensor name too long");
    std::string name = r.str(name_len, "tensor name");
    if (const auto dtype = r.get<std::uint8_t>("dtype"); dtype != 0)
      throw WeightFileError(Code::BadTensor, "tensor '" + name + "' has unsupported dtype " + std::to_string(dtype));
    const auto rank = r.get<std::uint8_t>("rank");
    if (rank == 0 || rank > 4) throw WeightFileError(Code::BadTensor, "tensor '" + name + "' has rank " + std::to_string(rank));
    std::vector<std::uint32_t> dims(rank);
    std::uint64_t numel = 1;
    for (auto& d : dims) {
      d = r.get<std::uint32_t>("dims");
      numel *= d;
    }
    if (numel > (1ull << 28)) throw WeightFileError(Code::BadTensor, "tensor '" + name + "' too large");
    std::vector<float> values(numel);
    for (auto& v : values) v = std::bit_cast<float>(r.get<std::uint32_t>("tensor data"));
    if (!table.emplace(std::move(name), std::make_pair(std::move(dims), std::move(values))).second)
      throw WeightFileError(Code::BadTensor, "duplicate tensor name");
  }
  if (!r.at_end()) throw WeightFileError(Code::BadTensor, "trailing bytes after tensor table");

  auto take = [&](const std::string& name, const std::vector<std::uint32_t>& dims) {
    auto it = table.find(name);
    if (it == table.end()) throw WeightFileError(Code::ShapeMismatch, "missing tensor '" + name + "'");
    if (it->second.first != dims) throw WeightFileError(Code::ShapeMismatch, "tensor '" + name + "' has the wrong shape");
    auto v = std::move(it->second.second);
    table.erase(it);
    return v;
  };
  net.for_each_conv([&](const std::string& name, ConvWeights<float>& w) {
    const auto s = w.kernel.shape();
    w.kernel = TensorF(s, take(name + ".weight", {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                                                  static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)}));
    if (w.has_bias()) w.bias = take(name + ".bias", {static_cast<std::uint32_t>(w.bias.size())});
  });
  if (!table.empty()) throw WeightFileError(Code::ShapeMismatch, "unexpected tensor '" + table.begin()->first + "'");
  return net;
}

inline Network<float> load_weights(const std::string& path, const std::optional<NetworkConfig>& expected = std::nullopt) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw WeightFileError(WeightFileError::Code::Io, "cannot open weight file '" + path + "'");
  return load_weights(is, expected);
}

}  // namespace splitsr
