#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "inkwash/error.hpp"

namespace inkwash {

/// One convolution layer's parameters as stored on disk (32-bit floats,
/// kernel laid out out_channels x in_channels x kernel_h x kernel_w).
struct ConvWeights {
  std::string name;
  std::uint32_t out_channels = 0;
  std::uint32_t in_channels = 0;
  std::uint32_t kernel_h = 0;
  std::uint32_t kernel_w = 0;
  std::vector<float> kernel;
  std::vector<float> bias;

  std::size_t kernel_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel_h * kernel_w;
  }
  std::size_t parameter_count() const { return kernel_count() + out_channels; }
};

namespace detail {

constexpr char kWeightMagic[4] = {'N', 'S', 'T', 'W'};
constexpr std::uint32_t kWeightVersion = 1;

struct ByteReader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  std::size_t remaining() const { return bytes.size() - pos; }

  std::uint32_t u32(const char* what) {
    if (remaining() < 4) throw IoError(std::string("weight file length mismatch reading ") + what);
    std::uint32_t v = static_cast<std::uint32_t>(bytes[pos]) |
                      (static_cast<std::uint32_t>(bytes[pos + 1]) << 8) |
                      (static_cast<std::uint32_t>(bytes[pos + 2]) << 16) |
                      (static_cast<std::uint32_t>(bytes[pos + 3]) << 24);
    pos += 4;
    return v;
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  std::string str(std::size_t n, const char* what) {
    if (remaining() < n) throw IoError(std::string("weight file length mismatch reading ") + what);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
};

struct ByteWriter {
  std::vector<std::uint8_t> bytes;

  void u32(std::uint32_t v) {
    bytes.push_back(static_cast<std::uint8_t>(v & 0xff));
    bytes.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    bytes.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    bytes.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
};

inline std::vector<std::uint8_t> read_all_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open weight file: " + path);
  f.seekg(0, std::ios::end);
  std::streamoff n = f.tellg();
  f.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n > 0 ? n : 0));
  if (!bytes.empty()) f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("cannot read weight file: " + path);
  return bytes;
}

}  // namespace detail

/// Parse a weight file. Validates magic, version, per-layer shape counts,
/// name uniqueness, and that the payload length matches the header exactly.
inline std::vector<ConvWeights> read_weight_file(const std::string& path) {
  auto bytes = detail::read_all_bytes(path);
  detail::ByteReader r{bytes};
  const std::string magic = r.str(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), detail::kWeightMagic))
    throw IoError("bad magic in weight file: " + path);
  const std::uint32_t version = r.u32("version");
  if (version != detail::kWeightVersion)
    throw IoError("unsupported weight file version " + std::to_string(version) + ": " + path);
  const std::uint32_t layer_count = r.u32("layer count");

  std::vector<ConvWeights> layers;
  layers.reserve(layer_count);
  std::unordered_set<std::string> names;
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    ConvWeights cw;
    const std::uint32_t name_len = r.u32("layer name length");
    if (name_len == 0 || name_len > 4096) throw IoError("invalid layer name length: " + path);
    cw.name = r.str(name_len, "layer name");
    if (!names.insert(cw.name).second)
      throw IoError("duplicate layer name '" + cw.name + "': " + path);
    cw.out_channels = r.u32("out_channels");
    cw.in_channels = r.u32("in_channels");
    cw.kernel_h = r.u32("kernel_h");
    cw.kernel_w = r.u32("kernel_w");
    if (cw.out_channels == 0 || cw.in_channels == 0 || cw.kernel_h == 0 || cw.kernel_w == 0)
      throw IoError("zero shape dimension in layer '" + cw.name + "': " + path);
    const std::uint64_t count = static_cast<std::uint64_t>(cw.out_channels) * cw.in_channels *
                                cw.kernel_h * cw.kernel_w;
    if (count > (1u << 30)) throw IoError("layer '" + cw.name + "' too large: " + path);
    cw.kernel.resize(static_cast<std::size_t>(count));
    for (float& v : cw.kernel) v = r.f32("kernel scalars");
    cw.bias.resize(cw.out_channels);
    for (float& v : cw.bias) v = r.f32("bias scalars");
    layers.push_back(std::move(cw));
  }
  if (r.remaining() != 0)
    throw IoError("weight file length mismatch: " + std::to_string(r.remaining()) +
                  " trailing bytes in " + path);
  return layers;
}

inline void write_weight_file(const std::string& path, const std::vector<ConvWeights>& layers) {
  std::unordered_set<std::string> names;
  for (const auto& cw : layers) {
    if (!names.insert(cw.name).second)
      throw ValueError("write_weight_file: duplicate layer name '" + cw.name + "'");
    if (cw.kernel.size() != cw.kernel_count() || cw.bias.size() != cw.out_channels)
      throw ValueError("write_weight_file: shape/length mismatch in layer '" + cw.name + "'");
  }
  detail::ByteWriter w;
  w.str(std::string(detail::kWeightMagic, 4));
  w.u32(detail::kWeightVersion);
  w.u32(static_cast<std::uint32_t>(layers.size()));
  for (const auto& cw : layers) {
    w.u32(static_cast<std::uint32_t>(cw.name.size()));
    w.str(cw.name);
    w.u32(cw.out_channels);
    w.u32(cw.in_channels);
    w.u32(cw.kernel_h);
    w.u32(cw.kernel_w);
    for (float v : cw.kernel) w.f32(v);
    for (float v : cw.bias) w.f32(v);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(w.bytes.data()), static_cast<std::streamsize>(w.bytes.size()));
  if (!f) throw IoError("cannot write weight file: " + path);
}

}  // namespace inkwash
