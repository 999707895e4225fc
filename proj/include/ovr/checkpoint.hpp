#pragma once

// Checkpoint container.
//
// Layout:
//   "OVRL"                 4 magic bytes
//   version                1 byte (currently 1)
//   header length          uint32 little-endian
//   header                 UTF-8 JSON: {"arrays":[{"name","shape":[r,c],"dtype":"f64le"}...],
//                                       "hyper":{string: string}}
//   payload                each array's entries as little-endian IEEE-754 doubles,
//                          row-major, in header order

#include "ovr/common.hpp"
#include "ovr/network.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace ovr {

inline constexpr char kCheckpointMagic[4] = {'O', 'V', 'R', 'L'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct Checkpoint {
  std::vector<std::pair<std::string, Matrix>> arrays;
  std::map<std::string, std::string> hyper;

  const Matrix& array(const std::string& name) const {
    for (const auto& [n, m] : arrays)
      if (n == name) return m;
    throw FormatError("checkpoint: no array named '" + name + "'");
  }
  bool has(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.first == name) return true;
    return false;
  }
};

namespace detail {

inline void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  nlohmann::ordered_json header;
  header["arrays"] = nlohmann::ordered_json::array();
  for (const auto& [name, m] : ck.arrays)
    header["arrays"].push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"dtype", "f64le"}});
  header["hyper"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : ck.hyper) header["hyper"][k] = v;
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, 4);
  out.push_back(static_cast<char>(kCheckpointVersion));
  const auto len = static_cast<std::uint32_t>(text.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  out += text;
  for (const auto& a : ck.arrays) {
    const Matrix& m = a.second;
    for (Eigen::Index i = 0; i < m.size(); ++i) detail::put_u64_le(out, std::bit_cast<std::uint64_t>(m.data()[i]));
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 9 || std::memcmp(p, kCheckpointMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic");
  if (p[4] != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(static_cast<int>(p[4])));
  const std::uint32_t len = static_cast<std::uint32_t>(p[5]) | static_cast<std::uint32_t>(p[6]) << 8 |
                            static_cast<std::uint32_t>(p[7]) << 16 | static_cast<std::uint32_t>(p[8]) << 24;
  if (bytes.size() < 9 + static_cast<std::size_t>(len)) throw FormatError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(9, len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: header is not valid JSON: ") + e.what());
  }
  Checkpoint ck;
  std::size_t at = 9 + len;
  for (const auto& a : header.at("arrays")) {
    if (a.at("dtype") != "f64le") throw FormatError("checkpoint: unsupported dtype " + a.at("dtype").dump());
    const auto rows = a.at("shape").at(0).get<Eigen::Index>();
    const auto cols = a.at("shape").at(1).get<Eigen::Index>();
    const auto need = static_cast<std::size_t>(rows * cols) * 8;
    if (bytes.size() < at + need)
      throw FormatError("checkpoint: payload truncated in array '" + a.at("name").get<std::string>() + "'");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i)
      m.data()[i] = std::bit_cast<double>(detail::get_u64_le(p + at + static_cast<std::size_t>(i) * 8));
    at += need;
    ck.arrays.emplace_back(a.at("name").get<std::string>(), std::move(m));
  }
  if (at != bytes.size()) throw FormatError("checkpoint: trailing bytes after payload");
  for (const auto& [k, v] : header.at("hyper").items()) ck.hyper[k] = v.get<std::string>();
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("checkpoint: cannot write " + path.string());
  const std::string bytes = encode_checkpoint(ck);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("checkpoint: write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

// A dense layer is stored as "<prefix>W" (units x in) and "<prefix>b" (units x 1).
inline void add_layer(Checkpoint& ck, const DenseLayer& layer, const std::string& prefix) {
  ck.arrays.emplace_back(prefix + "W", layer.W);
  ck.arrays.emplace_back(prefix + "b", Matrix(layer.b));
  ck.hyper[prefix + "activation"] = std::string(to_string(layer.activation));
}

inline DenseLayer layer_from(const Checkpoint& ck, const std::string& prefix) {
  DenseLayer layer;
  layer.W = ck.array(prefix + "W");
  const Matrix& b = ck.array(prefix + "b");
  if (b.cols() != 1 || b.rows() != layer.W.rows()) throw FormatError("checkpoint: bias shape mismatch for " + prefix);
  layer.b = b.col(0);
  auto it = ck.hyper.find(prefix + "activation");
  layer.activation = it == ck.hyper.end() ? Activation::identity : parse_activation(it->second);
  layer.name = prefix.empty() ? "dense" : prefix.substr(0, prefix.size() - 1);
  return layer;
}

}  // namespace ovr
