#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "orion/error.hpp"
#include "orion/ir.hpp"

namespace orion {

struct Tensor {
  std::vector<long> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<long> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) { check(); }
  explicit Tensor(std::vector<long> s) : shape(std::move(s)), data(static_cast<std::size_t>(numel_of(shape)), 0.0) {}

  static long numel_of(const std::vector<long>& s) {
    return std::accumulate(s.begin(), s.end(), 1L, std::multiplies<>());
  }
  long numel() const { return numel_of(shape); }
  long dim(std::size_t i) const { return shape.at(i); }

  void check() const {
    for (long d : shape)
      if (d <= 0) throw Error(Errc::ShapeMismatch, "tensor dimensions must be positive");
    if (numel() != static_cast<long>(data.size()))
      throw Error(Errc::ShapeMismatch, "tensor data length " + std::to_string(data.size()) + " does not match shape");
  }

  double& at4(long a, long b, long c, long d) {
    return data[static_cast<std::size_t>(((a * shape[1] + b) * shape[2] + c) * shape[3] + d)];
  }
  double at4(long a, long b, long c, long d) const {
    return data[static_cast<std::size_t>(((a * shape[1] + b) * shape[2] + c) * shape[3] + d)];
  }
};

inline std::string shape_str(const std::vector<long>& s) {
  std::string r = "[";
  for (std::size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
  return r + "]";
}

using TensorMap = std::map<std::string, Tensor>;

// Binary weights: "ORIONW1" u8(0) u32 count, then per tensor
//   u32 name length, name bytes, u32 rank, u64 dims[rank], f32 data[numel].
inline void write_tensors(std::ostream& os, const TensorMap& m) {
  os.write("ORIONW1", 7);
  detail::put_le<std::uint8_t>(os, 0);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.size()));
  for (const auto& [name, t] : m) {
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
    for (long d : t.shape) detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(d));
    for (double v : t.data) detail::put_le<float>(os, static_cast<float>(v));
  }
}

inline TensorMap read_tensors(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::string(magic, 7) != "ORIONW1")
    throw Error(Errc::Format, "weights: bad header (expected ORIONW1)");
  TensorMap m;
  const auto count = detail::get_le<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::get_le<std::uint32_t>(is);
    if (len > (1u << 20)) throw Error(Errc::Format, "weights: implausible tensor name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw Error(Errc::Format, "weights: truncated tensor name");
    const auto rank = detail::get_le<std::uint32_t>(is);
    if (rank > 8) throw Error(Errc::Format, "weights: tensor '" + name + "' has rank " + std::to_string(rank));
    std::vector<long> shape(rank);
    for (auto& d : shape) d = static_cast<long>(detail::get_le<std::uint64_t>(is));
    Tensor t;
    t.shape = shape;
    const long n = Tensor::numel_of(shape);
    if (n <= 0 || n > (1L << 31)) throw Error(Errc::Format, "weights: tensor '" + name + "' has a bad shape");
    t.data.resize(static_cast<std::size_t>(n));
    for (auto& v : t.data) v = detail::get_le<float>(is);
    m.emplace(std::move(name), std::move(t));
  }
  return m;
}

// JSON form: {"name": {"shape": [...], "data": [...]}, ...}
inline TensorMap tensors_from_json(const nlohmann::json& j) {
  TensorMap m;
  if (!j.is_object()) throw Error(Errc::Format, "weights JSON must be an object");
  for (const auto& [name, v] : j.items()) {
    try {
      m.emplace(name, Tensor(v.at("shape").get<std::vector<long>>(), v.at("data").get<std::vector<double>>()));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::Format, "weights JSON entry '" + name + "': " + e.what());
    }
  }
  return m;
}

inline nlohmann::json tensors_to_json(const TensorMap& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, t] : m) j[name] = {{"shape", t.shape}, {"data", t.data}};
  return j;
}

inline TensorMap load_tensors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::Io, "cannot open " + path);
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    try {
      return tensors_from_json(nlohmann::json::parse(is));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::Format, path + ": " + e.what());
    }
  }
  return read_tensors(is);
}

inline void save_tensors(const std::string& path, const TensorMap& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::Io, "cannot write " + path);
  write_tensors(os, m);
}

}  // namespace orion
