#pragma once

// ScalarField persistence: raw little-endian float64 payload plus a JSON
// sidecar {dim, N, time, name}, and a CSV export with index columns.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include <json.hpp>

#include "vvlab/error.hpp"
#include "vvlab/torus.hpp"

namespace vvlab::io {

namespace detail {

inline std::uint64_t byteswap64(std::uint64_t v) {
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) {
    r = (r << 8) | (v & 0xffu);
    v >>= 8;
  }
  return r;
}

inline std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return byteswap64(v);
}

}  // namespace detail

struct FieldMetadata {
  std::string name;
  double time = 0.0;
};

inline void ensure_parent(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

/// Writes `<stem>.bin` and `<stem>.json`.
inline void write_field(const std::filesystem::path& stem, const ScalarField& f,
                        const FieldMetadata& meta) {
  ensure_parent(stem);
  std::filesystem::path bin = stem;
  bin += ".bin";
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw ContractViolation("cannot open " + bin.string() + " for writing");
  for (double x : f.values()) {
    const std::uint64_t word = detail::to_little(std::bit_cast<std::uint64_t>(x));
    char bytes[8];
    std::memcpy(bytes, &word, 8);
    out.write(bytes, 8);
  }
  nlohmann::json side = {{"dim", f.grid().dim},
                         {"N", f.grid().n},
                         {"time", meta.time},
                         {"name", meta.name}};
  std::filesystem::path js = stem;
  js += ".json";
  std::ofstream(js) << side.dump(2) << '\n';
}

inline std::pair<ScalarField, FieldMetadata> read_field(const std::filesystem::path& stem) {
  std::filesystem::path js = stem;
  js += ".json";
  std::ifstream side_in(js);
  if (!side_in) throw ContractViolation("cannot open sidecar " + js.string());
  const auto side = nlohmann::json::parse(side_in);
  const GridSpec grid(side.at("dim").get<int>(), side.at("N").get<int>());
  std::filesystem::path bin = stem;
  bin += ".bin";
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw ContractViolation("cannot open " + bin.string());
  std::vector<double> values(grid.node_count());
  for (auto& x : values) {
    char bytes[8];
    if (!in.read(bytes, 8)) throw ContractViolation("truncated field payload " + bin.string());
    std::uint64_t word;
    std::memcpy(&word, bytes, 8);
    x = std::bit_cast<double>(detail::to_little(word));
  }
  return {ScalarField(grid, std::move(values)),
          FieldMetadata{side.at("name").get<std::string>(), side.at("time").get<double>()}};
}

/// CSV with one index column per axis followed by the value.
inline void write_field_csv(const std::filesystem::path& path, const ScalarField& f) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw ContractViolation("cannot open " + path.string() + " for writing");
  const GridSpec& g = f.grid();
  static const char* names[] = {"i", "j", "k"};
  for (int a = 0; a < g.dim; ++a) out << names[a] << ',';
  out << "value\n" << std::setprecision(17);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto idx = g.multi_index(i);
    for (int a = 0; a < g.dim; ++a) out << idx[a] << ',';
    out << f[i] << '\n';
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw ContractViolation("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractViolation("cannot open " + path.string() + " for reading");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ContractViolation("malformed JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace vvlab::io
