#pragma once

// JSON configuration schema for SweepConfig: strict parsing with
// path-qualified errors, environment overrides and a canonical echo.

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "vvlab/error.hpp"
#include "vvlab/harness.hpp"
#include "vvlab/log.hpp"

namespace vvlab {

/// Looks up an environment variable by full name.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline EnvLookup process_environment() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

inline constexpr const char* kEnvPrefix = "VVLAB_";

inline std::vector<std::string> config_keys() {
  const nlohmann::json defaults = to_json(SweepConfig{});
  std::vector<std::string> keys;
  for (auto it = defaults.begin(); it != defaults.end(); ++it) keys.push_back(it.key());
  return keys;
}

inline std::string env_name(const std::string& key) {
  std::string out = kEnvPrefix;
  for (char c : key) out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

namespace detail {

inline double get_real(const nlohmann::json& v, const std::string& path) {
  require(v.is_number(), path + ": expected a number, got " + std::string(v.type_name()));
  return v.get<double>();
}

inline std::int64_t get_int(const nlohmann::json& v, const std::string& path) {
  require(v.is_number_integer(), path + ": expected an integer, got " + std::string(v.type_name()));
  return v.get<std::int64_t>();
}

inline std::uint64_t get_unsigned(const nlohmann::json& v, const std::string& path) {
  require(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0),
          path + ": expected a nonnegative integer");
  return v.get<std::uint64_t>();
}

inline std::vector<double> get_reals(const nlohmann::json& v, const std::string& path) {
  require(v.is_array(), path + ": expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(get_real(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline FieldSpec get_spec(const nlohmann::json& v, const std::string& path) {
  require(v.is_object(), path + ": expected an object with 'name' and optional 'params'");
  for (auto it = v.begin(); it != v.end(); ++it)
    require(it.key() == "name" || it.key() == "params", path + "." + it.key() + ": unknown key");
  require(v.contains("name") && v["name"].is_string(), path + ".name: expected a string");
  FieldSpec s;
  s.name = v["name"].get<std::string>();
  if (v.contains("params")) {
    require(v["params"].is_object(), path + ".params: expected an object");
    s.params = v["params"];
  }
  return s;
}

inline void prefixed(const std::string& path, const std::function<void()>& f) {
  try {
    f();
  } catch (const ContractViolation& e) {
    throw ContractViolation(path + ": " + e.what());
  }
}

}  // namespace detail

/// Builds a validated config from a JSON object; absent keys take defaults.
/// A missing seed is drawn from the system entropy source.
inline SweepConfig config_from_json(nlohmann::json j, const EnvLookup& env = {}) {
  require(j.is_object(), "config: top level must be a JSON object");
  const auto keys = config_keys();
  const std::set<std::string> known(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it) require(known.count(it.key()) > 0, it.key() + ": unknown key");

  if (env)
    for (const auto& key : keys)
      if (auto value = env(env_name(key))) {
        nlohmann::json frag;
        try {
          frag = nlohmann::json::parse(*value);
        } catch (const nlohmann::json::parse_error& e) {
          throw ContractViolation(env_name(key) + ": value is not valid JSON (" + e.what() + ")");
        }
        j[key] = frag;
        log::info("config override from environment", {{"key", key}});
      }

  SweepConfig c;
  using namespace detail;
  if (j.contains("field")) c.field = get_spec(j["field"], "field");
  if (j.contains("initial")) c.initial = get_spec(j["initial"], "initial");
  if (j.contains("forcing")) c.forcing = get_spec(j["forcing"], "forcing");
  if (j.contains("epsilon_ladder")) c.epsilon_ladder = get_reals(j["epsilon_ladder"], "epsilon_ladder");
  if (j.contains("grid_n")) {
    const auto n = get_int(j["grid_n"], "grid_n");
    require(n >= 8 && n <= 4096, "grid_n: must lie in [8, 4096], got " + std::to_string(n));
    c.grid_n = static_cast<int>(n);
  }
  if (j.contains("t_end")) c.t_end = get_real(j["t_end"], "t_end");
  if (j.contains("dt")) c.dt = get_real(j["dt"], "dt");
  if (j.contains("flow_dt")) c.flow_dt = get_real(j["flow_dt"], "flow_dt");
  if (j.contains("snapshot_fractions"))
    c.snapshot_fractions = get_reals(j["snapshot_fractions"], "snapshot_fractions");
  if (j.contains("samples")) c.samples = get_unsigned(j["samples"], "samples");
  if (j.contains("particles")) c.particles = get_unsigned(j["particles"], "particles");
  if (j.contains("seed")) {
    c.seed = get_unsigned(j["seed"], "seed");
  } else {
    std::random_device rd;
    c.seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    log::info("generated master seed", {{"seed", c.seed}});
  }
  auto get_bool = [&](const char* key, bool& out) {
    if (!j.contains(key)) return;
    require(j[key].is_boolean(), std::string(key) + ": expected a boolean");
    out = j[key].get<bool>();
  };
  get_bool("mollify_initial", c.mollify_initial);
  get_bool("paired_noise", c.paired_noise);
  if (j.contains("epsilon1")) c.epsilon1 = get_real(j["epsilon1"], "epsilon1");
  if (j.contains("epsilon2_ladder")) c.epsilon2_ladder = get_reals(j["epsilon2_ladder"], "epsilon2_ladder");
  if (j.contains("sobolev_p")) c.sobolev_p = get_real(j["sobolev_p"], "sobolev_p");
  if (j.contains("epsilon_proxy")) c.epsilon_proxy = get_real(j["epsilon_proxy"], "epsilon_proxy");
  if (j.contains("duality_slabs")) {
    const auto s = get_int(j["duality_slabs"], "duality_slabs");
    require(s >= 0 && s <= 1 << 20, "duality_slabs: out of range");
    c.duality_slabs = static_cast<int>(s);
  }
  if (j.contains("probes")) {
    const auto p = get_int(j["probes"], "probes");
    require(p >= 1 && p <= 1 << 20, "probes: out of range");
    c.probes = static_cast<int>(p);
  }
  if (j.contains("output_dir")) {
    require(j["output_dir"].is_string(), "output_dir: expected a string");
    c.output_dir = j["output_dir"].get<std::string>();
  }
  if (j.contains("threads")) {
    const auto t = get_unsigned(j["threads"], "threads");
    require(t >= 1 && t <= 4096, "threads: must lie in [1, 4096]");
    c.threads = static_cast<unsigned>(t);
  }

  prefixed("field", [&] { make_field<2>(c.field); });
  if (c.grid_n >= 8) prefixed("initial", [&] { make_initial<2>(c.initial, GridSpec(2, c.grid_n)); });
  prefixed("forcing", [&] { make_forcing<2>(c.forcing); });
  validate(c);
  return c;
}

inline SweepConfig parse_config(const std::string& text, const EnvLookup& env = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ContractViolation(std::string("config: invalid JSON (") + e.what() + ")");
  }
  return config_from_json(std::move(j), env);
}

/// Canonical echo: every key, defaults resolved, stable key order.
inline std::string canonical_config(const SweepConfig& c) { return to_json(c).dump(2); }

}  // namespace vvlab
