#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>

#include "caos/errors.hpp"
#include "caos/types.hpp"

// Deployment settings shared by the command-line tools: a flat key=value
// file, optionally overridden field by field.

namespace caos {

struct DeploymentConfig {
  std::string server;                 // host:port
  std::filesystem::path store;        // server-side slot file
  std::uint64_t positions = 0;        // N
  std::uint64_t blocks = 0;           // n
  std::uint64_t block_size = 0;       // payload bytes per block
  std::uint32_t redundancy = 0;       // C
  std::uint16_t client_count = 0;
  std::uint64_t lock_timeout_ms = 5000;
  std::filesystem::path key;
  std::filesystem::path map;
  Role role = Role::kReadWrite;
  std::uint16_t client_id = 0;
};

using ConfigValues = std::map<std::string, std::string>;

namespace detail {

inline const std::vector<std::string>& config_required() {
  static const std::vector<std::string> keys = {"server", "store",      "positions",
                                                "blocks", "block_size", "redundancy",
                                                "client_count", "key",  "map"};
  return keys;
}

inline const std::vector<std::string>& config_optional() {
  static const std::vector<std::string> keys = {"lock_timeout_ms", "role", "client_id"};
  return keys;
}

inline bool config_known(const std::string& k) {
  for (const auto* list : {&config_required(), &config_optional()})
    if (std::find(list->begin(), list->end(), k) != list->end()) return true;
  return false;
}

inline std::string trim(std::string_view s) {
  const auto* ws = " \t\r";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_uint(const std::string& field, const std::string& v) {
  std::uint64_t x = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty())
    throw ConfigError(field + ": '" + v + "' is not a non-negative integer");
  if (x > std::numeric_limits<T>::max())
    throw ConfigError(field + ": " + v + " is out of range");
  return static_cast<T>(x);
}

}  // namespace detail

inline Role parse_role(const std::string& v) {
  if (v == "rw" || v == "read_write") return Role::kReadWrite;
  if (v == "ro" || v == "read_only") return Role::kReadOnly;
  if (v == "oc" || v == "obfuscation") return Role::kObfuscation;
  throw ConfigError("role: '" + v + "' is not one of rw, ro, oc");
}

/// Parses key=value lines. Blank lines and lines starting with '#' are
/// skipped; unknown keys and repeated keys are errors.
inline ConfigValues parse_config_text(std::string_view text, const std::string& origin = "config") {
  ConfigValues out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    auto nl = text.find('\n');
    std::string line = detail::trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value");
    std::string k = detail::trim(std::string_view(line).substr(0, eq));
    std::string v = detail::trim(std::string_view(line).substr(eq + 1));
    if (!detail::config_known(k))
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown field '" + k + "'");
    if (!out.emplace(k, v).second)
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": field '" + k +
                        "' given twice");
  }
  return out;
}

inline ConfigValues read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text, path.string());
}

/// Checks the relations between fields; every message names the fields involved.
inline void validate(const DeploymentConfig& c) {
  if (c.block_size == 0) throw ConfigError("block_size must be positive");
  if (c.client_count == 0) throw ConfigError("client_count must be at least 1");
  if (c.blocks == 0) throw ConfigError("blocks must be at least 1");
  if (c.positions < 2) throw ConfigError("positions must be at least 2");
  if (c.redundancy < c.client_count)
    throw ConfigError("redundancy (C=" + std::to_string(c.redundancy) +
                      ") must be at least client_count (" + std::to_string(c.client_count) + ")");
  if (c.redundancy * c.blocks > c.positions)
    throw ConfigError("positions (N=" + std::to_string(c.positions) +
                      ") must be at least redundancy * blocks (" + std::to_string(c.redundancy) +
                      " * " + std::to_string(c.blocks) + ")");
  if (c.client_id >= c.client_count)
    throw ConfigError("client_id (" + std::to_string(c.client_id) +
                      ") must be below client_count (" + std::to_string(c.client_count) + ")");
  if (c.lock_timeout_ms == 0) throw ConfigError("lock_timeout_ms must be positive");
}

/// Merges file values with overrides (overrides win), fills defaults, validates.
inline DeploymentConfig make_config(const ConfigValues& file, const ConfigValues& overrides = {}) {
  ConfigValues v = file;
  for (const auto& [k, val] : overrides) {
    if (!detail::config_known(k)) throw ConfigError("unknown field '" + k + "'");
    v[k] = val;
  }
  std::vector<std::string> missing;
  for (const auto& k : detail::config_required())
    if (!v.count(k) || v[k].empty()) missing.push_back(k);
  if (!missing.empty()) {
    std::string m = "missing required field";
    m += missing.size() > 1 ? "s: " : ": ";
    for (std::size_t i = 0; i < missing.size(); ++i) m += (i ? ", " : "") + missing[i];
    throw ConfigError(m);
  }

  DeploymentConfig c;
  c.server = v["server"];
  c.store = v["store"];
  c.positions = detail::parse_uint<std::uint64_t>("positions", v["positions"]);
  c.blocks = detail::parse_uint<std::uint64_t>("blocks", v["blocks"]);
  c.block_size = detail::parse_uint<std::uint64_t>("block_size", v["block_size"]);
  c.redundancy = detail::parse_uint<std::uint32_t>("redundancy", v["redundancy"]);
  c.client_count = detail::parse_uint<std::uint16_t>("client_count", v["client_count"]);
  c.key = v["key"];
  c.map = v["map"];
  if (v.count("lock_timeout_ms"))
    c.lock_timeout_ms = detail::parse_uint<std::uint64_t>("lock_timeout_ms", v["lock_timeout_ms"]);
  if (v.count("role")) c.role = parse_role(v["role"]);
  if (v.count("client_id")) c.client_id = detail::parse_uint<std::uint16_t>("client_id", v["client_id"]);
  validate(c);
  return c;
}

/// Reads `path` if given, then applies overrides.
inline DeploymentConfig load_config(const std::optional<std::filesystem::path>& path,
                                    const ConfigValues& overrides = {}) {
  return make_config(path ? read_config_file(*path) : ConfigValues{}, overrides);
}

inline std::string to_config_text(const DeploymentConfig& c) {
  std::string s;
  auto put = [&s](const char* k, const std::string& v) { s += std::string(k) + "=" + v + "\n"; };
  put("server", c.server);
  put("store", c.store.string());
  put("positions", std::to_string(c.positions));
  put("blocks", std::to_string(c.blocks));
  put("block_size", std::to_string(c.block_size));
  put("redundancy", std::to_string(c.redundancy));
  put("client_count", std::to_string(c.client_count));
  put("lock_timeout_ms", std::to_string(c.lock_timeout_ms));
  put("key", c.key.string());
  put("map", c.map.string());
  put("role", role_name(c.role));
  put("client_id", std::to_string(c.client_id));
  return s;
}

}  // namespace caos
