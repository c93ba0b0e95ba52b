#pragma once

// Configuration documents (JSON). Layout:
//
//   {
//     "schema_version": 1,
//     "buses":       [ { "inertia", "damping", "droop", "gen_time_constant",
//                        "command_time_constant", "cost_coefficient",
//                        "uncontrollable_load" }, ... ],
//     "power_lines": [ { "tail", "head", "susceptance" }, ... ],
//     "comm_lines":  [ { "tail", "head", "time_constant" }, ... ],
//     "loads":       [ { "bus", "magnitude", "mismatch_cost", "desired_state" }, ... ]
//   }
//
// Bus k is the k-th entry of "buses"; tail/head/bus reference buses 1-based.
// Every field is required. Unknown fields are rejected.

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "osc/model.hpp"

namespace osc {

inline constexpr int kSchemaVersion = 1;

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& tag) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool found = false;
    for (const char* k : known) found = found || it.key() == k;
    if (!found) throw ConfigError(tag + ": unknown field '" + it.key() + "'");
  }
}

inline const json& field(const json& obj, const char* name, const std::string& tag) {
  if (!obj.is_object()) throw ConfigError(tag + ": expected an object");
  auto it = obj.find(name);
  if (it == obj.end()) throw ConfigError(tag + ": missing field '" + name + "'");
  return *it;
}

inline double number(const json& obj, const char* name, const std::string& tag) {
  const json& v = field(obj, name, tag);
  if (!v.is_number()) throw ConfigError(tag + ": field '" + name + "' must be a number");
  return v.get<double>();
}

inline std::size_t bus_ref(const json& obj, const char* name, const std::string& tag) {
  const json& v = field(obj, name, tag);
  if (!v.is_number_integer() || v.get<long long>() < 1)
    throw ConfigError(tag + ": field '" + name + "' must be a bus number >= 1");
  return static_cast<std::size_t>(v.get<long long>() - 1);
}

inline const json& section(const json& doc, const char* name) {
  const json& s = field(doc, name, "document");
  if (!s.is_array()) throw ConfigError(std::string("section '") + name + "' must be an array");
  return s;
}

}  // namespace detail

/// Structural parse only: syntax, required fields, and types. Range and
/// topology checks are left to validate().
inline NetworkConfig parse_config_unchecked(const std::string& text) {
  using detail::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("syntax error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("document: expected an object");
  detail::reject_unknown(doc, {"schema_version", "buses", "power_lines", "comm_lines", "loads"}, "document");
  const json& version = detail::field(doc, "schema_version", "document");
  if (!version.is_number_integer() || version.get<int>() != kSchemaVersion)
    throw ConfigError("document: unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");

  NetworkConfig cfg;
  std::size_t i = 0;
  for (const json& b : detail::section(doc, "buses")) {
    const std::string tag = "bus " + std::to_string(++i);
    if (b.is_object())
      detail::reject_unknown(b,
                             {"inertia", "damping", "droop", "gen_time_constant", "command_time_constant",
                              "cost_coefficient", "uncontrollable_load"},
                             tag);
    BusParams p;
    p.inertia = detail::number(b, "inertia", tag);
    p.damping = detail::number(b, "damping", tag);
    p.droop = detail::number(b, "droop", tag);
    p.gen_time_constant = detail::number(b, "gen_time_constant", tag);
    p.command_time_constant = detail::number(b, "command_time_constant", tag);
    p.cost_coefficient = detail::number(b, "cost_coefficient", tag);
    p.uncontrollable_load = detail::number(b, "uncontrollable_load", tag);
    cfg.buses.push_back(p);
  }
  i = 0;
  for (const json& e : detail::section(doc, "power_lines")) {
    const std::string tag = "power line " + std::to_string(++i);
    if (e.is_object()) detail::reject_unknown(e, {"tail", "head", "susceptance"}, tag);
    cfg.power_lines.push_back(
        {detail::bus_ref(e, "tail", tag), detail::bus_ref(e, "head", tag), detail::number(e, "susceptance", tag)});
  }
  i = 0;
  for (const json& e : detail::section(doc, "comm_lines")) {
    const std::string tag = "comm line " + std::to_string(++i);
    if (e.is_object()) detail::reject_unknown(e, {"tail", "head", "time_constant"}, tag);
    cfg.comm_lines.push_back(
        {detail::bus_ref(e, "tail", tag), detail::bus_ref(e, "head", tag), detail::number(e, "time_constant", tag)});
  }
  i = 0;
  for (const json& l : detail::section(doc, "loads")) {
    const std::string tag = "load " + std::to_string(++i);
    if (l.is_object()) detail::reject_unknown(l, {"bus", "magnitude", "mismatch_cost", "desired_state"}, tag);
    OnOffLoad load;
    load.bus = detail::bus_ref(l, "bus", tag);
    load.magnitude = detail::number(l, "magnitude", tag);
    load.mismatch_cost = detail::number(l, "mismatch_cost", tag);
    const json& rho = detail::field(l, "desired_state", tag);
    if (!rho.is_number_integer() || (rho.get<long long>() != 0 && rho.get<long long>() != 1))
      throw ConfigError(tag + ": field 'desired_state' must be 0 or 1");
    load.desired = static_cast<std::uint8_t>(rho.get<int>());
    cfg.loads.push_back(load);
  }
  return cfg;
}

/// Parses and validates. Throws ConfigError carrying the validation report
/// when the document is well-formed but describes an invalid network.
inline NetworkConfig parse_config(const std::string& text) {
  NetworkConfig cfg = parse_config_unchecked(text);
  require_valid(cfg);
  return cfg;
}

inline nlohmann::json to_json(const NetworkConfig& cfg) {
  using detail::json;
  json doc;
  doc["schema_version"] = kSchemaVersion;
  json buses = json::array();
  for (const auto& b : cfg.buses) {
    buses.push_back({{"inertia", b.inertia},
                     {"damping", b.damping},
                     {"droop", b.droop},
                     {"gen_time_constant", b.gen_time_constant},
                     {"command_time_constant", b.command_time_constant},
                     {"cost_coefficient", b.cost_coefficient},
                     {"uncontrollable_load", b.uncontrollable_load}});
  }
  json power = json::array();
  for (const auto& e : cfg.power_lines)
    power.push_back({{"tail", e.tail + 1}, {"head", e.head + 1}, {"susceptance", e.susceptance}});
  json comm = json::array();
  for (const auto& e : cfg.comm_lines)
    comm.push_back({{"tail", e.tail + 1}, {"head", e.head + 1}, {"time_constant", e.time_constant}});
  json loads = json::array();
  for (const auto& l : cfg.loads) {
    loads.push_back({{"bus", l.bus + 1},
                     {"magnitude", l.magnitude},
                     {"mismatch_cost", l.mismatch_cost},
                     {"desired_state", static_cast<int>(l.desired)}});
  }
  doc["buses"] = std::move(buses);
  doc["power_lines"] = std::move(power);
  doc["comm_lines"] = std::move(comm);
  doc["loads"] = std::move(loads);
  return doc;
}

inline std::string serialize_config(const NetworkConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace osc
