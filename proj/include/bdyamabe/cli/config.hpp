#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "../core.hpp"

namespace bdyamabe::cli {

using Json = nlohmann::ordered_json;

enum ExitCode : int { kOk = 0, kInternal = 1, kConfig = 2, kNonConvergence = 3, kVerifyFailed = 4 };

/// Environment variable that overrides the default output directory.
inline constexpr const char* kOutDirEnv = "BDYAMABE_OUT_DIR";

enum class Kind { integer, real, text, real_list, seed };

struct OptionSpec {
  std::string key;  ///< config key; the flag is --key with '_' replaced by '-'
  Kind kind;
  Json fallback;    ///< default value, null when unset
  std::string help;

  std::string flag() const {
    std::string f = key;
    for (char& c : f)
      if (c == '_') c = '-';
    return "--" + f;
  }
};

namespace detail {

inline std::vector<double> split_reals(const std::string& s) {
  std::vector<double> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw ConfigError("not a number: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

// Converts one flag string to the JSON value for its kind.
inline Json from_flag(const OptionSpec& spec, const std::string& s) {
  try {
    std::size_t used = 0;
    switch (spec.kind) {
      case Kind::integer: {
        const long v = std::stol(s, &used);
        if (used != s.size()) break;
        return v;
      }
      case Kind::real: {
        const double v = std::stod(s, &used);
        if (used != s.size()) break;
        return v;
      }
      case Kind::seed: {
        if (!s.empty() && s[0] == '-') break;
        const unsigned long long v = std::stoull(s, &used);
        if (used != s.size()) break;
        return static_cast<std::uint64_t>(v);
      }
      case Kind::real_list: return split_reals(s);
      case Kind::text: return s;
    }
  } catch (const std::logic_error&) {
  }
  throw ConfigError("invalid value for " + spec.flag() + ": '" + s + "'");
}

inline void check_config_value(const OptionSpec& spec, const Json& v) {
  bool ok = false;
  switch (spec.kind) {
    case Kind::integer: ok = v.is_number_integer(); break;
    case Kind::real: ok = v.is_number(); break;
    case Kind::text: ok = v.is_string() || v.is_null(); break;
    case Kind::seed: ok = v.is_number_unsigned() || v.is_null(); break;
    case Kind::real_list:
      ok = v.is_array() || v.is_null();
      if (v.is_array())
        for (const auto& e : v) ok = ok && e.is_number();
      break;
  }
  if (!ok) throw ConfigError("config key '" + spec.key + "' has the wrong type");
}

}  // namespace detail

/// Resolved settings of one subcommand: flags override the config file, which
/// overrides the defaults.
class Config {
 public:
  Config(std::string command, const std::vector<OptionSpec>& specs) : command_(std::move(command)) {
    for (const auto& s : specs) {
      specs_[s.key] = s;
      values_[s.key] = s.fallback;
    }
  }

  const std::string& command() const { return command_; }
  const Json& values() const { return values_; }

  void apply_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    Json doc;
    try {
      doc = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
    }
    apply_json(doc);
  }

  void apply_json(const Json& doc) {
    if (!doc.is_object()) throw ConfigError("config file must hold a JSON object");
    for (const auto& [k, v] : doc.items()) {
      const auto it = specs_.find(k);
      if (it == specs_.end()) throw ConfigError("unknown config key '" + k + "' for " + command_);
      detail::check_config_value(it->second, v);
      values_[k] = v;
    }
  }

  void apply_flag(const std::string& key, const std::string& raw) {
    values_[key] = detail::from_flag(specs_.at(key), raw);
  }

  bool is_set(const std::string& key) const { return !values_.at(key).is_null(); }
  int integer(const std::string& key) const { return values_.at(key).get<int>(); }
  double real(const std::string& key) const { return values_.at(key).get<double>(); }
  std::string text(const std::string& key) const { return values_.at(key).get<std::string>(); }
  std::vector<double> reals(const std::string& key) const {
    const Json& v = values_.at(key);
    return v.is_null() ? std::vector<double>{} : v.get<std::vector<double>>();
  }
  std::optional<std::uint64_t> seed() const {
    const Json& v = values_.at("seed");
    if (v.is_null()) return std::nullopt;
    return v.get<std::uint64_t>();
  }

  /// --out or the config key, then the environment override, then ".".
  std::optional<std::filesystem::path> explicit_out_dir() const {
    if (is_set("out")) return std::filesystem::path(text("out"));
    if (const char* env = std::getenv(kOutDirEnv); env && *env) return std::filesystem::path(env);
    return std::nullopt;
  }
  std::filesystem::path out_dir() const { return explicit_out_dir().value_or(std::filesystem::path(".")); }

 private:
  std::string command_;
  std::map<std::string, OptionSpec> specs_;
  Json values_ = Json::object();
};

}  // namespace bdyamabe::cli
