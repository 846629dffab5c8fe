#ifndef SHS_CONFIG_HPP
#define SHS_CONFIG_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <fmt/format.h>

#include "problem_model.hpp"

namespace shs {

/// Bad configuration text or out-of-range value. `line` is 0 for values
/// that came from the command line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, const std::string& msg)
      : std::runtime_error(line > 0 ? fmt::format("line {}: {}", line, msg) : msg), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct ExperimentConfig {
  std::string problem = "kubo";
  std::string method = "sympl";  ///< euler | sympl
  double theta = 1.0;
  std::vector<double> theta_list;  ///< extra θ curves for hamdev and figures
  std::optional<int> n;
  std::vector<int> n_list;
  std::optional<int> T;
  std::vector<double> t_list;
  std::optional<std::size_t> paths;
  std::uint64_t seed = 1;
  double rho = 2.5;
  double epsilon = 0.1;
  int refine = 16;
  std::string out = ".";
  unsigned workers = 0;
  std::size_t batch = 256;
  bool zero_noise = false;
  bool self_test = false;
  std::optional<std::pair<double, double>> initial;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& v, int line) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(line, fmt::format("{}: cannot parse '{}' as a {}", key, v,
                                        std::is_integral_v<T> ? "integer" : "number"));
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v, int line) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(line, fmt::format("{}: expected true or false, got '{}'", key, v));
}

// Allowed keys per section; the unnamed top-level section accepts all.
inline const std::map<std::string, std::vector<std::string>>& sections() {
  static const std::map<std::string, std::vector<std::string>> s{
      {"problem", {"problem", "initial", "zero_noise"}},
      {"scheme", {"method", "theta", "theta_list", "rho"}},
      {"grid", {"n", "n_list", "T", "t_list", "refine", "epsilon"}},
      {"ensemble", {"paths", "seed", "workers", "batch"}},
      {"output", {"out", "self_test"}},
  };
  return s;
}

}  // namespace detail

/// Stores one key. Range checks happen in validate().
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& v, int line) {
  using detail::parse_number;
  if (key == "problem") {
    c.problem = v;
  } else if (key == "method") {
    c.method = v;
  } else if (key == "theta") {
    c.theta = parse_number<double>(key, v, line);
  } else if (key == "theta_list") {
    c.theta_list.clear();
    for (const auto& x : detail::split_list(v)) c.theta_list.push_back(parse_number<double>(key, x, line));
  } else if (key == "n") {
    c.n = parse_number<int>(key, v, line);
  } else if (key == "n_list") {
    c.n_list.clear();
    for (const auto& x : detail::split_list(v)) c.n_list.push_back(parse_number<int>(key, x, line));
  } else if (key == "T") {
    c.T = parse_number<int>(key, v, line);
  } else if (key == "t_list") {
    c.t_list.clear();
    for (const auto& x : detail::split_list(v)) c.t_list.push_back(parse_number<double>(key, x, line));
  } else if (key == "paths") {
    c.paths = parse_number<std::size_t>(key, v, line);
  } else if (key == "seed") {
    c.seed = parse_number<std::uint64_t>(key, v, line);
  } else if (key == "rho") {
    c.rho = parse_number<double>(key, v, line);
  } else if (key == "epsilon") {
    c.epsilon = parse_number<double>(key, v, line);
  } else if (key == "refine") {
    c.refine = parse_number<int>(key, v, line);
  } else if (key == "out") {
    c.out = v;
  } else if (key == "workers") {
    c.workers = parse_number<unsigned>(key, v, line);
  } else if (key == "batch") {
    c.batch = parse_number<std::size_t>(key, v, line);
  } else if (key == "zero_noise") {
    c.zero_noise = detail::parse_bool(key, v, line);
  } else if (key == "self_test") {
    c.self_test = detail::parse_bool(key, v, line);
  } else if (key == "initial") {
    const auto parts = detail::split_list(v);
    if (parts.size() != 2) throw ConfigError(line, "initial: expected 'P, Q'");
    c.initial = std::pair{parse_number<double>(key, parts[0], line), parse_number<double>(key, parts[1], line)};
  } else {
    throw ConfigError(line, fmt::format("unknown key '{}'", key));
  }
}

/// Range checks; messages name the offending field and bound.
inline void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError(0, msg); };
  try {
    parse_problem_id(c.problem);
  } catch (const std::invalid_argument& e) {
    fail(fmt::format("problem {}", e.what()));
  }
  if (c.method != "euler" && c.method != "sympl") fail(fmt::format("method must be euler or sympl, got '{}'", c.method));
  auto check_theta = [&](const char* field, double th) {
    if (!(th >= 0.0 && th <= 1.0)) fail(fmt::format("{} must lie in [0, 1], got {}", field, th));
  };
  check_theta("theta", c.theta);
  for (double th : c.theta_list) check_theta("theta_list entries", th);
  if (c.n && *c.n < 2) fail(fmt::format("n must be >= 2, got {}", *c.n));
  for (int n : c.n_list)
    if (n < 2) fail(fmt::format("n_list entries must be >= 2, got {}", n));
  if (c.T && *c.T < 1) fail(fmt::format("T must be >= 1, got {}", *c.T));
  for (double t : c.t_list)
    if (!(t >= 0.0) || !std::isfinite(t)) fail(fmt::format("t_list entries must be >= 0, got {}", t));
  if (c.paths && *c.paths < 1) fail("paths must be >= 1");
  if (!(c.rho > 2.0)) fail(fmt::format("rho must be > 2, got {}", c.rho));
  if (!(c.epsilon > 0.0 && c.epsilon < 0.5)) fail(fmt::format("epsilon must lie in (0, 0.5), got {}", c.epsilon));
  if (c.refine < 1) fail(fmt::format("refine must be >= 1, got {}", c.refine));
  if (c.batch < 1) fail("batch must be >= 1");
}

/// `key = value` lines, optional `[section]` headers, `#` or `;` comments.
/// Unknown keys, keys outside their section and repeated keys are errors.
inline ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {}) {
  std::map<std::string, int> seen;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    auto cut = raw.find_first_of("#;");
    const std::string s = detail::trim(cut == std::string::npos ? raw : raw.substr(0, cut));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(line, "unterminated section header");
      section = detail::trim(s.substr(1, s.size() - 2));
      if (!detail::sections().contains(section)) throw ConfigError(line, fmt::format("unknown section [{}]", section));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(line, fmt::format("expected 'key = value', got '{}'", s));
    const std::string key = detail::trim(s.substr(0, eq));
    const std::string value = detail::trim(s.substr(eq + 1));
    if (key.empty()) throw ConfigError(line, "missing key before '='");
    if (value.empty()) throw ConfigError(line, fmt::format("missing value for '{}'", key));
    if (!section.empty()) {
      const auto& allowed = detail::sections().at(section);
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
        throw ConfigError(line, fmt::format("key '{}' does not belong in section [{}]", key, section));
    }
    if (const auto it = seen.find(key); it != seen.end())
      throw ConfigError(line, fmt::format("duplicate key '{}' on lines {} and {}", key, it->second, line));
    seen.emplace(key, line);
    apply_setting(base, key, value, line);
  }
  try {
    validate(base);
  } catch (const ConfigError& e) {
    // Point range errors at the line that set the field.
    for (const auto& [key, l] : seen)
      if (std::string_view(e.what()).starts_with(key + " ")) throw ConfigError(l, e.what());
    throw;
  }
  return base;
}

}  // namespace shs

#endif  // SHS_CONFIG_HPP
