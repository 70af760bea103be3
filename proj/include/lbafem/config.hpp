#pragma once
/// \file config.hpp
/// \brief Flat key=value run configuration.

#include "lbafem/adaptivity.hpp"
#include "lbafem/benchmarks.hpp"
#include "lbafem/common.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace lbafem {

enum class RunMode { Adaptive, Uniform };

struct RunConfig {
  std::string benchmark;
  RunMode mode = RunMode::Adaptive;
  AfemParams params;
  std::string output_dir = ".";
  /// OFF subdivision level of the exported surface; negative skips the export.
  int off_level = 1;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

struct ValueReader {
  std::string source;
  int line = 0;
  int column = 0;
  std::string_view text;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " +
                     what);
  }

  template <class T>
  T number() const {
    T value{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end || text.empty())
      fail("cannot parse '" + std::string(text) + "' as a number");
    return value;
  }

  bool boolean() const {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    fail("expected true or false, got '" + std::string(text) + "'");
  }
};

using Setter = std::function<void(RunConfig&, const ValueReader&)>;

inline const std::map<std::string, Setter, std::less<>>& config_setters() {
  static const std::map<std::string, Setter, std::less<>> setters{
      {"benchmark", [](RunConfig& c, const ValueReader& v) { c.benchmark = std::string(v.text); }},
      {"mode",
       [](RunConfig& c, const ValueReader& v) {
         if (v.text == "adaptive")
           c.mode = RunMode::Adaptive;
         else if (v.text == "uniform")
           c.mode = RunMode::Uniform;
         else
           throw RangeError("mode must be adaptive or uniform, got '" + std::string(v.text) + "'");
       }},
      {"n", [](RunConfig& c, const ValueReader& v) { c.params.n = v.number<int>(); }},
      {"theta", [](RunConfig& c, const ValueReader& v) { c.params.theta = v.number<double>(); }},
      {"rho", [](RunConfig& c, const ValueReader& v) { c.params.rho = v.number<double>(); }},
      {"omega", [](RunConfig& c, const ValueReader& v) { c.params.omega = v.number<double>(); }},
      {"b", [](RunConfig& c, const ValueReader& v) { c.params.b = v.number<int>(); }},
      {"eps0", [](RunConfig& c, const ValueReader& v) { c.params.eps0 = v.number<double>(); }},
      {"eps_stop", [](RunConfig& c, const ValueReader& v) { c.params.eps_stop = v.number<double>(); }},
      {"delta0", [](RunConfig& c, const ValueReader& v) { c.params.delta0 = v.number<double>(); }},
      {"max_outer", [](RunConfig& c, const ValueReader& v) { c.params.max_outer = v.number<int>(); }},
      {"max_inner", [](RunConfig& c, const ValueReader& v) { c.params.max_inner = v.number<int>(); }},
      {"max_elements",
       [](RunConfig& c, const ValueReader& v) { c.params.max_elements = v.number<std::size_t>(); }},
      {"max_dofs",
       [](RunConfig& c, const ValueReader& v) { c.params.max_dofs = v.number<std::size_t>(); }},
      {"rel_tol", [](RunConfig& c, const ValueReader& v) { c.params.rel_tol = v.number<double>(); }},
      {"lambda_safety",
       [](RunConfig& c, const ValueReader& v) {
         c.params.estimator.lambda_safety = v.number<double>();
       }},
      {"quad_element",
       [](RunConfig& c, const ValueReader& v) {
         c.params.estimator.quadrature.element = v.number<int>();
       }},
      {"quad_edge",
       [](RunConfig& c, const ValueReader& v) { c.params.estimator.quadrature.edge = v.number<int>(); }},
      {"quad_energy",
       [](RunConfig& c, const ValueReader& v) {
         c.params.estimator.quadrature.energy = v.number<int>();
       }},
      {"uniform_rounds",
       [](RunConfig& c, const ValueReader& v) { c.params.uniform_rounds = v.number<int>(); }},
      {"uniform_depth",
       [](RunConfig& c, const ValueReader& v) { c.params.uniform_depth = v.number<int>(); }},
      {"record_wall_time",
       [](RunConfig& c, const ValueReader& v) { c.params.record_wall_time = v.boolean(); }},
      {"output_dir", [](RunConfig& c, const ValueReader& v) { c.output_dir = std::string(v.text); }},
      {"off_level", [](RunConfig& c, const ValueReader& v) { c.off_level = v.number<int>(); }},
      {"seed", [](RunConfig& c, const ValueReader& v) { c.seed = v.number<std::uint64_t>(); }},
  };
  return setters;
}

}  // namespace detail

/// Recognised configuration keys.
inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [key, setter] : detail::config_setters()) out.push_back(key);
  return out;
}

/// Checks names and numeric ranges.
inline void validate(const RunConfig& c) {
  if (c.benchmark.empty()) throw RangeError("benchmark is required");
  if (!benchmark_registry().count(c.benchmark))
    throw UnknownKey("unknown benchmark '" + c.benchmark + "'");
  c.params.validate();
  const auto& q = c.params.estimator.quadrature;
  for (int d : {q.element, q.edge, q.energy})
    if (d < 0 || d > kMaxQuadratureDegree)
      throw RangeError("quadrature degree must lie in [0, " + std::to_string(kMaxQuadratureDegree) +
                       "]");
  if (c.off_level > 10) throw RangeError("off_level must be at most 10");
}

/// Parses `key = value` lines; '#' starts a comment. `source` names the input
/// in error messages.
inline RunConfig parse_config(std::string_view text, const std::string& source = "<config>") {
  RunConfig config;
  std::set<std::string, std::less<>> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (detail::trim(line).empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto column_of = [&](std::string_view part) {
      return static_cast<int>(part.data() - line.data()) + 1;
    };
    detail::ValueReader reader{source, line_no, 0, {}};
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      reader.column = column_of(detail::trim(line));
      reader.fail("expected key = value");
    }
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    reader.column = key.empty() ? 1 : column_of(key);
    if (key.empty()) reader.fail("missing key");
    const auto& setters = detail::config_setters();
    const auto it = setters.find(key);
    if (it == setters.end())
      throw UnknownKey(source + ":" + std::to_string(line_no) + ":" + std::to_string(reader.column) +
                       ": unknown key '" + std::string(key) + "'");
    if (!seen.insert(std::string(key)).second) reader.fail("duplicate key '" + std::string(key) + "'");
    reader.column = value.empty() ? static_cast<int>(eq) + 2 : column_of(value);
    if (value.empty()) reader.fail("missing value for '" + std::string(key) + "'");
    reader.text = value;
    it->second(config, reader);
    if (end == text.size()) break;
  }
  validate(config);
  return config;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open configuration file");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path);
}

}  // namespace lbafem
