#pragma once
/// \file history_io.hpp
/// \brief Convergence-history CSV export/import and log-log rate fitting.

#include "lbafem/adaptivity.hpp"
#include "lbafem/common.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace lbafem {

inline constexpr const char* kHistoryHeader =
    "k,j,phase,n_elements,n_dofs,n_marked,eta,lambda,osc_u,osc_f,energy_error,eps_k,cg_iters,wall_ms";

namespace detail {

inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string format_history_row(const HistoryRow& r) {
  std::string s;
  s += std::to_string(r.k) + ',' + std::to_string(r.j) + ',' + r.phase + ',';
  s += std::to_string(r.n_elements) + ',' + std::to_string(r.n_dofs) + ',' +
       std::to_string(r.n_marked) + ',';
  for (double v : {r.eta, r.lambda, r.osc_u, r.osc_f, r.energy_error, r.eps_k})
    s += detail::format_real(v) + ',';
  s += std::to_string(r.cg_iters) + ',' + detail::format_real(r.wall_ms);
  return s;
}

inline void write_history_csv(const RunHistory& h, std::ostream& out) {
  out << kHistoryHeader << '\n';
  for (const auto& r : h.rows) out << format_history_row(r) << '\n';
}

inline void export_history_csv(const RunHistory& h, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_history_csv(h, out);
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

/// Row sink that appends each event to a CSV file and flushes it.
class CsvHistoryWriter {
 public:
  explicit CsvHistoryWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open '" + path + "' for writing");
    out_ << kHistoryHeader << '\n';
    out_.flush();
  }
  void operator()(const HistoryRow& r) {
    out_ << format_history_row(r) << '\n';
    out_.flush();
    if (!out_) throw IoError("failed writing '" + path_ + "'");
  }

 private:
  std::string path_;
  std::ofstream out_;
};

inline RunHistory parse_history_csv(std::istream& in, const std::string& source = "<csv>") {
  RunHistory h;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    throw ParseError(source + ":" + std::to_string(line_no) + ": " + what);
  };
  if (!std::getline(in, line)) {
    line_no = 1;
    fail("missing header");
  }
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHistoryHeader) fail("unexpected header");
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 14) fail("expected 14 fields, found " + std::to_string(f.size()));
    auto integer = [&](const std::string& s) {
      char* end = nullptr;
      const long long v = std::strtoll(s.c_str(), &end, 10);
      if (s.empty() || *end != '\0') fail("bad integer '" + s + "'");
      return v;
    };
    auto real = [&](const std::string& s) {
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (s.empty() || *end != '\0') fail("bad number '" + s + "'");
      return v;
    };
    HistoryRow r;
    r.k = static_cast<int>(integer(f[0]));
    r.j = static_cast<int>(integer(f[1]));
    r.phase = f[2];
    r.n_elements = static_cast<std::size_t>(integer(f[3]));
    r.n_dofs = static_cast<std::size_t>(integer(f[4]));
    r.n_marked = static_cast<std::size_t>(integer(f[5]));
    r.eta = real(f[6]);
    r.lambda = real(f[7]);
    r.osc_u = real(f[8]);
    r.osc_f = real(f[9]);
    r.energy_error = real(f[10]);
    r.eps_k = real(f[11]);
    r.cg_iters = static_cast<int>(integer(f[12]));
    r.wall_ms = real(f[13]);
    h.rows.push_back(std::move(r));
  }
  return h;
}

inline RunHistory load_history_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return parse_history_csv(in, path);
}

// Rate fitting
// ------------

struct RatePoint {
  double n = 0.0;
  double value = 0.0;
};

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::vector<RatePoint> points;
};

/// Least-squares line through (log N, log value) of the last `window` points
/// (all points when window <= 0). Needs at least 3 points with N strictly
/// increasing and positive values.
inline RateFit fit_rate(std::span<const RatePoint> points, int window = 0) {
  const std::size_t count =
      window > 0 ? std::min<std::size_t>(points.size(), static_cast<std::size_t>(window)) : points.size();
  if (count < 3)
    throw InsufficientData("rate fit needs at least 3 points, have " + std::to_string(count));
  RateFit fit;
  fit.points.assign(points.end() - static_cast<std::ptrdiff_t>(count), points.end());
  for (std::size_t i = 0; i < count; ++i) {
    const auto& p = fit.points[i];
    if (!(p.n > 0.0) || !(p.value > 0.0) || !std::isfinite(p.value))
      throw InsufficientData("rate fit needs positive N and values");
    if (i > 0 && !(p.n > fit.points[i - 1].n))
      throw InsufficientData("rate fit needs strictly increasing N");
  }
  double sx = 0.0, sy = 0.0;
  for (const auto& p : fit.points) {
    sx += std::log(p.n);
    sy += std::log(p.value);
  }
  const double mx = sx / static_cast<double>(count);
  const double my = sy / static_cast<double>(count);
  double sxx = 0.0, sxy = 0.0;
  for (const auto& p : fit.points) {
    const double dx = std::log(p.n) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(p.value) - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

/// Quantity names accepted by rate_points.
inline const std::vector<std::string>& rate_quantities() {
  static const std::vector<std::string> names{"energy_error", "eta",   "lambda",
                                              "osc_u",        "osc_f", "total_estimator"};
  return names;
}

/// (N, quantity) over the solved rows that end a mesh: pde_exit in adaptive
/// runs and every row of uniform runs. N = #T - #T0 with T0 the mesh of the
/// first recorded row; rows with N <= 0 or a mesh already seen are skipped.
/// total_estimator is eta + lambda / omega.
inline std::vector<RatePoint> rate_points(const RunHistory& h, const std::string& quantity,
                                          double omega = 0.1) {
  bool known = false;
  for (const auto& q : rate_quantities()) known = known || q == quantity;
  if (!known) throw UnknownKey("unknown rate quantity '" + quantity + "'");
  std::vector<RatePoint> out;
  if (h.rows.empty()) return out;
  const double t0 = static_cast<double>(h.rows.front().n_elements);
  for (const auto& r : h.rows) {
    if (r.phase != "pde_exit" && r.phase != "uniform") continue;
    const double n = static_cast<double>(r.n_elements) - t0;
    if (!(n > 0.0)) continue;
    if (!out.empty() && !(n > out.back().n)) continue;
    double v = 0.0;
    if (quantity == "energy_error") v = r.energy_error;
    else if (quantity == "eta") v = r.eta;
    else if (quantity == "lambda") v = r.lambda;
    else if (quantity == "osc_u") v = r.osc_u;
    else if (quantity == "osc_f") v = r.osc_f;
    else v = r.eta + r.lambda / omega;
    out.push_back({n, v});
  }
  return out;
}

inline RateFit fit_rate(const RunHistory& h, const std::string& quantity, int window = 4,
                        double omega = 0.1) {
  const auto points = rate_points(h, quantity, omega);
  return fit_rate(std::span<const RatePoint>(points), window);
}

}  // namespace lbafem
