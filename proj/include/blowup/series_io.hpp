#pragma once

// CSV form of a monitor series:
// s,E,q_norm,d,lambda,theta_2..theta_m,alpha_1_1,alpha_minus_1..alpha_minus_m,a,b,R_minus
// with every value printed to 17 significant digits.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "blowup/modulation.hpp"

namespace blowup {

inline std::string series_header(int m) {
  std::string h = "s,E,q_norm,d,lambda";
  for (int i = 2; i <= m; ++i) h += ",theta_" + std::to_string(i);
  h += ",alpha_1_1";
  for (int j = 1; j <= m; ++j) h += ",alpha_minus_" + std::to_string(j);
  h += ",a,b,R_minus";
  return h;
}

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_series(const MonitorSeries& series, std::ostream& os) {
  if (series.empty()) throw std::invalid_argument("write_series: empty series");
  const int m = static_cast<int>(series.front().alpha_minus.size());
  os << series_header(m) << '\n';
  for (const MonitorRecord& r : series) {
    if (r.alpha_minus.size() != m || r.theta.size() != m - 1) {
      throw std::invalid_argument("write_series: inconsistent component count");
    }
    std::string line = format_g17(r.s);
    auto put = [&line](double v) { line += ',' + format_g17(v); };
    put(r.E);
    put(r.q_norm);
    put(r.d);
    put(r.lambda);
    for (int i = 0; i < m - 1; ++i) put(r.theta(i));
    put(r.alpha_1_1);
    for (int j = 0; j < m; ++j) put(r.alpha_minus(j));
    put(r.a);
    put(r.b);
    put(r.R_minus);
    os << line << '\n';
  }
}

inline void emit_series(const MonitorSeries& series, const std::string& path) {
  if (series.empty()) throw std::invalid_argument("emit_series: empty series");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("emit_series: cannot open " + path);
  write_series(series, os);
  if (!os) throw std::runtime_error("emit_series: write failed for " + path);
}

inline MonitorSeries read_series(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("read_series: missing header");
  int ncols = 1;
  for (char c : line) ncols += c == ',';
  // 5 + (m-1) + 1 + m + 3 columns.
  if ((ncols - 8) % 2 != 0 || ncols < 10) throw std::runtime_error("read_series: unexpected header");
  const int m = (ncols - 8) / 2;
  if (line != series_header(m)) throw std::runtime_error("read_series: header mismatch");
  MonitorSeries out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      v.push_back(std::strtod(cell.c_str(), &end));
      if (end == cell.c_str()) throw std::runtime_error("read_series: bad number '" + cell + "'");
    }
    if (static_cast<int>(v.size()) != ncols) throw std::runtime_error("read_series: wrong column count");
    MonitorRecord r;
    int k = 0;
    r.s = v[k++];
    r.E = v[k++];
    r.q_norm = v[k++];
    r.d = v[k++];
    r.lambda = v[k++];
    r.theta.resize(m - 1);
    for (int i = 0; i < m - 1; ++i) r.theta(i) = v[k++];
    r.alpha_1_1 = v[k++];
    r.alpha_minus.resize(m);
    for (int j = 0; j < m; ++j) r.alpha_minus(j) = v[k++];
    r.a = v[k++];
    r.b = v[k++];
    r.R_minus = v[k++];
    out.push_back(std::move(r));
  }
  return out;
}

inline MonitorSeries parse_series(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("parse_series: cannot open " + path);
  return read_series(is);
}

}  // namespace blowup
