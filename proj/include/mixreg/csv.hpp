#ifndef MIXREG_CSV_HPP
#define MIXREG_CSV_HPP

#include <unistd.h>

#include <Eigen/Dense>
#include <array>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "mixreg/bspline.hpp"
#include "mixreg/dataset.hpp"
#include "mixreg/errors.hpp"
#include "mixreg/fpca.hpp"

namespace mixreg {

/// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 32> buf;
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (res.ec != std::errc()) throw NumericalError("failed to format a double");
  return std::string(buf.data(), res.ptr);
}

/// Strict double parser: the whole token must be consumed and finite.
inline double parse_double(std::string_view tok, const std::string& where) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw DataError(where + ": cannot parse number '" + std::string(tok) + "'");
  if (!std::isfinite(v))
    throw DataError(where + ": non-finite value '" + std::string(tok) + "' rejected");
  return v;
}

inline long parse_long(std::string_view tok, const std::string& where) {
  long v = 0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
    throw DataError(where + ": cannot parse integer '" + std::string(tok) + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      return out;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

/// File contents split into lines; accepts LF and CRLF, drops a trailing empty
/// line, keeps 1-based numbering alignment with the raw file.
inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string all = ss.str();
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= all.size()) {
    std::size_t pos = all.find('\n', start);
    if (pos == std::string::npos) {
      if (start < all.size()) lines.push_back(all.substr(start));
      break;
    }
    std::string line = all.substr(start, pos - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = pos + 1;
  }
  return lines;
}

/// Whole-file atomic write: temp file in the same directory, then rename.
inline void atomic_write(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  const fs::path dir = target.has_parent_path() ? target.parent_path() : fs::path(".");
  const fs::path tmp =
      dir / (target.filename().string() + ".tmp." + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw DataError("cannot move temporary file onto " + path);
  }
}

/// Dataset CSV: header `y,x1..xp,z1..zq[,truth]` in any column order; truth
/// labels are 1-based in the file. A `subject_id` column is permitted and
/// ignored. With require_y false, a missing y column yields zeros.
inline Dataset read_dataset_csv_impl(const std::string& path, bool require_y, bool* had_y) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) throw DataError(path + ": empty file");
  const std::vector<std::string> header = split_csv_line(lines[0]);

  int y_col = -1, truth_col = -1;
  std::map<int, int> x_cols, z_cols;  // 1-based index -> column
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h == "y") {
      y_col = static_cast<int>(c);
    } else if (h == "truth") {
      truth_col = static_cast<int>(c);
    } else if (h == "subject_id") {
      // alignment aid only
    } else if (h.size() > 1 && (h[0] == 'x' || h[0] == 'z')) {
      const long idx = parse_long(std::string_view(h).substr(1), path + " header");
      if (idx < 1) throw DataError(path + ": bad covariate column '" + h + "'");
      auto& dst = h[0] == 'x' ? x_cols : z_cols;
      if (!dst.emplace(static_cast<int>(idx), static_cast<int>(c)).second)
        throw DataError(path + ": duplicate column '" + h + "'");
    } else {
      throw DataError(path + ": unrecognized column '" + h + "'");
    }
  }
  if (require_y && y_col < 0) throw DataError(path + ": missing 'y' column");
  if (had_y) *had_y = y_col >= 0;
  auto check_contiguous = [&](const std::map<int, int>& cols, char prefix) {
    int expect = 1;
    for (const auto& [idx, col] : cols) {
      if (idx != expect)
        throw DataError(path + ": covariate columns " + prefix + "1.." + prefix +
                        "p must be numbered contiguously");
      ++expect;
    }
  };
  check_contiguous(x_cols, 'x');
  check_contiguous(z_cols, 'z');
  const Eigen::Index p = static_cast<Eigen::Index>(x_cols.size());
  const Eigen::Index q = static_cast<Eigen::Index>(z_cols.size());
  if (p == 0) throw DataError(path + ": no covariate columns x1..xp");

  const Eigen::Index n = static_cast<Eigen::Index>(lines.size()) - 1;
  if (n == 0) throw DataError(path + ": no data rows");
  Dataset d;
  d.y.resize(n);
  d.X.resize(n, p);
  d.Z.resize(n, q);
  std::vector<int> truth;
  if (truth_col >= 0) truth.resize(static_cast<std::size_t>(n));

  for (Eigen::Index i = 0; i < n; ++i) {
    const std::string where = path + " line " + std::to_string(i + 2);
    const std::vector<std::string> f = split_csv_line(lines[static_cast<std::size_t>(i) + 1]);
    if (f.size() != header.size())
      throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(f.size()));
    d.y[i] = y_col >= 0 ? parse_double(f[static_cast<std::size_t>(y_col)], where) : 0.0;
    for (const auto& [idx, col] : x_cols)
      d.X(i, idx - 1) = parse_double(f[static_cast<std::size_t>(col)], where);
    for (const auto& [idx, col] : z_cols)
      d.Z(i, idx - 1) = parse_double(f[static_cast<std::size_t>(col)], where);
    if (truth_col >= 0) {
      const long t = parse_long(f[static_cast<std::size_t>(truth_col)], where);
      if (t < 1) throw DataError(where + ": truth labels are 1-based");
      truth[static_cast<std::size_t>(i)] = static_cast<int>(t - 1);
    }
  }
  if (truth_col >= 0) d.truth = std::move(truth);
  d.validate();
  return d;
}

inline Dataset read_dataset_csv(const std::string& path) {
  return read_dataset_csv_impl(path, true, nullptr);
}

/// Covariate-only ingestion for prediction inputs: y optional.
inline Dataset read_covariates_csv(const std::string& path) {
  return read_dataset_csv_impl(path, false, nullptr);
}

/// Response CSV with header `subject_id,y`.
inline SubjectValues read_response_csv(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) throw DataError(path + ": empty file");
  const std::vector<std::string> header = split_csv_line(lines[0]);
  if (header.size() != 2 || header[0] != "subject_id" || header[1] != "y")
    throw DataError(path + ": expected header 'subject_id,y'");
  SubjectValues out;
  const Eigen::Index n = static_cast<Eigen::Index>(lines.size()) - 1;
  if (n == 0) throw DataError(path + ": no data rows");
  out.values.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::string where = path + " line " + std::to_string(i + 2);
    const std::vector<std::string> f = split_csv_line(lines[static_cast<std::size_t>(i) + 1]);
    if (f.size() != 2) throw DataError(where + ": expected 2 fields");
    out.ids.push_back(f[0]);
    out.values[i] = parse_double(f[1], where);
  }
  return out;
}

inline std::string dataset_csv(const Dataset& d) {
  std::string out = "y";
  for (Eigen::Index j = 0; j < d.p(); ++j) out += ",x" + std::to_string(j + 1);
  for (Eigen::Index j = 0; j < d.q(); ++j) out += ",z" + std::to_string(j + 1);
  if (d.truth) out += ",truth";
  out += "\n";
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    out += format_double(d.y[i]);
    for (Eigen::Index j = 0; j < d.p(); ++j) out += "," + format_double(d.X(i, j));
    for (Eigen::Index j = 0; j < d.q(); ++j) out += "," + format_double(d.Z(i, j));
    if (d.truth) out += "," + std::to_string((*d.truth)[static_cast<std::size_t>(i)] + 1);
    out += "\n";
  }
  return out;
}

inline void write_dataset_csv(const std::string& path, const Dataset& d) {
  atomic_write(path, dataset_csv(d));
}

/// Long-format curve CSV with header `subject_id,t,value`. Subjects keep
/// first-appearance order; the domain defaults to the observed time range.
inline CurveSample read_curves_csv(const std::string& path,
                                   std::optional<double> a = std::nullopt,
                                   std::optional<double> b = std::nullopt) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) throw DataError(path + ": empty file");
  const std::vector<std::string> header = split_csv_line(lines[0]);
  if (header.size() != 3 || header[0] != "subject_id" || header[1] != "t" ||
      header[2] != "value")
    throw DataError(path + ": expected header 'subject_id,t,value'");

  CurveSample cs;
  std::map<std::string, std::size_t> index;
  double tmin = 0.0, tmax = 0.0;
  bool any = false;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const std::string where = path + " line " + std::to_string(l + 1);
    const std::vector<std::string> f = split_csv_line(lines[l]);
    if (f.size() != 3) throw DataError(where + ": expected 3 fields");
    const double t = parse_double(f[1], where);
    const double v = parse_double(f[2], where);
    auto [it, fresh] = index.emplace(f[0], cs.ids.size());
    if (fresh) {
      cs.ids.push_back(f[0]);
      cs.times.emplace_back();
      cs.values.emplace_back();
    }
    cs.times[it->second].push_back(t);
    cs.values[it->second].push_back(v);
    tmin = any ? std::min(tmin, t) : t;
    tmax = any ? std::max(tmax, t) : t;
    any = true;
  }
  if (!any) throw DataError(path + ": no data rows");
  cs.a = a.value_or(tmin);
  cs.b = b.value_or(tmax);
  cs.validate();
  return cs;
}

inline std::string curves_csv(const CurveSample& cs) {
  std::string out = "subject_id,t,value\n";
  for (std::size_t i = 0; i < cs.ids.size(); ++i)
    for (std::size_t j = 0; j < cs.times[i].size(); ++j)
      out += cs.ids[i] + "," + format_double(cs.times[i][j]) + "," +
             format_double(cs.values[i][j]) + "\n";
  return out;
}

inline void write_curves_csv(const std::string& path, const CurveSample& cs) {
  atomic_write(path, curves_csv(cs));
}

}  // namespace mixreg

#endif  // MIXREG_CSV_HPP
