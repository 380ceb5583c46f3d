#ifndef MIXREG_BSPLINE_HPP
#define MIXREG_BSPLINE_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cstddef>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mixreg/errors.hpp"

namespace mixreg {

/// Discretely observed curves on a common domain [a, b]. Subjects may have
/// different observation times.
struct CurveSample {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> times;
  std::vector<std::vector<double>> values;
  double a = 0.0;
  double b = 1.0;

  Eigen::Index n() const { return static_cast<Eigen::Index>(ids.size()); }

  void validate() const {
    if (ids.empty()) throw DataError("curve sample is empty");
    if (times.size() != ids.size() || values.size() != ids.size())
      throw DataError("curve sample arrays disagree in length");
    if (!(a < b)) throw DataError("curve domain must satisfy a < b");
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto& t = times[i];
      const auto& v = values[i];
      if (t.size() != v.size()) throw DataError("times/values mismatch for subject " + ids[i]);
      if (t.empty()) throw DataError("no observations for subject " + ids[i]);
      for (std::size_t j = 0; j < t.size(); ++j) {
        if (!std::isfinite(t[j]) || !std::isfinite(v[j]))
          throw DataError("non-finite observation for subject " + ids[i]);
        if (t[j] < a || t[j] > b)
          throw DataError("observation time outside domain for subject " + ids[i]);
        if (j > 0 && !(t[j] > t[j - 1]))
          throw DataError("times not strictly increasing for subject " + ids[i]);
      }
    }
  }
};

/// Clamped B-spline basis of a given order (order = degree + 1) on [a, b].
/// Basis values and derivatives come from the Cox-de Boor recursion.
class BSplineBasis {
 public:
  BSplineBasis(double a, double b, std::vector<double> interior, int order = 5)
      : order_(order), a_(a), b_(b) {
    if (order < 1) throw DataError("spline order must be at least 1");
    if (!(a < b)) throw DataError("spline domain must satisfy a < b");
    std::sort(interior.begin(), interior.end());
    for (double t : interior)
      if (!(t > a && t < b)) throw DataError("interior knots must lie strictly inside (a, b)");
    knots_.reserve(interior.size() + 2 * static_cast<std::size_t>(order));
    knots_.insert(knots_.end(), static_cast<std::size_t>(order), a);
    knots_.insert(knots_.end(), interior.begin(), interior.end());
    knots_.insert(knots_.end(), static_cast<std::size_t>(order), b);
  }

  int order() const { return order_; }
  double a() const { return a_; }
  double b() const { return b_; }
  const std::vector<double>& knots() const { return knots_; }
  Eigen::Index dim() const {
    return static_cast<Eigen::Index>(knots_.size()) - order_;
  }

  /// All basis functions (or their deriv-th derivatives) at one point.
  Eigen::VectorXd evaluate(double t, int deriv = 0) const {
    if (deriv < 0) throw DataError("derivative order must be nonnegative");
    if (t < a_ || t > b_) throw DataError("evaluation point outside spline domain");
    const int k = order_;
    const Eigen::Index nb = dim();
    const auto& T = knots_;
    // levels[m-1][i] = B_{i,m}(t); level m has nb + k - m entries.
    std::vector<std::vector<double>> levels(static_cast<std::size_t>(k));
    auto& first = levels[0];
    first.assign(static_cast<std::size_t>(nb + k - 1), 0.0);
    for (std::size_t i = 0; i < first.size(); ++i) {
      const bool last_span = T[i] < b_ && T[i + 1] >= b_;
      if ((t >= T[i] && t < T[i + 1]) || (t >= b_ && last_span)) first[i] = 1.0;
    }
    for (int m = 2; m <= k; ++m) {
      auto& cur = levels[static_cast<std::size_t>(m - 1)];
      const auto& prev = levels[static_cast<std::size_t>(m - 2)];
      cur.assign(static_cast<std::size_t>(nb + k - m), 0.0);
      for (std::size_t i = 0; i < cur.size(); ++i) {
        double v = 0.0;
        const double d1 = T[i + static_cast<std::size_t>(m) - 1] - T[i];
        const double d2 = T[i + static_cast<std::size_t>(m)] - T[i + 1];
        if (d1 > 0.0) v += (t - T[i]) / d1 * prev[i];
        if (d2 > 0.0) v += (T[i + static_cast<std::size_t>(m)] - t) / d2 * prev[i + 1];
        cur[i] = v;
      }
    }
    // Derivatives reuse the same recursion on the stored table: the r-th
    // derivative at order m needs the (r-1)-th derivative at order m-1.
    std::vector<std::vector<double>> cur_d = levels;
    for (int r = 1; r <= deriv; ++r) {
      std::vector<std::vector<double>> next(static_cast<std::size_t>(k));
      for (int m = r + 1; m <= k; ++m) {
        auto& dst = next[static_cast<std::size_t>(m - 1)];
        const auto& src = cur_d[static_cast<std::size_t>(m - 2)];
        dst.assign(static_cast<std::size_t>(nb + k - m), 0.0);
        for (std::size_t i = 0; i < dst.size(); ++i) {
          double v = 0.0;
          const double d1 = T[i + static_cast<std::size_t>(m) - 1] - T[i];
          const double d2 = T[i + static_cast<std::size_t>(m)] - T[i + 1];
          if (d1 > 0.0) v += src[i] / d1;
          if (d2 > 0.0) v -= src[i + 1] / d2;
          dst[i] = (m - 1) * v;
        }
      }
      cur_d = std::move(next);
    }
    Eigen::VectorXd out(nb);
    if (deriv >= k) {
      out.setZero();
      return out;
    }
    const auto& top = cur_d[static_cast<std::size_t>(k - 1)];
    for (Eigen::Index i = 0; i < nb; ++i) out[i] = top[static_cast<std::size_t>(i)];
    return out;
  }

  /// Rows are evaluation points, columns basis functions.
  Eigen::MatrixXd evaluate_many(const Eigen::VectorXd& t, int deriv = 0) const {
    Eigen::MatrixXd out(t.size(), dim());
    for (Eigen::Index i = 0; i < t.size(); ++i) out.row(i) = evaluate(t[i], deriv).transpose();
    return out;
  }

 private:
  int order_;
  double a_;
  double b_;
  std::vector<double> knots_;
};

inline Eigen::VectorXd make_grid(double a, double b, Eigen::Index size = 201) {
  if (size < 2) throw DataError("grid needs at least two points");
  return Eigen::VectorXd::LinSpaced(size, a, b);
}

/// Trapezoid quadrature weights; positive and summing to the grid span.
inline Eigen::VectorXd trapezoid_weights(const Eigen::VectorXd& grid) {
  const Eigen::Index g = grid.size();
  if (g < 2) throw DataError("grid needs at least two points");
  Eigen::VectorXd w(g);
  w[0] = (grid[1] - grid[0]) / 2.0;
  for (Eigen::Index i = 1; i + 1 < g; ++i) w[i] = (grid[i + 1] - grid[i - 1]) / 2.0;
  w[g - 1] = (grid[g - 1] - grid[g - 2]) / 2.0;
  return w;
}

/// Basis-projected curves evaluated on a fixed quadrature grid.
struct SmoothedCurves {
  BSplineBasis basis;
  Eigen::MatrixXd coef;    // n x dim
  Eigen::VectorXd grid;    // G points spanning [a, b]
  Eigen::VectorXd qweights;
  Eigen::VectorXd rss;     // per-curve residual sum of squares
  std::vector<std::string> ids;

  Eigen::Index n() const { return coef.rows(); }
  Eigen::Index grid_size() const { return grid.size(); }

  /// n x G matrix of curve values on the grid.
  Eigen::MatrixXd values() const {
    return coef * basis.evaluate_many(grid).transpose();
  }

  /// Exact curve values at the right end of the domain.
  Eigen::VectorXd endpoint_values() const { return coef * basis.evaluate(basis.b()); }

  void validate() const {
    if (coef.rows() == 0) throw DataError("no smoothed curves");
    if (coef.cols() != basis.dim()) throw DataError("coefficient/basis dimension mismatch");
    if (grid.size() != qweights.size()) throw DataError("grid/weight length mismatch");
    if (grid[0] != basis.a() || grid[grid.size() - 1] != basis.b())
      throw DataError("grid does not span the basis domain");
    if ((qweights.array() <= 0.0).any()) throw DataError("quadrature weights must be positive");
    const double span = basis.b() - basis.a();
    if (std::abs(qweights.sum() - span) > 1e-8 * span)
      throw DataError("quadrature weights do not sum to the domain length");
  }
};

/// Interior knots taken from the pooled observation times of all subjects.
inline std::vector<double> pooled_interior_knots(const CurveSample& raw) {
  std::set<double> pool;
  for (const auto& t : raw.times) pool.insert(t.begin(), t.end());
  std::vector<double> interior;
  for (double t : pool)
    if (t > raw.a && t < raw.b) interior.push_back(t);
  return interior;
}

inline std::vector<double> equispaced_interior_knots(double a, double b, int n_knots) {
  if (n_knots < 0) throw DataError("interior knot count must be nonnegative");
  std::vector<double> interior;
  interior.reserve(static_cast<std::size_t>(n_knots));
  for (int j = 1; j <= n_knots; ++j)
    interior.push_back(a + (b - a) * j / (n_knots + 1.0));
  return interior;
}

/// Least-squares projection of every curve onto the spline basis. With
/// n_knots < 0, interior knots sit at the pooled observation times; otherwise
/// n_knots equispaced interior knots are used.
inline SmoothedCurves smooth_curves(const CurveSample& raw, int order = 5, int n_knots = -1,
                                    Eigen::Index grid_size = 201) {
  raw.validate();
  std::vector<double> interior = n_knots < 0 ? pooled_interior_knots(raw)
                                             : equispaced_interior_knots(raw.a, raw.b, n_knots);
  BSplineBasis basis(raw.a, raw.b, std::move(interior), order);
  const Eigen::Index nb = basis.dim();

  SmoothedCurves out{basis,
                     Eigen::MatrixXd(raw.n(), nb),
                     make_grid(raw.a, raw.b, grid_size),
                     Eigen::VectorXd(),
                     Eigen::VectorXd(raw.n()),
                     raw.ids};
  out.qweights = trapezoid_weights(out.grid);

  for (Eigen::Index i = 0; i < raw.n(); ++i) {
    const auto& t = raw.times[static_cast<std::size_t>(i)];
    const auto& v = raw.values[static_cast<std::size_t>(i)];
    const Eigen::Index m = static_cast<Eigen::Index>(t.size());
    if (m < nb)
      throw DataError("subject " + raw.ids[static_cast<std::size_t>(i)] + " has " +
                      std::to_string(m) + " observations but the basis has dimension " +
                      std::to_string(nb));
    Eigen::MatrixXd D(m, nb);
    for (Eigen::Index j = 0; j < m; ++j)
      D.row(j) = basis.evaluate(t[static_cast<std::size_t>(j)]).transpose();
    Eigen::Map<const Eigen::VectorXd> y(v.data(), m);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(D);
    if (qr.rank() < nb)
      throw NumericalError("spline design is rank deficient for subject " +
                           raw.ids[static_cast<std::size_t>(i)]);
    Eigen::VectorXd c = qr.solve(y);
    out.coef.row(i) = c.transpose();
    out.rss[i] = (y - D * c).squaredNorm();
  }
  return out;
}

/// Analytic spline derivative: coefficients map onto the order-(k-1) basis on
/// the trimmed knot vector.
inline SmoothedCurves differentiate(const SmoothedCurves& s) {
  const int k = s.basis.order();
  if (k < 2) throw DataError("cannot differentiate an order-1 spline basis");
  const auto& T = s.basis.knots();
  std::vector<double> inner(T.begin() + 1, T.end() - 1);
  const double a = s.basis.a();
  const double b = s.basis.b();
  std::vector<double> interior;
  for (double t : inner)
    if (t > a && t < b) interior.push_back(t);
  BSplineBasis dbasis(a, b, std::move(interior), k - 1);

  Eigen::MatrixXd dcoef(s.coef.rows(), dbasis.dim());
  for (Eigen::Index j = 0; j < dbasis.dim(); ++j) {
    const double den = T[static_cast<std::size_t>(j) + static_cast<std::size_t>(k)] -
                       T[static_cast<std::size_t>(j) + 1];
    if (den > 0.0)
      dcoef.col(j) = (k - 1) / den * (s.coef.col(j + 1) - s.coef.col(j));
    else
      dcoef.col(j).setZero();
  }
  return SmoothedCurves{dbasis, std::move(dcoef), s.grid, s.qweights, s.rss, s.ids};
}

}  // namespace mixreg

#endif  // MIXREG_BSPLINE_HPP
