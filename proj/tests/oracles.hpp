// Independent reference implementations used by the test suites. Everything
// here recomputes results from first principles (explicit inverses, direct
// density arithmetic, brute-force enumeration) so it shares no code path with
// the library under test.
#ifndef MIXREG_TESTS_ORACLES_HPP
#define MIXREG_TESTS_ORACLES_HPP

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "mixreg/dataset.hpp"
#include "mixreg/model.hpp"

namespace oracles {

constexpr double kPi = 3.14159265358979323846;

inline double normal_logpdf(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * std::log(2.0 * kPi * var) - 0.5 * r * r / var;
}

inline double normal_pdf(double x, double mean, double var) {
  return std::exp(normal_logpdf(x, mean, var));
}

/// Bivariate normal log-density by explicit 2x2 inverse and determinant.
inline double mvn2_logpdf(const Eigen::Vector2d& x, const Eigen::Vector2d& mu,
                          const Eigen::Matrix2d& S) {
  const double det = S(0, 0) * S(1, 1) - S(0, 1) * S(1, 0);
  const double d0 = x[0] - mu[0], d1 = x[1] - mu[1];
  const double quad =
      (S(1, 1) * d0 * d0 - 2.0 * S(0, 1) * d0 * d1 + S(0, 0) * d1 * d1) / det;
  return -std::log(2.0 * kPi) - 0.5 * std::log(det) - 0.5 * quad;
}

/// Gauss-Jordan linear solve with partial pivoting; no library solver involved.
inline Eigen::VectorXd gauss_jordan(Eigen::MatrixXd A, Eigen::VectorXd b) {
  const Eigen::Index n = A.rows();
  for (Eigen::Index col = 0; col < n; ++col) {
    Eigen::Index piv = col;
    for (Eigen::Index r = col + 1; r < n; ++r)
      if (std::abs(A(r, col)) > std::abs(A(piv, col))) piv = r;
    if (A(piv, col) == 0.0) throw std::runtime_error("oracle solve: singular matrix");
    A.row(col).swap(A.row(piv));
    std::swap(b[col], b[piv]);
    const double d = A(col, col);
    A.row(col) /= d;
    b[col] /= d;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = A(r, col);
      A.row(r) -= f * A.row(col);
      b[r] -= f * b[col];
    }
  }
  return b;
}

struct WlsOracle {
  Eigen::VectorXd coef;
  double sigma2 = 0.0;
};

/// Weighted least squares of y on the columns of D with weights w, solved by
/// forming the normal equations entry by entry and running Gauss-Jordan.
/// sigma2 is the weighted mean squared residual (divisor sum of weights).
inline WlsOracle wls(const Eigen::MatrixXd& D, const Eigen::VectorXd& w,
                     const Eigen::VectorXd& y) {
  const Eigen::Index m = D.cols();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
  for (Eigen::Index i = 0; i < D.rows(); ++i) {
    for (Eigen::Index r = 0; r < m; ++r) {
      b[r] += w[i] * D(i, r) * y[i];
      for (Eigen::Index c = 0; c < m; ++c) A(r, c) += w[i] * D(i, r) * D(i, c);
    }
  }
  WlsOracle out;
  out.coef = gauss_jordan(A, b);
  double rss = 0.0, wsum = 0.0;
  for (Eigen::Index i = 0; i < D.rows(); ++i) {
    double fit = 0.0;
    for (Eigen::Index c = 0; c < m; ++c) fit += D(i, c) * out.coef[c];
    rss += w[i] * (y[i] - fit) * (y[i] - fit);
    wsum += w[i];
  }
  out.sigma2 = rss / wsum;
  return out;
}

/// Weighted covariate moments: mean and covariance about it, divisor sum(w).
inline void weighted_moments(const Eigen::MatrixXd& X, const Eigen::VectorXd& w,
                             Eigen::VectorXd& mu, Eigen::MatrixXd& Sigma) {
  const Eigen::Index p = X.cols();
  const double wsum = w.sum();
  mu = Eigen::VectorXd::Zero(p);
  for (Eigen::Index i = 0; i < X.rows(); ++i) mu += w[i] * X.row(i).transpose();
  mu /= wsum;
  Sigma = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    Eigen::VectorXd c = X.row(i).transpose() - mu;
    Sigma += w[i] * c * c.transpose();
  }
  Sigma /= wsum;
}

/// EM minorization objective Q(theta; tau) = sum_ik tau_ik (log pi_k + log f_k).
inline double q_function(const mixreg::MixtureModel& m, const Eigen::MatrixXd& tau,
                         const mixreg::Dataset& d) {
  double q = 0.0;
  const Eigen::VectorXd zempty(0);
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    const Eigen::VectorXd z = d.q() > 0 ? Eigen::VectorXd(d.Z.row(i)) : zempty;
    for (int k = 0; k < m.K(); ++k)
      q += tau(i, k) * (std::log(m.pi[k]) +
                        mixreg::component_joint_logdensity(
                            d.y[i], d.X.row(i).transpose(), z,
                            m.components[static_cast<std::size_t>(k)], m.kind));
  }
  return q;
}

/// Random well-conditioned JMR model for property tests. Mixing proportions
/// are bounded away from 0, covariances have eigenvalues in [0.3, ~2].
inline mixreg::MixtureModel random_jmr(std::mt19937_64& gen, int K, int p, int q) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::uniform_real_distribution<double> unif01(0.0, 1.0);
  mixreg::MixtureModel m;
  m.kind = mixreg::ModelKind::JMR;
  m.pi.resize(K);
  for (int k = 0; k < K; ++k) m.pi[k] = 0.6 + unif01(gen);
  m.pi /= m.pi.sum();
  for (int k = 0; k < K; ++k) {
    mixreg::Component c;
    c.alpha = 2.0 * unif(gen);
    c.beta.resize(p);
    c.zeta.resize(q);
    for (int j = 0; j < p; ++j) c.beta[j] = 2.0 * unif(gen);
    for (int j = 0; j < q; ++j) c.zeta[j] = unif(gen);
    c.sigma2 = 0.2 + unif01(gen);
    c.mu.resize(p);
    for (int j = 0; j < p; ++j) c.mu[j] = 4.0 * unif(gen);
    Eigen::MatrixXd A(p, p);
    for (int r = 0; r < p; ++r)
      for (int s = 0; s < p; ++s) A(r, s) = 0.5 * unif(gen);
    c.Sigma = A * A.transpose() + 0.3 * Eigen::MatrixXd::Identity(p, p);
    m.components.push_back(std::move(c));
  }
  return m;
}

/// The same model with the covariate law stripped, as an OMR start point.
inline mixreg::MixtureModel strip_to_omr(mixreg::MixtureModel m) {
  m.kind = mixreg::ModelKind::OMR;
  for (mixreg::Component& c : m.components) {
    c.mu.resize(0);
    c.Sigma.resize(0, 0);
  }
  return m;
}

/// The same model as a covariate-only mixture.
inline mixreg::MixtureModel strip_to_gmm(mixreg::MixtureModel m) {
  m.kind = mixreg::ModelKind::GMM;
  return m;
}

/// Composite trapezoid integral of f over [a, b] with n+1 nodes.
template <typename F>
double trapezoid(F f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = 0.5 * (f(a) + f(b));
  for (int i = 1; i < n; ++i) s += f(a + i * h);
  return s * h;
}

/// Relative gap |a-b| / max(1, |a|, |b|).
inline double rel_gap(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace oracles

#endif  // MIXREG_TESTS_ORACLES_HPP
