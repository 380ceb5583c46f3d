#ifndef MIXREG_MODEL_HPP
#define MIXREG_MODEL_HPP

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mixreg/dataset.hpp"
#include "mixreg/errors.hpp"
#include "mixreg/rng.hpp"

namespace mixreg {

inline constexpr double kLogTwoPi = 1.8378770664093454836;

/// Relative floors applied to covariance eigenvalues and error variances.
struct FloorConfig {
  double cov_eigenvalue_rel = 1e-8;   // times trace(Sigma)/p
  double error_variance_rel = 1e-10;  // times sample variance of y
};

/// JMR components model the joint law of (y, x); OMR components the conditional
/// law of y given x; GMM components the law of x alone (used by model-based
/// clustering).
enum class ModelKind { JMR, OMR, GMM };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::JMR: return "jmr";
    case ModelKind::OMR: return "omr";
    case ModelKind::GMM: return "gmm";
  }
  return "?";
}

inline ModelKind kind_from_string(const std::string& s) {
  if (s == "jmr" || s == "JMR") return ModelKind::JMR;
  if (s == "omr" || s == "OMR") return ModelKind::OMR;
  if (s == "gmm" || s == "GMM") return ModelKind::GMM;
  throw DataError("unknown model kind '" + s + "'");
}

struct Component {
  double alpha = 0.0;        // regression intercept
  Eigen::VectorXd beta;      // regression slope, length p
  Eigen::VectorXd zeta;      // invariant-covariate coefficients, length q
  double sigma2 = 1.0;       // error variance
  Eigen::VectorXd mu;        // covariate mean, empty for OMR
  Eigen::MatrixXd Sigma;     // covariate covariance, empty for OMR

  double linear_predictor(const Eigen::VectorXd& x, const Eigen::VectorXd& z) const {
    double v = alpha + beta.dot(x);
    if (zeta.size() > 0) v += zeta.dot(z);
    return v;
  }
};

struct MixtureModel {
  ModelKind kind = ModelKind::JMR;
  Eigen::VectorXd pi;                 // length K
  std::vector<Component> components;  // K entries

  int K() const { return static_cast<int>(components.size()); }
  Eigen::Index p() const {
    if (components.empty()) return 0;
    if (kind == ModelKind::GMM) return components.front().mu.size();
    return components.front().beta.size();
  }
  Eigen::Index q() const { return components.empty() ? 0 : components.front().zeta.size(); }

  void validate(const FloorConfig& floors = FloorConfig{}) const;
};

/// Posterior membership probabilities tau_ik.
struct Responsibilities {
  Eigen::MatrixXd tau;  // n x K

  void validate() const {
    if ((tau.array() < -1e-12).any() || (tau.array() > 1.0 + 1e-12).any())
      throw NumericalError("responsibilities outside [0,1]");
    Eigen::VectorXd rs = tau.rowwise().sum();
    if (((rs.array() - 1.0).abs() > 1e-10).any())
      throw NumericalError("responsibility rows do not sum to 1");
  }
};

/// Floors the eigenvalues of a symmetric matrix at rel * trace/p.
/// Throws when even the floor is non-positive (trace <= 0).
inline Eigen::MatrixXd floor_covariance(const Eigen::MatrixXd& Sigma, double rel) {
  const Eigen::Index p = Sigma.rows();
  if (p == 0 || Sigma.cols() != p) throw DataError("covariance matrix is not square");
  Eigen::MatrixXd sym = 0.5 * (Sigma + Sigma.transpose());
  const double floor = rel * sym.trace() / static_cast<double>(p);
  if (!(floor > 0.0))
    throw DegenerateCovarianceError("covariance trace is non-positive; cannot regularize");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success)
    throw DegenerateCovarianceError("covariance eigendecomposition failed");
  Eigen::VectorXd lam = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

/// Multivariate normal with precomputed Cholesky factor; density evaluation
/// stays in log space via a triangular solve.
class GaussianDensity {
 public:
  GaussianDensity(const Eigen::VectorXd& mu, const Eigen::MatrixXd& Sigma,
                  double floor_rel = FloorConfig{}.cov_eigenvalue_rel)
      : mu_(mu) {
    if (mu.size() != Sigma.rows()) throw DataError("mean/covariance dimension mismatch");
    Eigen::MatrixXd floored = floor_covariance(Sigma, floor_rel);
    Eigen::LLT<Eigen::MatrixXd> llt(floored);
    if (llt.info() != Eigen::Success)
      throw DegenerateCovarianceError("covariance not positive definite after flooring");
    L_ = llt.matrixL();
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < L_.rows(); ++i) logdet += 2.0 * std::log(L_(i, i));
    log_norm_ = -0.5 * (static_cast<double>(mu.size()) * kLogTwoPi + logdet);
  }

  double logpdf(const Eigen::VectorXd& x) const {
    if (x.size() != mu_.size()) throw DataError("point/mean dimension mismatch");
    Eigen::VectorXd v = L_.triangularView<Eigen::Lower>().solve(x - mu_);
    return log_norm_ - 0.5 * v.squaredNorm();
  }

  const Eigen::VectorXd& mean() const { return mu_; }
  const Eigen::MatrixXd& chol_lower() const { return L_; }

 private:
  Eigen::VectorXd mu_;
  Eigen::MatrixXd L_;
  double log_norm_ = 0.0;
};

/// log phi(x; mu, Sigma) with the configured eigenvalue floor.
inline double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                         const Eigen::MatrixXd& Sigma,
                         double floor_rel = FloorConfig{}.cov_eigenvalue_rel) {
  return GaussianDensity(mu, Sigma, floor_rel).logpdf(x);
}

inline double normal_logpdf(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * (kLogTwoPi + std::log(var) + r * r / var);
}

inline void MixtureModel::validate(const FloorConfig& floors) const {
  const int k = K();
  if (k < 1) throw DataError("mixture must have at least one component");
  if (pi.size() != k) throw DataError("mixing-proportion length does not match component count");
  if ((pi.array() <= 0.0).any()) throw DataError("mixing proportions must be positive");
  if (std::abs(pi.sum() - 1.0) > 1e-12) throw DataError("mixing proportions must sum to 1");
  const Eigen::Index pp = p(), qq = q();
  for (const Component& c : components) {
    if (kind != ModelKind::GMM) {
      if (c.beta.size() != pp) throw DataError("slope dimension differs across components");
      if (c.zeta.size() != qq) throw DataError("zeta dimension differs across components");
      if (!(c.sigma2 > 0.0)) throw DataError("error variance must be positive");
    }
    if (kind != ModelKind::OMR) {
      if (c.mu.size() != pp || c.Sigma.rows() != pp || c.Sigma.cols() != pp)
        throw DataError("covariate moment dimensions do not match");
      if (!c.Sigma.isApprox(c.Sigma.transpose(), 1e-9))
        throw DataError("covariate covariance is not symmetric");
      // Raises if the floored matrix would still be degenerate.
      floor_covariance(c.Sigma, floors.cov_eigenvalue_rel);
    } else {
      if (c.mu.size() != 0 || c.Sigma.size() != 0)
        throw DataError("OMR components must not carry covariate moments");
    }
  }
}

/// Per-component evaluation state shared across a whole dataset.
struct PreparedComponent {
  double alpha = 0.0;
  Eigen::VectorXd beta;
  Eigen::VectorXd zeta;
  double sigma2 = 1.0;
  std::optional<GaussianDensity> covariate;  // absent for OMR

  double log_joint(double y, const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                   bool include_regression) const {
    double v = 0.0;
    if (include_regression) {
      double m = alpha + beta.dot(x);
      if (zeta.size() > 0) m += zeta.dot(z);
      v += normal_logpdf(y, m, sigma2);
    }
    if (covariate) v += covariate->logpdf(x);
    return v;
  }
};

struct PreparedMixture {
  ModelKind kind;
  Eigen::VectorXd log_pi;
  std::vector<PreparedComponent> comps;

  static PreparedMixture make(const MixtureModel& m,
                              const FloorConfig& floors = FloorConfig{}) {
    PreparedMixture pm;
    pm.kind = m.kind;
    pm.log_pi = m.pi.array().log();
    pm.comps.reserve(m.components.size());
    for (const Component& c : m.components) {
      PreparedComponent pc;
      pc.alpha = c.alpha;
      pc.beta = c.beta;
      pc.zeta = c.zeta;
      pc.sigma2 = c.sigma2;
      if (m.kind != ModelKind::OMR)
        pc.covariate.emplace(c.mu, c.Sigma, floors.cov_eigenvalue_rel);
      pm.comps.push_back(std::move(pc));
    }
    return pm;
  }

  /// log pi_k + log f_k(y_i, x_i [, z_i]) for every component.
  Eigen::VectorXd weighted_logdensities(double y, const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& z) const {
    Eigen::VectorXd out(log_pi.size());
    const bool reg = kind != ModelKind::GMM;
    for (Eigen::Index k = 0; k < log_pi.size(); ++k)
      out[k] = log_pi[k] + comps[static_cast<std::size_t>(k)].log_joint(y, x, z, reg);
    return out;
  }
};

/// log f_k(y, x [, z]) for a single component: the regression term plus, for
/// JMR, the covariate term; GMM evaluates the covariate term only.
inline double component_joint_logdensity(double y, const Eigen::VectorXd& x,
                                         const Eigen::VectorXd& z, const Component& c,
                                         ModelKind kind = ModelKind::JMR,
                                         const FloorConfig& floors = FloorConfig{}) {
  if (c.zeta.size() != z.size()) throw DataError("invariant-covariate dimension mismatch");
  double v = 0.0;
  if (kind != ModelKind::GMM) {
    if (c.beta.size() != x.size()) throw DataError("slope/covariate dimension mismatch");
    v += normal_logpdf(y, c.linear_predictor(x, z), c.sigma2);
  }
  if (kind != ModelKind::OMR) v += mvn_logpdf(x, c.mu, c.Sigma, floors.cov_eigenvalue_rel);
  return v;
}

inline double log_sum_exp(const Eigen::VectorXd& v) {
  double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

/// Observed-data log-likelihood; the inner mixture sum runs through log-sum-exp.
inline double loglik(const MixtureModel& m, const Dataset& d,
                     const FloorConfig& floors = FloorConfig{}) {
  d.validate();
  if (d.p() != m.p()) throw DataError("model/data covariate dimensions disagree");
  if (d.q() != m.q()) throw DataError("model/data invariant-covariate dimensions disagree");
  PreparedMixture pm = PreparedMixture::make(m, floors);
  const Eigen::VectorXd zempty(0);
  double total = 0.0;
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    Eigen::VectorXd z = d.q() > 0 ? Eigen::VectorXd(d.Z.row(i)) : zempty;
    total += log_sum_exp(pm.weighted_logdensities(d.y[i], d.X.row(i), z));
  }
  return total;
}

/// Draws n observations from a JMR model; truth labels are filled in.
/// Requires q = 0 (the law of invariant covariates is not part of the model).
inline Dataset sample(const MixtureModel& m, Eigen::Index n, std::uint64_t seed,
                      const FloorConfig& floors = FloorConfig{}) {
  if (m.kind != ModelKind::JMR)
    throw DataError("sampling requires a JMR model (covariate law unspecified otherwise)");
  if (m.q() != 0) throw DataError("sampling with invariant covariates is unsupported");
  m.validate(floors);
  const Eigen::Index p = m.p();
  Dataset d;
  d.y.resize(n);
  d.X.resize(n, p);
  d.Z.resize(n, 0);
  d.truth.emplace(static_cast<std::size_t>(n));
  std::vector<Eigen::MatrixXd> chol;
  chol.reserve(m.components.size());
  for (const Component& c : m.components) {
    Eigen::LLT<Eigen::MatrixXd> llt(floor_covariance(c.Sigma, floors.cov_eigenvalue_rel));
    chol.push_back(llt.matrixL());
  }
  Rng rng(seed);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int k = rng.categorical(m.pi);
    const Component& c = m.components[static_cast<std::size_t>(k)];
    Eigen::VectorXd x = c.mu + chol[static_cast<std::size_t>(k)] * rng.normal_vector(p);
    double eps = std::sqrt(c.sigma2) * rng.normal();
    d.X.row(i) = x.transpose();
    d.y[i] = c.alpha + c.beta.dot(x) + eps;
    (*d.truth)[static_cast<std::size_t>(i)] = k;
  }
  return d;
}

}  // namespace mixreg

#endif  // MIXREG_MODEL_HPP
