#ifndef MIXREG_EM_HPP
#define MIXREG_EM_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mixreg/linear_model.hpp"
#include "mixreg/model.hpp"
#include "mixreg/rng.hpp"

namespace mixreg {

struct FitConfig {
  int max_iter = 1000;
  double tol = 1e-8;       // relative log-likelihood change
  int n_restarts = 10;
  std::uint64_t seed = 0;
  FloorConfig floors;
  // Minimum effective weight sum_i tau_ik before a component counts as
  // collapsed; 0 selects the dimension-based default (p+q+2, or p+2 for GMM).
  double min_effective_weight = 0.0;

  void validate() const {
    if (max_iter < 1) throw DataError("max_iter must be >= 1");
    if (!(tol > 0.0)) throw DataError("tol must be positive");
    if (n_restarts < 1) throw DataError("n_restarts must be >= 1");
  }

  double effective_weight_floor(Eigen::Index p, Eigen::Index q, ModelKind kind) const {
    if (min_effective_weight > 0.0) return min_effective_weight;
    return kind == ModelKind::GMM ? static_cast<double>(p + 2)
                                  : static_cast<double>(p + q + 2);
  }
};

struct FitResult {
  MixtureModel model;
  std::vector<double> loglik_trace;  // one entry per EM iterate, nondecreasing
  double bic = 0.0;                  // loglik - (|Psi|/2) ln n
  Responsibilities tau;              // at the returned (canonical) model
  bool converged = false;
  int restart_index = -1;

  double loglik() const { return loglik_trace.empty() ? 0.0 : loglik_trace.back(); }
};

/// Number of free parameters |Psi|.
inline int param_count(int K, int p, int q, ModelKind kind) {
  if (K < 0 || p < 0 || q < 0) throw DataError("param_count arguments must be nonnegative");
  switch (kind) {
    case ModelKind::JMR:
      return (K - 1) + K * (1 + q + p + 1 + p + p * (p + 1) / 2);
    case ModelKind::OMR:
      return (K - 1) + K * (1 + q + p + 1);
    case ModelKind::GMM:
      return (K - 1) + K * (p + p * (p + 1) / 2);
  }
  return 0;
}

namespace detail {

/// Responsibilities and log-likelihood in one pass over the data.
inline std::pair<Responsibilities, double> estep_loglik(const PreparedMixture& pm,
                                                        const Dataset& d) {
  const Eigen::Index n = d.n();
  const Eigen::Index K = pm.log_pi.size();
  Responsibilities r;
  r.tau.resize(n, K);
  const Eigen::VectorXd zempty(0);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd z = d.q() > 0 ? Eigen::VectorXd(d.Z.row(i)) : zempty;
    Eigen::VectorXd l = pm.weighted_logdensities(d.y[i], d.X.row(i), z);
    double lse = log_sum_exp(l);
    if (!std::isfinite(lse))
      throw NumericalError("all component densities vanished for an observation");
    r.tau.row(i) = (l.array() - lse).exp();
    total += lse;
  }
  return {std::move(r), total};
}

}  // namespace detail

/// E-step: tau_ik = pi_k f_k(y_i, x_i) / sum_l pi_l f_l(y_i, x_i), in log space.
inline Responsibilities estep(const MixtureModel& m, const Dataset& d,
                              const FloorConfig& floors = FloorConfig{}) {
  d.validate();
  if (d.p() != m.p() || d.q() != m.q()) throw DataError("model/data dimensions disagree");
  return detail::estep_loglik(PreparedMixture::make(m, floors), d).first;
}

/// M-step: the closed-form weighted updates. Mixing proportions are column
/// means of tau; covariate moments are tau-weighted (divisor sum_i tau_ik);
/// regression coefficients solve the tau-weighted normal equations and sigma2
/// is the tau-weighted mean squared residual. OMR skips the covariate moments,
/// GMM skips the regression block.
inline MixtureModel mstep(const Responsibilities& tau, const Dataset& d, ModelKind kind,
                          const FloorConfig& floors = FloorConfig{},
                          double min_effective_weight = 0.0) {
  d.validate();
  const Eigen::Index n = d.n();
  const Eigen::Index K = tau.tau.cols();
  if (tau.tau.rows() != n) throw DataError("responsibility row count does not match data");
  if (min_effective_weight <= 0.0)
    min_effective_weight = FitConfig{}.effective_weight_floor(d.p(), d.q(), kind);

  const Eigen::VectorXd colsum = tau.tau.colwise().sum();
  for (Eigen::Index k = 0; k < K; ++k)
    if (colsum[k] < min_effective_weight)
      throw ComponentCollapseError("component " + std::to_string(k + 1) +
                                   " collapsed (effective weight " +
                                   std::to_string(colsum[k]) + ")");

  const double y_var =
      (d.y.array() - d.y.mean()).square().sum() / static_cast<double>(n);
  const double sigma2_floor = floors.error_variance_rel * y_var;

  MixtureModel m;
  m.kind = kind;
  m.pi = colsum / static_cast<double>(n);
  m.components.resize(static_cast<std::size_t>(K));

  std::optional<Eigen::MatrixXd> D;
  if (kind != ModelKind::GMM) D = augmented_design(d);

  for (Eigen::Index k = 0; k < K; ++k) {
    Component& c = m.components[static_cast<std::size_t>(k)];
    const Eigen::VectorXd w = tau.tau.col(k);
    const double wk = colsum[k];

    if (kind != ModelKind::OMR) {
      c.mu = d.X.transpose() * w / wk;
      Eigen::MatrixXd Xc = d.X.rowwise() - c.mu.transpose();
      c.Sigma = Xc.transpose() * (w.asDiagonal() * Xc) / wk;
      c.Sigma = floor_covariance(c.Sigma, floors.cov_eigenvalue_rel);
    }
    if (kind != ModelKind::GMM) {
      Eigen::VectorXd coef = solve_weighted_normal_equations(*D, w, d.y);
      c.alpha = coef[0];
      c.zeta = coef.segment(1, d.q());
      c.beta = coef.tail(d.p());
      Eigen::VectorXd resid = d.y - *D * coef;
      c.sigma2 = std::max(w.dot(resid.cwiseAbs2()) / wk, sigma2_floor);
      if (!(c.sigma2 > 0.0))
        throw ComponentCollapseError("component " + std::to_string(k + 1) +
                                     " has zero residual variance");
    }
  }
  return m;
}

/// Permutation that sorts components by descending pi, then ascending first
/// covariate-mean coordinate (intercept, then slope entries, as fallbacks).
inline std::vector<int> canonical_permutation(const MixtureModel& m) {
  std::vector<int> perm(static_cast<std::size_t>(m.K()));
  std::iota(perm.begin(), perm.end(), 0);
  auto key_less = [&m](int a, int b) {
    const Component& ca = m.components[static_cast<std::size_t>(a)];
    const Component& cb = m.components[static_cast<std::size_t>(b)];
    if (m.pi[a] != m.pi[b]) return m.pi[a] > m.pi[b];
    if (ca.mu.size() > 0 && ca.mu[0] != cb.mu[0]) return ca.mu[0] < cb.mu[0];
    if (ca.alpha != cb.alpha) return ca.alpha < cb.alpha;
    for (Eigen::Index j = 0; j < ca.beta.size(); ++j)
      if (ca.beta[j] != cb.beta[j]) return ca.beta[j] < cb.beta[j];
    return a < b;
  };
  std::stable_sort(perm.begin(), perm.end(), key_less);
  return perm;
}

/// Deterministic representative of the permutation-quotient parameter space.
inline MixtureModel canonicalize(const MixtureModel& m) {
  std::vector<int> perm = canonical_permutation(m);
  MixtureModel out;
  out.kind = m.kind;
  out.pi.resize(m.pi.size());
  out.components.resize(m.components.size());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    out.pi[static_cast<Eigen::Index>(k)] = m.pi[perm[k]];
    out.components[k] = m.components[static_cast<std::size_t>(perm[k])];
  }
  return out;
}

namespace detail {

/// Column-standardized copy; constant columns become zeros.
inline Eigen::MatrixXd standardize(const Eigen::MatrixXd& M) {
  Eigen::MatrixXd out = M;
  for (Eigen::Index j = 0; j < M.cols(); ++j) {
    const double mean = M.col(j).mean();
    const double sd = std::sqrt((M.col(j).array() - mean).square().sum() /
                                static_cast<double>(M.rows()));
    if (sd > 0.0)
      out.col(j) = (M.col(j).array() - mean) / sd;
    else
      out.col(j).setZero();
  }
  return out;
}

/// k-means++ style seeding: K centers by D^2 sampling, then a nearest-center
/// hard partition. No Lloyd iterations; the first M-step starts from here.
inline std::vector<int> kmeanspp_partition(const Eigen::MatrixXd& F, int K, Rng& rng) {
  const Eigen::Index n = F.rows();
  std::vector<Eigen::Index> centers;
  centers.push_back(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd dist2 =
      (F.rowwise() - F.row(centers[0])).rowwise().squaredNorm();
  while (static_cast<int>(centers.size()) < K) {
    const double total = dist2.sum();
    Eigen::Index next;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      double acc = 0.0;
      next = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist2[i];
        if (u < acc) {
          next = i;
          break;
        }
      }
    } else {
      next = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    centers.push_back(next);
    dist2 = dist2.cwiseMin((F.rowwise() - F.row(next)).rowwise().squaredNorm());
  }
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double bestd = (F.row(i) - F.row(centers[0])).squaredNorm();
    for (int k = 1; k < K; ++k) {
      double dd = (F.row(i) - F.row(centers[static_cast<std::size_t>(k)])).squaredNorm();
      if (dd < bestd) {
        bestd = dd;
        best = k;
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
  }
  return labels;
}

inline Responsibilities onehot(const std::vector<int>& labels, int K) {
  Responsibilities r;
  r.tau = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), K);
  for (std::size_t i = 0; i < labels.size(); ++i)
    r.tau(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return r;
}

struct RestartOutcome {
  MixtureModel model;
  std::vector<double> trace;
  bool converged = false;
  std::string failure;  // nonempty when the restart was abandoned

  bool ok() const { return failure.empty(); }
};

inline RestartOutcome run_restart(const Dataset& d, int K, ModelKind kind,
                                  const FitConfig& cfg, std::uint64_t restart_seed) {
  RestartOutcome out;
  const double min_eff = cfg.effective_weight_floor(d.p(), d.q(), kind);
  try {
    Rng rng(restart_seed);
    Eigen::MatrixXd joined;
    if (kind == ModelKind::GMM) {
      joined = standardize(d.X);
    } else {
      Eigen::MatrixXd J(d.n(), d.p() + 1);
      J.leftCols(d.p()) = d.X;
      J.col(d.p()) = d.y;
      joined = standardize(J);
    }
    Responsibilities tau = onehot(kmeanspp_partition(joined, K, rng), K);
    MixtureModel model = mstep(tau, d, kind, cfg.floors, min_eff);
    double prev = -std::numeric_limits<double>::infinity();
    for (int it = 0; it <= cfg.max_iter; ++it) {
      auto [t, ll] = estep_loglik(PreparedMixture::make(model, cfg.floors), d);
      out.trace.push_back(ll);
      if (std::abs(ll - prev) <= cfg.tol * (1.0 + std::abs(prev))) {
        out.converged = true;
        break;
      }
      if (it == cfg.max_iter) break;  // trace stays aligned with the final model
      prev = ll;
      model = mstep(t, d, kind, cfg.floors, min_eff);
    }
    out.model = std::move(model);
  } catch (const NumericalError& e) {
    out.failure = e.what();
  }
  return out;
}

}  // namespace detail

/// Best-of-restarts EM fit. Each restart seeds a k-means++ hard partition on
/// the standardized joined (x, y) rows and starts from its M-step. Restarts
/// that collapse a component are abandoned; if all fail a FitFailedError with
/// the per-restart diagnostics is raised. The returned model is canonicalized
/// and the responsibilities are permuted to match.
inline FitResult fit(const Dataset& d, int K, ModelKind kind, const FitConfig& cfg) {
  cfg.validate();
  d.validate();
  if (K < 1) throw DataError("component count must be >= 1");
  if (d.n() <= static_cast<Eigen::Index>(K) * (d.p() + d.q() + 2))
    throw DataError("too few observations: need n > K*(p+q+2)");

  std::optional<detail::RestartOutcome> best;
  int best_index = -1;
  std::vector<std::string> failures;
  for (int r = 0; r < cfg.n_restarts; ++r) {
    detail::RestartOutcome o =
        detail::run_restart(d, K, kind, cfg, derive_seed(cfg.seed, static_cast<std::uint64_t>(r)));
    if (!o.ok()) {
      failures.push_back("restart " + std::to_string(r) + ": " + o.failure);
      continue;
    }
    if (!best || o.trace.back() > best->trace.back()) {
      best = std::move(o);
      best_index = r;
    }
  }
  if (!best) {
    std::ostringstream os;
    os << "every EM restart failed (K=" << K << ", kind=" << to_string(kind) << ")";
    for (const std::string& f : failures) os << "\n  " << f;
    throw FitFailedError(os.str());
  }

  FitResult res;
  res.model = canonicalize(best->model);
  res.loglik_trace = std::move(best->trace);
  res.converged = best->converged;
  res.restart_index = best_index;
  res.tau = estep(res.model, d, cfg.floors);
  const int psi = param_count(K, static_cast<int>(d.p()), static_cast<int>(d.q()), kind);
  res.bic = res.loglik_trace.back() -
            0.5 * static_cast<double>(psi) * std::log(static_cast<double>(d.n()));
  return res;
}

/// Plain Gaussian-mixture EM on the covariates alone.
inline MixtureModel fit_gmm_covariate(const Eigen::MatrixXd& X, int K, const FitConfig& cfg) {
  Dataset d;
  d.y = Eigen::VectorXd::Zero(X.rows());
  d.X = X;
  d.Z.resize(X.rows(), 0);
  return fit(d, K, ModelKind::GMM, cfg).model;
}

/// Two-step model-based clustering: Gaussian mixture on X, hard assignment by
/// posterior, then per-cluster OLS.
struct MbcModel {
  MixtureModel gmm;                   // kind GMM
  std::vector<LinearModel> clusters;  // one regression per component
};

inline MbcModel fit_mbc(const Dataset& d, int K, const FitConfig& cfg) {
  d.validate();
  MbcModel mbc;
  mbc.gmm = fit_gmm_covariate(d.X, K, cfg);
  Dataset dx;
  dx.y = Eigen::VectorXd::Zero(d.n());
  dx.X = d.X;
  dx.Z.resize(d.n(), 0);
  Responsibilities tau = estep(mbc.gmm, dx, cfg.floors);
  std::vector<std::vector<bool>> masks(static_cast<std::size_t>(K),
                                       std::vector<bool>(static_cast<std::size_t>(d.n()), false));
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    Eigen::Index k;
    tau.tau.row(i).maxCoeff(&k);
    masks[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] = true;
  }
  for (int k = 0; k < K; ++k) {
    Eigen::Index count = 0;
    for (bool b : masks[static_cast<std::size_t>(k)]) count += b ? 1 : 0;
    if (count < d.p() + 2)
      throw ComponentCollapseError("MBC cluster " + std::to_string(k + 1) + " has only " +
                                   std::to_string(count) + " points (need p+2)");
    mbc.clusters.push_back(fit_ols(d.subset(masks[static_cast<std::size_t>(k)])));
  }
  return mbc;
}

struct SelectionEntry {
  int K = 0;
  std::optional<FitResult> fit;  // absent when every restart failed
  std::string warning;
};

struct SelectionResult {
  int best_k = 0;
  std::vector<SelectionEntry> entries;

  const FitResult& best() const {
    for (const SelectionEntry& e : entries)
      if (e.K == best_k && e.fit) return *e.fit;
    throw FitFailedError("no successful fit in selection result");
  }
};

/// BIC sweep over K = 1..k_max; ties break toward smaller K.
inline SelectionResult select_k(const Dataset& d, int k_max, ModelKind kind,
                                const FitConfig& cfg) {
  if (k_max < 1) throw DataError("k_max must be >= 1");
  SelectionResult sel;
  double best_bic = -std::numeric_limits<double>::infinity();
  for (int K = 1; K <= k_max; ++K) {
    SelectionEntry e;
    e.K = K;
    FitConfig cfg_k = cfg;
    cfg_k.seed = derive_seed(cfg.seed, 0x5e1ec7, static_cast<std::uint64_t>(K));
    try {
      e.fit = fit(d, K, kind, cfg_k);
      if (e.fit->bic > best_bic) {
        best_bic = e.fit->bic;
        sel.best_k = K;
      }
    } catch (const DataError& ex) {
      e.warning = ex.what();
    } catch (const NumericalError& ex) {
      e.warning = ex.what();
    }
    sel.entries.push_back(std::move(e));
  }
  if (sel.best_k == 0) throw FitFailedError("model selection failed for every K");
  return sel;
}

}  // namespace mixreg

#endif  // MIXREG_EM_HPP
