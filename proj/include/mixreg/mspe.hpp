#ifndef MIXREG_MSPE_HPP
#define MIXREG_MSPE_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "mixreg/errors.hpp"
#include "mixreg/model.hpp"
#include "mixreg/parallel.hpp"
#include "mixreg/rng.hpp"

namespace mixreg {

struct MonteCarloEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Asymptotic excess MSPE terms on top of the irreducible error variance.
struct MspeReport {
  double sigma_bar = 0.0;  // sum_k pi_k sigma_k^2, exact
  MonteCarloEstimate excess_adaptive;
  MonteCarloEstimate excess_fixed;
  std::optional<MonteCarloEstimate> excess_biased;
  Eigen::Index mc_n = 0;
};

/// Hypothetical estimation limit for the biased-MLE expression.
struct BiasedLimit {
  Eigen::VectorXd pi_star;     // K
  Eigen::VectorXd alpha_star;  // K
  Eigen::MatrixXd beta_star;   // K x p
};

namespace detail {

inline constexpr Eigen::Index kMcChunks = 64;
inline constexpr std::uint64_t kTagMixtureDraws = 0x6d697864;    // shared by adaptive/fixed
inline constexpr std::uint64_t kTagComponentDraws = 0x636f6d70;  // shared by fixed/biased pairing

/// Chunked Monte-Carlo mean with a fixed partition, so results do not depend
/// on the thread count. per_draw consumes a fixed number of RNG values.
template <typename PerDraw>
MonteCarloEstimate mc_mean(Eigen::Index mc_n, std::uint64_t seed, std::uint64_t tag,
                           PerDraw per_draw, int n_threads = 0) {
  if (mc_n < 100) throw DataError("Monte-Carlo sample count must be at least 100");
  const Eigen::Index base = mc_n / kMcChunks;
  const Eigen::Index rem = mc_n % kMcChunks;
  std::vector<double> sums(static_cast<std::size_t>(kMcChunks), 0.0);
  std::vector<double> sumsqs(static_cast<std::size_t>(kMcChunks), 0.0);
  parallel_for(
      kMcChunks,
      [&](Eigen::Index c) {
        const Eigen::Index m = base + (c < rem ? 1 : 0);
        Rng rng(derive_seed(seed, tag, static_cast<std::uint64_t>(c)));
        double s = 0.0, ss = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
          const double v = per_draw(rng);
          s += v;
          ss += v * v;
        }
        sums[static_cast<std::size_t>(c)] = s;
        sumsqs[static_cast<std::size_t>(c)] = ss;
      },
      n_threads);
  double sum = 0.0, sumsq = 0.0;
  for (Eigen::Index c = 0; c < kMcChunks; ++c) {
    sum += sums[static_cast<std::size_t>(c)];
    sumsq += sumsqs[static_cast<std::size_t>(c)];
  }
  MonteCarloEstimate est;
  est.value = sum / static_cast<double>(mc_n);
  const double var =
      std::max(0.0, (sumsq - static_cast<double>(mc_n) * est.value * est.value) /
                        static_cast<double>(mc_n - 1));
  est.std_error = std::sqrt(var / static_cast<double>(mc_n));
  return est;
}

/// Per-component covariate samplers and log-densities, prepared once.
struct CovariateMixture {
  Eigen::VectorXd pi;
  Eigen::VectorXd log_pi;
  std::vector<GaussianDensity> comps;

  static CovariateMixture make(const MixtureModel& m, const FloorConfig& floors) {
    if (m.kind == ModelKind::OMR)
      throw DataError("MSPE expressions need the covariate distribution; OMR models carry none");
    if (m.q() > 0) throw DataError("MSPE expressions do not cover invariant covariates");
    CovariateMixture cm;
    cm.pi = m.pi;
    cm.log_pi = m.pi.array().log();
    cm.comps.reserve(static_cast<std::size_t>(m.K()));
    for (const auto& c : m.components)
      cm.comps.emplace_back(c.mu, c.Sigma, floors.cov_eigenvalue_rel);
    return cm;
  }

  int K() const { return static_cast<int>(pi.size()); }

  /// One draw from the covariate mixture: always consumes 1 + p RNG values.
  Eigen::VectorXd draw(Rng& rng) const {
    const int k = rng.categorical(pi);
    const auto& c = comps[static_cast<std::size_t>(k)];
    return c.mean() + c.chol_lower() * rng.normal_vector(c.mean().size());
  }

  /// Posterior membership weights E(delta | X = x).
  Eigen::VectorXd posterior(const Eigen::VectorXd& x) const {
    Eigen::VectorXd l(K());
    for (int k = 0; k < K(); ++k)
      l[k] = log_pi[k] + comps[static_cast<std::size_t>(k)].logpdf(x);
    return (l.array() - log_sum_exp(l)).exp();
  }
};

inline Eigen::VectorXd linear_predictors(const MixtureModel& m, const Eigen::VectorXd& x) {
  Eigen::VectorXd g(m.K());
  for (int k = 0; k < m.K(); ++k) {
    const auto& c = m.components[static_cast<std::size_t>(k)];
    g[k] = c.alpha + c.beta.dot(x);
  }
  return g;
}

inline void check_weights(const Eigen::VectorXd& w, int K) {
  if (w.size() != K) throw DataError("weight vector length must equal K");
  if ((w.array() < 0.0).any() || std::abs(w.sum() - 1.0) > 1e-8)
    throw DataError("weights must form a probability vector");
}

/// Fixed-weight excess in its per-component form: per draw, one X_k from each
/// component, value sum_k pi_k <beta_k - sum_l w_l beta_l, X_k>^2. Shares the
/// RNG stream layout (K * p normals per draw) with mspe_biased for pairing.
inline MonteCarloEstimate mspe_fixed_component_form(const MixtureModel& m,
                                                    const Eigen::VectorXd& weights,
                                                    Eigen::Index mc_n, std::uint64_t seed,
                                                    const FloorConfig& floors = FloorConfig{}) {
  CovariateMixture cm = CovariateMixture::make(m, floors);
  check_weights(weights, m.K());
  double abar = 0.0;
  Eigen::VectorXd bbar = Eigen::VectorXd::Zero(m.p());
  for (int k = 0; k < m.K(); ++k) {
    abar += weights[k] * m.components[static_cast<std::size_t>(k)].alpha;
    bbar += weights[k] * m.components[static_cast<std::size_t>(k)].beta;
  }
  return mc_mean(mc_n, seed, kTagComponentDraws, [&](Rng& rng) {
    double v = 0.0;
    for (int k = 0; k < m.K(); ++k) {
      const auto& c = m.components[static_cast<std::size_t>(k)];
      const Eigen::VectorXd xk =
          cm.comps[static_cast<std::size_t>(k)].mean() +
          cm.comps[static_cast<std::size_t>(k)].chol_lower() * rng.normal_vector(m.p());
      const double ip = (c.alpha - abar) + (c.beta - bbar).dot(xk);
      v += m.pi[k] * ip * ip;
    }
    return v;
  });
}

}  // namespace detail

/// Excess MSPE of the posterior-weighted predictor: the smallest achievable
/// excess. Intercepts are absorbed by treating the constant as a coordinate.
inline MonteCarloEstimate mspe_adaptive(const MixtureModel& m, Eigen::Index mc_n,
                                        std::uint64_t seed,
                                        const FloorConfig& floors = FloorConfig{}) {
  detail::CovariateMixture cm = detail::CovariateMixture::make(m, floors);
  return detail::mc_mean(mc_n, seed, detail::kTagMixtureDraws, [&](Rng& rng) {
    const Eigen::VectorXd x = cm.draw(rng);
    const Eigen::VectorXd w = cm.posterior(x);
    const Eigen::VectorXd g = detail::linear_predictors(m, x);
    const double gbar = w.dot(g);
    double v = 0.0;
    for (int k = 0; k < m.K(); ++k) v += w[k] * (g[k] - gbar) * (g[k] - gbar);
    return v;
  });
}

/// Excess MSPE when the predictor averages with fixed weights instead of the
/// posterior. Uses the same X stream as mspe_adaptive, so differences at equal
/// (mc_n, seed) are paired comparisons.
inline MonteCarloEstimate mspe_fixed(const MixtureModel& m, const Eigen::VectorXd& weights,
                                     Eigen::Index mc_n, std::uint64_t seed,
                                     const FloorConfig& floors = FloorConfig{}) {
  detail::CovariateMixture cm = detail::CovariateMixture::make(m, floors);
  detail::check_weights(weights, m.K());
  return detail::mc_mean(mc_n, seed, detail::kTagMixtureDraws, [&](Rng& rng) {
    const Eigen::VectorXd x = cm.draw(rng);
    const Eigen::VectorXd w = cm.posterior(x);
    const Eigen::VectorXd g = detail::linear_predictors(m, x);
    const double gfix = weights.dot(g);
    double v = 0.0;
    for (int k = 0; k < m.K(); ++k) v += w[k] * (g[k] - gfix) * (g[k] - gfix);
    return v;
  });
}

/// Excess MSPE under a biased estimation limit (pi*, alpha*, beta*): draws X_k
/// from every component and averages sum_k pi_k <.,X_k>^2.
inline MonteCarloEstimate mspe_biased(const MixtureModel& m, const BiasedLimit& limit,
                                      Eigen::Index mc_n, std::uint64_t seed,
                                      const FloorConfig& floors = FloorConfig{}) {
  detail::CovariateMixture cm = detail::CovariateMixture::make(m, floors);
  detail::check_weights(limit.pi_star, m.K());
  if (limit.alpha_star.size() != m.K() || limit.beta_star.rows() != m.K() ||
      limit.beta_star.cols() != m.p())
    throw DataError("biased limit dimensions do not match the model");
  const double abar = limit.pi_star.dot(limit.alpha_star);
  const Eigen::VectorXd bbar = limit.beta_star.transpose() * limit.pi_star;
  return detail::mc_mean(mc_n, seed, detail::kTagComponentDraws, [&](Rng& rng) {
    double v = 0.0;
    for (int k = 0; k < m.K(); ++k) {
      const auto& c = m.components[static_cast<std::size_t>(k)];
      const Eigen::VectorXd xk =
          cm.comps[static_cast<std::size_t>(k)].mean() +
          cm.comps[static_cast<std::size_t>(k)].chol_lower() * rng.normal_vector(m.p());
      const double ip = (c.alpha - abar) + (c.beta - bbar).dot(xk);
      v += m.pi[k] * ip * ip;
    }
    return v;
  });
}

/// E(Xbar Xbar^T) for one component, Xbar = (1, X).
inline Eigen::MatrixXd augmented_second_moment(const Component& c) {
  const Eigen::Index p = c.mu.size();
  Eigen::MatrixXd g(p + 1, p + 1);
  g(0, 0) = 1.0;
  g.block(0, 1, 1, p) = c.mu.transpose();
  g.block(1, 0, p, 1) = c.mu;
  g.block(1, 1, p, p) = c.Sigma + c.mu * c.mu.transpose();
  return g;
}

/// Closed-form difference between the biased and fixed excess terms under a
/// common second moment Gamma: s^T Gamma s with
/// s = sum_l (pi_l - pi*_l) beta_l + sum_l pi*_l (beta_l - beta*_l), on
/// intercept-augmented slopes. Computed as a sum of squares via the Cholesky
/// factor, so the result is nonnegative by construction.
inline double dominance_quadratic_form(const MixtureModel& m, const BiasedLimit& limit,
                                       const Eigen::MatrixXd& gamma) {
  const Eigen::Index pa = m.p() + 1;
  if (gamma.rows() != pa || gamma.cols() != pa)
    throw DataError("second-moment matrix must cover the intercept-augmented covariate");
  Eigen::VectorXd s = Eigen::VectorXd::Zero(pa);
  for (int l = 0; l < m.K(); ++l) {
    const auto& c = m.components[static_cast<std::size_t>(l)];
    Eigen::VectorXd bl(pa), bsl(pa);
    bl << c.alpha, c.beta;
    bsl << limit.alpha_star[l], limit.beta_star.row(l).transpose();
    s += (m.pi[l] - limit.pi_star[l]) * bl + limit.pi_star[l] * (bl - bsl);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(((gamma + gamma.transpose()) / 2.0).eval());
  if (llt.info() != Eigen::Success)
    throw NumericalError("second-moment matrix is not positive definite");
  const Eigen::VectorXd w = llt.matrixL().transpose() * s;
  return w.squaredNorm();
}

/// Deterministic perturbation used by verify_dominance for the biased case.
inline BiasedLimit default_biased_limit(const MixtureModel& m) {
  BiasedLimit limit;
  const int K = m.K();
  limit.pi_star = 0.85 * m.pi.array() + 0.15 / K;
  limit.alpha_star.resize(K);
  limit.beta_star.resize(K, m.p());
  const double step = 0.3 / std::sqrt(static_cast<double>(m.p() + 1));
  for (int k = 0; k < K; ++k) {
    const double sgn = (k % 2 == 0) ? 1.0 : -1.0;
    const auto& c = m.components[static_cast<std::size_t>(k)];
    limit.alpha_star[k] = c.alpha + sgn * step;
    limit.beta_star.row(k) = (c.beta.array() + sgn * step).transpose();
  }
  return limit;
}

struct DominanceReport {
  MonteCarloEstimate adaptive;
  MonteCarloEstimate fixed;
  double fixed_minus_adaptive = 0.0;
  double fixed_adaptive_combined_se = 0.0;
  bool fixed_ge_adaptive = false;

  bool equal_second_moments = false;
  std::optional<MonteCarloEstimate> fixed_component_form;
  std::optional<MonteCarloEstimate> biased;
  std::optional<bool> biased_ge_fixed;

  double quadratic_form = 0.0;
  bool quadratic_form_nonnegative = false;
  Eigen::Index mc_n = 0;
};

/// Checks the dominance chain: fixed >= adaptive always; under equal component
/// second moments also biased >= fixed, with the closed-form quadratic-form
/// value reported alongside the paired Monte-Carlo difference.
inline DominanceReport verify_dominance(const MixtureModel& m, Eigen::Index mc_n,
                                        std::uint64_t seed,
                                        const FloorConfig& floors = FloorConfig{}) {
  DominanceReport rep;
  rep.mc_n = mc_n;
  rep.adaptive = mspe_adaptive(m, mc_n, seed, floors);
  rep.fixed = mspe_fixed(m, m.pi, mc_n, seed, floors);
  rep.fixed_minus_adaptive = rep.fixed.value - rep.adaptive.value;
  rep.fixed_adaptive_combined_se =
      std::hypot(rep.fixed.std_error, rep.adaptive.std_error);
  rep.fixed_ge_adaptive =
      rep.fixed_minus_adaptive >= -3.0 * rep.fixed_adaptive_combined_se;

  std::vector<Eigen::MatrixXd> moments;
  moments.reserve(static_cast<std::size_t>(m.K()));
  for (const auto& c : m.components) moments.push_back(augmented_second_moment(c));
  rep.equal_second_moments = true;
  for (int k = 1; k < m.K(); ++k) {
    const double diff = (moments[static_cast<std::size_t>(k)] - moments[0]).cwiseAbs().maxCoeff();
    if (diff > 1e-10 * (1.0 + moments[0].cwiseAbs().maxCoeff())) {
      rep.equal_second_moments = false;
      break;
    }
  }

  const BiasedLimit limit = default_biased_limit(m);
  Eigen::MatrixXd gamma;
  if (rep.equal_second_moments) {
    gamma = moments[0];
    rep.fixed_component_form =
        detail::mspe_fixed_component_form(m, m.pi, mc_n, seed, floors);
    rep.biased = mspe_biased(m, limit, mc_n, seed, floors);
    const double se = std::hypot(rep.biased->std_error, rep.fixed_component_form->std_error);
    rep.biased_ge_fixed = rep.biased->value >= rep.fixed_component_form->value - 3.0 * se;
  } else {
    gamma = Eigen::MatrixXd::Zero(m.p() + 1, m.p() + 1);
    for (int k = 0; k < m.K(); ++k) gamma += m.pi[k] * moments[static_cast<std::size_t>(k)];
  }
  rep.quadratic_form = dominance_quadratic_form(m, limit, gamma);
  rep.quadratic_form_nonnegative = rep.quadratic_form >= 0.0;
  return rep;
}

inline MspeReport mspe_report(const MixtureModel& m, Eigen::Index mc_n, std::uint64_t seed,
                              const std::optional<BiasedLimit>& limit = std::nullopt,
                              const FloorConfig& floors = FloorConfig{}) {
  MspeReport rep;
  rep.mc_n = mc_n;
  rep.sigma_bar = 0.0;
  for (int k = 0; k < m.K(); ++k)
    rep.sigma_bar += m.pi[k] * m.components[static_cast<std::size_t>(k)].sigma2;
  rep.excess_adaptive = mspe_adaptive(m, mc_n, seed, floors);
  rep.excess_fixed = mspe_fixed(m, m.pi, mc_n, seed, floors);
  if (limit) rep.excess_biased = mspe_biased(m, *limit, mc_n, seed, floors);
  return rep;
}

}  // namespace mixreg

#endif  // MIXREG_MSPE_HPP
