#ifndef MIXREG_PREDICT_HPP
#define MIXREG_PREDICT_HPP

#include <Eigen/Dense>
#include <vector>

#include "mixreg/em.hpp"
#include "mixreg/model.hpp"

namespace mixreg {

struct PredictionResult {
  double yhat = 0.0;
  Eigen::VectorXd posteriors;  // length K, sums to 1
  int top_component = 0;       // 0-based
  double top_posterior = 0.0;
};

/// Membership posteriors from a new covariate value. JMR weights come from the
/// component covariate densities; OMR carries no covariate law and returns pi.
inline Eigen::VectorXd posterior_weights(const MixtureModel& m, const Eigen::VectorXd& x,
                                         const FloorConfig& floors = FloorConfig{}) {
  if (m.kind == ModelKind::OMR) return m.pi;
  if (x.size() != m.p()) throw DataError("covariate dimension mismatch");
  Eigen::VectorXd l(m.K());
  for (int k = 0; k < m.K(); ++k) {
    const Component& c = m.components[static_cast<std::size_t>(k)];
    l[k] = std::log(m.pi[k]) + mvn_logpdf(x, c.mu, c.Sigma, floors.cov_eigenvalue_rel);
  }
  const double lse = log_sum_exp(l);
  return (l.array() - lse).exp();
}

/// Empirical best predictor: posterior-weighted average of the component
/// linear predictors.
inline PredictionResult predict(const MixtureModel& m, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& z = Eigen::VectorXd(),
                                const FloorConfig& floors = FloorConfig{}) {
  if (m.kind == ModelKind::GMM) throw DataError("GMM models carry no regression to predict with");
  if (x.size() != m.p()) throw DataError("covariate dimension mismatch");
  if (z.size() != m.q()) throw DataError("invariant-covariate dimension mismatch");
  PredictionResult r;
  r.posteriors = posterior_weights(m, x, floors);
  r.yhat = 0.0;
  for (int k = 0; k < m.K(); ++k)
    r.yhat += r.posteriors[k] * m.components[static_cast<std::size_t>(k)].linear_predictor(x, z);
  Eigen::Index top;
  r.top_posterior = r.posteriors.maxCoeff(&top);
  r.top_component = static_cast<int>(top);
  return r;
}

/// Hard clustering of an observed pair: argmax_k pi_k f_k(y, x); ties break
/// toward the smaller index. Returns a 0-based component index.
inline int assign_cluster(const MixtureModel& m, const Eigen::VectorXd& x, double y,
                          const Eigen::VectorXd& z = Eigen::VectorXd(),
                          const FloorConfig& floors = FloorConfig{}) {
  if (x.size() != m.p()) throw DataError("covariate dimension mismatch");
  if (z.size() != m.q()) throw DataError("invariant-covariate dimension mismatch");
  PreparedMixture pm = PreparedMixture::make(m, floors);
  Eigen::VectorXd l = pm.weighted_logdensities(y, x, z);
  int best = 0;
  for (Eigen::Index k = 1; k < l.size(); ++k)
    if (l[k] > l[best]) best = static_cast<int>(k);
  return best;
}

/// MBC prediction: cluster regressions averaged with the covariate-mixture
/// posteriors of the new observation.
inline double predict_mbc(const MbcModel& mbc, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& z = Eigen::VectorXd(),
                          const FloorConfig& floors = FloorConfig{}) {
  Eigen::VectorXd w = posterior_weights(mbc.gmm, x, floors);
  double yhat = 0.0;
  for (Eigen::Index k = 0; k < w.size(); ++k)
    yhat += w[k] * mbc.clusters[static_cast<std::size_t>(k)].predict(x, z);
  return yhat;
}

/// MBC clustering: posterior argmax under the covariate mixture.
inline int assign_cluster_mbc(const MbcModel& mbc, const Eigen::VectorXd& x,
                              const FloorConfig& floors = FloorConfig{}) {
  Eigen::VectorXd w = posterior_weights(mbc.gmm, x, floors);
  Eigen::Index top;
  w.maxCoeff(&top);
  return static_cast<int>(top);
}

/// Rows whose largest posterior reaches the threshold t in [0.5, 1).
inline std::vector<bool> threshold_filter(const Eigen::MatrixXd& posteriors, double t) {
  if (!(t >= 0.5 && t < 1.0)) throw DataError("threshold must lie in [0.5, 1)");
  std::vector<bool> mask(static_cast<std::size_t>(posteriors.rows()));
  for (Eigen::Index i = 0; i < posteriors.rows(); ++i)
    mask[static_cast<std::size_t>(i)] = posteriors.row(i).maxCoeff() >= t;
  return mask;
}

}  // namespace mixreg

#endif  // MIXREG_PREDICT_HPP
