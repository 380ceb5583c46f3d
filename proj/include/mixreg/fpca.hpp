#ifndef MIXREG_FPCA_HPP
#define MIXREG_FPCA_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "mixreg/bspline.hpp"
#include "mixreg/dataset.hpp"
#include "mixreg/errors.hpp"

namespace mixreg {

/// FPCA output on a quadrature grid: mean curve, leading eigenvalues and
/// eigenfunctions, and the explained-variance bookkeeping.
struct EigenSystem {
  Eigen::VectorXd grid;
  Eigen::VectorXd qweights;
  Eigen::VectorXd mean;            // grid_size
  Eigen::VectorXd eigenvalues;     // M, descending, nonnegative
  Eigen::MatrixXd eigenfunctions;  // grid_size x M
  Eigen::VectorXd cum_var;         // cumulative variance fraction at 1..M
  double total_variance = 0.0;     // sum of all positive eigenvalues

  Eigen::Index M() const { return eigenvalues.size(); }

  /// Quadrature inner product on this system's grid.
  double inner(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const {
    return (f.array() * g.array() * qweights.array()).sum();
  }

  void validate() const {
    if (M() < 1) throw DataError("eigen system is empty");
    if (eigenfunctions.rows() != grid.size() || eigenfunctions.cols() != M())
      throw DataError("eigenfunction matrix has wrong shape");
    for (Eigen::Index j = 0; j < M(); ++j) {
      if (eigenvalues[j] < 0.0) throw NumericalError("negative eigenvalue");
      if (j > 0 && eigenvalues[j] > eigenvalues[j - 1])
        throw NumericalError("eigenvalues not sorted descending");
      for (Eigen::Index l = 0; l <= j; ++l) {
        const double ip = inner(eigenfunctions.col(j), eigenfunctions.col(l));
        const double want = (j == l) ? 1.0 : 0.0;
        if (std::abs(ip - want) > 1e-8)
          throw NumericalError("eigenfunctions fail quadrature orthonormality");
      }
    }
  }
};

/// Estimated principal component scores; ids keep subject order explicit for
/// later design assembly.
struct ScoreDesign {
  std::vector<std::string> ids;
  Eigen::MatrixXd scores;  // n x M
};

/// One scalar per subject, carried with ids so misaligned joins are caught.
struct SubjectValues {
  std::vector<std::string> ids;
  Eigen::VectorXd values;
};

inline SubjectValues endpoint_subject_values(const SmoothedCurves& s) {
  return SubjectValues{s.ids, s.endpoint_values()};
}

/// Dense-grid FPCA of smoothed curves truncated at M components. The
/// covariance uses divisor n; eigenpairs come from the symmetrized
/// W^(1/2) Gamma W^(1/2) problem and are mapped back by W^(-1/2).
inline EigenSystem fpca(const SmoothedCurves& s, Eigen::Index M) {
  s.validate();
  const Eigen::Index n = s.n();
  if (M < 1) throw DataError("truncation level must be at least 1");
  if (n < M + 1) throw DataError("need at least M+1 curves for FPCA");

  const Eigen::MatrixXd V = s.values();  // n x G
  EigenSystem e;
  e.grid = s.grid;
  e.qweights = s.qweights;
  e.mean = V.colwise().mean();

  const Eigen::MatrixXd C = V.rowwise() - e.mean.transpose();
  const Eigen::VectorXd wsqrt = e.qweights.array().sqrt();
  // Gamma_w = W^(1/2) Gamma W^(1/2) with Gamma the divisor-n sample covariance.
  Eigen::MatrixXd K = C * wsqrt.asDiagonal();
  Eigen::MatrixXd gw = K.transpose() * K / static_cast<double>(n);
  gw = ((gw + gw.transpose()) / 2.0).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gw);
  if (es.info() != Eigen::Success) throw NumericalError("FPCA eigendecomposition failed");
  const Eigen::VectorXd ev = es.eigenvalues().reverse();  // descending
  const Eigen::Index g = e.grid.size();

  double total = 0.0;
  for (Eigen::Index j = 0; j < g; ++j) total += std::max(ev[j], 0.0);
  const double rank_tol = 1e-12 * std::max(ev[0], 0.0);
  Eigen::Index rank = 0;
  while (rank < g && ev[rank] > rank_tol) ++rank;
  if (M > rank)
    throw NumericalError("requested " + std::to_string(M) + " components but numerical rank is " +
                         std::to_string(rank));

  e.eigenvalues = ev.head(M).cwiseMax(0.0);
  e.eigenfunctions.resize(g, M);
  e.cum_var.resize(M);
  e.total_variance = total;
  double running = 0.0;
  for (Eigen::Index j = 0; j < M; ++j) {
    Eigen::VectorXd psi = es.eigenvectors().col(g - 1 - j).array() / wsqrt.array();
    // Deterministic sign: nonnegative quadrature inner product with 1; if that
    // vanishes, first nonzero grid value positive.
    const double s1 = (psi.array() * e.qweights.array()).sum();
    double sign = 1.0;
    if (s1 < -1e-10) {
      sign = -1.0;
    } else if (s1 <= 1e-10) {
      for (Eigen::Index i = 0; i < g; ++i)
        if (std::abs(psi[i]) > 1e-12) {
          if (psi[i] < 0.0) sign = -1.0;
          break;
        }
    }
    e.eigenfunctions.col(j) = sign * psi;
    running += e.eigenvalues[j];
    e.cum_var[j] = total > 0.0 ? running / total : 1.0;
  }
  return e;
}

/// Principal component scores by quadrature projection of centered curves.
inline ScoreDesign project_scores(const SmoothedCurves& s, const EigenSystem& e) {
  if (s.grid.size() != e.grid.size() ||
      (s.grid - e.grid).cwiseAbs().maxCoeff() > 1e-12)
    throw DataError("curve grid does not match the eigen system grid");
  const Eigen::MatrixXd C = s.values().rowwise() - e.mean.transpose();
  ScoreDesign sd;
  sd.ids = s.ids;
  sd.scores = C * e.qweights.asDiagonal() * e.eigenfunctions;
  return sd;
}

/// Slope curve from basis coefficients: sum_j b_j psi_j on the grid.
inline Eigen::VectorXd reconstruct_slope(const Eigen::VectorXd& b, const EigenSystem& e) {
  if (b.size() != e.M()) throw DataError("coefficient length does not match truncation level");
  return e.eigenfunctions * b;
}

/// Build a regression dataset from scores (heterogeneous covariates X) plus
/// optional endpoint and invariant columns (Z). All inputs must list subjects
/// in the same order.
inline Dataset assemble_design(const ScoreDesign& sd, const std::optional<SubjectValues>& endpoint,
                               const std::vector<SubjectValues>& invariants,
                               const SubjectValues& y) {
  const Eigen::Index n = sd.scores.rows();
  auto check_ids = [&](const std::vector<std::string>& ids, const char* what) {
    if (ids != sd.ids)
      throw DataError(std::string("subject ids of ") + what + " do not match the score design");
  };
  check_ids(y.ids, "the response");
  if (y.values.size() != n) throw DataError("response length mismatch");
  Eigen::Index q = invariants.size();
  if (endpoint) {
    check_ids(endpoint->ids, "the endpoint values");
    if (endpoint->values.size() != n) throw DataError("endpoint length mismatch");
    ++q;
  }
  for (const auto& col : invariants) {
    check_ids(col.ids, "an invariant column");
    if (col.values.size() != n) throw DataError("invariant column length mismatch");
  }

  Dataset d;
  d.y = y.values;
  d.X = sd.scores;
  d.Z.resize(n, q);
  Eigen::Index c = 0;
  if (endpoint) d.Z.col(c++) = endpoint->values;
  for (const auto& col : invariants) d.Z.col(c++) = col.values;
  d.validate();
  return d;
}

}  // namespace mixreg

#endif  // MIXREG_FPCA_HPP
