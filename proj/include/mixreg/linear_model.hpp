#ifndef MIXREG_LINEAR_MODEL_HPP
#define MIXREG_LINEAR_MODEL_HPP

#include <Eigen/Dense>

#include "mixreg/dataset.hpp"
#include "mixreg/errors.hpp"

namespace mixreg {

/// Single linear regression y ~ 1 + z + x with Gaussian errors.
struct LinearModel {
  double alpha = 0.0;
  Eigen::VectorXd zeta;  // length q
  Eigen::VectorXd beta;  // length p
  double sigma2 = 0.0;   // ML residual variance

  double predict(const Eigen::VectorXd& x, const Eigen::VectorXd& z = Eigen::VectorXd()) const {
    double v = alpha + beta.dot(x);
    if (zeta.size() > 0) v += zeta.dot(z);
    return v;
  }
};

/// Design matrix [1 Z X], the regression layout used throughout.
inline Eigen::MatrixXd augmented_design(const Dataset& d) {
  Eigen::MatrixXd D(d.n(), 1 + d.q() + d.p());
  D.col(0).setOnes();
  if (d.q() > 0) D.middleCols(1, d.q()) = d.Z;
  D.rightCols(d.p()) = d.X;
  return D;
}

/// Solves the weighted normal equations (D^T W D) b = D^T W y.
/// A rank-deficient system falls back to a ridge of 1e-10 * trace on the
/// normal matrix; if that is still singular a SingularDesignError is raised.
inline Eigen::VectorXd solve_weighted_normal_equations(const Eigen::MatrixXd& D,
                                                       const Eigen::VectorXd& w,
                                                       const Eigen::VectorXd& y) {
  const Eigen::MatrixXd Dw = w.asDiagonal() * D;
  Eigen::MatrixXd A = D.transpose() * Dw;
  Eigen::VectorXd b = Dw.transpose() * y;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success) throw SingularDesignError("normal-matrix eigensolve failed");
  const Eigen::VectorXd& lam = es.eigenvalues();
  const double lmax = lam.maxCoeff();
  if (lam.minCoeff() > 1e-12 * lmax && lmax > 0.0) {
    Eigen::VectorXd t = es.eigenvectors().transpose() * b;
    t.array() /= lam.array();
    return es.eigenvectors() * t;
  }
  const double ridge = 1e-10 * A.trace();
  if (!(ridge > 0.0)) throw SingularDesignError("weighted design is singular (zero normal matrix)");
  Eigen::VectorXd lam_r = lam.array() + ridge;
  if (!(lam_r.minCoeff() > 0.0))
    throw SingularDesignError("weighted design is singular even after ridge regularization");
  Eigen::VectorXd t = es.eigenvectors().transpose() * b;
  t.array() /= lam_r.array();
  return es.eigenvectors() * t;
}

/// Ordinary least squares of y on (1, z, x); sigma2 is the ML residual variance.
inline LinearModel fit_ols(const Dataset& d) {
  d.validate();
  Eigen::MatrixXd D = augmented_design(d);
  if (d.n() < D.cols()) throw SingularDesignError("fewer observations than regression parameters");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(D);
  if (qr.rank() < D.cols()) throw SingularDesignError("regression design is rank deficient");
  Eigen::VectorXd coef = qr.solve(d.y);
  LinearModel lm;
  lm.alpha = coef[0];
  lm.zeta = coef.segment(1, d.q());
  lm.beta = coef.tail(d.p());
  lm.sigma2 = (d.y - D * coef).squaredNorm() / static_cast<double>(d.n());
  return lm;
}

}  // namespace mixreg

#endif  // MIXREG_LINEAR_MODEL_HPP
