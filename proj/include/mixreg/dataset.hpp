#ifndef MIXREG_DATASET_HPP
#define MIXREG_DATASET_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "mixreg/errors.hpp"

namespace mixreg {

/// Paired observations (y_i, x_i), optional invariant covariates z_i, and
/// optional true memberships used for scoring only.
struct Dataset {
  Eigen::VectorXd y;              // n
  Eigen::MatrixXd X;              // n x p
  Eigen::MatrixXd Z;              // n x q, q may be 0
  std::optional<std::vector<int>> truth;  // 0-based component labels

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return X.cols(); }
  Eigen::Index q() const { return Z.cols(); }

  void validate() const {
    if (y.size() < 1) throw DataError("dataset is empty");
    if (X.rows() != y.size())
      throw DataError("covariate row count " + std::to_string(X.rows()) +
                      " does not match response length " + std::to_string(y.size()));
    if (Z.size() > 0 && Z.rows() != y.size())
      throw DataError("invariant-covariate row count does not match response length");
    if (truth && static_cast<Eigen::Index>(truth->size()) != y.size())
      throw DataError("truth label count does not match response length");
    if (!y.allFinite() || !X.allFinite() || (Z.size() > 0 && !Z.allFinite()))
      throw DataError("dataset contains non-finite entries");
  }

  /// Rows selected by a keep-mask, truth carried along.
  Dataset subset(const std::vector<bool>& keep) const {
    Eigen::Index m = 0;
    for (bool b : keep) m += b ? 1 : 0;
    Dataset out;
    out.y.resize(m);
    out.X.resize(m, X.cols());
    out.Z.resize(m, Z.cols());
    if (truth) out.truth.emplace();
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < n(); ++i) {
      if (!keep[static_cast<std::size_t>(i)]) continue;
      out.y[r] = y[i];
      out.X.row(r) = X.row(i);
      if (Z.cols() > 0) out.Z.row(r) = Z.row(i);
      if (truth) out.truth->push_back((*truth)[static_cast<std::size_t>(i)]);
      ++r;
    }
    return out;
  }

  /// All rows except `i` (leave-one-out folds).
  Dataset without_row(Eigen::Index i) const {
    std::vector<bool> keep(static_cast<std::size_t>(n()), true);
    keep[static_cast<std::size_t>(i)] = false;
    return subset(keep);
  }
};

}  // namespace mixreg

#endif  // MIXREG_DATASET_HPP
