#ifndef MIXREG_BENCHMARK_HPP
#define MIXREG_BENCHMARK_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mixreg/bspline.hpp"
#include "mixreg/csv.hpp"
#include "mixreg/em.hpp"
#include "mixreg/fpca.hpp"
#include "mixreg/parallel.hpp"
#include "mixreg/predict.hpp"
#include "mixreg/scenarios.hpp"

namespace mixreg {

/// Fraction of disagreements minimized over all K! label permutations.
inline double misclassification_rate(const std::vector<int>& assigned,
                                     const std::vector<int>& truth, int K) {
  if (assigned.size() != truth.size() || assigned.empty())
    throw DataError("label vectors must be nonempty and of equal length");
  if (K < 1 || K > 8) throw DataError("misclassification rate supports 1 <= K <= 8");
  Eigen::MatrixXd agree = Eigen::MatrixXd::Zero(K, K);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= K || assigned[i] < 0 || assigned[i] >= K)
      throw DataError("label out of range");
    agree(truth[i], assigned[i]) += 1.0;
  }
  std::vector<int> perm(static_cast<std::size_t>(K));
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    double hits = 0.0;
    for (int k = 0; k < K; ++k) hits += agree(k, perm[static_cast<std::size_t>(k)]);
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return 1.0 - best / static_cast<double>(truth.size());
}

namespace detail {

/// perm[k] = index of the estimated component matched to true component k,
/// minimizing the summed squared slope error.
inline std::vector<int> align_by_slopes(const std::vector<Eigen::VectorXd>& est,
                                        const std::vector<Eigen::VectorXd>& truth) {
  const int K = static_cast<int>(truth.size());
  std::vector<int> perm(static_cast<std::size_t>(K)), best;
  std::iota(perm.begin(), perm.end(), 0);
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (int k = 0; k < K; ++k)
      cost += (est[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])] -
               truth[static_cast<std::size_t>(k)])
                  .squaredNorm();
    if (cost < best_cost) {
      best_cost = cost;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

constexpr int kOls = 0, kOmr = 1, kJmr = 2, kMbc = 3;
inline const char* method_name(int m) {
  static const char* names[] = {"OLS", "OMR", "JMR", "MBC"};
  return names[m];
}

struct ReplicateOutcome {
  bool ok = false;
  std::string note;
  std::array<double, 4> mspe{};
  std::array<double, 4> mcr{};
  // squared errors of pi1, beta12, beta22 after label alignment
  std::array<std::array<double, 3>, 4> sqerr{};
};

/// Fits all four methods on one scenario draw and scores them. Any numerical
/// failure marks the whole replicate as dropped.
inline ReplicateOutcome bench_replicate(const ScenarioData& data, const FitConfig& cfg0,
                                        std::uint64_t rep_seed) {
  ReplicateOutcome r;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.mspe.fill(nan);
  r.mcr.fill(nan);
  for (auto& a : r.sqerr) a.fill(nan);

  const MixtureModel& truth = data.scenario.truth;
  const Dataset& train = data.train;
  const Dataset& test = data.test;
  if (!train.truth) throw DataError("benchmark replicate needs truth labels");

  try {
    LinearModel ols = fit_ols(train);

    FitConfig cfg = cfg0;
    cfg.seed = derive_seed(rep_seed, 0x6f6d72);
    FitResult omr = fit(train, truth.K(), ModelKind::OMR, cfg);
    cfg.seed = derive_seed(rep_seed, 0x6a6d72);
    FitResult jmr = fit(train, truth.K(), ModelKind::JMR, cfg);
    cfg.seed = derive_seed(rep_seed, 0x6d6263);
    MbcModel mbc = fit_mbc(train, truth.K(), cfg);

    auto mean_sq = [&](auto&& yhat) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < test.n(); ++i) {
        const double e = test.y[i] - yhat(i);
        s += e * e;
      }
      return s / static_cast<double>(test.n());
    };
    r.mspe[kOls] = mean_sq([&](Eigen::Index i) { return ols.predict(test.X.row(i).transpose()); });
    r.mspe[kOmr] =
        mean_sq([&](Eigen::Index i) { return predict(omr.model, test.X.row(i).transpose()).yhat; });
    r.mspe[kJmr] =
        mean_sq([&](Eigen::Index i) { return predict(jmr.model, test.X.row(i).transpose()).yhat; });
    r.mspe[kMbc] = mean_sq([&](Eigen::Index i) { return predict_mbc(mbc, test.X.row(i).transpose()); });

    const std::vector<int>& labels = *train.truth;
    auto mcr_of = [&](auto&& assign) {
      std::vector<int> a(static_cast<std::size_t>(train.n()));
      for (Eigen::Index i = 0; i < train.n(); ++i)
        a[static_cast<std::size_t>(i)] = assign(i);
      return misclassification_rate(a, labels, truth.K());
    };
    r.mcr[kOmr] =
        mcr_of([&](Eigen::Index i) { return assign_cluster(omr.model, train.X.row(i).transpose(), train.y[i]); });
    r.mcr[kJmr] =
        mcr_of([&](Eigen::Index i) { return assign_cluster(jmr.model, train.X.row(i).transpose(), train.y[i]); });
    r.mcr[kMbc] = mcr_of([&](Eigen::Index i) { return assign_cluster_mbc(mbc, train.X.row(i).transpose()); });

    std::vector<Eigen::VectorXd> true_betas;
    for (const auto& c : truth.components) true_betas.push_back(c.beta);
    auto param_errs = [&](int slot, const Eigen::VectorXd& pi,
                          const std::vector<Eigen::VectorXd>& betas) {
      const std::vector<int> perm = align_by_slopes(betas, true_betas);
      const auto p0 = static_cast<std::size_t>(perm[0]);
      const auto p1 = static_cast<std::size_t>(perm[1]);
      const double e_pi = pi[static_cast<Eigen::Index>(p0)] - truth.pi[0];
      const double e_b12 = betas[p0][1] - true_betas[0][1];
      const double e_b22 = betas[p1][1] - true_betas[1][1];
      r.sqerr[static_cast<std::size_t>(slot)] = {e_pi * e_pi, e_b12 * e_b12, e_b22 * e_b22};
    };
    auto model_betas = [](const MixtureModel& m) {
      std::vector<Eigen::VectorXd> b;
      for (const auto& c : m.components) b.push_back(c.beta);
      return b;
    };
    param_errs(kOmr, omr.model.pi, model_betas(omr.model));
    param_errs(kJmr, jmr.model.pi, model_betas(jmr.model));
    std::vector<Eigen::VectorXd> mbc_betas;
    for (const auto& lm : mbc.clusters) mbc_betas.push_back(lm.beta);
    param_errs(kMbc, mbc.gmm.pi, mbc_betas);

    r.ok = true;
  } catch (const NumericalError& e) {
    r.note = e.what();
  }
  return r;
}

}  // namespace detail

struct BenchmarkCell {
  std::string method;
  double mspe = std::numeric_limits<double>::quiet_NaN();
  double mcr = std::numeric_limits<double>::quiet_NaN();
  double rmse_pi1 = std::numeric_limits<double>::quiet_NaN();
  double rmse_beta12 = std::numeric_limits<double>::quiet_NaN();
  double rmse_beta22 = std::numeric_limits<double>::quiet_NaN();
};

struct BenchmarkTable {
  int scenario_id = 0;
  Eigen::Index n = 0;
  Eigen::Index replicates = 0;  // requested
  Eigen::Index failures = 0;    // dropped
  std::uint64_t seed = 0;
  std::vector<BenchmarkCell> cells;  // OLS, OMR, JMR, MBC
};

/// Repeated scenario comparison of the four methods. Replicates run in
/// parallel with per-replicate derived seeds; aggregation order is fixed by
/// replicate index, so results do not depend on the thread count.
inline std::vector<BenchmarkTable> run_benchmark(const std::vector<int>& ids,
                                                 const std::vector<Eigen::Index>& ns,
                                                 Eigen::Index reps, std::uint64_t seed,
                                                 const FitConfig& cfg0 = FitConfig{},
                                                 int n_threads = 0) {
  if (reps < 1) throw DataError("need at least one replicate");
  std::vector<BenchmarkTable> tables;
  for (int id : ids) {
    for (Eigen::Index n : ns) {
      std::vector<detail::ReplicateOutcome> outs(static_cast<std::size_t>(reps));
      parallel_for(
          reps,
          [&](Eigen::Index rep) {
            const std::uint64_t rep_seed =
                derive_seed(seed, static_cast<std::uint64_t>(id),
                            static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep));
            const ScenarioData data = make_scenario(id, n, rep_seed);
            outs[static_cast<std::size_t>(rep)] = detail::bench_replicate(data, cfg0, rep_seed);
          },
          n_threads);

      BenchmarkTable table;
      table.scenario_id = id;
      table.n = n;
      table.replicates = reps;
      table.seed = seed;
      for (const auto& o : outs)
        if (!o.ok) ++table.failures;
      if (20 * table.failures > reps)
        throw FitFailedError("scenario " + std::to_string(id) + " n " + std::to_string(n) + ": " +
                             std::to_string(table.failures) + " of " + std::to_string(reps) +
                             " replicates failed (over 5%)");
      const double ok_n = static_cast<double>(reps - table.failures);
      for (int m = 0; m < 4; ++m) {
        BenchmarkCell cell;
        cell.method = detail::method_name(m);
        double s_mspe = 0.0, s_mcr = 0.0;
        std::array<double, 3> s_sq{};
        for (const auto& o : outs) {
          if (!o.ok) continue;
          s_mspe += o.mspe[static_cast<std::size_t>(m)];
          s_mcr += o.mcr[static_cast<std::size_t>(m)];
          for (int j = 0; j < 3; ++j)
            s_sq[static_cast<std::size_t>(j)] +=
                o.sqerr[static_cast<std::size_t>(m)][static_cast<std::size_t>(j)];
        }
        cell.mspe = s_mspe / ok_n;
        if (m != detail::kOls) {
          cell.mcr = s_mcr / ok_n;
          cell.rmse_pi1 = std::sqrt(s_sq[0] / ok_n);
          cell.rmse_beta12 = std::sqrt(s_sq[1] / ok_n);
          cell.rmse_beta22 = std::sqrt(s_sq[2] / ok_n);
        }
        table.cells.push_back(std::move(cell));
      }
      tables.push_back(std::move(table));
    }
  }
  return tables;
}

/// Long-format CSV with columns scenario,n,method,metric,value,replicates,seed.
inline std::string benchmark_csv(const std::vector<BenchmarkTable>& tables) {
  std::string out = "scenario,n,method,metric,value,replicates,seed\n";
  for (const auto& t : tables) {
    auto row = [&](const std::string& method, const char* metric, double v) {
      if (std::isnan(v)) return;
      out += std::to_string(t.scenario_id) + "," + std::to_string(t.n) + "," + method + "," +
             metric + "," + format_double(v) + "," + std::to_string(t.replicates - t.failures) +
             "," + std::to_string(t.seed) + "\n";
    };
    for (const auto& c : t.cells) {
      row(c.method, "mspe", c.mspe);
      row(c.method, "mcr", c.mcr);
      row(c.method, "rmse_pi1", c.rmse_pi1);
      row(c.method, "rmse_beta12", c.rmse_beta12);
      row(c.method, "rmse_beta22", c.rmse_beta22);
    }
    out += std::to_string(t.scenario_id) + "," + std::to_string(t.n) +
           ",ALL,failed_replicates," + std::to_string(t.failures) + "," +
           std::to_string(t.replicates) + "," + std::to_string(t.seed) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Leave-one-out cross validation

enum class CvMethod { OLS, OMR, JMR };

inline const char* to_string(CvMethod m) {
  switch (m) {
    case CvMethod::OLS: return "OLS";
    case CvMethod::OMR: return "OMR";
    case CvMethod::JMR: return "JMR";
  }
  return "?";
}

inline CvMethod cv_method_from_string(const std::string& s) {
  if (s == "OLS" || s == "ols" || s == "PCR" || s == "pcr") return CvMethod::OLS;
  if (s == "OMR" || s == "omr") return CvMethod::OMR;
  if (s == "JMR" || s == "jmr") return CvMethod::JMR;
  throw DataError("unknown method '" + s + "' (expected ols/pcr, omr, or jmr)");
}

struct LoocvResult {
  double cv = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd predictions;  // NaN where the fold failed
  Eigen::VectorXd sq_errors;    // NaN where the fold failed
  Eigen::MatrixXd posteriors;   // n x K prediction weights of the left-out row
  std::vector<bool> fold_ok;
  Eigen::Index failures = 0;
};

namespace detail {

struct FoldFit {
  double prediction = 0.0;
  Eigen::VectorXd posteriors;
};

/// Fit one method on a training set and predict one held-out row.
inline FoldFit fit_and_predict(const Dataset& train, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& z, CvMethod method, int K,
                               const FitConfig& cfg) {
  FoldFit f;
  if (method == CvMethod::OLS) {
    LinearModel lm = fit_ols(train);
    f.prediction = lm.predict(x, z);
    f.posteriors = Eigen::VectorXd::Ones(1);
    return f;
  }
  const ModelKind kind = method == CvMethod::JMR ? ModelKind::JMR : ModelKind::OMR;
  FitResult fr = fit(train, K, kind, cfg);
  PredictionResult pr = predict(fr.model, x, z, cfg.floors);
  f.prediction = pr.yhat;
  f.posteriors = pr.posteriors;
  return f;
}

inline void finish_loocv(LoocvResult& r, const Eigen::VectorXd& y) {
  double s = 0.0;
  Eigen::Index ok = 0;
  r.sq_errors.resize(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (r.fold_ok[static_cast<std::size_t>(i)]) {
      const double e = y[i] - r.predictions[i];
      r.sq_errors[i] = e * e;
      s += e * e;
      ++ok;
    } else {
      r.sq_errors[i] = std::numeric_limits<double>::quiet_NaN();
      ++r.failures;
    }
  }
  if (ok == 0) throw FitFailedError("every cross-validation fold failed");
  r.cv = s / static_cast<double>(ok);
}

}  // namespace detail

/// Leave-one-out CV on a plain tabular dataset. Folds run in parallel with
/// per-fold derived seeds; a failed fold is recorded, not fatal.
inline LoocvResult loocv(const Dataset& d, CvMethod method, int K,
                         const FitConfig& cfg = FitConfig{}, int n_threads = 0) {
  d.validate();
  const Eigen::Index min_n = method == CvMethod::OLS
                                 ? d.p() + d.q() + 2
                                 : static_cast<Eigen::Index>(K) * (d.p() + d.q() + 2) + 1;
  if (d.n() < min_n) throw DataError("too few observations for leave-one-out fitting");

  LoocvResult r;
  const Eigen::Index n = d.n();
  const int ncol = method == CvMethod::OLS ? 1 : K;
  r.predictions = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  r.posteriors = Eigen::MatrixXd::Constant(n, ncol, std::numeric_limits<double>::quiet_NaN());
  r.fold_ok.assign(static_cast<std::size_t>(n), false);

  parallel_for(
      n,
      [&](Eigen::Index i) {
        FitConfig cfg_fold = cfg;
        cfg_fold.seed = derive_seed(cfg.seed, 0x666f6c64, static_cast<std::uint64_t>(i));
        try {
          detail::FoldFit f = detail::fit_and_predict(
              d.without_row(i), d.X.row(i).transpose(), d.Z.row(i).transpose(), method, K, cfg_fold);
          r.predictions[i] = f.prediction;
          r.posteriors.row(i) = f.posteriors.transpose();
          r.fold_ok[static_cast<std::size_t>(i)] = true;
        } catch (const NumericalError&) {
        } catch (const DataError&) {
          // a fold can hit fit/fpca size preconditions even when the full
          // sample satisfies them; that is a failed fold, not a usage error
        }
      },
      n_threads);
  detail::finish_loocv(r, d.y);
  return r;
}

/// Inputs for the functional designs: smooth curves, optionally switch to
/// velocity curves, optionally carry the original curve's endpoint value as an
/// invariant covariate.
struct FunctionalDesignSpec {
  CurveSample curves;
  SubjectValues response;
  bool use_velocity = false;
  bool endpoint_as_invariant = false;
  Eigen::Index M = 3;
  int order = 5;
  int n_knots = -1;  // < 0: pooled observation times
  Eigen::Index grid_size = 201;
};

struct FunctionalPrepared {
  SmoothedCurves smoothed;  // velocity curves when use_velocity is set
  std::optional<SubjectValues> endpoint;
};

inline FunctionalPrepared prepare_functional(const FunctionalDesignSpec& spec) {
  if (spec.curves.ids != spec.response.ids)
    throw DataError("curve subjects and response subjects do not match");
  SmoothedCurves s = smooth_curves(spec.curves, spec.order, spec.n_knots, spec.grid_size);
  FunctionalPrepared out{s, std::nullopt};
  if (spec.endpoint_as_invariant) out.endpoint = endpoint_subject_values(s);
  if (spec.use_velocity) out.smoothed = differentiate(s);
  return out;
}

namespace detail {

inline SmoothedCurves curve_subset(const SmoothedCurves& s, const std::vector<Eigen::Index>& rows) {
  SmoothedCurves out{s.basis, Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), s.coef.cols()),
                     s.grid, s.qweights,
                     Eigen::VectorXd(static_cast<Eigen::Index>(rows.size())), {}};
  out.ids.reserve(rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) {
    out.coef.row(static_cast<Eigen::Index>(j)) = s.coef.row(rows[j]);
    out.rss[static_cast<Eigen::Index>(j)] = s.rss[rows[j]];
    out.ids.push_back(s.ids[static_cast<std::size_t>(rows[j])]);
  }
  return out;
}

inline std::vector<Eigen::Index> all_but(Eigen::Index n, Eigen::Index skip) {
  std::vector<Eigen::Index> rows;
  rows.reserve(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i)
    if (i != skip) rows.push_back(i);
  return rows;
}

inline SubjectValues values_subset(const SubjectValues& v, const std::vector<Eigen::Index>& rows) {
  SubjectValues out;
  out.ids.reserve(rows.size());
  out.values.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    out.ids.push_back(v.ids[static_cast<std::size_t>(rows[j])]);
    out.values[static_cast<Eigen::Index>(j)] = v.values[rows[j]];
  }
  return out;
}

}  // namespace detail

/// Leave-one-curve-out CV: the FPCA (mean, covariance, eigenfunctions) is
/// recomputed on every fold; only the per-curve spline smoothing is shared,
/// since it uses no cross-subject information.
inline LoocvResult loocv_functional(const FunctionalDesignSpec& spec, CvMethod method, int K,
                                    const FitConfig& cfg = FitConfig{}, int n_threads = 0) {
  const FunctionalPrepared prep = prepare_functional(spec);
  const SmoothedCurves& s = prep.smoothed;
  const Eigen::Index n = s.n();
  const int ncol = method == CvMethod::OLS ? 1 : K;

  LoocvResult r;
  r.predictions = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  r.posteriors = Eigen::MatrixXd::Constant(n, ncol, std::numeric_limits<double>::quiet_NaN());
  r.fold_ok.assign(static_cast<std::size_t>(n), false);

  parallel_for(
      n,
      [&](Eigen::Index i) {
        FitConfig cfg_fold = cfg;
        cfg_fold.seed = derive_seed(cfg.seed, 0x666f6c64, static_cast<std::uint64_t>(i));
        try {
          const std::vector<Eigen::Index> rows = detail::all_but(n, i);
          const SmoothedCurves s_train = detail::curve_subset(s, rows);
          const EigenSystem e = fpca(s_train, spec.M);
          const ScoreDesign sd = project_scores(s_train, e);
          std::optional<SubjectValues> ztrain;
          Eigen::VectorXd ztest(0);
          if (prep.endpoint) {
            ztrain = detail::values_subset(*prep.endpoint, rows);
            ztest.resize(1);
            ztest[0] = prep.endpoint->values[i];
          }
          const Dataset train = assemble_design(
              sd, ztrain, {}, detail::values_subset(spec.response, rows));
          const SmoothedCurves s_test = detail::curve_subset(s, {i});
          const Eigen::VectorXd x = project_scores(s_test, e).scores.row(0);
          detail::FoldFit f = detail::fit_and_predict(train, x, ztest, method, K, cfg_fold);
          r.predictions[i] = f.prediction;
          r.posteriors.row(i) = f.posteriors.transpose();
          r.fold_ok[static_cast<std::size_t>(i)] = true;
        } catch (const NumericalError&) {
        } catch (const DataError&) {
          // a fold can hit fit/fpca size preconditions even when the full
          // sample satisfies them; that is a failed fold, not a usage error
        }
      },
      n_threads);
  detail::finish_loocv(r, spec.response.values);
  return r;
}

struct ThresholdPoint {
  double threshold = 0.5;
  Eigen::Index retained = 0;
  bool present = false;
  double cv = std::numeric_limits<double>::quiet_NaN();
};

/// CV restricted to subjects whose top selection posterior reaches each
/// threshold. Selection posteriors and scored errors may come from different
/// methods; rows enter only when both are available.
inline std::vector<ThresholdPoint> cv_threshold_curve(const Eigen::MatrixXd& sel_posteriors,
                                                      const std::vector<bool>& sel_ok,
                                                      const Eigen::VectorXd& sq_errors,
                                                      const std::vector<bool>& err_ok,
                                                      const std::vector<double>& thresholds) {
  const Eigen::Index n = sel_posteriors.rows();
  if (static_cast<Eigen::Index>(sel_ok.size()) != n || sq_errors.size() != n ||
      static_cast<Eigen::Index>(err_ok.size()) != n)
    throw DataError("threshold-curve inputs disagree in length");
  std::vector<ThresholdPoint> out;
  for (double t : thresholds) {
    if (!(t >= 0.5 && t < 1.0)) throw DataError("thresholds must lie in [0.5, 1)");
    ThresholdPoint pt;
    pt.threshold = t;
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!sel_ok[static_cast<std::size_t>(i)] || !err_ok[static_cast<std::size_t>(i)]) continue;
      if (sel_posteriors.row(i).maxCoeff() < t) continue;
      ++pt.retained;
      s += sq_errors[i];
    }
    if (pt.retained > 0) {
      pt.present = true;
      pt.cv = s / static_cast<double>(pt.retained);
    }
    out.push_back(pt);
  }
  return out;
}

}  // namespace mixreg

#endif  // MIXREG_BENCHMARK_HPP
