// mixreg: mixture-regression estimation, prediction, and benchmarking.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
// Results go to files (atomically written); diagnostics go to stderr.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mixreg/benchmark.hpp"
#include "mixreg/csv.hpp"
#include "mixreg/em.hpp"
#include "mixreg/fpca.hpp"
#include "mixreg/mspe.hpp"
#include "mixreg/predict.hpp"
#include "mixreg/scenarios.hpp"
#include "mixreg/serialize.hpp"

namespace {

using namespace mixreg;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t pos = s.find(',', start);
    if (pos == std::string::npos) {
      if (start < s.size()) out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  for (const auto& tok : split_list(s))
    out.push_back(static_cast<int>(parse_long(tok, what)));
  if (out.empty()) throw DataError(what + ": empty list");
  return out;
}

std::vector<double> parse_double_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const auto& tok : split_list(s)) out.push_back(parse_double(tok, what));
  if (out.empty()) throw DataError(what + ": empty list");
  return out;
}

/// Reclassify the listed x columns (1-based) as invariant covariates.
Dataset move_invariant_columns(const Dataset& d, const std::vector<int>& cols) {
  for (int c : cols)
    if (c < 1 || c > d.p()) throw DataError("--invariant-cols index out of range");
  std::vector<bool> is_inv(static_cast<std::size_t>(d.p()), false);
  for (int c : cols) is_inv[static_cast<std::size_t>(c - 1)] = true;
  Dataset out;
  out.y = d.y;
  out.truth = d.truth;
  out.X.resize(d.n(), d.p() - static_cast<Eigen::Index>(cols.size()));
  out.Z.resize(d.n(), d.q() + static_cast<Eigen::Index>(cols.size()));
  Eigen::Index xi = 0;
  for (Eigen::Index j = 0; j < d.p(); ++j)
    if (!is_inv[static_cast<std::size_t>(j)]) out.X.col(xi++) = d.X.col(j);
  Eigen::Index zi = 0;
  for (Eigen::Index j = 0; j < d.q(); ++j) out.Z.col(zi++) = d.Z.col(j);
  for (int c : cols) out.Z.col(zi++) = d.X.col(c - 1);
  out.validate();
  return out;
}

struct CommonFitFlags {
  int restarts = 10;
  int max_iter = 1000;
  double tol = 1e-8;
  std::uint64_t seed = 0;

  void attach(CLI::App* sub) {
    sub->add_option("--restarts", restarts, "EM restarts per fit");
    sub->add_option("--max-iter", max_iter, "EM iteration cap");
    sub->add_option("--tol", tol, "relative log-likelihood convergence tolerance");
    sub->add_option("--seed", seed, "random seed");
  }

  FitConfig config() const {
    FitConfig cfg;
    cfg.n_restarts = restarts;
    cfg.max_iter = max_iter;
    cfg.tol = tol;
    cfg.seed = seed;
    return cfg;
  }
};

int run_fit(const std::string& data_path, const std::string& out_path, const std::string& kind_s,
            int k, int k_max, const std::string& invariant_cols, const std::string& report_path,
            const CommonFitFlags& flags) {
  Dataset d = read_dataset_csv(data_path);
  if (!invariant_cols.empty())
    d = move_invariant_columns(d, parse_int_list(invariant_cols, "--invariant-cols"));
  const ModelKind kind = kind_from_string(kind_s);
  const FitConfig cfg = flags.config();

  FitResult best;
  std::string report = "K,loglik,bic,converged,note\n";
  if (k_max > 0) {
    SelectionResult sel = select_k(d, k_max, kind, cfg);
    for (const SelectionEntry& e : sel.entries) {
      if (e.fit)
        report += std::to_string(e.K) + "," + format_double(e.fit->loglik()) + "," +
                  format_double(e.fit->bic) + "," + (e.fit->converged ? "1" : "0") + ",\n";
      else
        report += std::to_string(e.K) + ",,,0," + e.warning + "\n";
    }
    best = sel.best();
  } else {
    best = fit(d, k, kind, cfg);
    report += std::to_string(k) + "," + format_double(best.loglik()) + "," +
              format_double(best.bic) + "," + (best.converged ? "1" : "0") + ",\n";
  }
  if (!report_path.empty()) atomic_write(report_path, report);

  ModelDocument doc;
  doc.model = best.model;
  doc.fit = FitMetadata{flags.seed, best.loglik(), best.bic,
                        static_cast<int>(best.loglik_trace.size())};
  write_model_json(out_path, doc);
  return 0;
}

int run_predict(const std::string& model_path, const std::string& data_path,
                const std::string& out_path) {
  const ModelDocument doc = read_model_json(model_path);
  const Dataset d = read_covariates_csv(data_path);
  std::string out = "yhat";
  for (int k = 1; k <= doc.model.K(); ++k) out += ",posterior" + std::to_string(k);
  out += "\n";
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    const PredictionResult pr =
        predict(doc.model, d.X.row(i).transpose(), d.Z.row(i).transpose());
    out += format_double(pr.yhat);
    for (int k = 0; k < doc.model.K(); ++k) out += "," + format_double(pr.posteriors[k]);
    out += "\n";
  }
  atomic_write(out_path, out);
  return 0;
}

int run_cluster(const std::string& model_path, const std::string& data_path,
                const std::string& out_path) {
  const ModelDocument doc = read_model_json(model_path);
  const Dataset d = read_dataset_csv_impl(data_path, doc.model.kind != ModelKind::GMM, nullptr);
  std::string out = "cluster\n";
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    int c;
    if (doc.model.kind == ModelKind::GMM) {
      Eigen::VectorXd w = posterior_weights(doc.model, d.X.row(i).transpose());
      Eigen::Index top;
      w.maxCoeff(&top);
      c = static_cast<int>(top);
    } else {
      c = assign_cluster(doc.model, d.X.row(i).transpose(), d.y[i], d.Z.row(i).transpose());
    }
    out += std::to_string(c + 1) + "\n";
  }
  atomic_write(out_path, out);
  return 0;
}

int run_simulate(int scenario, Eigen::Index n, std::uint64_t seed, const std::string& out_path) {
  const Dataset d = sample(scenario_model(scenario), n,
                           derive_seed(seed, 0x73696d75, static_cast<std::uint64_t>(scenario)));
  write_dataset_csv(out_path, d);
  return 0;
}

int run_benchmark_cmd(const std::string& scenarios_s, const std::string& ns_s, Eigen::Index reps,
                      const std::string& out_path, const CommonFitFlags& flags, int threads) {
  const std::vector<int> ids = parse_int_list(scenarios_s, "--scenarios");
  std::vector<Eigen::Index> ns;
  for (int v : parse_int_list(ns_s, "--ns")) ns.push_back(v);
  const std::vector<BenchmarkTable> tables =
      run_benchmark(ids, ns, reps, flags.seed, flags.config(), threads);
  atomic_write(out_path, benchmark_csv(tables));
  return 0;
}

struct CurveFlags {
  std::string curves_path;
  std::string response_path;
  int order = 5;
  int n_knots = -1;
  Eigen::Index grid = 201;
  Eigen::Index m = 3;
  bool derivative = false;
  bool endpoint_as_invariant = false;

  void attach(CLI::App* sub, bool curves_required) {
    auto* c = sub->add_option("--curves", curves_path, "long-format curve CSV (subject_id,t,value)");
    if (curves_required) c->required();
    sub->add_option("--response", response_path, "response CSV (subject_id,y)");
    sub->add_option("--order", order, "spline order (order = degree + 1)");
    sub->add_option("--n-knots", n_knots,
                    "equispaced interior knots; negative uses pooled observation times");
    sub->add_option("--grid", grid, "quadrature grid size");
    sub->add_option("--m", m, "number of principal components");
    sub->add_flag("--derivative", derivative, "use velocity curves (analytic spline derivative)");
    sub->add_flag("--endpoint-as-invariant", endpoint_as_invariant,
                  "carry the curve value at the right endpoint as an invariant covariate");
  }

  FunctionalDesignSpec spec(const CurveSample& cs, const SubjectValues& y) const {
    FunctionalDesignSpec s;
    s.curves = cs;
    s.response = y;
    s.use_velocity = derivative;
    s.endpoint_as_invariant = endpoint_as_invariant;
    s.M = m;
    s.order = order;
    s.n_knots = n_knots;
    s.grid_size = grid;
    return s;
  }
};

int run_fpca(const CurveFlags& cf, const std::string& out_eigen, const std::string& out_scores) {
  const CurveSample cs = read_curves_csv(cf.curves_path);
  SmoothedCurves s = smooth_curves(cs, cf.order, cf.n_knots, cf.grid);
  std::optional<SubjectValues> endpoint;
  if (cf.endpoint_as_invariant) endpoint = endpoint_subject_values(s);
  if (cf.derivative) s = differentiate(s);
  const EigenSystem e = fpca(s, cf.m);
  const ScoreDesign sd = project_scores(s, e);

  if (!out_eigen.empty()) {
    nlohmann::json j = eigen_to_json(e);
    j["schema_version"] = kSchemaVersion;
    atomic_write(out_eigen, j.dump(2) + "\n");
  }
  if (!out_scores.empty()) {
    std::optional<SubjectValues> y;
    if (!cf.response_path.empty()) {
      y = read_response_csv(cf.response_path);
      if (y->ids != sd.ids)
        throw DataError("response subjects do not match the curve subjects");
    }
    std::string out = "subject_id";
    if (y) out += ",y";
    for (Eigen::Index j = 1; j <= sd.scores.cols(); ++j) out += ",x" + std::to_string(j);
    if (endpoint) out += ",z1";
    out += "\n";
    for (Eigen::Index i = 0; i < sd.scores.rows(); ++i) {
      out += sd.ids[static_cast<std::size_t>(i)];
      if (y) out += "," + format_double(y->values[i]);
      for (Eigen::Index j = 0; j < sd.scores.cols(); ++j)
        out += "," + format_double(sd.scores(i, j));
      if (endpoint) out += "," + format_double(endpoint->values[i]);
      out += "\n";
    }
    atomic_write(out_scores, out);
  }
  return 0;
}

int run_cv(const std::string& data_path, const CurveFlags& cf, const std::string& methods_s,
           int k, const std::string& thresholds_s, const std::string& out_path,
           const CommonFitFlags& flags, int threads) {
  std::vector<CvMethod> methods;
  for (const auto& tok : split_list(methods_s)) methods.push_back(cv_method_from_string(tok));
  if (methods.empty()) throw DataError("--methods: empty list");

  const bool functional = !cf.curves_path.empty();
  if (functional == !data_path.empty())
    throw UsageError("cv needs exactly one of --data or --curves");
  std::vector<double> thresholds;
  if (!thresholds_s.empty()) thresholds = parse_double_list(thresholds_s, "--thresholds");

  FitConfig cfg = flags.config();
  std::map<std::string, LoocvResult> results;
  std::optional<LoocvResult> jmr_result;
  for (CvMethod method : methods) {
    LoocvResult r;
    if (functional) {
      const CurveSample cs = read_curves_csv(cf.curves_path);
      if (cf.response_path.empty()) throw DataError("functional cv needs --response");
      const SubjectValues y = read_response_csv(cf.response_path);
      r = loocv_functional(cf.spec(cs, y), method, k, cfg, threads);
    } else {
      r = loocv(read_dataset_csv(data_path), method, k, cfg, threads);
    }
    const std::string name =
        functional && method == CvMethod::OLS ? "PCR" : to_string(method);
    if (method == CvMethod::JMR) jmr_result = r;
    results.emplace(name, std::move(r));
  }

  std::string out = "method,threshold,cv,retained,failures\n";
  for (const auto& [name, r] : results) {
    const Eigen::Index n = r.predictions.size();
    out += name + ",0.5," + format_double(r.cv) + "," + std::to_string(n - r.failures) + "," +
           std::to_string(r.failures) + "\n";
  }
  if (!thresholds.empty()) {
    if (!jmr_result)
      throw DataError("--thresholds needs jmr among --methods (selection posteriors)");
    for (const auto& [name, r] : results) {
      const std::vector<ThresholdPoint> curve = cv_threshold_curve(
          jmr_result->posteriors, jmr_result->fold_ok, r.sq_errors, r.fold_ok, thresholds);
      for (const ThresholdPoint& pt : curve) {
        if (!pt.present) continue;
        out += name + "," + format_double(pt.threshold) + "," + format_double(pt.cv) + "," +
               std::to_string(pt.retained) + "," + std::to_string(r.failures) + "\n";
      }
    }
  }
  atomic_write(out_path, out);
  return 0;
}

int run_mspe(const std::string& model_path, Eigen::Index mc_n, std::uint64_t seed,
             const std::string& out_path) {
  const ModelDocument doc = read_model_json(model_path);
  const MspeReport rep = mspe_report(doc.model, mc_n, seed);
  atomic_write(out_path, mspe_report_to_json(rep).dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixture regression toolkit"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads,
                 "worker threads (default: MIXREG_THREADS or hardware concurrency)");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "fit a mixture regression from a dataset CSV");
  std::string fit_data, fit_out, fit_kind = "jmr", fit_invariants, fit_report;
  int fit_k = 2, fit_kmax = 0;
  CommonFitFlags fit_flags;
  fit_cmd->add_option("--data", fit_data, "dataset CSV")->required();
  fit_cmd->add_option("--out", fit_out, "output model JSON")->required();
  fit_cmd->add_option("--kind", fit_kind, "jmr or omr");
  fit_cmd->add_option("--k", fit_k, "component count");
  fit_cmd->add_option("--k-max", fit_kmax, "BIC sweep over K=1..k-max (overrides --k)");
  fit_cmd->add_option("--invariant-cols", fit_invariants,
                      "comma-separated 1-based x columns to treat as invariant");
  fit_cmd->add_option("--report", fit_report, "optional BIC sweep report CSV");
  fit_flags.attach(fit_cmd);
  fit_cmd->set_config("--config");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "predict responses from a fitted model");
  std::string pred_model, pred_data, pred_out;
  predict_cmd->add_option("--model", pred_model, "model JSON")->required();
  predict_cmd->add_option("--data", pred_data, "covariate CSV (x1..xp[,z1..zq])")->required();
  predict_cmd->add_option("--out", pred_out, "predictions CSV")->required();
  predict_cmd->set_config("--config");

  // cluster
  auto* cluster_cmd = app.add_subcommand("cluster", "assign observations to components");
  std::string clus_model, clus_data, clus_out;
  cluster_cmd->add_option("--model", clus_model, "model JSON")->required();
  cluster_cmd->add_option("--data", clus_data, "dataset CSV")->required();
  cluster_cmd->add_option("--out", clus_out, "assignments CSV")->required();
  cluster_cmd->set_config("--config");

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "draw a dataset from a scenario model");
  int sim_scenario = 1;
  Eigen::Index sim_n = 300;
  std::uint64_t sim_seed = 0;
  std::string sim_out;
  sim_cmd->add_option("--scenario", sim_scenario, "scenario id 1..4")->required();
  sim_cmd->add_option("--n", sim_n, "sample size");
  sim_cmd->add_option("--seed", sim_seed, "random seed");
  sim_cmd->add_option("--out", sim_out, "output dataset CSV")->required();
  sim_cmd->set_config("--config");

  // benchmark
  auto* bench_cmd = app.add_subcommand("benchmark", "replicated method comparison tables");
  std::string bench_scenarios = "1,2,3,4", bench_ns = "100,300", bench_out;
  Eigen::Index bench_reps = 500;
  CommonFitFlags bench_flags;
  bench_cmd->add_option("--scenarios", bench_scenarios, "comma-separated scenario ids");
  bench_cmd->add_option("--ns", bench_ns, "comma-separated training sizes");
  bench_cmd->add_option("--reps", bench_reps, "replicates per cell");
  bench_cmd->add_option("--out", bench_out, "output tables CSV")->required();
  bench_flags.attach(bench_cmd);
  bench_cmd->set_config("--config");

  // fpca
  auto* fpca_cmd = app.add_subcommand("fpca", "smooth curves and extract principal components");
  CurveFlags fpca_curves;
  std::string fpca_out_eigen, fpca_out_scores;
  fpca_curves.attach(fpca_cmd, true);
  fpca_cmd->add_option("--out-eigen", fpca_out_eigen, "eigen-system JSON");
  fpca_cmd->add_option("--out-scores", fpca_out_scores, "scores CSV");
  fpca_cmd->set_config("--config");

  // cv
  auto* cv_cmd = app.add_subcommand("cv", "leave-one-out cross validation");
  std::string cv_data, cv_methods = "ols,omr,jmr", cv_thresholds, cv_out;
  int cv_k = 2;
  CurveFlags cv_curves;
  CommonFitFlags cv_flags;
  cv_cmd->add_option("--data", cv_data, "tabular dataset CSV (alternative to --curves)");
  cv_curves.attach(cv_cmd, false);
  cv_cmd->add_option("--methods", cv_methods, "comma-separated: pcr/ols, omr, jmr");
  cv_cmd->add_option("--k", cv_k, "component count");
  cv_cmd->add_option("--thresholds", cv_thresholds,
                     "comma-separated posterior thresholds in [0.5, 1)");
  cv_cmd->add_option("--out", cv_out, "CV report CSV")->required();
  cv_flags.attach(cv_cmd);
  cv_cmd->set_config("--config");

  // mspe
  auto* mspe_cmd = app.add_subcommand("mspe", "Monte-Carlo asymptotic MSPE report");
  std::string mspe_model, mspe_out;
  Eigen::Index mspe_mc_n = 200000;
  std::uint64_t mspe_seed = 0;
  mspe_cmd->add_option("--model", mspe_model, "model JSON")->required();
  mspe_cmd->add_option("--mc-n", mspe_mc_n, "Monte-Carlo sample count");
  mspe_cmd->add_option("--seed", mspe_seed, "random seed");
  mspe_cmd->add_option("--out", mspe_out, "report JSON")->required();
  mspe_cmd->set_config("--config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (fit_cmd->parsed())
      return run_fit(fit_data, fit_out, fit_kind, fit_k, fit_kmax, fit_invariants, fit_report,
                     fit_flags);
    if (predict_cmd->parsed()) return run_predict(pred_model, pred_data, pred_out);
    if (cluster_cmd->parsed()) return run_cluster(clus_model, clus_data, clus_out);
    if (sim_cmd->parsed()) return run_simulate(sim_scenario, sim_n, sim_seed, sim_out);
    if (bench_cmd->parsed())
      return run_benchmark_cmd(bench_scenarios, bench_ns, bench_reps, bench_out, bench_flags,
                               threads);
    if (fpca_cmd->parsed()) return run_fpca(fpca_curves, fpca_out_eigen, fpca_out_scores);
    if (cv_cmd->parsed())
      return run_cv(cv_data, cv_curves, cv_methods, cv_k, cv_thresholds, cv_out, cv_flags,
                    threads);
    if (mspe_cmd->parsed()) return run_mspe(mspe_model, mspe_mc_n, mspe_seed, mspe_out);
    std::cerr << "no subcommand given\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
