// Scenario fixtures, the four-method benchmark harness, leave-one-out CV in
// tabular and functional form, and the posterior-threshold CV curve.
#include <catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mixreg/benchmark.hpp"
#include "mixreg/errors.hpp"
#include "mixreg/linear_model.hpp"
#include "mixreg/scenarios.hpp"

using namespace mixreg;

namespace {

const BenchmarkTable& find_table(const std::vector<BenchmarkTable>& ts, int id, Eigen::Index n) {
  for (const auto& t : ts)
    if (t.scenario_id == id && t.n == n) return t;
  throw std::runtime_error("table not found");
}

FitConfig quick_cfg(std::uint64_t seed, int restarts = 4, int max_iter = 500) {
  FitConfig cfg;
  cfg.seed = seed;
  cfg.n_restarts = restarts;
  cfg.max_iter = max_iter;
  return cfg;
}

// Curves mu + u h1 + v h2 in a fixed spline span, with a response driven by
// the first loading.
struct FunctionalToy {
  FunctionalDesignSpec spec;
  Eigen::VectorXd u;
};

FunctionalToy make_functional_toy(Eigen::Index n, std::uint64_t seed, double noise_sd = 0.1) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  BSplineBasis basis(0.0, 1.0, equispaced_interior_knots(0.0, 1.0, 3), 4);
  const Eigen::Index nb = basis.dim();
  Eigen::VectorXd cmu(nb), c1(nb), c2(nb);
  for (Eigen::Index j = 0; j < nb; ++j) {
    cmu[j] = nd(gen);
    c1[j] = nd(gen);
    c2[j] = nd(gen);
  }

  FunctionalToy toy;
  toy.u.resize(n);
  toy.spec.curves.a = 0.0;
  toy.spec.curves.b = 1.0;
  const int m = 15;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ui = 2.0 * nd(gen);
    const double vi = nd(gen);
    toy.u[i] = ui;
    Eigen::VectorXd c = cmu + ui * c1 + vi * c2;
    std::vector<double> t, v;
    for (int j = 0; j < m; ++j) {
      const double tj = static_cast<double>(j) / (m - 1);
      t.push_back(tj);
      v.push_back(c.dot(basis.evaluate(tj)));
    }
    toy.spec.curves.ids.push_back("f" + std::to_string(i));
    toy.spec.curves.times.push_back(std::move(t));
    toy.spec.curves.values.push_back(std::move(v));
  }
  toy.spec.response.ids = toy.spec.curves.ids;
  toy.spec.response.values.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    toy.spec.response.values[i] = 2.0 + 3.0 * toy.u[i] + noise_sd * nd(gen);
  toy.spec.M = 2;
  toy.spec.order = 4;
  toy.spec.n_knots = 3;
  toy.spec.grid_size = 101;
  return toy;
}

}  // namespace

TEST_CASE("scenario fixtures carry the documented parameters", "[benchmark]") {
  for (int id = 1; id <= 4; ++id) {
    MixtureModel m = scenario_model(id);
    CHECK(m.kind == ModelKind::JMR);
    REQUIRE(m.K() == 2);
    REQUIRE(m.p() == 2);
    CHECK(m.pi[0] == 0.6);
    CHECK(m.pi[1] == 0.4);
    CHECK(m.components[0].sigma2 == 0.09);
    CHECK(m.components[1].sigma2 == 0.09);
  }
  CHECK_THROWS_AS(scenario_model(0), DataError);
  CHECK_THROWS_AS(scenario_model(5), DataError);

  SECTION("separated scenario") {
    MixtureModel m = scenario_model(1);
    CHECK((m.components[0].mu - Eigen::Vector2d(-2.0, -2.0)).norm() == 0.0);
    CHECK((m.components[1].mu - Eigen::Vector2d(2.0, 2.0)).norm() == 0.0);
    CHECK((m.components[0].beta - Eigen::Vector2d(1.0, 1.0)).norm() == 0.0);
    CHECK((m.components[1].beta - Eigen::Vector2d(1.0, 2.0)).norm() == 0.0);
    CHECK(m.components[0].alpha == 0.0);
    CHECK((m.components[0].Sigma - Eigen::Matrix2d::Identity()).norm() == 0.0);
  }

  SECTION("covariance-contrast scenario") {
    MixtureModel m = scenario_model(2);
    CHECK(m.components[0].mu.norm() == 0.0);
    CHECK(m.components[1].mu.norm() == 0.0);
    CHECK(m.components[1].Sigma(0, 0) == 4.0);
    CHECK(m.components[1].Sigma(1, 1) == 0.25);
    CHECK(m.components[0].alpha == -3.0);
    CHECK(m.components[1].alpha == 3.0);
  }

  SECTION("coincident group response means") {
    MixtureModel m = scenario_model(3);
    const double m1 = m.components[0].alpha + m.components[0].beta.dot(m.components[0].mu);
    const double m2 = m.components[1].alpha + m.components[1].beta.dot(m.components[1].mu);
    CHECK(m1 == Catch::Approx(2.0).margin(1e-14));
    CHECK(m2 == Catch::Approx(2.0).margin(1e-14));
  }

  SECTION("homogeneous covariates") {
    MixtureModel m = scenario_model(4);
    CHECK((m.components[0].mu - m.components[1].mu).norm() == 0.0);
    CHECK((m.components[0].Sigma - m.components[1].Sigma).norm() == 0.0);
    CHECK((m.components[0].beta - m.components[1].beta).norm() > 0.0);
  }
}

TEST_CASE("make_scenario draws labeled train and test sets", "[benchmark]") {
  ScenarioData d = make_scenario(2, 150, 99u);
  CHECK(d.scenario.id == 2);
  CHECK(d.train.n() == 150);
  CHECK(d.test.n() == 500);  // default test size
  CHECK(d.train.p() == 2);
  CHECK(d.train.q() == 0);
  REQUIRE(d.train.truth.has_value());
  REQUIRE(d.test.truth.has_value());

  ScenarioData again = make_scenario(2, 150, 99u);
  CHECK((d.train.y - again.train.y).norm() == 0.0);
  CHECK((d.train.X - again.train.X).norm() == 0.0);
  CHECK((d.test.y - again.test.y).norm() == 0.0);
  ScenarioData other = make_scenario(2, 150, 100u);
  CHECK((d.train.y - other.train.y).norm() != 0.0);
  // train and test streams are distinct
  ScenarioData small = make_scenario(2, 500, 99u);
  CHECK((small.train.y - small.test.y).norm() != 0.0);

  SECTION("empirical moments match the generator") {
    ScenarioData big = make_scenario(1, 10000, 11u);
    const std::vector<int>& lab = *big.train.truth;
    const double frac0 =
        static_cast<double>(std::count(lab.begin(), lab.end(), 0)) / 10000.0;
    CHECK(frac0 == Catch::Approx(0.6).margin(0.015));  // 3 sigma
    CHECK(big.train.X.col(0).mean() == Catch::Approx(-0.4).margin(0.07));
    CHECK(big.train.X.col(1).mean() == Catch::Approx(-0.4).margin(0.07));
  }
}

TEST_CASE("misclassification_rate minimizes over label permutations", "[benchmark]") {
  std::vector<int> truth = {0, 1, 0, 1, 0, 1, 0, 0, 1, 1};
  CHECK(misclassification_rate(truth, truth, 2) == 0.0);
  std::vector<int> flipped(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) flipped[i] = 1 - truth[i];
  CHECK(misclassification_rate(flipped, truth, 2) == 0.0);

  std::vector<int> one_off = truth;
  one_off[3] = 0;
  CHECK(misclassification_rate(one_off, truth, 2) == Catch::Approx(0.1));

  // a 3-cycle relabeling is still a perfect clustering
  std::vector<int> t3 = {0, 1, 2, 0, 1, 2, 0, 1, 2};
  std::vector<int> a3 = {1, 2, 0, 1, 2, 0, 1, 2, 0};
  CHECK(misclassification_rate(a3, t3, 3) == 0.0);

  SECTION("random labels sit near one half") {
    std::mt19937_64 gen(2024u);
    const int n = 10000;
    std::vector<int> t(n), a(n);
    for (int i = 0; i < n; ++i) {
      t[static_cast<std::size_t>(i)] = i % 2;
      a[static_cast<std::size_t>(i)] = static_cast<int>(gen() & 1u);
    }
    const double r = misclassification_rate(a, t, 2);
    CHECK(r > 0.45);
    CHECK(r <= 0.5);
  }

  SECTION("input validation") {
    CHECK_THROWS_AS(misclassification_rate({}, {}, 2), DataError);
    CHECK_THROWS_AS(misclassification_rate({0, 1}, {0}, 2), DataError);
    CHECK_THROWS_AS(misclassification_rate({0, 2}, {0, 1}, 2), DataError);
    CHECK_THROWS_AS(misclassification_rate({0, -1}, {0, 1}, 2), DataError);
    CHECK_THROWS_AS(misclassification_rate({0, 1}, {0, 1}, 0), DataError);
    CHECK_THROWS_AS(misclassification_rate({0, 1}, {0, 1}, 9), DataError);
  }
}

TEST_CASE("bench_replicate accounts for numerical failures", "[benchmark]") {
  ScenarioData data = make_scenario(1, 20, 7u);
  data.train.X = Eigen::MatrixXd::Ones(20, 2);  // singular design: OLS cannot fit
  detail::ReplicateOutcome r = detail::bench_replicate(data, quick_cfg(1u), 123u);
  CHECK_FALSE(r.ok);
  CHECK_FALSE(r.note.empty());
  for (int m = 0; m < 4; ++m) {
    CHECK(std::isnan(r.mspe[static_cast<std::size_t>(m)]));
    CHECK(std::isnan(r.mcr[static_cast<std::size_t>(m)]));
  }

  ScenarioData ok_data = make_scenario(1, 60, 7u);
  detail::ReplicateOutcome good = detail::bench_replicate(ok_data, quick_cfg(1u), 123u);
  CHECK(good.ok);
  CHECK(std::isnan(good.mcr[detail::kOls]));  // OLS has no clusters
  for (int m = 0; m < 4; ++m) CHECK(good.mspe[static_cast<std::size_t>(m)] > 0.0);

  ok_data.train.truth.reset();
  CHECK_THROWS_AS(detail::bench_replicate(ok_data, quick_cfg(1u), 123u), DataError);
}

TEST_CASE("benchmark harness on the separated scenario", "[benchmark][slow]") {
  const std::uint64_t seed = 20260823u;
  std::vector<BenchmarkTable> tables =
      run_benchmark({1}, {100, 300}, 100, seed, quick_cfg(0u, 4));
  REQUIRE(tables.size() == 2);
  const BenchmarkTable& t100 = find_table(tables, 1, 100);
  const BenchmarkTable& t300 = find_table(tables, 1, 300);

  REQUIRE(t100.cells.size() == 4);
  CHECK(t100.cells[detail::kOls].method == "OLS");
  CHECK(t100.cells[detail::kOmr].method == "OMR");
  CHECK(t100.cells[detail::kJmr].method == "JMR");
  CHECK(t100.cells[detail::kMbc].method == "MBC");
  CHECK(t100.failures * 20 <= t100.replicates);

  SECTION("pointwise method behavior") {
    // irreducible error variance is 0.09: nothing can beat it
    for (const auto& t : tables)
      for (const auto& c : t.cells) CHECK(c.mspe > 0.085);
    // the joint model halves the pooled-regression error here
    CHECK(t300.cells[detail::kJmr].mspe < 0.5 * t300.cells[detail::kOls].mspe);
    CHECK(t100.cells[detail::kJmr].mspe < t100.cells[detail::kOls].mspe);
    // conditional-only mixtures cannot exploit the covariate separation
    CHECK(t300.cells[detail::kOmr].mspe >= t300.cells[detail::kOls].mspe - 0.01);
    // separated groups are easy to cluster through the joint fit
    CHECK(t300.cells[detail::kJmr].mcr < 0.05);
    CHECK(t300.cells[detail::kMbc].mcr < 0.05);
  }

  SECTION("parameter errors shrink from n=100 to n=300") {
    for (int m : {detail::kOmr, detail::kJmr, detail::kMbc}) {
      const auto mm = static_cast<std::size_t>(m);
      CHECK(t300.cells[mm].rmse_beta12 < t100.cells[mm].rmse_beta12);
    }
    CHECK(t300.cells[detail::kJmr].rmse_pi1 < t100.cells[detail::kJmr].rmse_pi1);
    CHECK(t300.cells[detail::kJmr].rmse_beta22 < t100.cells[detail::kJmr].rmse_beta22);
    CHECK(t300.cells[detail::kMbc].rmse_pi1 < t100.cells[detail::kMbc].rmse_pi1);
    // root-n consistency puts the ratio near 1/sqrt(3)
    const double ratio =
        t300.cells[detail::kJmr].rmse_beta12 / t100.cells[detail::kJmr].rmse_beta12;
    CHECK(ratio > 0.3);
    CHECK(ratio < 0.9);
  }

  SECTION("csv rendering") {
    const std::string csv = benchmark_csv(tables);
    CHECK(csv.rfind("scenario,n,method,metric,value,replicates,seed\n", 0) == 0);
    CHECK(csv.find("1,100,JMR,mspe,") != std::string::npos);
    CHECK(csv.find("1,300,MBC,rmse_pi1,") != std::string::npos);
    CHECK(csv.find("1,100,ALL,failed_replicates,") != std::string::npos);
    CHECK(csv.find("OLS,mcr") == std::string::npos);  // NaN metrics are omitted
  }
}

TEST_CASE("parameter errors shrink with n in the remaining scenarios", "[benchmark][slow]") {
  // scenario 4 has homogeneous covariates, so a small restart budget leaves EM
  // in spurious optima often enough to swamp the n=300 gain; it gets a larger
  // budget, while scenarios 2 and 3 stay at four restarts to keep the MBC
  // hard-assignment failure rate under the benchmark guard
  std::vector<BenchmarkTable> tables =
      run_benchmark({2, 3}, {100, 300}, 200, 77070u, quick_cfg(0u, 4));
  std::vector<BenchmarkTable> t4 =
      run_benchmark({4}, {100, 300}, 200, 77070u, quick_cfg(0u, 25));
  tables.insert(tables.end(), t4.begin(), t4.end());
  for (int id : {2, 3, 4}) {
    const BenchmarkTable& t100 = find_table(tables, id, 100);
    const BenchmarkTable& t300 = find_table(tables, id, 300);
    const auto j = static_cast<std::size_t>(detail::kJmr);
    CHECK(t300.cells[j].rmse_pi1 < t100.cells[j].rmse_pi1);
    CHECK(t300.cells[j].rmse_beta12 < t100.cells[j].rmse_beta12);
    CHECK(t300.cells[j].rmse_beta22 < t100.cells[j].rmse_beta22);
    for (const auto& c : t300.cells) CHECK(c.mspe > 0.085);
  }
}

TEST_CASE("run_benchmark determinism and validation", "[benchmark]") {
  CHECK_THROWS_AS(run_benchmark({1}, {60}, 0, 1u), DataError);

  std::vector<BenchmarkTable> a = run_benchmark({1}, {60}, 8, 5u, quick_cfg(0u, 2));
  std::vector<BenchmarkTable> b = run_benchmark({1}, {60}, 8, 5u, quick_cfg(0u, 2));
  CHECK(benchmark_csv(a) == benchmark_csv(b));
  std::vector<BenchmarkTable> serial = run_benchmark({1}, {60}, 8, 5u, quick_cfg(0u, 2), 1);
  CHECK(benchmark_csv(a) == benchmark_csv(serial));
  std::vector<BenchmarkTable> c = run_benchmark({1}, {60}, 8, 6u, quick_cfg(0u, 2));
  CHECK(benchmark_csv(a) != benchmark_csv(c));
}

TEST_CASE("cv method names", "[benchmark]") {
  CHECK(cv_method_from_string("ols") == CvMethod::OLS);
  CHECK(cv_method_from_string("PCR") == CvMethod::OLS);
  CHECK(cv_method_from_string("pcr") == CvMethod::OLS);
  CHECK(cv_method_from_string("OMR") == CvMethod::OMR);
  CHECK(cv_method_from_string("jmr") == CvMethod::JMR);
  CHECK_THROWS_AS(cv_method_from_string("mbc"), DataError);
  CHECK(std::string(to_string(CvMethod::OLS)) == "OLS");
  CHECK(std::string(to_string(CvMethod::JMR)) == "JMR");
}

TEST_CASE("tabular leave-one-out cross validation", "[benchmark]") {
  SECTION("noiseless linear data has zero CV error") {
    const Eigen::Index n = 12;
    Dataset d;
    d.X.resize(n, 1);
    d.y.resize(n);
    d.Z.resize(n, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      d.X(i, 0) = 0.3 * static_cast<double>(i) - 1.0;
      d.y[i] = 1.0 + 2.0 * d.X(i, 0);
    }
    LoocvResult r = loocv(d, CvMethod::OLS, 1);
    CHECK(r.cv < 1e-18);
    CHECK(r.failures == 0);
    CHECK(std::all_of(r.fold_ok.begin(), r.fold_ok.end(), [](bool b) { return b; }));
    REQUIRE(r.posteriors.cols() == 1);
    CHECK((r.posteriors.array() == 1.0).all());
  }

  SECTION("five-point fit matches hand arithmetic") {
    Dataset d;
    d.X.resize(5, 1);
    d.X << -2.0, -0.5, 0.0, 1.0, 2.5;
    d.y.resize(5);
    d.y << -1.7, 0.4, 0.1, 2.3, 4.9;
    d.Z.resize(5, 0);
    LoocvResult r = loocv(d, CvMethod::OLS, 1);
    double s = 0.0;
    for (Eigen::Index i = 0; i < 5; ++i) {
      double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
      for (Eigen::Index j = 0; j < 5; ++j) {
        if (j == i) continue;
        sx += d.X(j, 0);
        sy += d.y[j];
        sxx += d.X(j, 0) * d.X(j, 0);
        sxy += d.X(j, 0) * d.y[j];
      }
      const double xbar = sx / 4.0, ybar = sy / 4.0;
      const double slope = (sxy - 4.0 * xbar * ybar) / (sxx - 4.0 * xbar * xbar);
      const double pred = ybar + slope * (d.X(i, 0) - xbar);
      CHECK(r.predictions[i] == Catch::Approx(pred).margin(1e-10));
      s += (d.y[i] - pred) * (d.y[i] - pred);
    }
    CHECK(r.cv == Catch::Approx(s / 5.0).margin(1e-10));
  }

  SECTION("mixture CV is deterministic and carries posteriors") {
    Dataset d = make_scenario(1, 24, 3u).train;
    FitConfig cfg = quick_cfg(41u, 2, 300);
    LoocvResult r1 = loocv(d, CvMethod::JMR, 2, cfg);
    LoocvResult r2 = loocv(d, CvMethod::JMR, 2, cfg);
    REQUIRE(r1.failures == 0);
    CHECK(r1.cv == r2.cv);
    CHECK((r1.predictions - r2.predictions).norm() == 0.0);
    LoocvResult serial = loocv(d, CvMethod::JMR, 2, cfg, 1);
    CHECK(r1.cv == serial.cv);

    REQUIRE(r1.posteriors.cols() == 2);
    for (Eigen::Index i = 0; i < d.n(); ++i)
      if (r1.fold_ok[static_cast<std::size_t>(i)])
        CHECK(r1.posteriors.row(i).sum() == Catch::Approx(1.0).margin(1e-10));

    LoocvResult omr = loocv(d, CvMethod::OMR, 2, cfg);
    CHECK(std::isfinite(omr.cv));
  }

  SECTION("size preconditions") {
    Dataset d;
    d.X = Eigen::MatrixXd::Random(2, 1);
    d.y = Eigen::VectorXd::Random(2);
    d.Z.resize(2, 0);
    CHECK_THROWS_AS(loocv(d, CvMethod::OLS, 1), DataError);

    // at the mixture boundary every fold is one row short, so all folds fail
    Dataset d7;
    d7.X = Eigen::MatrixXd::Random(7, 1);
    d7.y = Eigen::VectorXd::LinSpaced(7, 0.0, 3.0);
    d7.Z.resize(7, 0);
    CHECK_THROWS_AS(loocv(d7, CvMethod::JMR, 2, quick_cfg(1u, 2, 50)), FitFailedError);
  }
}

TEST_CASE("functional leave-one-curve-out cross validation", "[benchmark]") {
  FunctionalToy toy = make_functional_toy(25, 8181u);

  SECTION("linear-in-scores response is recovered") {
    LoocvResult r = loocv_functional(toy.spec, CvMethod::OLS, 1, quick_cfg(9u, 2, 200));
    CHECK(r.failures == 0);
    CHECK(std::isfinite(r.cv));
    CHECK(r.cv < 0.1);  // noise_sd^2 = 0.01 plus estimation error

    LoocvResult again = loocv_functional(toy.spec, CvMethod::OLS, 1, quick_cfg(9u, 2, 200));
    CHECK(r.cv == again.cv);
    CHECK((r.predictions - again.predictions).norm() == 0.0);
  }

  SECTION("velocity design keeps the endpoint of the original curve") {
    FunctionalDesignSpec vspec = toy.spec;
    vspec.use_velocity = true;
    vspec.endpoint_as_invariant = true;
    FunctionalPrepared prep = prepare_functional(vspec);
    CHECK(prep.smoothed.basis.order() == vspec.order - 1);
    REQUIRE(prep.endpoint.has_value());
    SmoothedCurves plain = smooth_curves(vspec.curves, vspec.order, vspec.n_knots,
                                         vspec.grid_size);
    CHECK((prep.endpoint->values - plain.endpoint_values()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(prep.endpoint->ids == plain.ids);

    // these curves are exactly rank two, so the endpoint is an affine function
    // of the two scores and the invariant-augmented design is singular
    CHECK_THROWS_AS(loocv_functional(vspec, CvMethod::OLS, 1, quick_cfg(9u, 2, 200)),
                    FitFailedError);

    FunctionalDesignSpec scores_only = vspec;
    scores_only.endpoint_as_invariant = false;
    LoocvResult r = loocv_functional(scores_only, CvMethod::OLS, 1, quick_cfg(9u, 2, 200));
    CHECK(r.failures == 0);
    CHECK(std::isfinite(r.cv));
  }

  SECTION("mismatched subjects are rejected") {
    FunctionalDesignSpec bad = toy.spec;
    bad.response.ids[0] = "zz";
    CHECK_THROWS_AS(loocv_functional(bad, CvMethod::OLS, 1), DataError);
  }

  SECTION("too few curves for per-fold FPCA") {
    FunctionalToy tiny = make_functional_toy(4, 3131u);
    tiny.spec.M = 3;
    CHECK_THROWS_AS(loocv_functional(tiny.spec, CvMethod::OLS, 1), FitFailedError);
  }
}

TEST_CASE("cv_threshold_curve restricts to confident subjects", "[benchmark]") {
  Eigen::MatrixXd post(4, 2);
  post << 0.9, 0.1, 0.55, 0.45, 0.7, 0.3, 0.05, 0.95;
  Eigen::VectorXd sq(4);
  sq << 1.0, 4.0, 9.0, 16.0;
  std::vector<bool> ok(4, true);

  SECTION("hand enumeration") {
    std::vector<ThresholdPoint> pts =
        cv_threshold_curve(post, ok, sq, ok, {0.5, 0.6, 0.8, 0.96});
    REQUIRE(pts.size() == 4);
    CHECK(pts[0].retained == 4);
    CHECK(pts[0].present);
    CHECK(pts[0].cv == Catch::Approx(30.0 / 4.0));
    CHECK(pts[1].retained == 3);  // rows 0, 2, 3
    CHECK(pts[1].cv == Catch::Approx((1.0 + 9.0 + 16.0) / 3.0));
    CHECK(pts[2].retained == 2);  // rows 0, 3
    CHECK(pts[2].cv == Catch::Approx((1.0 + 16.0) / 2.0));
    CHECK(pts[3].retained == 0);
    CHECK_FALSE(pts[3].present);
    CHECK(std::isnan(pts[3].cv));
    for (std::size_t i = 1; i < pts.size(); ++i)
      CHECK(pts[i].retained <= pts[i - 1].retained);
  }

  SECTION("rows need both a selection and an error") {
    std::vector<bool> sel_ok = {true, true, true, false};
    std::vector<ThresholdPoint> pts = cv_threshold_curve(post, sel_ok, sq, ok, {0.5});
    CHECK(pts[0].retained == 3);
    CHECK(pts[0].cv == Catch::Approx((1.0 + 4.0 + 9.0) / 3.0));

    std::vector<bool> err_ok = {false, true, true, true};
    pts = cv_threshold_curve(post, ok, sq, err_ok, {0.5});
    CHECK(pts[0].retained == 3);
    CHECK(pts[0].cv == Catch::Approx((4.0 + 9.0 + 16.0) / 3.0));
  }

  SECTION("domain and shape validation") {
    CHECK_THROWS_AS(cv_threshold_curve(post, ok, sq, ok, {0.49}), DataError);
    CHECK_THROWS_AS(cv_threshold_curve(post, ok, sq, ok, {1.0}), DataError);
    REQUIRE_NOTHROW(cv_threshold_curve(post, ok, sq, ok, {0.999}));
    std::vector<bool> short_ok(3, true);
    CHECK_THROWS_AS(cv_threshold_curve(post, short_ok, sq, ok, {0.5}), DataError);
  }

  SECTION("threshold curve from a mixture CV run") {
    Dataset d = make_scenario(1, 24, 3u).train;
    FitConfig cfg = quick_cfg(41u, 2, 300);
    LoocvResult r = loocv(d, CvMethod::JMR, 2, cfg);
    std::vector<ThresholdPoint> pts =
        cv_threshold_curve(r.posteriors, r.fold_ok, r.sq_errors, r.fold_ok,
                           {0.5, 0.7, 0.9});
    CHECK(pts[0].retained == d.n() - r.failures);  // two-component max is at least 0.5
    for (std::size_t i = 1; i < pts.size(); ++i)
      CHECK(pts[i].retained <= pts[i - 1].retained);
  }
}
