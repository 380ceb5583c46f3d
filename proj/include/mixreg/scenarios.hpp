#ifndef MIXREG_SCENARIOS_HPP
#define MIXREG_SCENARIOS_HPP

#include <Eigen/Dense>
#include <cstdint>

#include "mixreg/dataset.hpp"
#include "mixreg/errors.hpp"
#include "mixreg/model.hpp"
#include "mixreg/rng.hpp"

namespace mixreg {

/// Simulation scenario: a K=2, p=2 generating model with shared mixing
/// proportions (0.6, 0.4) and error variances 0.09.
///
///   1 - covariates and responses both well separated by group
///   2 - common covariate means, covariances I vs diag(4, 0.25)
///   3 - covariates separated, group response means coincide
///   4 - identical covariate components (homogeneous X)
struct Scenario {
  int id = 1;
  MixtureModel truth;
  Eigen::Index train_n = 300;
  Eigen::Index test_n = 500;
};

struct ScenarioData {
  Scenario scenario;
  Dataset train;
  Dataset test;
};

inline MixtureModel scenario_model(int id) {
  auto comp = [](double alpha, double b1, double b2, double m1, double m2,
                 const Eigen::Matrix2d& sigma) {
    Component c;
    c.alpha = alpha;
    c.beta = Eigen::Vector2d(b1, b2);
    c.zeta = Eigen::VectorXd();
    c.sigma2 = 0.09;
    c.mu = Eigen::Vector2d(m1, m2);
    c.Sigma = sigma;
    return c;
  };
  const Eigen::Matrix2d eye = Eigen::Matrix2d::Identity();

  MixtureModel m;
  m.kind = ModelKind::JMR;
  m.pi = Eigen::Vector2d(0.6, 0.4);
  switch (id) {
    case 1:
      m.components = {comp(0.0, 1.0, 1.0, -2.0, -2.0, eye), comp(0.0, 1.0, 2.0, 2.0, 2.0, eye)};
      break;
    case 2: {
      Eigen::Matrix2d s2 = Eigen::Vector2d(4.0, 0.25).asDiagonal();
      m.components = {comp(-3.0, 1.0, -1.0, 0.0, 0.0, eye), comp(3.0, 1.0, 2.0, 0.0, 0.0, s2)};
      break;
    }
    case 3:
      // alpha = (0, 2) makes the group response means coincide:
      // 0 + (1,-2).(-2,-2) = 2 and 2 + (-1,1).(2,2) = 2.
      m.components = {comp(0.0, 1.0, -2.0, -2.0, -2.0, eye), comp(2.0, -1.0, 1.0, 2.0, 2.0, eye)};
      break;
    case 4:
      m.components = {comp(-3.0, 1.0, -2.0, 0.0, 0.0, eye), comp(3.0, -1.0, 1.0, 0.0, 0.0, eye)};
      break;
    default:
      throw DataError("unknown scenario id (expected 1..4)");
  }
  m.validate();
  return m;
}

/// Independent train/test draws from the scenario model; truth labels filled.
inline ScenarioData make_scenario(int id, Eigen::Index train_n, std::uint64_t seed,
                                  Eigen::Index test_n = 500) {
  Scenario sc;
  sc.id = id;
  sc.truth = scenario_model(id);
  sc.train_n = train_n;
  sc.test_n = test_n;
  ScenarioData data;
  data.scenario = sc;
  data.train = sample(sc.truth, train_n, derive_seed(seed, 0x747261696e, static_cast<std::uint64_t>(id)));
  data.test = sample(sc.truth, test_n, derive_seed(seed, 0x74657374, static_cast<std::uint64_t>(id)));
  return data;
}

}  // namespace mixreg

#endif  // MIXREG_SCENARIOS_HPP
