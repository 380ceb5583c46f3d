#ifndef MIXREG_SERIALIZE_HPP
#define MIXREG_SERIALIZE_HPP

#include <json.hpp>

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>

#include "mixreg/csv.hpp"
#include "mixreg/errors.hpp"
#include "mixreg/fpca.hpp"
#include "mixreg/model.hpp"
#include "mixreg/mspe.hpp"

namespace mixreg {

inline constexpr int kSchemaVersion = 1;

// Doubles travel as shortest-round-trip decimal strings so that
// parse(serialize(m)) == m bit-exactly for all finite values.
namespace detail {

inline nlohmann::json num(double v) { return nlohmann::json(format_double(v)); }

inline double asnum(const nlohmann::json& j, const std::string& what) {
  if (!j.is_string()) throw DataError(what + ": expected a number encoded as a string");
  return parse_double(j.get<std::string>(), what);
}

inline nlohmann::json vec(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
  return a;
}

inline Eigen::VectorXd asvec(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw DataError(what + ": expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = asnum(j[i], what);
  return v;
}

inline nlohmann::json lower_triangle(const Eigen::MatrixXd& m) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j <= i; ++j) a.push_back(num(m(i, j)));
  return a;
}

inline Eigen::MatrixXd from_lower_triangle(const nlohmann::json& j, Eigen::Index p,
                                           const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != p * (p + 1) / 2)
    throw DataError(what + ": wrong lower-triangle length");
  Eigen::MatrixXd m(p, p);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index jj = 0; jj <= i; ++jj) {
      m(i, jj) = asnum(j[k++], what);
      m(jj, i) = m(i, jj);
    }
  return m;
}

inline const nlohmann::json& field(const nlohmann::json& j, const char* key,
                                   const std::string& what) {
  auto it = j.find(key);
  if (it == j.end()) throw DataError(what + ": missing field '" + key + "'");
  return *it;
}

}  // namespace detail

struct FitMetadata {
  std::uint64_t seed = 0;
  double loglik = 0.0;
  double bic = 0.0;
  int iterations = 0;
};

struct ModelDocument {
  int schema_version = kSchemaVersion;
  MixtureModel model;
  std::optional<EigenSystem> eigen;
  std::optional<FitMetadata> fit;
};

inline nlohmann::json eigen_to_json(const EigenSystem& e) {
  nlohmann::json j;
  j["grid"] = detail::vec(e.grid);
  j["mean"] = detail::vec(e.mean);
  j["eigenvalues"] = detail::vec(e.eigenvalues);
  nlohmann::json funcs = nlohmann::json::array();
  for (Eigen::Index c = 0; c < e.eigenfunctions.cols(); ++c)
    funcs.push_back(detail::vec(e.eigenfunctions.col(c)));
  j["eigenfunctions"] = funcs;
  j["cum_var"] = detail::vec(e.cum_var);
  j["total_variance"] = detail::num(e.total_variance);
  return j;
}

inline EigenSystem eigen_from_json(const nlohmann::json& j) {
  EigenSystem e;
  e.grid = detail::asvec(detail::field(j, "grid", "eigen"), "eigen.grid");
  e.qweights = trapezoid_weights(e.grid);
  e.mean = detail::asvec(detail::field(j, "mean", "eigen"), "eigen.mean");
  e.eigenvalues = detail::asvec(detail::field(j, "eigenvalues", "eigen"), "eigen.eigenvalues");
  const auto& funcs = detail::field(j, "eigenfunctions", "eigen");
  if (!funcs.is_array() || funcs.size() != static_cast<std::size_t>(e.eigenvalues.size()))
    throw DataError("eigen.eigenfunctions: wrong count");
  e.eigenfunctions.resize(e.grid.size(), e.eigenvalues.size());
  for (std::size_t c = 0; c < funcs.size(); ++c) {
    Eigen::VectorXd col = detail::asvec(funcs[c], "eigen.eigenfunctions");
    if (col.size() != e.grid.size()) throw DataError("eigen.eigenfunctions: wrong grid length");
    e.eigenfunctions.col(static_cast<Eigen::Index>(c)) = col;
  }
  e.cum_var = detail::asvec(detail::field(j, "cum_var", "eigen"), "eigen.cum_var");
  e.total_variance = detail::asnum(detail::field(j, "total_variance", "eigen"),
                                   "eigen.total_variance");
  return e;
}

inline nlohmann::json model_to_json(const ModelDocument& doc) {
  const MixtureModel& m = doc.model;
  nlohmann::json j;
  j["schema_version"] = doc.schema_version;
  j["kind"] = to_string(m.kind);
  j["K"] = m.K();
  j["p"] = m.p();
  j["q"] = m.q();
  j["pi"] = detail::vec(m.pi);
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : m.components) {
    nlohmann::json cj;
    cj["alpha"] = detail::num(c.alpha);
    cj["zeta"] = detail::vec(c.zeta);
    cj["beta"] = detail::vec(c.beta);
    cj["sigma2"] = detail::num(c.sigma2);
    cj["mu"] = detail::vec(c.mu);
    cj["Sigma"] = detail::lower_triangle(c.Sigma);
    comps.push_back(cj);
  }
  j["components"] = comps;
  if (doc.eigen) j["eigen_system"] = eigen_to_json(*doc.eigen);
  if (doc.fit) {
    nlohmann::json f;
    f["seed"] = doc.fit->seed;
    f["loglik"] = detail::num(doc.fit->loglik);
    f["bic"] = detail::num(doc.fit->bic);
    f["iterations"] = doc.fit->iterations;
    j["fit"] = f;
  }
  return j;
}

inline ModelDocument model_from_json(const nlohmann::json& j) {
  ModelDocument doc;
  doc.schema_version = detail::field(j, "schema_version", "model").get<int>();
  if (doc.schema_version != kSchemaVersion)
    throw DataError("unsupported schema_version " + std::to_string(doc.schema_version));
  MixtureModel& m = doc.model;
  m.kind = kind_from_string(detail::field(j, "kind", "model").get<std::string>());
  m.pi = detail::asvec(detail::field(j, "pi", "model"), "model.pi");
  const int K = detail::field(j, "K", "model").get<int>();
  const auto p = detail::field(j, "p", "model").get<Eigen::Index>();
  const auto& comps = detail::field(j, "components", "model");
  if (!comps.is_array() || static_cast<int>(comps.size()) != K || m.pi.size() != K)
    throw DataError("model: component count disagrees with K");
  for (const auto& cj : comps) {
    Component c;
    c.alpha = detail::asnum(detail::field(cj, "alpha", "component"), "component.alpha");
    c.zeta = detail::asvec(detail::field(cj, "zeta", "component"), "component.zeta");
    c.beta = detail::asvec(detail::field(cj, "beta", "component"), "component.beta");
    c.sigma2 = detail::asnum(detail::field(cj, "sigma2", "component"), "component.sigma2");
    c.mu = detail::asvec(detail::field(cj, "mu", "component"), "component.mu");
    c.Sigma = detail::from_lower_triangle(detail::field(cj, "Sigma", "component"), c.mu.size(),
                                          "component.Sigma");
    m.components.push_back(std::move(c));
  }
  if (m.p() != p) throw DataError("model: stated p disagrees with component dimensions");
  if (j.contains("eigen_system")) doc.eigen = eigen_from_json(j["eigen_system"]);
  if (j.contains("fit")) {
    const auto& f = j["fit"];
    FitMetadata meta;
    meta.seed = detail::field(f, "seed", "fit").get<std::uint64_t>();
    meta.loglik = detail::asnum(detail::field(f, "loglik", "fit"), "fit.loglik");
    meta.bic = detail::asnum(detail::field(f, "bic", "fit"), "fit.bic");
    meta.iterations = detail::field(f, "iterations", "fit").get<int>();
    doc.fit = meta;
  }
  return doc;
}

inline std::string serialize_model(const ModelDocument& doc) {
  return model_to_json(doc).dump(2) + "\n";
}

inline ModelDocument parse_model(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("invalid model JSON: ") + e.what());
  }
  return model_from_json(j);
}

inline void write_model_json(const std::string& path, const ModelDocument& doc) {
  atomic_write(path, serialize_model(doc));
}

inline ModelDocument read_model_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

inline nlohmann::json mspe_report_to_json(const MspeReport& rep) {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["sigma_bar"] = detail::num(rep.sigma_bar);
  j["mc_n"] = rep.mc_n;
  auto est = [](const MonteCarloEstimate& e) {
    nlohmann::json x;
    x["value"] = detail::num(e.value);
    x["std_error"] = detail::num(e.std_error);
    return x;
  };
  j["excess_adaptive"] = est(rep.excess_adaptive);
  j["excess_fixed"] = est(rep.excess_fixed);
  if (rep.excess_biased) j["excess_biased"] = est(*rep.excess_biased);
  return j;
}

}  // namespace mixreg

#endif  // MIXREG_SERIALIZE_HPP
