#pragma once

// JSON documents for decompositions and diagnostics, CSV for fit traces.

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tpca/coherence.hpp"
#include "tpca/cp_model.hpp"
#include "tpca/error.hpp"
#include "tpca/ico.hpp"
#include "tpca/propcheck.hpp"

namespace tpca {

using Json = nlohmann::ordered_json;

namespace detail {

// JSON has no infinities; they are written as the strings "inf" / "-inf".
inline Json number(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return nullptr;
  return x;
}

inline Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v[i]));
  return a;
}

inline Json matrix_json(const Matrix& m) {
  Json data = Json::array();
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) data.push_back(number(m(i, j)));
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline double json_double(const Json& j, const std::string& what) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw InvalidArgument(what + ": expected a number");
}

inline Matrix matrix_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data"))
    throw InvalidArgument("matrix JSON needs rows, cols and data");
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows <= 0 || cols <= 0 || data.size() != static_cast<std::size_t>(rows * cols))
    throw InvalidArgument("matrix JSON: data length does not match rows x cols");
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < rows * cols; ++k) m(k % rows, k / rows) = json_double(data[static_cast<std::size_t>(k)], "matrix entry");
  return m;
}

}  // namespace detail

inline Json to_json(const CPDecomposition& cp) {
  Json factors = Json::array();
  for (const auto& a : cp.factors) factors.push_back(detail::matrix_json(a));
  Json shape = Json::array();
  for (std::size_t d : cp.shape()) shape.push_back(d);
  return Json{{"rank", cp.rank()},
              {"shape", std::move(shape)},
              {"symmetric_pair", cp.symmetric_pair},
              {"weights", detail::vector_json(cp.weights)},
              {"factors", std::move(factors)}};
}

inline CPDecomposition cp_from_json(const Json& j) {
  try {
    CPDecomposition cp;
    cp.symmetric_pair = j.value("symmetric_pair", false);
    const auto& w = j.at("weights");
    cp.weights.resize(static_cast<Eigen::Index>(w.size()));
    for (std::size_t i = 0; i < w.size(); ++i) cp.weights[static_cast<Eigen::Index>(i)] = detail::json_double(w[i], "weight");
    for (const auto& f : j.at("factors")) cp.factors.push_back(detail::matrix_from_json(f));
    detail::require(!cp.factors.empty(), "decomposition JSON has no factors");
    for (const auto& a : cp.factors)
      detail::require(a.cols() == cp.weights.size(), "decomposition JSON: factor column count does not match rank");
    return cp;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed decomposition JSON: ") + e.what());
  }
}

inline Json to_json(const CoherenceReport& rep) {
  Json subset = Json::array();
  for (std::size_t k : rep.subset) subset.push_back(k);
  return Json{{"theta_k", detail::vector_json(rep.theta_k)},
              {"delta_k", detail::vector_json(rep.delta_k)},
              {"eta", detail::matrix_json(rep.eta)},
              {"theta", rep.theta},
              {"delta", rep.delta},
              {"subset", std::move(subset)},
              {"theta_S", rep.theta_s},
              {"delta_S", rep.delta_s},
              {"mu_S", detail::number(rep.mu_s)},
              {"bounds",
               {{"min_delta_k", {{"bound", rep.bound_min_delta}, {"slack", rep.slack_min_delta()}}},
                {"theta_S", {{"bound", rep.bound_theta_s}, {"slack", rep.slack_theta_s()}}},
                {"theta_product", {{"bound", rep.bound_theta_prod}, {"slack", rep.slack_theta_prod()}}},
                {"mu_eta", {{"bound", detail::number(rep.bound_mu_eta)}, {"slack", detail::number(rep.slack_mu_eta())}}},
                {"mu_delta",
                 {{"bound", detail::number(rep.bound_mu_delta)}, {"slack", detail::number(rep.slack_mu_delta())}}}}}};
}

inline Json to_json(const RateBundle& b) {
  return Json{{"snr", detail::number(b.snr)},
              {"r_eff", b.r_eff},
              {"R0", b.r0},
              {"R_ideal", detail::matrix_json(b.r_ideal)},
              {"R_ideal_phi", detail::matrix_json(b.r_ideal_phi)},
              {"R_star", detail::matrix_json(b.r_star)},
              {"R_star_phi", detail::matrix_json(b.r_star_phi)},
              {"alpha", b.alpha},
              {"alpha_star", b.alpha_star},
              {"rho", detail::number(b.rho)},
              {"rho1", detail::number(b.rho1)},
              {"rho_star", detail::number(b.rho_star)},
              {"phi0", detail::number(b.phi0)},
              {"phi0_star", detail::number(b.phi0_star)},
              {"eps", detail::matrix_json(b.eps)},
              {"eps_star", detail::matrix_json(b.eps_star)}};
}

inline Json to_json(const CheckReport& rep) {
  Json j{{"prop", rep.prop},
         {"passed", rep.passed},
         {"trials", rep.trials},
         {"attempted", rep.attempted},
         {"compliant", rep.compliant},
         {"skipped_vacuous", rep.skipped},
         {"min_margin", detail::number(rep.min_margin)},
         {"violating_seed", nullptr}};
  if (rep.violating_seed) j["violating_seed"] = *rep.violating_seed;
  if (rep.prop == 5) j["near_sharp"] = rep.near_sharp;
  return j;
}

/// sweep,mode,max_update[,max_true_error][,objective]
inline void write_trace_csv(std::ostream& os, const FitTrace& trace) {
  bool has_err = false, has_obj = false;
  for (const auto& row : trace.rows) {
    has_err = has_err || row.max_true_error.has_value();
    has_obj = has_obj || row.objective.has_value();
  }
  os << "sweep,mode,max_update";
  if (has_err) os << ",max_true_error";
  if (has_obj) os << ",objective";
  os << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& row : trace.rows) {
    os << row.sweep << ',' << row.mode << ',' << row.max_update;
    if (has_err) {
      os << ',';
      if (row.max_true_error) os << *row.max_true_error;
    }
    if (has_obj) {
      os << ',';
      if (row.objective) os << *row.objective;
    }
    os << '\n';
  }
}

inline Json load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidArgument("cannot open " + path);
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

inline void save_json(const std::string& path, const Json& j) {
  std::ofstream os(path);
  if (!os) throw InvalidArgument("cannot open " + path + " for writing");
  os << j.dump(2) << '\n';
}

}  // namespace tpca
