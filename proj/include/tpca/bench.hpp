#pragma once

// Config-driven Monte Carlo experiments. Every (grid point, replicate) cell
// draws its ground truth and data from a sub-stream of the config seed, and
// all methods of a cell see the same data. Result rows are written in
// (grid, replicate, method) order whatever the thread count; wall-clock
// times go to a separate file so that results.csv is byte-reproducible.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tpca/baselines.hpp"
#include "tpca/coherence.hpp"
#include "tpca/cp_model.hpp"
#include "tpca/cpca.hpp"
#include "tpca/ico.hpp"
#include "tpca/parallel.hpp"
#include "tpca/random.hpp"
#include "tpca/serialize.hpp"

namespace tpca {

enum class ModelKind { spiked_covariance, noisy_cp };

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m{"cpca", "cpca+ico", "cpca+1ico", "hosvd", "als", "cpca+als", "oals"};
  return m;
}

struct ExperimentConfig {
  std::string name = "experiment";
  ModelKind model = ModelKind::spiked_covariance;
  Shape dims;
  std::size_t rank = 1;
  /// w_max (spiked model, lambda_j = w_j^2) or lambda_max (noisy CP).
  std::vector<double> top_weights;
  /// top/bottom weight ratio; weights are geometrically spaced in between
  double ratio = 1.25;
  double theta = 0.0;
  double sigma = 1.0;
  /// sample sizes (spiked model only)
  std::vector<std::size_t> samples{1};
  std::size_t replicates = 1;
  std::vector<std::string> methods{"cpca"};
  std::uint64_t seed = 1;
  ICOConfig ico;
  ALSConfig als;

  std::size_t grid_size() const { return top_weights.size() * samples.size(); }

  void validate() const {
    detail::require(!dims.empty(), "config: dims must be nonempty");
    for (std::size_t d : dims) detail::require(d >= 1, "config: mode sizes must be positive");
    detail::require(!top_weights.empty() && !samples.empty(), "config: grids must be nonempty");
    for (double w : top_weights) detail::require(w > 0, "config: top weights must be positive");
    detail::require(ratio >= 1, "config: ratio must be >= 1");
    detail::require(replicates >= 1, "config: replicates must be >= 1");
    detail::require(sigma >= 0, "config: sigma must be nonnegative");
    detail::require(rank >= 1, "config: rank must be >= 1");
    for (std::size_t d : dims)
      detail::require(rank <= d, "config: rank " + std::to_string(rank) + " exceeds a mode size");
    detail::require(theta >= 0 && (rank == 1 || theta < 1.0 / static_cast<double>(rank - 1)),
                    "config: coherence theta=" + std::to_string(theta) + " is infeasible for rank " +
                        std::to_string(rank) + " (need theta < 1/(r-1))");
    if (model == ModelKind::spiked_covariance) {
      for (std::size_t n : samples) detail::require(n >= 1, "config: sample sizes must be positive");
    } else {
      detail::require(dims.size() >= 3, "config: the noisy CP model needs order >= 3");
    }
    detail::require(!methods.empty(), "config: no methods");
    for (const auto& m : methods) {
      detail::require(std::find(known_methods().begin(), known_methods().end(), m) != known_methods().end(),
                      "config: unknown method '" + m + "'");
    }
    ico.validate();
    als.validate(rank);
  }
};

inline ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  try {
    c.name = j.value("name", c.name);
    const std::string model = j.at("model").get<std::string>();
    if (model == "spiked-covariance") c.model = ModelKind::spiked_covariance;
    else if (model == "noisy-cp") c.model = ModelKind::noisy_cp;
    else throw InvalidArgument("config: unknown model '" + model + "'");
    c.dims = j.at("dims").get<Shape>();
    c.rank = j.at("rank").get<std::size_t>();
    c.top_weights = j.at("top_weights").get<std::vector<double>>();
    c.ratio = j.value("ratio", c.ratio);
    c.theta = j.value("theta", c.theta);
    c.sigma = j.value("sigma", c.sigma);
    if (j.contains("samples")) c.samples = j.at("samples").get<std::vector<std::size_t>>();
    c.replicates = j.value("replicates", c.replicates);
    if (j.contains("methods")) c.methods = j.at("methods").get<std::vector<std::string>>();
    c.seed = j.value("seed", c.seed);
    if (j.contains("ico")) {
      const auto& i = j.at("ico");
      c.ico.tol = i.value("tol", c.ico.tol);
      c.ico.max_iter = i.value("max_iter", c.ico.max_iter);
      c.ico.ridge = i.value("ridge", c.ico.ridge);
    }
    if (j.contains("als")) {
      const auto& a = j.at("als");
      c.als.restarts = a.value("restarts", c.als.restarts);
      c.als.power_iters = a.value("power_iters", c.als.power_iters);
      c.als.cluster_threshold = a.value("cluster_threshold", c.als.cluster_threshold);
      c.als.max_sweeps = a.value("max_sweeps", c.als.max_sweeps);
      c.als.tol = a.value("tol", c.als.tol);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  if (c.model == ModelKind::noisy_cp) c.samples = {0};
  c.validate();
  return c;
}

inline Json to_json(const ExperimentConfig& c) {
  return Json{{"name", c.name},
              {"model", c.model == ModelKind::spiked_covariance ? "spiked-covariance" : "noisy-cp"},
              {"dims", c.dims},
              {"rank", c.rank},
              {"top_weights", c.top_weights},
              {"ratio", c.ratio},
              {"theta", c.theta},
              {"sigma", c.sigma},
              {"samples", c.samples},
              {"replicates", c.replicates},
              {"methods", c.methods},
              {"seed", c.seed},
              {"ico", {{"tol", c.ico.tol}, {"max_iter", c.ico.max_iter}, {"ridge", c.ico.ridge}}},
              {"als",
               {{"restarts", c.als.restarts},
                {"power_iters", c.als.power_iters},
                {"cluster_threshold", c.als.cluster_threshold},
                {"max_sweeps", c.als.max_sweeps},
                {"tol", c.als.tol}}}};
}

struct ResultRow {
  std::string method;
  std::size_t grid = 0;
  double top_weight = 0;
  std::size_t n = 0;
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";  // ok | failed | unavailable
  double max_error = std::numeric_limits<double>::quiet_NaN();
  double log10_error = std::numeric_limits<double>::quiet_NaN();
  double lambda_rel_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t iterations = 0;
  std::string message;
  double wall_ms = 0;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<ResultRow> rows;
};

/// Seed of replicate `rep` at grid point `grid`.
inline std::uint64_t replicate_seed(std::uint64_t seed, std::size_t grid, std::size_t rep) {
  return derive_seed(seed, {grid, rep});
}

/// Weights of a grid point: lambda_j (noisy CP) or lambda_j = w_j^2 (spiked).
inline Vector model_weights(const ExperimentConfig& c, double top) {
  Vector w = geometric_weights(top, c.ratio, c.rank);
  if (c.model == ModelKind::spiked_covariance) w = w.cwiseAbs2();
  return w;
}

namespace detail {

inline void score(ResultRow& row, const CPDecomposition& est, const CPDecomposition& truth) {
  const MatchResult m = match_components(est, truth);
  row.max_error = m.max_error;
  row.log10_error = std::log10(std::max(m.max_error, 1e-16));
  row.lambda_rel_error = m.lambda_rel_error;
}

inline std::vector<ResultRow> run_cell(const ExperimentConfig& c, std::size_t grid, std::size_t rep) {
  const double top = c.top_weights[grid / c.samples.size()];
  const std::size_t n = c.samples[grid % c.samples.size()];
  const std::uint64_t seed = replicate_seed(c.seed, grid, rep);
  const bool spiked = c.model == ModelKind::spiked_covariance;

  Rng truth_rng(derive_seed(seed, {0}));
  const CPDecomposition truth = make_cp(c.dims, model_weights(c, top), c.theta, truth_rng, spiked);

  std::optional<SampleBatch> batch;
  std::optional<DenseTensor> tensor;  // covariance tensor (spiked) or observed tensor
  if (spiked) {
    batch = gen_spiked_samples(truth, n, c.sigma, derive_seed(seed, {1}));
  } else {
    Rng noise_rng(derive_seed(seed, {1}));
    tensor = gen_noisy_cp(truth, c.sigma, noise_rng);
  }
  auto full_tensor = [&]() -> const DenseTensor& {
    if (!tensor) tensor = covariance_tensor(*batch);
    return *tensor;
  };
  std::optional<CPCAOutput> cpca;
  auto init = [&]() -> const CPCAOutput& {
    if (!cpca) cpca = spiked ? cpca_symmetric(*batch, c.rank) : cpca_general(*tensor, c.rank);
    return *cpca;
  };

  std::vector<ResultRow> rows;
  for (const auto& method : c.methods) {
    ResultRow row;
    row.method = method;
    row.grid = grid;
    row.top_weight = top;
    row.n = n;
    row.replicate = rep;
    row.seed = seed;
    if (method == "oals") {
      row.status = "unavailable";
      row.message = "OALS is not implemented";
      rows.push_back(std::move(row));
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    try {
      CPDecomposition est;
      if (method == "cpca") {
        est = init().estimate;
      } else if (method == "cpca+ico") {
        FitResult f = spiked ? ico_symmetric(*batch, init().estimate, c.ico) : ico_general(*tensor, init().estimate, c.ico);
        row.iterations = f.trace.iterations;
        est = std::move(f.estimate);
      } else if (method == "cpca+1ico") {
        est = spiked ? one_step_update(*batch, init().estimate, c.ico) : one_step_update(*tensor, init().estimate, c.ico);
        row.iterations = 1;
      } else if (method == "hosvd") {
        est = hosvd_init(full_tensor(), c.rank);
      } else if (method == "als") {
        FitResult f = als_randomized(full_tensor(), c.rank, c.als, derive_seed(seed, {2}));
        row.iterations = f.trace.iterations;
        est = std::move(f.estimate);
      } else if (method == "cpca+als") {
        FitResult f = als_refine(full_tensor(), init().estimate, c.als);
        row.iterations = f.trace.iterations;
        est = std::move(f.estimate);
      }
      score(row, est, truth);
    } catch (const Error& e) {
      row.status = "failed";
      row.message = e.what();
    }
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

inline std::string csv_number(double x) {
  if (std::isnan(x)) return "";
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << x;
  return os.str();
}

// Linear-interpolation quantile of sorted data.
inline double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t threads = 1) {
  cfg.validate();
  const std::size_t cells = cfg.grid_size() * cfg.replicates;
  std::vector<std::vector<ResultRow>> out(cells);
  parallel_for(cells, threads, [&](std::size_t i) {
    out[i] = detail::run_cell(cfg, i / cfg.replicates, i % cfg.replicates);
  });
  ExperimentResult res;
  res.config = cfg;
  for (auto& rows : out)
    for (auto& row : rows) res.rows.push_back(std::move(row));
  return res;
}

inline void write_results_csv(std::ostream& os, const ExperimentResult& res) {
  os << "method,grid,top_weight,n,replicate,seed,status,max_error,log10_error,lambda_rel_error,iterations,message\n";
  for (const auto& r : res.rows) {
    os << detail::csv_field(r.method) << ',' << r.grid << ',' << detail::csv_number(r.top_weight) << ',' << r.n << ','
       << r.replicate << ',' << r.seed << ',' << r.status << ',' << detail::csv_number(r.max_error) << ','
       << detail::csv_number(r.log10_error) << ',' << detail::csv_number(r.lambda_rel_error) << ',' << r.iterations
       << ',' << detail::csv_field(r.message) << '\n';
  }
}

inline void write_timing_csv(std::ostream& os, const ExperimentResult& res) {
  os << "method,grid,replicate,wall_ms\n";
  for (const auto& r : res.rows) {
    if (r.status == "unavailable") continue;
    os << detail::csv_field(r.method) << ',' << r.grid << ',' << r.replicate << ',' << detail::csv_number(r.wall_ms)
       << '\n';
  }
}

struct CellSummary {
  std::size_t grid = 0;
  std::string method;
  std::size_t ok = 0, failed = 0;
  double median = std::numeric_limits<double>::quiet_NaN();  // of log10 error
  double q1 = std::numeric_limits<double>::quiet_NaN();
  double q3 = std::numeric_limits<double>::quiet_NaN();
};

/// Per (grid point, method) median and quartiles of the log10 error.
inline std::vector<CellSummary> summarize_cells(const ExperimentResult& res) {
  std::vector<CellSummary> out;
  for (std::size_t g = 0; g < res.config.grid_size(); ++g) {
    for (const auto& m : res.config.methods) {
      if (m == "oals") continue;
      CellSummary s;
      s.grid = g;
      s.method = m;
      std::vector<double> v;
      for (const auto& r : res.rows) {
        if (r.grid != g || r.method != m) continue;
        if (r.status == "ok") v.push_back(r.log10_error);
        else ++s.failed;
      }
      std::sort(v.begin(), v.end());
      s.ok = v.size();
      s.median = detail::quantile(v, 0.5);
      s.q1 = detail::quantile(v, 0.25);
      s.q3 = detail::quantile(v, 0.75);
      out.push_back(s);
    }
  }
  return out;
}

inline Json summary_json(const ExperimentResult& res) {
  const auto& c = res.config;
  const auto cells = summarize_cells(res);
  Json jc = Json::array();
  for (const auto& s : cells) {
    jc.push_back({{"grid", s.grid},
                  {"top_weight", c.top_weights[s.grid / c.samples.size()]},
                  {"n", c.samples[s.grid % c.samples.size()]},
                  {"method", s.method},
                  {"ok", s.ok},
                  {"failed", s.failed},
                  {"median_log10_error", detail::number(s.median)},
                  {"q1_log10_error", detail::number(s.q1)},
                  {"q3_log10_error", detail::number(s.q3)}});
  }
  Json orderings = Json::array();
  for (std::size_t g = 0; g < c.grid_size(); ++g) {
    std::vector<const CellSummary*> here;
    for (const auto& s : cells)
      if (s.grid == g && s.ok > 0) here.push_back(&s);
    std::stable_sort(here.begin(), here.end(), [](auto a, auto b) { return a->median < b->median; });
    Json ranking = Json::array();
    for (auto* s : here) ranking.push_back(s->method);
    Json pairs = Json::array();
    for (std::size_t i = 0; i < here.size(); ++i)
      for (std::size_t j = i + 1; j < here.size(); ++j)
        pairs.push_back({{"lower", here[i]->method}, {"higher", here[j]->method},
                         {"difference", here[j]->median - here[i]->median}});
    orderings.push_back({{"grid", g}, {"ranking_by_median", ranking}, {"pairwise", pairs}});
  }
  Json runtime = Json::object();
  for (const auto& m : c.methods) {
    if (m == "oals") continue;
    std::vector<double> t;
    for (const auto& r : res.rows)
      if (r.method == m && r.status == "ok") t.push_back(r.wall_ms);
    double mean = 0, sd = 0;
    for (double x : t) mean += x;
    if (!t.empty()) mean /= static_cast<double>(t.size());
    for (double x : t) sd += (x - mean) * (x - mean);
    if (t.size() > 1) sd = std::sqrt(sd / static_cast<double>(t.size() - 1));
    runtime[m] = {{"mean_ms", mean}, {"sd_ms", sd}, {"count", t.size()}};
  }
  Json labels = Json::object();
  for (const auto& m : c.methods) {
    if (m == "als" || m == "cpca+als") labels[m] = "ALS (this implementation)";
    if (m == "oals") labels[m] = "unavailable";
  }
  return Json{{"config", to_json(c)},
              {"rng", kRngDescription},
              {"method_labels", labels},
              {"cells", jc},
              {"orderings", orderings},
              {"runtime", runtime}};
}

/// results.csv, timing.csv and summary.json under `dir`.
inline void write_experiment(const ExperimentResult& res, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  {
    std::ofstream os(base / "results.csv", std::ios::binary);
    if (!os) throw InvalidArgument("cannot write to " + dir);
    write_results_csv(os, res);
  }
  {
    std::ofstream os(base / "timing.csv", std::ios::binary);
    write_timing_csv(os, res);
  }
  save_json((base / "summary.json").string(), summary_json(res));
}

}  // namespace tpca
