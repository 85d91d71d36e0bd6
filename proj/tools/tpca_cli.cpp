// Command-line front end: generate synthetic data, fit decompositions,
// report diagnostics, certify the perturbation inequalities and run
// benchmark configs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tpca/tpca.hpp"

namespace fs = std::filesystem;
using namespace tpca;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  std::size_t threads = default_threads();
  std::string out_dir = ".";
  std::string format = "json";
};

struct GenerateOpts {
  std::string model = "noisy-cp";
  std::vector<std::size_t> dims;
  std::size_t rank = 3;
  double theta = 0.0;
  double top_weight = 10.0;
  double ratio = 1.25;
  double sigma = 1.0;
  std::size_t samples = 400;
};

struct FitOpts {
  std::string method = "cpca+ico";
  std::string input;
  std::string init;
  std::string truth;
  std::size_t rank = 0;
  bool symmetric = false;
  bool samples = false;
  ICOConfig ico;
  ALSConfig als;
};

struct DiagnoseOpts {
  std::string truth;
  std::vector<std::size_t> subset;
  double sigma = 1.0;
  double samples = 400;
  double psi0 = 0.1;
  double c0 = 1.0;
};

struct VerifyOpts {
  std::vector<int> props;
  std::size_t trials = 1000;
};

fs::path out_path(const Globals& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return fs::path(g.out_dir) / name;
}

void emit(const Globals& g, const Json& j) {
  if (g.format == "json") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::cout << "key,value\n";
  for (const auto& [k, v] : j.items()) std::cout << k << ',' << (v.is_string() ? v.get<std::string>() : v.dump()) << '\n';
}

SampleBatch batch_from_stacked(const DenseTensor& t) {
  detail::require(t.order() >= 2, "sample file must have order >= 2 (sample index last)");
  SampleBatch b;
  b.shape = Shape(t.shape().begin(), t.shape().end() - 1);
  const auto n = static_cast<Eigen::Index>(t.shape().back());
  b.data = Eigen::Map<const Matrix>(t.data().data(), static_cast<Eigen::Index>(t.size()) / n, n);
  return b;
}

int run_generate(const Globals& g, const GenerateOpts& o) {
  detail::require(!o.dims.empty(), "generate: --dims is required");
  Rng rng(derive_seed(g.seed, {0}));
  const bool spiked = o.model == "spiked-covariance";
  detail::require(spiked || o.model == "noisy-cp", "generate: unknown model '" + o.model + "'");
  Vector w = geometric_weights(o.top_weight, o.ratio, o.rank);
  if (spiked) w = w.cwiseAbs2();
  const CPDecomposition truth = make_cp(o.dims, w, o.theta, rng, spiked);
  save_json(out_path(g, "truth.json").string(), to_json(truth));
  Json j{{"truth", out_path(g, "truth.json").string()}};
  if (spiked) {
    const SampleBatch batch = gen_spiked_samples(truth, o.samples, o.sigma, derive_seed(g.seed, {1}));
    save_tensor(out_path(g, "samples.tns").string(), batch.stacked());
    save_tensor(out_path(g, "tensor.tns").string(), covariance_tensor(batch));
    j["samples"] = out_path(g, "samples.tns").string();
  } else {
    Rng noise(derive_seed(g.seed, {1}));
    save_tensor(out_path(g, "tensor.tns").string(), gen_noisy_cp(truth, o.sigma, noise));
  }
  j["tensor"] = out_path(g, "tensor.tns").string();
  emit(g, j);
  return 0;
}

int run_fit(const Globals& g, FitOpts o) {
  detail::require(!o.input.empty(), "fit: --input is required");
  const DenseTensor input = load_tensor(o.input);
  std::optional<CPDecomposition> truth;
  if (!o.truth.empty()) truth = cp_from_json(load_json(o.truth));
  const CPDecomposition* tp = truth ? &*truth : nullptr;

  std::optional<SampleBatch> batch;
  if (o.samples) batch = batch_from_stacked(input);
  const bool paired = o.samples || o.symmetric;
  std::optional<DenseTensor> cov;
  auto tensor = [&]() -> const DenseTensor& {
    if (!batch) return input;
    if (!cov) cov = covariance_tensor(*batch);
    return *cov;
  };
  std::size_t rank = o.rank;
  std::optional<CPDecomposition> init;
  if (!o.init.empty()) {
    init = cp_from_json(load_json(o.init));
    if (rank == 0) rank = init->rank();
  }
  detail::require(rank >= 1, "fit: --rank is required");

  auto cpca = [&]() {
    if (batch) return cpca_symmetric(*batch, rank).estimate;
    if (o.symmetric) return cpca_symmetric(input, rank).estimate;
    return cpca_general(input, rank).estimate;
  };
  auto ico = [&](const CPDecomposition& start) {
    if (batch) return ico_symmetric(*batch, start, o.ico, tp);
    if (o.symmetric) return ico_symmetric(input, start, o.ico, tp);
    return ico_general(input, start, o.ico, tp);
  };

  std::optional<FitTrace> trace;
  CPDecomposition est;
  const std::string& m = o.method;
  if (m == "cpca") {
    est = cpca();
  } else if (m == "cpca+ico" || m == "ico") {
    CPDecomposition start;
    if (m == "ico") {
      detail::require(init.has_value(), "fit: --method ico needs --init");
      start = *init;
      start.symmetric_pair = paired;
    } else {
      start = cpca();
    }
    FitResult f = ico(start);
    est = std::move(f.estimate);
    trace = std::move(f.trace);
  } else if (m == "cpca+1ico") {
    o.ico.max_iter = 1;
    o.ico.tol = 0;
    FitResult f = ico(cpca());
    est = std::move(f.estimate);
    trace = std::move(f.trace);
  } else if (m == "hosvd") {
    est = hosvd_init(tensor(), rank);
  } else if (m == "als" || m == "cpca+als") {
    FitResult f = m == "als" ? als_randomized(tensor(), rank, o.als, derive_seed(g.seed, {2}), tp)
                             : als_refine(tensor(), cpca(), o.als, tp);
    est = std::move(f.estimate);
    trace = std::move(f.trace);
  } else {
    throw InvalidArgument("fit: unknown method '" + m + "'");
  }

  save_json(out_path(g, "decomposition.json").string(), to_json(est));
  Json j{{"method", m}, {"decomposition", out_path(g, "decomposition.json").string()}, {"rank", est.rank()}};
  if (trace) {
    std::ofstream os(out_path(g, "trace.csv"));
    write_trace_csv(os, *trace);
    j["trace"] = out_path(g, "trace.csv").string();
    j["iterations"] = trace->iterations;
    j["stop"] = to_string(trace->stop);
  }
  if (truth) {
    const MatchResult mr = match_components(est, *truth);
    j["max_error"] = mr.max_error;
    j["lambda_rel_error"] = mr.lambda_rel_error;
  }
  emit(g, j);
  return 0;
}

int run_diagnose(const Globals& g, const DiagnoseOpts& o) {
  detail::require(!o.truth.empty(), "diagnose: --truth is required");
  CPDecomposition truth = cp_from_json(load_json(o.truth));
  truth.validate(1e-8);
  const CoherenceReport rep = coherence_report(truth.factors, o.subset);
  RateInputs in;
  in.lambdas = truth.weights;
  in.sigma = o.sigma;
  in.n = o.samples;
  for (const auto& a : truth.factors) in.dims.push_back(static_cast<std::size_t>(a.rows()));
  in.psi0 = o.psi0;
  in.c0 = o.c0;
  in.delta_max = rep.delta_k.maxCoeff();
  Json j{{"coherence", to_json(rep)}, {"rates", to_json(snr_and_rates(in))}};
  save_json(out_path(g, "diagnose.json").string(), j);
  if (g.format == "json") std::cout << j.dump(2) << '\n';
  else emit(g, Json{{"delta", rep.delta}, {"theta", rep.theta}, {"report", out_path(g, "diagnose.json").string()}});
  return 0;
}

int run_verify(const Globals& g, const VerifyOpts& o) {
  const std::vector<int> props = o.props.empty() ? checkable_props() : o.props;
  Json reports = Json::array();
  bool ok = true;
  for (int p : props) {
    const CheckReport rep = check_prop(p, o.trials, g.seed, g.threads);
    ok = ok && rep.passed;
    reports.push_back(to_json(rep));
  }
  save_json(out_path(g, "verify.json").string(), reports);
  if (g.format == "json") {
    std::cout << reports.dump(2) << '\n';
  } else {
    std::cout << "prop,passed,compliant,skipped,min_margin,violating_seed\n";
    for (const auto& r : reports)
      std::cout << r["prop"] << ',' << (r["passed"].get<bool>() ? "PASS" : "FAIL") << ',' << r["compliant"] << ','
                << r["skipped_vacuous"] << ',' << r["min_margin"].dump() << ',' << r["violating_seed"].dump() << '\n';
  }
  if (!ok) {
    std::cerr << "verification failed\n";
    return 2;
  }
  return 0;
}

int run_bench(const Globals& g, const std::string& config) {
  detail::require(!config.empty(), "bench: --config is required");
  const ExperimentConfig cfg = config_from_json(load_json(config));
  const ExperimentResult res = run_experiment(cfg, g.threads);
  write_experiment(res, g.out_dir);
  if (g.format == "json") {
    std::cout << summary_json(res).dump(2) << '\n';
  } else {
    write_results_csv(std::cout, res);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Composite PCA and ICO for CP decomposition"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--threads", g.threads, "Worker threads (default: TPCA_THREADS or 1)")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", g.out_dir, "Directory for output files");
  app.add_option("--format", g.format, "Console output format")->check(CLI::IsMember({"csv", "json"}));

  GenerateOpts gen;
  auto* c_gen = app.add_subcommand("generate", "Write a synthetic tensor and its ground truth");
  c_gen->add_option("--model", gen.model)->check(CLI::IsMember({"spiked-covariance", "noisy-cp"}));
  c_gen->add_option("--dims", gen.dims, "Mode sizes, e.g. 20,20,20")->delimiter(',')->required();
  c_gen->add_option("--rank", gen.rank);
  c_gen->add_option("--theta", gen.theta, "Pairwise inner product of factor columns");
  c_gen->add_option("--top-weight", gen.top_weight, "w_max (spiked) or lambda_max (noisy CP)");
  c_gen->add_option("--ratio", gen.ratio);
  c_gen->add_option("--sigma", gen.sigma);
  c_gen->add_option("--samples", gen.samples, "Sample size (spiked model)");

  FitOpts fit;
  auto* c_fit = app.add_subcommand("fit", "Fit a CP decomposition to a tensor file");
  c_fit->add_option("--method", fit.method)
      ->check(CLI::IsMember({"cpca", "cpca+ico", "ico", "cpca+1ico", "hosvd", "als", "cpca+als"}));
  c_fit->add_option("--input", fit.input, "Tensor file")->required();
  c_fit->add_option("--rank", fit.rank);
  c_fit->add_option("--init", fit.init, "Initial decomposition JSON (method ico)");
  c_fit->add_option("--truth", fit.truth, "Ground truth JSON for error reporting");
  c_fit->add_flag("--symmetric", fit.symmetric, "Input is a pairwise-symmetric covariance tensor");
  c_fit->add_flag("--samples", fit.samples, "Input holds samples, sample index last");
  c_fit->add_option("--tol", fit.ico.tol);
  c_fit->add_option("--max-iter", fit.ico.max_iter);
  c_fit->add_option("--ridge", fit.ico.ridge);
  c_fit->add_option("--restarts", fit.als.restarts);

  DiagnoseOpts diag;
  auto* c_diag = app.add_subcommand("diagnose", "Coherence report and rates for a ground-truth file");
  c_diag->add_option("--truth", diag.truth)->required();
  c_diag->add_option("--subset", diag.subset, "Mode subset S (zero-based)")->delimiter(',');
  c_diag->add_option("--sigma", diag.sigma);
  c_diag->add_option("--samples", diag.samples);
  c_diag->add_option("--psi0", diag.psi0);
  c_diag->add_option("--c0", diag.c0);

  VerifyOpts ver;
  auto* c_ver = app.add_subcommand("verify", "Monte Carlo certification of the perturbation bounds");
  c_ver->add_option("--prop", ver.props, "Proposition number(s)")->check(CLI::IsMember({1, 2, 3, 4, 5, 7, 8}));
  c_ver->add_option("--trials", ver.trials)->check(CLI::PositiveNumber);

  std::string config;
  auto* c_bench = app.add_subcommand("bench", "Run a benchmark config");
  c_bench->add_option("--config", config)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 1;
  }
  try {
    if (*c_gen) return run_generate(g, gen);
    if (*c_fit) return run_fit(g, fit);
    if (*c_diag) return run_diagnose(g, diag);
    if (*c_ver) return run_verify(g, ver);
    if (*c_bench) return run_bench(g, config);
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
