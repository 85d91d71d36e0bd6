#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_util.hpp"

using namespace tpca;
namespace fs = std::filesystem;

namespace {

ExperimentConfig noiseless_orthogonal() {
  ExperimentConfig c;
  c.model = ModelKind::noisy_cp;
  c.dims = {6, 6, 6};
  c.rank = 3;
  c.top_weights = {10};
  c.samples = {0};
  c.theta = 0;
  c.sigma = 0;
  c.replicates = 1;
  c.methods = {"cpca"};
  return c;
}

ExperimentConfig small_spiked() {
  ExperimentConfig c;
  c.model = ModelKind::spiked_covariance;
  c.dims = {6, 6};
  c.rank = 2;
  c.top_weights = {5, 10};
  c.samples = {100};
  c.theta = 0.3;
  c.replicates = 3;
  c.methods = {"cpca", "cpca+ico", "cpca+1ico", "hosvd", "cpca+als", "oals"};
  c.seed = 11;
  return c;
}

std::string csv(const ExperimentResult& r) {
  std::ostringstream os;
  write_results_csv(os, r);
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("tpca_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(TPCA_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Bench, NoiselessOrthogonalCpcaIsExact) {
  const ExperimentResult r = run_experiment(noiseless_orthogonal());
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].status, "ok");
  EXPECT_LE(r.rows[0].max_error, 1e-10);
}

TEST(Bench, ResultsAreByteIdenticalAcrossRunsAndThreadCounts) {
  const ExperimentConfig c = small_spiked();
  const std::string a = csv(run_experiment(c, 1));
  EXPECT_EQ(a, csv(run_experiment(c, 1)));
  EXPECT_EQ(a, csv(run_experiment(c, 3)));
}

TEST(Bench, RowLayoutAndStatuses) {
  const ExperimentConfig c = small_spiked();
  const ExperimentResult r = run_experiment(c);
  EXPECT_EQ(r.rows.size(), c.grid_size() * c.replicates * c.methods.size());
  for (const auto& row : r.rows) {
    if (row.method == "oals") {
      EXPECT_EQ(row.status, "unavailable");
    } else {
      EXPECT_EQ(row.status, "ok") << row.method << ": " << row.message;
      EXPECT_NEAR(row.log10_error, std::log10(std::max(row.max_error, 1e-16)), 1e-12);
    }
  }
}

TEST(Bench, ReplicateSeedsDependOnGridAndReplicate) {
  EXPECT_NE(replicate_seed(1, 0, 0), replicate_seed(1, 0, 1));
  EXPECT_NE(replicate_seed(1, 0, 1), replicate_seed(1, 1, 0));
  EXPECT_EQ(replicate_seed(1, 2, 3), replicate_seed(1, 2, 3));
}

TEST(Bench, SpikedWeightsAreSquaredAmplitudes) {
  ExperimentConfig c = small_spiked();
  const Vector w = model_weights(c, 10);
  EXPECT_NEAR(w[0], 100, 1e-12);
  EXPECT_NEAR(w[1], 64, 1e-12);
  c.model = ModelKind::noisy_cp;
  EXPECT_NEAR(model_weights(c, 10)[0], 10, 1e-12);
}

TEST(Bench, SummaryMediansAndOrderings) {
  ExperimentResult r;
  r.config = noiseless_orthogonal();
  r.config.methods = {"cpca", "hosvd"};
  r.config.replicates = 3;
  for (std::size_t i = 0; i < 3; ++i) {
    ResultRow a;
    a.method = "cpca";
    a.replicate = i;
    a.log10_error = -3.0 - static_cast<double>(i);
    r.rows.push_back(a);
    ResultRow b = a;
    b.method = "hosvd";
    b.log10_error = -1.0;
    if (i == 2) b.status = "failed";
    r.rows.push_back(b);
  }
  const auto cells = summarize_cells(r);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_EQ(cells[0].median, -4.0);
  EXPECT_EQ(cells[0].q1, -4.5);
  EXPECT_EQ(cells[1].ok, 2u);
  EXPECT_EQ(cells[1].failed, 1u);
  const Json s = summary_json(r);
  EXPECT_EQ(s["orderings"][0]["ranking_by_median"][0], "cpca");
  EXPECT_EQ(s["orderings"][0]["pairwise"][0]["difference"], 3.0);
}

TEST(Bench, CsvFieldsAreQuoted) {
  EXPECT_EQ(detail::csv_field("plain"), "plain");
  EXPECT_EQ(detail::csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(detail::csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(detail::csv_number(std::nan("")), "");
}

TEST(Bench, FailuresBecomeRows) {
  ExperimentConfig c = noiseless_orthogonal();
  c.rank = 2;
  c.top_weights = {1};
  c.methods = {"als"};
  c.als.restarts = 4;
  c.ratio = 1e6;
  c.dims = {3, 3, 3};
  // every power iteration lands on the dominant component: one cluster for rank 2
  const ExperimentResult r = run_experiment(c);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].status, "failed");
  EXPECT_NE(r.rows[0].message.find("restarts"), std::string::npos);
  EXPECT_NE(csv(r).find("failed"), std::string::npos);
}

TEST(Config, ParsesAndValidates) {
  const Json ok = Json::parse(R"({"model":"spiked-covariance","dims":[5,5],"rank":2,"top_weights":[3],
                                  "samples":[50],"methods":["cpca","oals"],"als":{"restarts":5}})");
  const ExperimentConfig c = config_from_json(ok);
  EXPECT_EQ(c.dims, (Shape{5, 5}));
  EXPECT_EQ(c.als.restarts, 5u);
  EXPECT_EQ(config_from_json(to_json(c)).methods, c.methods);

  Json bad = ok;
  bad["methods"] = {"pca"};
  EXPECT_THROW(config_from_json(bad), InvalidArgument);
  bad = ok;
  bad["theta"] = 1.5;
  EXPECT_THROW(config_from_json(bad), InvalidArgument);
  bad = ok;
  bad["model"] = "gaussian";
  EXPECT_THROW(config_from_json(bad), InvalidArgument);
  bad = ok;
  bad.erase("dims");
  EXPECT_THROW(config_from_json(bad), InvalidArgument);
  bad = ok;
  bad["model"] = "noisy-cp";  // order 2
  EXPECT_THROW(config_from_json(bad), InvalidArgument);
}

TEST(Config, ShippedPresetsParse) {
  for (const char* name : {"fig1_desk.json", "fig2_desk.json", "fig3_desk.json", "fig4_desk.json", "smoke.json"}) {
    const fs::path p = fs::path(TPCA_SOURCE_DIR) / "experiments" / name;
    EXPECT_NO_THROW(config_from_json(load_json(p.string()))) << p;
  }
}

TEST(Serialize, DecompositionRoundTrip) {
  Rng rng(3);
  const CPDecomposition cp = make_cp({3, 4}, Vector(Eigen::Vector2d(2, 1)), 0.2, rng, true);
  const CPDecomposition back = cp_from_json(Json::parse(to_json(cp).dump()));
  EXPECT_EQ(back.weights, cp.weights);
  EXPECT_EQ(back.factors, cp.factors);
  EXPECT_TRUE(back.symmetric_pair);
}

TEST(Serialize, InfinityIsWrittenAsString) {
  EXPECT_EQ(detail::number(kInf), "inf");
  EXPECT_TRUE(detail::number(std::nan("")).is_null());
}

TEST(Cli, GenerateFitDiagnose) {
  TempDir tmp;
  const fs::path d = tmp.path();
  const fs::path log = d / "log.txt";
  const std::string out = " --out-dir " + d.string();
  ASSERT_EQ(run_cli("generate --model noisy-cp --dims 6,6,6 --rank 3 --theta 0.1 --top-weight 10 --sigma 0 --seed 3" + out, log), 0)
      << slurp(log);
  ASSERT_TRUE(fs::exists(d / "truth.json"));
  ASSERT_TRUE(fs::exists(d / "tensor.tns"));
  ASSERT_EQ(run_cli("fit --method cpca+ico --input " + (d / "tensor.tns").string() + " --rank 3 --truth " +
                        (d / "truth.json").string() + out, log),
            0)
      << slurp(log);
  const CPDecomposition est = cp_from_json(load_json((d / "decomposition.json").string()));
  const CPDecomposition truth = cp_from_json(load_json((d / "truth.json").string()));
  EXPECT_LT(match_components(est, truth).max_error, 1e-8);
  EXPECT_TRUE(fs::exists(d / "trace.csv"));
  ASSERT_EQ(run_cli("diagnose --truth " + (d / "truth.json").string() + " --sigma 1" + out, log), 0) << slurp(log);
  const Json diag = load_json((d / "diagnose.json").string());
  EXPECT_TRUE(diag.contains("coherence"));
}

TEST(Cli, SpikedGenerateAndSampleFit) {
  TempDir tmp;
  const fs::path d = tmp.path();
  const fs::path log = d / "log.txt";
  const std::string out = " --out-dir " + d.string();
  ASSERT_EQ(run_cli("generate --model spiked-covariance --dims 5,5 --rank 2 --theta 0.2 --top-weight 8 --samples 200" + out,
                    log),
            0)
      << slurp(log);
  ASSERT_TRUE(fs::exists(d / "samples.tns"));
  ASSERT_EQ(run_cli("fit --method cpca+ico --samples --input " + (d / "samples.tns").string() + " --rank 2" + out, log), 0)
      << slurp(log);
  ASSERT_EQ(run_cli("fit --method cpca --symmetric --input " + (d / "tensor.tns").string() + " --rank 2" + out, log), 0)
      << slurp(log);
}

TEST(Cli, VerifyPassesAndWritesReport) {
  TempDir tmp;
  const fs::path log = tmp.path() / "log.txt";
  ASSERT_EQ(run_cli("verify --prop 3 --trials 10000 --out-dir " + tmp.path().string(), log), 0) << slurp(log);
  const Json rep = load_json((tmp.path() / "verify.json").string());
  EXPECT_EQ(rep[0]["passed"], true);
}

TEST(Cli, BenchWritesResultFiles) {
  TempDir tmp;
  const fs::path log = tmp.path() / "log.txt";
  const fs::path cfg = fs::path(TPCA_SOURCE_DIR) / "experiments" / "smoke.json";
  ASSERT_EQ(run_cli("bench --config " + cfg.string() + " --out-dir " + tmp.path().string(), log), 0) << slurp(log);
  for (const char* f : {"results.csv", "timing.csv", "summary.json"}) EXPECT_TRUE(fs::exists(tmp.path() / f)) << f;
  const std::string first = slurp(tmp.path() / "results.csv");
  ASSERT_EQ(run_cli("bench --config " + cfg.string() + " --threads 2 --out-dir " + tmp.path().string(), log), 0);
  EXPECT_EQ(first, slurp(tmp.path() / "results.csv"));
  const Json s = load_json((tmp.path() / "summary.json").string());
  EXPECT_EQ(s["method_labels"]["oals"], "unavailable");
}

TEST(Cli, ExitCodes) {
  TempDir tmp;
  const fs::path d = tmp.path();
  const fs::path log = d / "log.txt";
  EXPECT_EQ(run_cli("fit --method nonsense --input x.tns", log), 1);
  EXPECT_EQ(run_cli("generate --dims 4,4 --rank 3 --theta 0.9 --out-dir " + d.string(), log), 1) << slurp(log);
  // a zero tensor makes the ICO contraction degenerate: numerical failure
  Rng rng(1);
  const CPDecomposition init = make_cp({3, 3, 3}, Vector::Constant(1, 1.0), 0.0, rng);
  save_json((d / "init.json").string(), to_json(init));
  save_tensor((d / "zero.tns").string(), DenseTensor({3, 3, 3}));
  EXPECT_EQ(run_cli("fit --method ico --input " + (d / "zero.tns").string() + " --init " + (d / "init.json").string() +
                        " --rank 1 --out-dir " + d.string(),
                    log),
            2)
      << slurp(log);
  EXPECT_NE(slurp(log).find("degenerate"), std::string::npos);
}
