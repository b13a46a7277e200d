#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "w2s/report.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kTinyRealizable = R"(experiment_id = "cli"
rep_mode = "realizable_strong"

[data]
sigma = 1

[pretrain]
tasks = 2
samples_per_task = 64
epochs = 2

[finetune]
tasks = 3
samples = 2000
method = "closed_form"

[eval]
samples = 20000
epsilon_fit_samples = 300
)";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("w2s_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& content) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << content;
    return p;
  }

  static std::string read(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  // Runs the CLI with `args`; stdout and stderr land in output_.
  int cli(const std::string& args) {
    const fs::path log = dir_ / "cli.log";
    const std::string cmd = std::string(W2S_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    output_ = read(log);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  fs::path run_tiny(const std::string& name, const std::string& config = kTinyRealizable) {
    const fs::path out = dir_ / name;
    EXPECT_EQ(cli("run --quiet --jobs 2 --config " + write(name + ".toml", config).string() + " --out " + out.string()),
              0)
        << output_;
    return out;
  }

  fs::path dir_;
  std::string output_;
};

TEST_F(Cli, RunWritesRecordsResultModelsAndManifest) {
  const fs::path out = run_tiny("run");
  const std::string csv = read(out / "records.csv");
  const auto records = w2s::parse_csv(csv);
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), w2s::csv_header());
  for (const char* f : {"result.json", "manifest.json", "models/ground_truth.json", "models/weak_rep.json",
                        "models/strong_rep.json", "models/heads.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto manifest = nlohmann::json::parse(read(out / "manifest.json"));
  EXPECT_EQ(manifest["results_hash"], w2s::git_blob_hash(csv));
  std::size_t listed = 0;
  for (const auto& f : manifest["files"]) {
    EXPECT_TRUE(fs::exists(out / f["path"].get<std::string>()));
    if (f["path"] != "manifest.json") {
      EXPECT_EQ(f["hash"], w2s::git_blob_hash(read(out / f["path"].get<std::string>())));
    }
    ++listed;
  }
  EXPECT_EQ(listed, 7u);
}

TEST_F(Cli, SameConfigTwiceGivesIdenticalCsv) {
  const fs::path a = run_tiny("a");
  const fs::path b = run_tiny("b");
  EXPECT_EQ(read(a / "records.csv"), read(b / "records.csv"));
}

TEST_F(Cli, SeedEnvironmentOverride) {
  const fs::path cfg = write("seed.toml", kTinyRealizable);
  const fs::path out = dir_ / "seeded";
  ASSERT_EQ(cli("run --quiet --config " + cfg.string() + " --out " + out.string()), 0);
  const std::string base = read(out / "records.csv");
  ::setenv("W2S_SEED", "7", 1);
  const int rc = cli("run --quiet --config " + cfg.string() + " --out " + out.string());
  ::unsetenv("W2S_SEED");
  ASSERT_EQ(rc, 0);
  const auto records = w2s::parse_csv(read(out / "records.csv"));
  EXPECT_EQ(records[0].seed, 7u);
  EXPECT_NE(read(out / "records.csv"), base);
}

TEST_F(Cli, ZeroFinetuneSamplesIsAnInvalidConfig) {
  std::string config = kTinyRealizable;
  config.replace(config.find("samples = 2000"), 14, "samples = 0");
  EXPECT_EQ(cli("run --config " + write("bad.toml", config).string() + " --out " + (dir_ / "bad").string()), 2);
  EXPECT_NE(output_.find("finetune.samples"), std::string::npos) << output_;
}

TEST_F(Cli, MissingConfigAndBadArguments) {
  EXPECT_EQ(cli("run --config " + (dir_ / "nope.toml").string()), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("run"), 2);
}

TEST_F(Cli, CheckRealizableRunHolds) {
  const fs::path out = run_tiny("ok");
  EXPECT_EQ(cli("check " + (out / "result.json").string() + " --json-out " + (dir_ / "check.json").string()), 0)
      << output_;
  const auto doc = nlohmann::json::parse(read(dir_ / "check.json"));
  EXPECT_FALSE(doc["hard_violation"].get<bool>());
  std::set<std::string> seen;
  for (const auto& row : doc["rows"]) {
    seen.insert(row["check"].get<std::string>());
    if (!row["informational"].get<bool>()) {
      EXPECT_NE(row["verdict"], "violated") << row.dump();
    }
  }
  EXPECT_EQ(seen, (std::set<std::string>{"realizable", "pythagoras", "triangle", "skeleton"}));
}

TEST_F(Cli, TamperedRecordIsAViolation) {
  const fs::path out = run_tiny("tamper");
  auto doc = nlohmann::json::parse(read(out / "result.json"));
  auto& rec = doc["records"][1];
  rec["w2s_true_err"] = rec["weak_true_err"].get<double>() + 1.0;
  rec["gain"] = rec["weak_true_err"].get<double>() - rec["w2s_true_err"].get<double>();
  std::ofstream(out / "result.json") << doc.dump();
  EXPECT_EQ(cli("check " + (out / "result.json").string() + " --checks realizable"), 1);
  EXPECT_NE(output_.find("violated"), std::string::npos) << output_;
}

TEST_F(Cli, EmptyCheckSetIsANoOp) {
  const fs::path out = run_tiny("empty");
  EXPECT_EQ(cli("check " + (out / "result.json").string() + " --checks \"\""), 0) << output_;
  EXPECT_EQ(cli("check " + (out / "result.json").string() + " --checks bogus"), 2);
}

TEST_F(Cli, SchemaMismatchIsRejected) {
  const fs::path out = run_tiny("schema");
  auto doc = nlohmann::json::parse(read(out / "result.json"));
  doc["schema_version"] = 99;
  std::ofstream(out / "result.json") << doc.dump();
  EXPECT_EQ(cli("check " + (out / "result.json").string()), 2);
  EXPECT_EQ(cli("check " + (dir_ / "missing.json").string()), 2);
}

TEST_F(Cli, RankNeedsTwoComparableResults) {
  const fs::path a = run_tiny("rank_a");
  EXPECT_EQ(cli("rank " + (a / "result.json").string()), 2);

  EXPECT_EQ(cli("rank --json " + (a / "result.json").string() + " " + (a / "result.json").string()), 0) << output_;
  const auto doc = nlohmann::json::parse(output_);
  EXPECT_EQ(doc["rows"].size(), 2u);

  std::string other = kTinyRealizable;
  other += "\n";
  other.insert(0, "master_seed = 5\n");
  const fs::path b = run_tiny("rank_b", other);
  EXPECT_EQ(cli("rank " + (a / "result.json").string() + " " + (b / "result.json").string()), 2);
}

TEST_F(Cli, RankOrdersWeakModelPool) {
  std::vector<fs::path> results;
  for (int hidden : {4, 8, 16}) {
    std::string config = kTinyRealizable;
    config += "\n[archs]\nweak_hidden = " + std::to_string(hidden) + "\n";
    results.push_back(run_tiny("pool" + std::to_string(hidden), config) / "result.json");
  }
  std::string args = "rank --json";
  std::vector<std::vector<w2s::EvalRecord>> groups;
  for (const auto& r : results) {
    args += " " + r.string();
    groups.push_back(w2s::load_result(r).records);
  }
  ASSERT_EQ(cli(args), 0) << output_;
  const auto doc = nlohmann::json::parse(output_);
  const w2s::HeuristicRanking oracle = w2s::heuristic_rank(groups);
  ASSERT_EQ(doc["rows"].size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(doc["rows"][i]["weak_model_id"], oracle.rows[i].weak_model_id);
}

TEST_F(Cli, ExportModelsWritesThreeNetworks) {
  const fs::path cfg = write("export.toml", kTinyRealizable);
  ASSERT_EQ(cli("export-models --config " + cfg.string() + " --out " + (dir_ / "models").string()), 0) << output_;
  for (const char* f : {"ground_truth.json", "weak_rep.json", "strong_rep.json"}) EXPECT_TRUE(fs::exists(dir_ / "models" / f));
}

}  // namespace
