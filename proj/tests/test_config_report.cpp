#include <gtest/gtest.h>

#include <cstdlib>
#include <limits>

#include "w2s/config.hpp"
#include "w2s/errors.hpp"
#include "w2s/report.hpp"

namespace w2s {
namespace {

TEST(Config, DefaultsMirrorTheExperimentConstants) {
  const ExperimentConfig c = parse_config("");
  EXPECT_EQ(c.input_dim, 8u);
  EXPECT_EQ(c.rep_dim, 16u);
  EXPECT_EQ(c.sigma, 500.0);
  EXPECT_EQ(c.pretrain_tasks, 10u);
  EXPECT_EQ(c.pretrain_samples_per_task, 2000u);
  EXPECT_EQ(c.finetune_tasks, 100u);
  EXPECT_EQ(c.finetune_samples, 2000u);
  EXPECT_EQ(c.adam.learning_rate, 1e-3);
  EXPECT_EQ(c.adam.beta1, 0.9);
  EXPECT_EQ(c.adam.beta2, 0.999);
  EXPECT_EQ(c.adam.epsilon, 1e-8);
  EXPECT_EQ(c.batch_size, 32u);
  EXPECT_EQ(c.epochs, 1000u);
  EXPECT_EQ(c.sigma_weak, 0.05);
  EXPECT_EQ(c.sigma_strong, 0.01);
  EXPECT_EQ(c.ground_truth, (ArchSpec{5, 16}));
  EXPECT_EQ(c.weak, (ArchSpec{2, 16}));
  EXPECT_EQ(c.strong, (ArchSpec{8, 16}));
}

TEST(Config, ParsesSectionsAndComments) {
  const ExperimentConfig c = parse_config(R"(
# comment
experiment_id = "demo"  # trailing comment
master_seed = 7
rep_mode = "perturb"

[archs]
weak_depth = 5
strong_depth = 5

[finetune]
tasks = 3
head_kind = "tanh"

[eval]
sampling = "shared"
)");
  EXPECT_EQ(c.experiment_id, "demo");
  EXPECT_EQ(c.master_seed, 7u);
  EXPECT_EQ(c.rep_mode, RepMode::perturb);
  EXPECT_EQ(c.finetune_tasks, 3u);
  EXPECT_EQ(c.head_kind, HeadKind::tanh);
  EXPECT_EQ(c.pretrain_head_kind, HeadKind::linear);
  EXPECT_EQ(c.eval_sampling, EvalSampling::shared);
  EXPECT_EQ(parse_config("[pretrain]\nhead_kind = \"relu\"\n").pretrain_head_kind, HeadKind::relu);
}

TEST(Config, CanonicalTextRoundTrips) {
  ExperimentConfig c;
  c.experiment_id = "round trip";
  c.sigma = 0.1;
  c.pretrain_epochs = 50;
  c.adam.learning_rate = 3e-4;
  c.task_sampling.bias_enabled = true;
  c.reverse_roles = true;
  c.weak_model_id = "pool-a";
  const ExperimentConfig back = parse_config(to_toml(c));
  EXPECT_EQ(back, c);
  EXPECT_EQ(to_toml(back), to_toml(c));
}

TEST(Config, ZeroFinetuneSamplesNamesTheField) {
  try {
    parse_config("[finetune]\nsamples = 0\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "finetune.samples");
  }
}

TEST(Config, RejectsUnknownAndDuplicateKeysAndBadValues) {
  EXPECT_THROW(parse_config("[finetune]\nbogus = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[finetune]\ntasks = 1\ntasks = 2\n"), ConfigError);
  EXPECT_THROW(parse_config("[finetune]\ntasks = -3\n"), ConfigError);
  EXPECT_THROW(parse_config("rep_mode = \"sideways\"\n"), ConfigError);
  EXPECT_THROW(parse_config("[data]\nsigma = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("[finetune]\nhead_kind = \"relu\"\nmethod = \"closed_form\"\n"), ConfigError);
}

TEST(Config, PerturbModeRequiresGroundTruthArchitecture) {
  try {
    parse_config("rep_mode = \"perturb\"\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "archs.weak_depth");
  }
}

TEST(Config, ReverseRolesSwapsArchitecturesOnly) {
  ExperimentConfig c;
  c.reverse_roles = true;
  EXPECT_EQ(c.weak_arch().depth, 8u);
  EXPECT_EQ(c.strong_arch().depth, 2u);
  EXPECT_EQ(c.sigma_weak, 0.05);
  EXPECT_EQ(c.resolved_weak_model_id(), "mlp-d8-h16");
}

TEST(Config, SeedFromEnvironment) {
  ExperimentConfig c;
  ::setenv("W2S_SEED", "1234", 1);
  apply_env_overrides(c);
  ::unsetenv("W2S_SEED");
  EXPECT_EQ(c.master_seed, 1234u);
  ::setenv("W2S_SEED", "abc", 1);
  EXPECT_THROW(apply_env_overrides(c), ConfigError);
  ::unsetenv("W2S_SEED");
}

EvalRecord sample_record(std::size_t id, double b, double a, double c) {
  EvalRecord r = make_record(b, a, c);
  r.experiment_id = "exp,1";
  r.task_id = id;
  r.weak_model_id = "weak \"w\"";
  r.seed = 42;
  r.n_eval = 2000;
  return r;
}

bool same_csv_fields(const EvalRecord& x, const EvalRecord& y) {
  return x.experiment_id == y.experiment_id && x.task_id == y.task_id && x.weak_model_id == y.weak_model_id &&
         x.seed == y.seed && x.weak_true_err == y.weak_true_err && x.w2s_true_err == y.w2s_true_err &&
         x.misfit == y.misfit && x.gain == y.gain && x.epsilon_hat == y.epsilon_hat && x.n_eval == y.n_eval;
}

TEST(Csv, HeaderHasFixedColumnOrder) {
  EXPECT_EQ(csv_header(),
            "experiment_id,task_id,weak_model_id,seed,weak_true_err,w2s_true_err,misfit,gain,epsilon_hat,n_eval");
}

TEST(Csv, RoundTripIsExact) {
  std::vector<EvalRecord> records{sample_record(0, 0.1, 1.0 / 3.0, 2e-300),
                                  sample_record(1, 123456.789, 1e-17, std::numeric_limits<double>::denorm_min()),
                                  sample_record(2, 3.0, 1.0, 2.0)};
  records[1].epsilon_hat = 0.7;
  records[2].epsilon_hat = 0.0;
  const auto back = parse_csv(records_to_csv(records));
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < records.size(); ++i) EXPECT_TRUE(same_csv_fields(back[i], records[i])) << i;
  EXPECT_FALSE(back[0].epsilon_hat.has_value());
}

TEST(Csv, RejectsMalformedInput) {
  EXPECT_THROW(parse_csv("a,b\n1,2\n"), std::invalid_argument);
  EXPECT_THROW(parse_csv(csv_header() + "\nx,1,w,1,1,1,1\n"), std::invalid_argument);
  EXPECT_THROW(parse_csv(csv_header() + "\nx,one,w,1,1,1,1,0,,5\n"), std::invalid_argument);
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(2.0), "2");
  for (double v : {1.0 / 3.0, 6.02214076e23, 5e-324, -1e-7}) EXPECT_EQ(std::strtod(format_double(v).c_str(), nullptr), v);
}

TEST(GitBlobHash, MatchesGit) {
  // `printf 'hello\n' | git hash-object --stdin`
  EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
  // The empty blob.
  EXPECT_EQ(git_blob_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST(ResultDocument, SchemaVersionIsEnforced) {
  nlohmann::json doc;
  EXPECT_THROW(result_from_json(doc), SchemaError);
  doc["schema_version"] = kResultSchemaVersion + 1;
  EXPECT_THROW(result_from_json(doc), SchemaError);
  doc["schema_version"] = kResultSchemaVersion;
  doc["config"] = to_toml(ExperimentConfig{});
  doc["records"] = nlohmann::json::array({record_to_json(sample_record(0, 3.0, 1.0, 2.0))});
  const LoadedResult loaded = result_from_json(doc);
  ASSERT_EQ(loaded.records.size(), 1u);
  EXPECT_EQ(loaded.records[0].misfit, 2.0);
  EXPECT_FALSE(loaded.models.has_value());
}

TEST(ResultDocument, RecordJsonKeepsStandardErrors) {
  EvalRecord r = sample_record(3, 3.0, 1.0, 2.0);
  r.gap_se = 0.125;
  r.misfit_se = 1e-3;
  const EvalRecord back = record_from_json(nlohmann::json::parse(record_to_json(r).dump()));
  EXPECT_EQ(back.gap_se, 0.125);
  EXPECT_EQ(back.misfit_se, 1e-3);
  EXPECT_TRUE(same_csv_fields(back, r));
}

TEST(SameGroundTruth, DependsOnTaskFamilyNotWeakModel) {
  ExperimentConfig a;
  ExperimentConfig b;
  b.weak.hidden = 4;
  b.experiment_id = "other";
  EXPECT_TRUE(same_ground_truth(a, b));
  b.master_seed = 1;
  EXPECT_FALSE(same_ground_truth(a, b));
  ExperimentConfig c;
  c.head_kind = HeadKind::relu;
  EXPECT_FALSE(same_ground_truth(a, c));
}

}  // namespace
}  // namespace w2s
