#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "w2s/config.hpp"
#include "w2s/metrics.hpp"
#include "w2s/pipeline.hpp"
#include "w2s/theory.hpp"

namespace w2s {

inline constexpr int kResultSchemaVersion = 1;

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

// Records CSV. Columns, in order: experiment_id, task_id, weak_model_id, seed,
// weak_true_err, w2s_true_err, misfit, gain, epsilon_hat, n_eval. A missing
// epsilon_hat is an empty field.
std::string csv_header();
std::string records_to_csv(std::span<const EvalRecord> records);
// Only the CSV columns are restored; standard errors stay zero.
std::vector<EvalRecord> parse_csv(std::string_view text);

nlohmann::json record_to_json(const EvalRecord& record);
EvalRecord record_from_json(const nlohmann::json& doc);
nlohmann::json bound_to_json(const BoundReport& report);

// Models needed to re-evaluate a run: h*, h_w, h_s and the heads of every task.
struct ModelBundle {
  std::shared_ptr<const Mlp> ground_truth;
  std::shared_ptr<const Mlp> weak;
  std::shared_ptr<const Mlp> strong;
  std::vector<Head> true_heads;
  std::vector<Head> weak_heads;
  std::vector<Head> strong_heads;
};

ModelBundle bundle_models(const ExperimentResult& result);
nlohmann::json heads_to_json(const ModelBundle& models);
void heads_from_json(const nlohmann::json& doc, ModelBundle& models);

// Bound reports computed at run time: the plain inequality for every record
// and, when epsilon_hat is present, the skeleton form.
std::vector<BoundReport> realizable_reports(const ExperimentConfig& config, std::span<const EvalRecord> records);
std::vector<BoundReport> skeleton_reports(const ExperimentConfig& config, std::span<const EvalRecord> records);

struct ModelFiles {
  std::string ground_truth;
  std::string weak;
  std::string strong;
  std::string heads;
};

// Result document: schema_version, config snapshot (canonical text), flags,
// records, bound reports, provenance, timings and either embedded models or
// the relative paths of the model files.
nlohmann::json result_to_json(const ExperimentResult& result, bool embed_models,
                              const std::optional<ModelFiles>& files = std::nullopt);

struct LoadedResult {
  ExperimentConfig config;
  std::vector<EvalRecord> records;
  bool realizable = false;
  std::optional<ModelBundle> models;
};

// Throws SchemaError when the version is missing or different. Models are read
// from the document when embedded, otherwise from the listed files next to it.
LoadedResult load_result(const std::filesystem::path& path);
LoadedResult result_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

// Git blob id: SHA-1 over "blob <size>\0" followed by the content.
std::string git_blob_hash(std::string_view content);

struct ManifestFile {
  std::string path;
  std::size_t bytes = 0;
  std::string hash;
};

struct RunManifest {
  std::string config_path;
  std::string config_hash;  // of the canonical config text
  std::string output_dir;
  std::vector<ManifestFile> files;
  std::string results_hash;  // of the records CSV
  double pretrain_seconds = 0.0;
  double finetune_seconds = 0.0;
  double total_seconds = 0.0;
};

nlohmann::json manifest_to_json(const RunManifest& manifest);

// One line of `check` output.
struct CheckRow {
  std::string check;
  std::size_t task_id = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  double tolerance = 0.0;
  Verdict verdict = Verdict::holds;
  bool informational = false;
};

struct CheckSummary {
  std::vector<CheckRow> rows;
  std::vector<std::string> skipped;  // checks that lacked inputs, with reason
  bool hard_violation = false;
};

inline constexpr std::string_view kCheckNames[] = {"realizable", "pythagoras", "triangle", "skeleton"};

// Runs the named checks over a loaded result. Unknown names throw
// std::invalid_argument. pythagoras and triangle need the models.
CheckSummary run_checks(const LoadedResult& result, const std::set<std::string>& checks);

nlohmann::json check_summary_to_json(const CheckSummary& summary);
std::string format_check_table(const CheckSummary& summary);

// Same ground truth and task family, so records of different weak models are
// comparable.
bool same_ground_truth(const ExperimentConfig& a, const ExperimentConfig& b);

std::string format_rank_table(const HeuristicRanking& ranking);
nlohmann::json ranking_to_json(const HeuristicRanking& ranking);

}  // namespace w2s
