// w2s: run weak-to-strong regression experiments and check their results.
//
//   w2s run --config configs/realizable.toml --out runs/realizable
//   w2s check runs/realizable/result.json --checks realizable,triangle
//   w2s rank runs/hidden4/result.json runs/hidden8/result.json
//   w2s export-models --config configs/perturb.toml --out models/

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "w2s/config.hpp"
#include "w2s/errors.hpp"
#include "w2s/pipeline.hpp"
#include "w2s/report.hpp"
#include "w2s/serialize.hpp"
#include "w2s/theory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitViolation = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitRuntime = 3;

struct ModelPaths {
  fs::path ground_truth;
  fs::path weak;
  fs::path strong;
};

ModelPaths model_paths(const fs::path& out) {
  const fs::path dir = out / "models";
  return {dir / "ground_truth.json", dir / "weak_rep.json", dir / "strong_rep.json"};
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

w2s::ExperimentConfig load_run_config(const std::string& path) {
  if (!fs::exists(path)) throw w2s::ConfigError("config", "file '" + path + "' does not exist");
  w2s::ExperimentConfig config = w2s::load_config(path);
  w2s::apply_env_overrides(config);
  w2s::validate(config);
  return config;
}

struct RunArgs {
  std::string config;
  std::string out = "runs";
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  bool embed_models = false;
  bool quiet = false;
};

int cmd_run(const RunArgs& args) {
  const auto start = std::chrono::steady_clock::now();
  const w2s::ExperimentConfig config = load_run_config(args.config);
  const w2s::ExperimentResult result = w2s::run_w2s_experiment(config, {args.jobs, !args.quiet});

  const fs::path out = args.out;
  const ModelPaths paths = model_paths(out);
  fs::create_directories(paths.ground_truth.parent_path());

  std::vector<std::pair<fs::path, std::string>> files;
  const std::string csv = w2s::records_to_csv(result.records);
  files.emplace_back(out / "records.csv", csv);
  files.emplace_back(paths.ground_truth, w2s::mlp_to_json(*result.ground_truth).dump(1) + "\n");
  files.emplace_back(paths.weak, w2s::mlp_to_json(*result.representations.weak).dump(1) + "\n");
  files.emplace_back(paths.strong, w2s::mlp_to_json(*result.representations.strong).dump(1) + "\n");
  const fs::path heads = out / "models" / "heads.json";
  files.emplace_back(heads, w2s::heads_to_json(w2s::bundle_models(result)).dump(1) + "\n");

  const w2s::ModelFiles rel{fs::relative(paths.ground_truth, out).generic_string(),
                            fs::relative(paths.weak, out).generic_string(),
                            fs::relative(paths.strong, out).generic_string(),
                            fs::relative(heads, out).generic_string()};
  files.emplace_back(out / "result.json", w2s::result_to_json(result, args.embed_models, rel).dump(1) + "\n");

  w2s::RunManifest manifest;
  manifest.config_path = args.config;
  manifest.config_hash = w2s::git_blob_hash(w2s::to_toml(config));
  manifest.output_dir = out.generic_string();
  manifest.results_hash = w2s::git_blob_hash(csv);
  for (const auto& [path, content] : files) {
    write_file(path, content);
    manifest.files.push_back({fs::relative(path, out).generic_string(), content.size(), w2s::git_blob_hash(content)});
  }
  manifest.files.push_back({"manifest.json", 0, ""});
  manifest.pretrain_seconds = result.pretrain_seconds;
  manifest.finetune_seconds = result.finetune_seconds;
  manifest.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_file(out / "manifest.json", w2s::manifest_to_json(manifest).dump(1) + "\n");

  if (!args.quiet) {
    std::cout << "wrote " << result.records.size() << " records to " << (out / "records.csv").generic_string()
              << " (results " << manifest.results_hash << ")\n";
  }
  return kExitOk;
}

std::set<std::string> parse_check_set(const std::string& text) {
  std::set<std::string> checks;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) checks.insert(item);
  }
  return checks;
}

struct CheckArgs {
  std::string result;
  std::string checks = "realizable,pythagoras,triangle,skeleton";
  std::string json_out;
  bool json_stdout = false;
};

int cmd_check(const CheckArgs& args) {
  const std::set<std::string> checks = parse_check_set(args.checks);
  if (!fs::exists(args.result)) throw w2s::SchemaError("result file '" + args.result + "' does not exist");
  const w2s::LoadedResult result = w2s::load_result(args.result);
  const w2s::CheckSummary summary = w2s::run_checks(result, checks);
  const json doc = w2s::check_summary_to_json(summary);
  if (args.json_stdout) {
    std::cout << doc.dump(1) << "\n";
  } else {
    std::cout << w2s::format_check_table(summary);
  }
  if (!args.json_out.empty()) write_file(args.json_out, doc.dump(1) + "\n");
  return summary.hard_violation ? kExitViolation : kExitOk;
}

struct RankArgs {
  std::vector<std::string> results;
  bool json_stdout = false;
};

int cmd_rank(const RankArgs& args) {
  if (args.results.size() < 2) {
    std::cerr << "rank: need at least two result files, got " << args.results.size() << "\n";
    return kExitInvalid;
  }
  std::vector<w2s::LoadedResult> loaded;
  for (const auto& path : args.results) loaded.push_back(w2s::load_result(path));
  for (std::size_t i = 1; i < loaded.size(); ++i) {
    if (!w2s::same_ground_truth(loaded.front().config, loaded[i].config)) {
      std::cerr << "rank: " << args.results[i] << " was produced with a different ground truth than "
                << args.results.front() << "\n";
      return kExitInvalid;
    }
  }
  std::vector<std::vector<w2s::EvalRecord>> groups;
  for (const auto& r : loaded) groups.push_back(r.records);
  const w2s::HeuristicRanking ranking = w2s::heuristic_rank(groups);
  if (args.json_stdout) {
    std::cout << w2s::ranking_to_json(ranking).dump(1) << "\n";
  } else {
    std::cout << w2s::format_rank_table(ranking);
  }
  return kExitOk;
}

struct ExportArgs {
  std::string config;
  std::string out = "models";
};

int cmd_export(const ExportArgs& args) {
  const w2s::ExperimentConfig config = load_run_config(args.config);
  const w2s::Rng root(config.master_seed);
  const w2s::GroundTruth truth = w2s::build_ground_truth(config, root);
  const w2s::Representations reps = w2s::acquire_representations(config, truth, root);
  fs::create_directories(args.out);
  w2s::save_mlp(*truth.rep, fs::path(args.out) / "ground_truth.json");
  w2s::save_mlp(*reps.weak, fs::path(args.out) / "weak_rep.json");
  w2s::save_mlp(*reps.strong, fs::path(args.out) / "strong_rep.json");
  std::cout << "wrote ground_truth.json, weak_rep.json, strong_rep.json to " << args.out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weak-to-strong regression experiments"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run an experiment and write records, result and models");
  run->add_option("--config", run_args.config, "Experiment config (TOML)")->required();
  run->add_option("--out", run_args.out, "Output directory");
  run->add_option("--jobs", run_args.jobs, "Concurrent tasks")->check(CLI::PositiveNumber);
  run->add_flag("--embed-models", run_args.embed_models, "Also embed the models in result.json");
  run->add_flag("--quiet", run_args.quiet, "No progress output");

  CheckArgs check_args;
  auto* check = app.add_subcommand("check", "Check bounds and identities on a result file");
  check->add_option("result", check_args.result, "result.json written by run")->required();
  check->add_option("--checks", check_args.checks, "Comma separated subset of realizable,pythagoras,triangle,skeleton");
  check->add_option("--json-out", check_args.json_out, "Also write the report as JSON");
  check->add_flag("--json", check_args.json_stdout, "Print JSON instead of the table");

  RankArgs rank_args;
  auto* rank = app.add_subcommand("rank", "Rank weak models by weak error minus misfit");
  rank->add_option("results", rank_args.results, "One result.json per weak model");
  rank->add_flag("--json", rank_args.json_stdout, "Print JSON instead of the table");

  ExportArgs export_args;
  auto* exp = app.add_subcommand("export-models", "Build h*, h_w and h_s and write them without finetuning");
  exp->add_option("--config", export_args.config, "Experiment config (TOML)")->required();
  exp->add_option("--out", export_args.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*run) return cmd_run(run_args);
    if (*check) return cmd_check(check_args);
    if (*rank) return cmd_rank(rank_args);
    if (*exp) return cmd_export(export_args);
  } catch (const w2s::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const w2s::SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const w2s::TaskError& e) {
    std::cerr << "run failed at task " << e.task_id() << ": " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
