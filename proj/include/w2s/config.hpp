#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "w2s/adam.hpp"
#include "w2s/head.hpp"
#include "w2s/metrics.hpp"
#include "w2s/mlp.hpp"

namespace w2s {

// How h_w and h_s are obtained from the ground truth h*.
enum class RepMode { pretrain, perturb, realizable_strong };

std::string_view to_string(RepMode mode);
std::string_view to_string(EvalSampling sampling);
std::string_view to_string(HeadTrainMethod method);

struct ArchSpec {
  std::size_t depth = 2;
  std::size_t hidden = 16;
  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

struct ExperimentConfig {
  std::string experiment_id = "experiment";
  std::uint64_t master_seed = 42;
  RepMode rep_mode = RepMode::pretrain;
  // Swap which architecture plays weak and which plays strong.
  bool reverse_roles = false;

  // [data]
  std::size_t input_dim = 8;
  double sigma = 500.0;

  // [archs]
  std::size_t rep_dim = 16;
  ArchSpec ground_truth{5, 16};
  ArchSpec weak{2, 16};
  ArchSpec strong{8, 16};
  // Label for this weak model in result files; derived when empty.
  std::string weak_model_id;

  // [pretrain]
  std::size_t pretrain_tasks = 10;             // T
  std::size_t pretrain_samples_per_task = 2000;  // N_r
  std::optional<std::size_t> pretrain_epochs;  // defaults to optimizer epochs
  bool pretrain_joint = false;
  HeadKind pretrain_head_kind = HeadKind::linear;
  double sigma_weak = 0.05;
  double sigma_strong = 0.01;

  // [finetune]
  std::size_t finetune_tasks = 100;     // M
  std::size_t finetune_samples = 2000;  // N_f
  HeadKind head_kind = HeadKind::linear;
  HeadTrainMethod method = HeadTrainMethod::gd;
  bool head_bias = true;
  double head_init_std = 0.01;
  TaskSampling task_sampling;

  // [optimizer]
  AdamConfig adam;
  std::size_t batch_size = 32;
  std::size_t epochs = 1000;

  // [eval]
  std::size_t eval_samples = 2000;
  EvalSampling eval_sampling = EvalSampling::fresh;
  bool estimate_epsilon = true;
  std::size_t epsilon_fit_samples = 2000;

  // [checks]
  double tol_sigmas = 6.0;
  double skeleton_k1 = 1.0;
  double skeleton_kn = 0.0;

  MlpArch ground_truth_arch() const;
  // Architectures after applying reverse_roles.
  MlpArch weak_arch() const;
  MlpArch strong_arch() const;
  std::string resolved_weak_model_id() const;
  DataDistribution distribution() const;
  TrainOptions pretrain_options() const;
  TrainOptions finetune_options() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Throws ConfigError naming the first offending field.
void validate(const ExperimentConfig& config);

// Parses flat TOML-style text: optional top-level keys, then [section] blocks
// of `key = value` lines. Unknown keys are rejected. The result is validated.
ExperimentConfig parse_config(std::string_view text, std::string_view default_id = "experiment");
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical text form; parse_config(to_toml(c)) == c.
std::string to_toml(const ExperimentConfig& config);

// Applies W2S_SEED from the environment when set.
void apply_env_overrides(ExperimentConfig& config);

}  // namespace w2s
