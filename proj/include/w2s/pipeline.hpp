#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "w2s/config.hpp"
#include "w2s/head.hpp"
#include "w2s/metrics.hpp"
#include "w2s/mlp.hpp"
#include "w2s/rng.hpp"

namespace w2s {

// Stream ids under the master seed. Every stage draws from its own child
// stream, so tasks can run in any order and still reproduce bit-for-bit.
namespace streams {
inline constexpr std::uint64_t kGroundTruth = 1;
inline constexpr std::uint64_t kPretrainTasks = 2;
inline constexpr std::uint64_t kPretrainData = 3;
inline constexpr std::uint64_t kPretrainWeakInit = 4;
inline constexpr std::uint64_t kPretrainStrongInit = 5;
inline constexpr std::uint64_t kPretrainWeakOrder = 6;
inline constexpr std::uint64_t kPretrainStrongOrder = 7;
inline constexpr std::uint64_t kPerturbWeak = 8;
inline constexpr std::uint64_t kPerturbStrong = 9;
inline constexpr std::uint64_t kFinetuneTasks = 10;
inline constexpr std::uint64_t kTask = 11;
inline constexpr std::uint64_t kPretrainJointHeads = 12;
inline constexpr std::uint64_t kChecks = 13;

// Per-task sub-streams.
inline constexpr std::uint64_t kWeakData = 1;
inline constexpr std::uint64_t kWeakTrain = 2;
inline constexpr std::uint64_t kWeakLabelData = 3;
inline constexpr std::uint64_t kStrongTrain = 4;
inline constexpr std::uint64_t kEval = 5;
inline constexpr std::uint64_t kEpsilon = 6;
}  // namespace streams

// Deterministic source of random ground-truth tasks: task i is drawn from
// its own child stream.
class TaskSampler {
 public:
  TaskSampler(Rng base, std::size_t dim, TaskSampling sampling, HeadKind kind);
  Head task(std::size_t index) const;

 private:
  Rng base_;
  std::size_t dim_;
  TaskSampling sampling_;
  HeadKind kind_;
};

struct GroundTruth {
  std::shared_ptr<const Mlp> rep;  // h*
  TaskSampler pretrain_tasks;
  TaskSampler finetune_tasks;
};

GroundTruth build_ground_truth(const ExperimentConfig& config, const Rng& root);

struct RepresentationProvenance {
  RepMode mode = RepMode::pretrain;
  std::optional<double> weak_pretrain_loss;
  std::optional<double> strong_pretrain_loss;
  std::vector<double> weak_epoch_loss;
  std::vector<double> strong_epoch_loss;
  std::optional<double> sigma_weak;
  std::optional<double> sigma_strong;
};

struct Representations {
  std::shared_ptr<const Mlp> weak;    // h_w
  std::shared_ptr<const Mlp> strong;  // h_s
  RepresentationProvenance provenance;
};

// Pretraining data for the representation stage: T tasks x N_r samples.
struct PretrainData {
  Matrix inputs;
  Vector targets;
  std::vector<std::size_t> task_of;
  std::vector<Head> heads;
};

PretrainData make_pretrain_data(const ExperimentConfig& config, const GroundTruth& truth, const Rng& root);

struct PretrainOutcome {
  std::shared_ptr<const Mlp> net;
  RepresentationTrainResult history;
};

// Trains a fresh `arch` network on the pretraining data, with the true heads
// held fixed, or jointly with learned heads when pretrain_joint is set.
PretrainOutcome pretrain_representation(const ExperimentConfig& config, const MlpArch& arch, const PretrainData& data,
                                        const Rng& root, std::uint64_t init_stream, std::uint64_t order_stream);

Representations acquire_representations(const ExperimentConfig& config, const GroundTruth& truth, const Rng& root);

struct FinetuneData {
  Matrix inputs;
  Vector targets;
};

// The weak model's view of task i: truly labeled inputs.
FinetuneData make_weak_training_data(const ExperimentConfig& config, const GroundTruth& truth, const Head& task,
                                     const Rng& task_stream);

// Weak-to-strong supervision. Fresh inputs are labeled by the weak model and
// the strong head is fit to those labels only; nothing about the true task is
// visible here.
struct WeakSupervision {
  FinetuneData weak_labeled;
  Head strong_head;
};

WeakSupervision supervise_strong(const ExperimentConfig& config, const Mlp& weak_rep, const Head& weak_head,
                                 const Mlp& strong_rep, const Rng& task_stream);

HeadTrainOptions finetune_head_options(const ExperimentConfig& config);

struct TaskOutcome {
  EvalRecord record;
  Head true_head;    // f^(i)
  Head weak_head;    // f_w^(i)
  Head strong_head;  // f_sw^(i)
};

TaskOutcome run_task(const ExperimentConfig& config, const GroundTruth& truth, const Representations& reps,
                     std::size_t task_id, const Rng& root);

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<EvalRecord> records;
  std::vector<TaskOutcome> tasks;
  std::shared_ptr<const Mlp> ground_truth;
  Representations representations;
  // Pretraining saw fewer samples than the strong representation has parameters.
  bool high_variance = false;
  double pretrain_seconds = 0.0;
  double finetune_seconds = 0.0;
};

struct RunOptions {
  std::size_t jobs = 1;
  bool verbose = false;
};

// The full pipeline: ground truth, representations, then for each of M tasks
// weak finetuning, weak-to-strong supervision and evaluation. Task errors are
// rethrown as TaskError (lowest failing task id).
ExperimentResult run_w2s_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// Finetuning and evaluation over representations built elsewhere, e.g. one
// strong representation shared by a pool of weak models. `truth` must come
// from build_ground_truth with the same config.
ExperimentResult run_with_representations(const ExperimentConfig& config, const GroundTruth& truth,
                                          Representations reps, const RunOptions& options = {});

// Same pipeline with scarce representation data (T = 5, N_r = 250).
ExperimentResult run_low_sample_variant(ExperimentConfig config, const RunOptions& options = {});

bool is_realizable(const ExperimentConfig& config);

}  // namespace w2s
