#include "w2s/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <iostream>
#include <mutex>
#include <thread>

#include "w2s/errors.hpp"

namespace w2s {

TaskSampler::TaskSampler(Rng base, std::size_t dim, TaskSampling sampling, HeadKind kind)
    : base_(base), dim_(dim), sampling_(sampling), kind_(kind) {}

Head TaskSampler::task(std::size_t index) const {
  Rng stream = base_.child(index);
  return sample_linear_task(dim_, stream, sampling_, kind_);
}

bool is_realizable(const ExperimentConfig& config) {
  if (config.rep_mode == RepMode::realizable_strong) return true;
  return config.rep_mode == RepMode::perturb && config.sigma_strong == 0.0;
}

GroundTruth build_ground_truth(const ExperimentConfig& config, const Rng& root) {
  Rng init = root.child(streams::kGroundTruth);
  auto rep = std::make_shared<const Mlp>(Mlp::random(config.ground_truth_arch(), init));
  return GroundTruth{
      rep,
      TaskSampler(root.child(streams::kPretrainTasks), config.rep_dim, config.task_sampling, config.pretrain_head_kind),
      TaskSampler(root.child(streams::kFinetuneTasks), config.rep_dim, config.task_sampling, config.head_kind),
  };
}

PretrainData make_pretrain_data(const ExperimentConfig& config, const GroundTruth& truth, const Rng& root) {
  const std::size_t tasks = config.pretrain_tasks;
  const std::size_t per_task = config.pretrain_samples_per_task;
  const DataDistribution dist = config.distribution();
  PretrainData data;
  data.inputs = Matrix(tasks * per_task, config.input_dim);
  data.targets.resize(tasks * per_task);
  data.task_of.resize(tasks * per_task);
  const Rng base = root.child(streams::kPretrainData);
  for (std::size_t t = 0; t < tasks; ++t) {
    data.heads.push_back(truth.pretrain_tasks.task(t));
    Rng stream = base.child(t);
    const Matrix x = dist.sample(per_task, stream);
    const Vector y = apply_head(data.heads.back(), truth.rep->forward(x));
    for (std::size_t j = 0; j < per_task; ++j) {
      const std::size_t row = t * per_task + j;
      std::copy(x.row(j).begin(), x.row(j).end(), data.inputs.row(row).begin());
      data.targets[row] = y[j];
      data.task_of[row] = t;
    }
  }
  return data;
}

PretrainOutcome pretrain_representation(const ExperimentConfig& config, const MlpArch& arch, const PretrainData& data,
                                        const Rng& root, std::uint64_t init_stream, std::uint64_t order_stream) {
  Rng init = root.child(init_stream);
  Mlp net = Mlp::random(arch, init);
  std::vector<Head> heads = data.heads;
  if (config.pretrain_joint) {
    // Joint mode learns its own heads from a random start.
    Rng head_stream = root.child({streams::kPretrainJointHeads, init_stream});
    for (auto& head : heads) {
      head = sample_linear_task(config.rep_dim, head_stream, config.task_sampling, config.pretrain_head_kind);
      head.origin = HeadOrigin::gd;
    }
  }
  Rng order = root.child(order_stream);
  RepresentationTrainResult history = train_representation(net, data.inputs, data.targets, data.task_of, heads,
                                                           config.pretrain_joint, config.pretrain_options(), order);
  return PretrainOutcome{std::make_shared<const Mlp>(std::move(net)), std::move(history)};
}

Representations acquire_representations(const ExperimentConfig& config, const GroundTruth& truth, const Rng& root) {
  Representations reps;
  reps.provenance.mode = config.rep_mode;
  switch (config.rep_mode) {
    case RepMode::perturb: {
      Rng weak_stream = root.child(streams::kPerturbWeak);
      Rng strong_stream = root.child(streams::kPerturbStrong);
      reps.weak = std::make_shared<const Mlp>(perturb_mlp(*truth.rep, config.sigma_weak, weak_stream));
      reps.strong = std::make_shared<const Mlp>(perturb_mlp(*truth.rep, config.sigma_strong, strong_stream));
      reps.provenance.sigma_weak = config.sigma_weak;
      reps.provenance.sigma_strong = config.sigma_strong;
      return reps;
    }
    case RepMode::realizable_strong:
    case RepMode::pretrain: {
      const PretrainData data = make_pretrain_data(config, truth, root);
      PretrainOutcome weak = pretrain_representation(config, config.weak_arch(), data, root, streams::kPretrainWeakInit,
                                      streams::kPretrainWeakOrder);
      reps.weak = weak.net;
      reps.provenance.weak_pretrain_loss = weak.history.final_loss;
      reps.provenance.weak_epoch_loss = std::move(weak.history.epoch_loss);
      if (config.rep_mode == RepMode::realizable_strong) {
        reps.strong = truth.rep;
      } else {
        PretrainOutcome strong = pretrain_representation(config, config.strong_arch(), data, root, streams::kPretrainStrongInit,
                                          streams::kPretrainStrongOrder);
        reps.strong = strong.net;
        reps.provenance.strong_pretrain_loss = strong.history.final_loss;
        reps.provenance.strong_epoch_loss = std::move(strong.history.epoch_loss);
      }
      return reps;
    }
  }
  return reps;
}

HeadTrainOptions finetune_head_options(const ExperimentConfig& config) {
  HeadTrainOptions options;
  options.kind = config.head_kind;
  options.method = config.method;
  options.bias_enabled = config.head_bias;
  options.train = config.finetune_options();
  options.init_std = config.head_init_std;
  options.fallback_on_singular = true;
  return options;
}

FinetuneData make_weak_training_data(const ExperimentConfig& config, const GroundTruth& truth, const Head& task,
                                     const Rng& task_stream) {
  Rng stream = task_stream.child(streams::kWeakData);
  FinetuneData data;
  data.inputs = config.distribution().sample(config.finetune_samples, stream);
  data.targets = apply_head(task, truth.rep->forward(data.inputs));
  return data;
}

WeakSupervision supervise_strong(const ExperimentConfig& config, const Mlp& weak_rep, const Head& weak_head,
                                 const Mlp& strong_rep, const Rng& task_stream) {
  Rng data_stream = task_stream.child(streams::kWeakLabelData);
  Rng train_stream = task_stream.child(streams::kStrongTrain);
  WeakSupervision out;
  out.weak_labeled.inputs = config.distribution().sample(config.finetune_samples, data_stream);
  out.weak_labeled.targets = apply_head(weak_head, weak_rep.forward(out.weak_labeled.inputs));
  out.strong_head =
      train_head(strong_rep, out.weak_labeled.inputs, out.weak_labeled.targets, finetune_head_options(config), train_stream);
  return out;
}

TaskOutcome run_task(const ExperimentConfig& config, const GroundTruth& truth, const Representations& reps,
                     std::size_t task_id, const Rng& root) {
  const Rng task_stream = root.child({streams::kTask, task_id});
  TaskOutcome out;
  out.true_head = truth.finetune_tasks.task(task_id);

  const FinetuneData weak_data = make_weak_training_data(config, truth, out.true_head, task_stream);
  Rng weak_train = task_stream.child(streams::kWeakTrain);
  out.weak_head = train_head(*reps.weak, weak_data.inputs, weak_data.targets, finetune_head_options(config), weak_train);

  out.strong_head = supervise_strong(config, *reps.weak, out.weak_head, *reps.strong, task_stream).strong_head;

  const Predictor truth_fn{truth.rep, out.true_head};
  const Predictor weak_fn{reps.weak, out.weak_head};
  const Predictor strong_fn{reps.strong, out.strong_head};
  const DataDistribution dist = config.distribution();
  Rng eval_stream = task_stream.child(streams::kEval);
  out.record = evaluate_triplet(truth_fn, weak_fn, strong_fn, dist, config.eval_samples, eval_stream,
                                config.eval_sampling);

  if (config.estimate_epsilon && config.head_kind == HeadKind::linear) {
    Rng eps_stream = task_stream.child(streams::kEpsilon);
    out.record.epsilon_hat = estimate_epsilon(*reps.strong, truth_fn, dist, config.epsilon_fit_samples,
                                              config.eval_samples, eps_stream, config.head_bias)
                                 .epsilon;
  }
  out.record.experiment_id = config.experiment_id;
  out.record.task_id = task_id;
  out.record.weak_model_id = config.resolved_weak_model_id();
  out.record.seed = config.master_seed;
  out.record.validate();
  return out;
}

ExperimentResult run_w2s_experiment(const ExperimentConfig& config, const RunOptions& options) {
  validate(config);
  using Clock = std::chrono::steady_clock;
  const Rng root(config.master_seed);
  const auto t0 = Clock::now();
  const GroundTruth truth = build_ground_truth(config, root);
  if (options.verbose) std::clog << "[" << config.experiment_id << "] acquiring representations\n";
  Representations reps = acquire_representations(config, truth, root);
  ExperimentResult result = run_with_representations(config, truth, std::move(reps), options);
  result.pretrain_seconds = std::chrono::duration<double>(Clock::now() - t0).count() - result.finetune_seconds;
  return result;
}

ExperimentResult run_with_representations(const ExperimentConfig& config, const GroundTruth& truth,
                                          Representations reps, const RunOptions& options) {
  validate(config);
  using Clock = std::chrono::steady_clock;
  const Rng root(config.master_seed);

  ExperimentResult result;
  result.config = config;
  result.ground_truth = truth.rep;
  result.representations = std::move(reps);
  const std::size_t rep_params = std::max(result.representations.weak->parameter_count(),
                                          result.representations.strong->parameter_count());
  result.high_variance = config.rep_mode != RepMode::perturb &&
                         config.pretrain_tasks * config.pretrain_samples_per_task < rep_params;
  const auto t1 = Clock::now();

  const std::size_t m = config.finetune_tasks;
  result.tasks.resize(m);
  std::vector<std::exception_ptr> errors(m);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < m; i = next++) {
      try {
        result.tasks[i] = run_task(config, truth, result.representations, i, root);
      } catch (...) {
        errors[i] = std::current_exception();
      }
      const std::size_t finished = ++done;
      if (options.verbose && (finished % 10 == 0 || finished == m)) {
        std::lock_guard lock(log_mutex);
        std::clog << "[" << config.experiment_id << "] " << finished << "/" << m << " tasks\n";
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, m));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw TaskError(i, e.what());
    }
  }
  result.records.reserve(m);
  for (const auto& task : result.tasks) result.records.push_back(task.record);
  result.finetune_seconds = std::chrono::duration<double>(Clock::now() - t1).count();
  return result;
}

ExperimentResult run_low_sample_variant(ExperimentConfig config, const RunOptions& options) {
  config.pretrain_tasks = 5;
  config.pretrain_samples_per_task = 250;
  return run_w2s_experiment(config, options);
}

}  // namespace w2s
