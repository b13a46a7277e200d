#include "w2s/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "w2s/errors.hpp"

namespace w2s {

std::string_view to_string(RepMode mode) {
  switch (mode) {
    case RepMode::pretrain: return "pretrain";
    case RepMode::perturb: return "perturb";
    case RepMode::realizable_strong: return "realizable_strong";
  }
  return "pretrain";
}

std::string_view to_string(EvalSampling sampling) { return sampling == EvalSampling::fresh ? "fresh" : "shared"; }

std::string_view to_string(HeadTrainMethod method) { return method == HeadTrainMethod::gd ? "gd" : "closed_form"; }

MlpArch ExperimentConfig::ground_truth_arch() const {
  return MlpArch{input_dim, ground_truth.hidden, rep_dim, ground_truth.depth};
}

MlpArch ExperimentConfig::weak_arch() const {
  const ArchSpec& spec = reverse_roles ? strong : weak;
  return MlpArch{input_dim, spec.hidden, rep_dim, spec.depth};
}

MlpArch ExperimentConfig::strong_arch() const {
  const ArchSpec& spec = reverse_roles ? weak : strong;
  return MlpArch{input_dim, spec.hidden, rep_dim, spec.depth};
}

std::string ExperimentConfig::resolved_weak_model_id() const {
  if (!weak_model_id.empty()) return weak_model_id;
  if (rep_mode == RepMode::perturb) {
    std::ostringstream out;
    out << "perturb-" << sigma_weak;
    return out.str();
  }
  const MlpArch arch = weak_arch();
  return "mlp-d" + std::to_string(arch.depth) + "-h" + std::to_string(arch.hidden_dim);
}

DataDistribution ExperimentConfig::distribution() const { return DataDistribution(input_dim, sigma); }

TrainOptions ExperimentConfig::pretrain_options() const {
  return TrainOptions{adam, batch_size, pretrain_epochs.value_or(epochs)};
}

TrainOptions ExperimentConfig::finetune_options() const { return TrainOptions{adam, batch_size, epochs}; }

namespace {

void require_positive(std::size_t v, const char* field) {
  if (v < 1) throw ConfigError(field, "must be at least 1");
}

void require_nonnegative(double v, const char* field) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(field, "must be finite and non-negative");
}

void require_strictly_positive(double v, const char* field) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(field, "must be finite and positive");
}

}  // namespace

void validate(const ExperimentConfig& c) {
  if (c.experiment_id.empty()) throw ConfigError("experiment_id", "must not be empty");
  require_positive(c.input_dim, "data.input_dim");
  require_strictly_positive(c.sigma, "data.sigma");
  require_positive(c.rep_dim, "archs.rep_dim");
  require_positive(c.ground_truth.depth, "archs.ground_truth_depth");
  require_positive(c.ground_truth.hidden, "archs.ground_truth_hidden");
  require_positive(c.weak.depth, "archs.weak_depth");
  require_positive(c.weak.hidden, "archs.weak_hidden");
  require_positive(c.strong.depth, "archs.strong_depth");
  require_positive(c.strong.hidden, "archs.strong_hidden");
  require_positive(c.pretrain_tasks, "pretrain.tasks");
  require_positive(c.pretrain_samples_per_task, "pretrain.samples_per_task");
  if (c.pretrain_epochs) require_positive(*c.pretrain_epochs, "pretrain.epochs");
  require_nonnegative(c.sigma_weak, "pretrain.sigma_weak");
  require_nonnegative(c.sigma_strong, "pretrain.sigma_strong");
  require_positive(c.finetune_tasks, "finetune.tasks");
  require_positive(c.finetune_samples, "finetune.samples");
  require_nonnegative(c.head_init_std, "finetune.init_std");
  require_nonnegative(c.task_sampling.weight_std, "finetune.task_weight_std");
  require_nonnegative(c.task_sampling.bias_std, "finetune.task_bias_std");
  require_strictly_positive(c.adam.learning_rate, "optimizer.learning_rate");
  if (!(c.adam.beta1 >= 0.0 && c.adam.beta1 < 1.0)) throw ConfigError("optimizer.beta1", "must lie in [0, 1)");
  if (!(c.adam.beta2 >= 0.0 && c.adam.beta2 < 1.0)) throw ConfigError("optimizer.beta2", "must lie in [0, 1)");
  require_strictly_positive(c.adam.epsilon, "optimizer.epsilon");
  require_positive(c.batch_size, "optimizer.batch_size");
  require_positive(c.epochs, "optimizer.epochs");
  require_positive(c.eval_samples, "eval.samples");
  require_positive(c.epsilon_fit_samples, "eval.epsilon_fit_samples");
  require_strictly_positive(c.tol_sigmas, "checks.tol_sigmas");
  require_nonnegative(c.skeleton_k1, "checks.k1");
  require_nonnegative(c.skeleton_kn, "checks.kn");

  if (c.method == HeadTrainMethod::closed_form && c.head_kind != HeadKind::linear) {
    throw ConfigError("finetune.method", "closed_form requires head_kind = \"linear\"");
  }
  if (c.rep_mode == RepMode::perturb) {
    if (c.weak != c.ground_truth) throw ConfigError("archs.weak_depth", "perturb mode requires the weak arch to equal the ground-truth arch");
    if (c.strong != c.ground_truth) throw ConfigError("archs.strong_depth", "perturb mode requires the strong arch to equal the ground-truth arch");
  }
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

// Drops a trailing comment that is not inside a string.
std::string strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return std::string(line.substr(0, i));
  }
  return std::string(line);
}

struct RawValue {
  std::string text;
  int line = 0;
};

using RawTable = std::map<std::string, RawValue>;

RawTable tokenize(std::string_view text) {
  RawTable table;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(strip_comment(line));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw ConfigError("line " + std::to_string(line_no), "malformed section header");
      section = trim(std::string_view(body).substr(1, body.size() - 2));
      if (section.empty()) throw ConfigError("line " + std::to_string(line_no), "empty section name");
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no), "expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError("line " + std::to_string(line_no), "expected key = value");
    const std::string full = section.empty() ? key : section + "." + key;
    if (table.contains(full)) throw ConfigError(full, "duplicate key");
    table[full] = RawValue{value, line_no};
  }
  return table;
}

std::string as_string(const std::string& field, const std::string& v) {
  if (v.size() < 2 || v.front() != '"' || v.back() != '"') throw ConfigError(field, "expected a quoted string");
  return v.substr(1, v.size() - 2);
}

bool as_bool(const std::string& field, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(field, "expected true or false");
}

double as_double(const std::string& field, const std::string& v) {
  double out = 0.0;
  const char* begin = v.data();
  const char* end = v.data() + v.size();
  if (!v.empty() && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(field, "expected a number, got '" + v + "'");
  return out;
}

std::uint64_t as_uint(const std::string& field, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec == std::errc() && ptr == v.data() + v.size()) return out;
  // Allow integral values written in float syntax, e.g. 1e5.
  const double d = as_double(field, v);
  if (d < 0.0 || d != std::floor(d) || d > 1.8e19) throw ConfigError(field, "expected a non-negative integer");
  return static_cast<std::uint64_t>(d);
}

template <typename Enum>
Enum as_enum(const std::string& field, const std::string& v, const std::function<Enum(std::string_view)>& parse) {
  const std::string s = as_string(field, v);
  try {
    return parse(s);
  } catch (const std::invalid_argument&) {
    throw ConfigError(field, "unrecognized value \"" + s + "\"");
  }
}

RepMode parse_rep_mode(std::string_view s) {
  if (s == "pretrain") return RepMode::pretrain;
  if (s == "perturb") return RepMode::perturb;
  if (s == "realizable_strong") return RepMode::realizable_strong;
  throw std::invalid_argument("rep_mode");
}

EvalSampling parse_sampling(std::string_view s) {
  if (s == "fresh") return EvalSampling::fresh;
  if (s == "shared") return EvalSampling::shared;
  throw std::invalid_argument("sampling");
}

HeadTrainMethod parse_method(std::string_view s) {
  if (s == "gd") return HeadTrainMethod::gd;
  if (s == "closed_form") return HeadTrainMethod::closed_form;
  throw std::invalid_argument("method");
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, ptr);
  // Keep integral doubles recognizable as floats.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, std::string_view default_id) {
  RawTable raw = tokenize(text);
  ExperimentConfig c;
  c.experiment_id = std::string(default_id);

  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto size_field = [](std::size_t& dst) -> Setter {
    return [&dst](const std::string& f, const std::string& v) { dst = static_cast<std::size_t>(as_uint(f, v)); };
  };
  auto double_field = [](double& dst) -> Setter {
    return [&dst](const std::string& f, const std::string& v) { dst = as_double(f, v); };
  };
  auto bool_field = [](bool& dst) -> Setter {
    return [&dst](const std::string& f, const std::string& v) { dst = as_bool(f, v); };
  };

  const std::map<std::string, Setter> setters = {
      {"experiment_id", [&](const std::string& f, const std::string& v) { c.experiment_id = as_string(f, v); }},
      {"master_seed", [&](const std::string& f, const std::string& v) { c.master_seed = as_uint(f, v); }},
      {"rep_mode",
       [&](const std::string& f, const std::string& v) { c.rep_mode = as_enum<RepMode>(f, v, parse_rep_mode); }},
      {"reverse_roles", bool_field(c.reverse_roles)},
      {"data.input_dim", size_field(c.input_dim)},
      {"data.sigma", double_field(c.sigma)},
      {"archs.rep_dim", size_field(c.rep_dim)},
      {"archs.ground_truth_depth", size_field(c.ground_truth.depth)},
      {"archs.ground_truth_hidden", size_field(c.ground_truth.hidden)},
      {"archs.weak_depth", size_field(c.weak.depth)},
      {"archs.weak_hidden", size_field(c.weak.hidden)},
      {"archs.strong_depth", size_field(c.strong.depth)},
      {"archs.strong_hidden", size_field(c.strong.hidden)},
      {"archs.weak_model_id", [&](const std::string& f, const std::string& v) { c.weak_model_id = as_string(f, v); }},
      {"pretrain.tasks", size_field(c.pretrain_tasks)},
      {"pretrain.samples_per_task", size_field(c.pretrain_samples_per_task)},
      {"pretrain.epochs",
       [&](const std::string& f, const std::string& v) { c.pretrain_epochs = static_cast<std::size_t>(as_uint(f, v)); }},
      {"pretrain.joint", bool_field(c.pretrain_joint)},
      {"pretrain.head_kind",
       [&](const std::string& f, const std::string& v) {
         c.pretrain_head_kind = as_enum<HeadKind>(f, v, parse_head_kind);
       }},
      {"pretrain.sigma_weak", double_field(c.sigma_weak)},
      {"pretrain.sigma_strong", double_field(c.sigma_strong)},
      {"finetune.tasks", size_field(c.finetune_tasks)},
      {"finetune.samples", size_field(c.finetune_samples)},
      {"finetune.head_kind",
       [&](const std::string& f, const std::string& v) { c.head_kind = as_enum<HeadKind>(f, v, parse_head_kind); }},
      {"finetune.method",
       [&](const std::string& f, const std::string& v) { c.method = as_enum<HeadTrainMethod>(f, v, parse_method); }},
      {"finetune.bias", bool_field(c.head_bias)},
      {"finetune.init_std", double_field(c.head_init_std)},
      {"finetune.task_weight_std", double_field(c.task_sampling.weight_std)},
      {"finetune.task_bias", bool_field(c.task_sampling.bias_enabled)},
      {"finetune.task_bias_std", double_field(c.task_sampling.bias_std)},
      {"optimizer.learning_rate", double_field(c.adam.learning_rate)},
      {"optimizer.beta1", double_field(c.adam.beta1)},
      {"optimizer.beta2", double_field(c.adam.beta2)},
      {"optimizer.epsilon", double_field(c.adam.epsilon)},
      {"optimizer.batch_size", size_field(c.batch_size)},
      {"optimizer.epochs", size_field(c.epochs)},
      {"eval.samples", size_field(c.eval_samples)},
      {"eval.sampling",
       [&](const std::string& f, const std::string& v) {
         c.eval_sampling = as_enum<EvalSampling>(f, v, parse_sampling);
       }},
      {"eval.epsilon", bool_field(c.estimate_epsilon)},
      {"eval.epsilon_fit_samples", size_field(c.epsilon_fit_samples)},
      {"checks.tol_sigmas", double_field(c.tol_sigmas)},
      {"checks.k1", double_field(c.skeleton_k1)},
      {"checks.kn", double_field(c.skeleton_kn)},
  };

  for (const auto& [key, value] : raw) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(key, "unknown key (line " + std::to_string(value.line) + ")");
    it->second(key, value.text);
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open config file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path.stem().string());
}

std::string to_toml(const ExperimentConfig& c) {
  std::ostringstream out;
  auto q = [](const std::string& s) { return "\"" + s + "\""; };
  auto b = [](bool v) { return v ? "true" : "false"; };
  out << "experiment_id = " << q(c.experiment_id) << "\n";
  out << "master_seed = " << c.master_seed << "\n";
  out << "rep_mode = " << q(std::string(to_string(c.rep_mode))) << "\n";
  out << "reverse_roles = " << b(c.reverse_roles) << "\n";
  out << "\n[data]\n";
  out << "input_dim = " << c.input_dim << "\n";
  out << "sigma = " << format_double(c.sigma) << "\n";
  out << "\n[archs]\n";
  out << "rep_dim = " << c.rep_dim << "\n";
  out << "ground_truth_depth = " << c.ground_truth.depth << "\n";
  out << "ground_truth_hidden = " << c.ground_truth.hidden << "\n";
  out << "weak_depth = " << c.weak.depth << "\n";
  out << "weak_hidden = " << c.weak.hidden << "\n";
  out << "strong_depth = " << c.strong.depth << "\n";
  out << "strong_hidden = " << c.strong.hidden << "\n";
  if (!c.weak_model_id.empty()) out << "weak_model_id = " << q(c.weak_model_id) << "\n";
  out << "\n[pretrain]\n";
  out << "tasks = " << c.pretrain_tasks << "\n";
  out << "samples_per_task = " << c.pretrain_samples_per_task << "\n";
  if (c.pretrain_epochs) out << "epochs = " << *c.pretrain_epochs << "\n";
  out << "joint = " << b(c.pretrain_joint) << "\n";
  out << "head_kind = " << q(std::string(to_string(c.pretrain_head_kind))) << "\n";
  out << "sigma_weak = " << format_double(c.sigma_weak) << "\n";
  out << "sigma_strong = " << format_double(c.sigma_strong) << "\n";
  out << "\n[finetune]\n";
  out << "tasks = " << c.finetune_tasks << "\n";
  out << "samples = " << c.finetune_samples << "\n";
  out << "head_kind = " << q(std::string(to_string(c.head_kind))) << "\n";
  out << "method = " << q(std::string(to_string(c.method))) << "\n";
  out << "bias = " << b(c.head_bias) << "\n";
  out << "init_std = " << format_double(c.head_init_std) << "\n";
  out << "task_weight_std = " << format_double(c.task_sampling.weight_std) << "\n";
  out << "task_bias = " << b(c.task_sampling.bias_enabled) << "\n";
  out << "task_bias_std = " << format_double(c.task_sampling.bias_std) << "\n";
  out << "\n[optimizer]\n";
  out << "learning_rate = " << format_double(c.adam.learning_rate) << "\n";
  out << "beta1 = " << format_double(c.adam.beta1) << "\n";
  out << "beta2 = " << format_double(c.adam.beta2) << "\n";
  out << "epsilon = " << format_double(c.adam.epsilon) << "\n";
  out << "batch_size = " << c.batch_size << "\n";
  out << "epochs = " << c.epochs << "\n";
  out << "\n[eval]\n";
  out << "samples = " << c.eval_samples << "\n";
  out << "sampling = " << q(std::string(to_string(c.eval_sampling))) << "\n";
  out << "epsilon = " << b(c.estimate_epsilon) << "\n";
  out << "epsilon_fit_samples = " << c.epsilon_fit_samples << "\n";
  out << "\n[checks]\n";
  out << "tol_sigmas = " << format_double(c.tol_sigmas) << "\n";
  out << "k1 = " << format_double(c.skeleton_k1) << "\n";
  out << "kn = " << format_double(c.skeleton_kn) << "\n";
  return out.str();
}

void apply_env_overrides(ExperimentConfig& config) {
  if (const char* seed = std::getenv("W2S_SEED"); seed != nullptr && *seed != '\0') {
    config.master_seed = as_uint("W2S_SEED", seed);
  }
}

}  // namespace w2s
