#include "w2s/report.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "w2s/errors.hpp"
#include "w2s/serialize.hpp"

namespace w2s {

using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_double: formatting failed");
  return std::string(buf, ptr);
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw std::invalid_argument("csv line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

template <typename T>
T parse_number(const std::string& text, std::size_t line_no) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument("csv line " + std::to_string(line_no) + ": bad number '" + text + "'");
  }
  return v;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string csv_header() {
  return "experiment_id,task_id,weak_model_id,seed,weak_true_err,w2s_true_err,misfit,gain,epsilon_hat,n_eval";
}

std::string records_to_csv(std::span<const EvalRecord> records) {
  std::string out = csv_header() + "\n";
  for (const auto& r : records) {
    out += csv_field(r.experiment_id) + "," + std::to_string(r.task_id) + "," + csv_field(r.weak_model_id) + "," +
           std::to_string(r.seed) + "," + format_double(r.weak_true_err) + "," + format_double(r.w2s_true_err) + "," +
           format_double(r.misfit) + "," + format_double(r.gain) + "," +
           (r.epsilon_hat ? format_double(*r.epsilon_hat) : std::string()) + "," + std::to_string(r.n_eval) + "\n";
  }
  return out;
}

std::vector<EvalRecord> parse_csv(std::string_view text) {
  std::vector<EvalRecord> records;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const auto end = text.find('\n');
    std::string_view line = text.substr(0, end);
    text = end == std::string_view::npos ? std::string_view() : text.substr(end + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != csv_header()) throw std::invalid_argument("csv: unexpected header");
      header_seen = true;
      continue;
    }
    const auto f = split_csv_line(line, line_no);
    if (f.size() != 10) {
      throw std::invalid_argument("csv line " + std::to_string(line_no) + ": expected 10 fields, got " +
                                  std::to_string(f.size()));
    }
    EvalRecord r;
    r.experiment_id = f[0];
    r.task_id = parse_number<std::size_t>(f[1], line_no);
    r.weak_model_id = f[2];
    r.seed = parse_number<std::uint64_t>(f[3], line_no);
    r.weak_true_err = parse_number<double>(f[4], line_no);
    r.w2s_true_err = parse_number<double>(f[5], line_no);
    r.misfit = parse_number<double>(f[6], line_no);
    r.gain = parse_number<double>(f[7], line_no);
    if (!f[8].empty()) r.epsilon_hat = parse_number<double>(f[8], line_no);
    r.n_eval = parse_number<std::size_t>(f[9], line_no);
    records.push_back(std::move(r));
  }
  if (!header_seen) throw std::invalid_argument("csv: missing header");
  return records;
}

json record_to_json(const EvalRecord& r) {
  return json{
      {"experiment_id", r.experiment_id},
      {"task_id", r.task_id},
      {"weak_model_id", r.weak_model_id},
      {"seed", r.seed},
      {"weak_true_err", r.weak_true_err},
      {"w2s_true_err", r.w2s_true_err},
      {"misfit", r.misfit},
      {"gain", r.gain},
      {"epsilon_hat", optional_number(r.epsilon_hat)},
      {"n_eval", r.n_eval},
      {"weak_true_err_se", r.weak_true_err_se},
      {"w2s_true_err_se", r.w2s_true_err_se},
      {"misfit_se", r.misfit_se},
      {"gap_se", r.gap_se},
  };
}

EvalRecord record_from_json(const json& doc) {
  EvalRecord r;
  r.experiment_id = doc.at("experiment_id").get<std::string>();
  r.task_id = doc.at("task_id").get<std::size_t>();
  r.weak_model_id = doc.at("weak_model_id").get<std::string>();
  r.seed = doc.at("seed").get<std::uint64_t>();
  r.weak_true_err = doc.at("weak_true_err").get<double>();
  r.w2s_true_err = doc.at("w2s_true_err").get<double>();
  r.misfit = doc.at("misfit").get<double>();
  r.gain = doc.at("gain").get<double>();
  if (!doc.at("epsilon_hat").is_null()) r.epsilon_hat = doc.at("epsilon_hat").get<double>();
  r.n_eval = doc.at("n_eval").get<std::size_t>();
  r.weak_true_err_se = doc.value("weak_true_err_se", 0.0);
  r.w2s_true_err_se = doc.value("w2s_true_err_se", 0.0);
  r.misfit_se = doc.value("misfit_se", 0.0);
  r.gap_se = doc.value("gap_se", 0.0);
  return r;
}

json bound_to_json(const BoundReport& b) {
  return json{
      {"task_id", b.task_id},   {"lhs", b.lhs},
      {"rhs", b.rhs},           {"slack", b.slack},
      {"tolerance", b.tolerance}, {"verdict", std::string(to_string(b.verdict))},
      {"informational", b.informational}, {"budget", b.budget},
      {"required_slack", b.required_slack},
  };
}

ModelBundle bundle_models(const ExperimentResult& result) {
  ModelBundle m;
  m.ground_truth = result.ground_truth;
  m.weak = result.representations.weak;
  m.strong = result.representations.strong;
  for (const auto& t : result.tasks) {
    m.true_heads.push_back(t.true_head);
    m.weak_heads.push_back(t.weak_head);
    m.strong_heads.push_back(t.strong_head);
  }
  return m;
}

json heads_to_json(const ModelBundle& models) {
  json tasks = json::array();
  for (std::size_t i = 0; i < models.true_heads.size(); ++i) {
    tasks.push_back({
        {"task_id", i},
        {"true_head", head_to_json(models.true_heads[i])},
        {"weak_head", head_to_json(models.weak_heads[i])},
        {"strong_head", head_to_json(models.strong_heads[i])},
    });
  }
  return json{{"tasks", std::move(tasks)}};
}

void heads_from_json(const json& doc, ModelBundle& models) {
  for (const auto& t : doc.at("tasks")) {
    models.true_heads.push_back(head_from_json(t.at("true_head")));
    models.weak_heads.push_back(head_from_json(t.at("weak_head")));
    models.strong_heads.push_back(head_from_json(t.at("strong_head")));
  }
}

std::vector<BoundReport> realizable_reports(const ExperimentConfig& config, std::span<const EvalRecord> records) {
  const bool realizable = is_realizable(config);
  std::vector<BoundReport> out;
  for (const auto& r : records) out.push_back(check_realizable_bound(r, mc_tolerance(r, config.tol_sigmas), realizable));
  return out;
}

std::vector<BoundReport> skeleton_reports(const ExperimentConfig& config, std::span<const EvalRecord> records) {
  std::vector<BoundReport> out;
  for (const auto& r : records) {
    if (!r.epsilon_hat) continue;
    out.push_back(check_nonrealizable_skeleton(r, mc_tolerance(r, config.tol_sigmas), config.skeleton_k1,
                                               config.skeleton_kn));
  }
  return out;
}

json result_to_json(const ExperimentResult& result, bool embed_models, const std::optional<ModelFiles>& files) {
  json doc;
  doc["schema_version"] = kResultSchemaVersion;
  doc["experiment_id"] = result.config.experiment_id;
  doc["config"] = to_toml(result.config);
  doc["realizable"] = is_realizable(result.config);
  doc["high_variance"] = result.high_variance;

  json records = json::array();
  for (const auto& r : result.records) records.push_back(record_to_json(r));
  doc["records"] = std::move(records);

  json bounds = json::array();
  for (const auto& b : realizable_reports(result.config, result.records)) bounds.push_back(bound_to_json(b));
  doc["bound_reports"] = std::move(bounds);
  json skeleton = json::array();
  for (const auto& b : skeleton_reports(result.config, result.records)) skeleton.push_back(bound_to_json(b));
  doc["skeleton_reports"] = std::move(skeleton);

  const auto& prov = result.representations.provenance;
  json provenance{{"mode", std::string(to_string(prov.mode))},
                  {"weak_pretrain_loss", optional_number(prov.weak_pretrain_loss)},
                  {"strong_pretrain_loss", optional_number(prov.strong_pretrain_loss)},
                  {"weak_epoch_loss", prov.weak_epoch_loss},
                  {"strong_epoch_loss", prov.strong_epoch_loss},
                  {"sigma_weak", optional_number(prov.sigma_weak)},
                  {"sigma_strong", optional_number(prov.sigma_strong)}};
  doc["provenance"] = std::move(provenance);

  if (embed_models) {
    const ModelBundle m = bundle_models(result);
    doc["models"] = {{"ground_truth", mlp_to_json(*m.ground_truth)},
                     {"weak", mlp_to_json(*m.weak)},
                     {"strong", mlp_to_json(*m.strong)},
                     {"heads", heads_to_json(m)}};
  }
  if (files) {
    doc["model_files"] = {{"ground_truth", files->ground_truth},
                          {"weak", files->weak},
                          {"strong", files->strong},
                          {"heads", files->heads}};
  }
  return doc;
}

namespace {

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return json::parse(in);
}

}  // namespace

LoadedResult result_from_json(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object() || !doc.contains("schema_version") || !doc["schema_version"].is_number_integer()) {
    throw SchemaError("result document has no schema_version");
  }
  const int version = doc["schema_version"].get<int>();
  if (version != kResultSchemaVersion) {
    throw SchemaError("result schema_version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kResultSchemaVersion) + ")");
  }
  LoadedResult out;
  try {
    out.config = parse_config(doc.at("config").get<std::string>(), doc.value("experiment_id", "experiment"));
    for (const auto& r : doc.at("records")) out.records.push_back(record_from_json(r));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed result document: ") + e.what());
  }
  out.realizable = is_realizable(out.config);

  if (doc.contains("models")) {
    const auto& m = doc["models"];
    ModelBundle bundle;
    bundle.ground_truth = std::make_shared<const Mlp>(mlp_from_json(m.at("ground_truth")));
    bundle.weak = std::make_shared<const Mlp>(mlp_from_json(m.at("weak")));
    bundle.strong = std::make_shared<const Mlp>(mlp_from_json(m.at("strong")));
    heads_from_json(m.at("heads"), bundle);
    out.models = std::move(bundle);
  } else if (doc.contains("model_files")) {
    const auto& f = doc["model_files"];
    const auto file = [&](const char* key) { return base_dir / f.at(key).get<std::string>(); };
    if (std::filesystem::exists(file("ground_truth")) && std::filesystem::exists(file("heads"))) {
      ModelBundle bundle;
      bundle.ground_truth = std::make_shared<const Mlp>(load_mlp(file("ground_truth")));
      bundle.weak = std::make_shared<const Mlp>(load_mlp(file("weak")));
      bundle.strong = std::make_shared<const Mlp>(load_mlp(file("strong")));
      heads_from_json(read_json(file("heads")), bundle);
      out.models = std::move(bundle);
    }
  }
  return out;
}

LoadedResult load_result(const std::filesystem::path& path) {
  json doc;
  try {
    doc = read_json(path);
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + " is not a JSON document: " + e.what());
  }
  return result_from_json(doc, path.parent_path());
}

std::string git_blob_hash(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw std::runtime_error("git_blob_hash: EVP_MD_CTX_new failed");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("git_blob_hash: SHA-1 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

json manifest_to_json(const RunManifest& m) {
  json files = json::array();
  for (const auto& f : m.files) files.push_back({{"path", f.path}, {"bytes", f.bytes}, {"hash", f.hash}});
  return json{
      {"config_path", m.config_path},
      {"config_hash", m.config_hash},
      {"output_dir", m.output_dir},
      {"files", std::move(files)},
      {"results_hash", m.results_hash},
      {"timings", {{"pretrain_seconds", m.pretrain_seconds},
                   {"finetune_seconds", m.finetune_seconds},
                   {"total_seconds", m.total_seconds}}},
  };
}

namespace {

CheckRow row_from_bound(std::string check, const BoundReport& b) {
  return CheckRow{std::move(check), b.task_id, b.lhs, b.rhs, b.slack, b.tolerance, b.verdict, b.informational};
}

Matrix check_sample(const LoadedResult& result, std::size_t task_id) {
  Rng stream = Rng(result.config.master_seed).child({streams::kChecks, task_id});
  return result.config.distribution().sample(result.config.finetune_samples, stream);
}

constexpr std::size_t kProbeCount = 5;
constexpr double kPythagorasTol = 1e-8;
constexpr double kTriangleTol = 1e-12;

void pythagoras_rows(const LoadedResult& result, CheckSummary& summary) {
  const ModelBundle& m = *result.models;
  const bool linear = result.config.head_kind == HeadKind::linear;
  for (std::size_t i = 0; i < m.weak_heads.size(); ++i) {
    const Matrix sample = check_sample(result, i);
    const Predictor weak_fn{m.weak, m.weak_heads[i]};
    const Head projection = project_onto_strong(weak_fn, *m.strong, sample, result.config.head_bias);
    Rng probe_stream = Rng(result.config.master_seed).child({streams::kChecks, i, 1});
    const std::vector<Head> probes = pythagorean_probes(projection, kProbeCount, probe_stream);

    std::vector<std::pair<BatchFn, bool>> targets;
    // The true function lies in the strong span only for realizable runs.
    targets.emplace_back(Predictor{m.ground_truth, m.true_heads[i]}, !(result.realizable && linear));
    for (const auto& probe : probes) targets.emplace_back(Predictor{m.strong, probe}, false);

    for (const auto& [g, informational] : targets) {
      const PythagorasReport r = pythagorean_report(weak_fn, *m.strong, projection, g, sample);
      CheckRow row;
      row.check = "pythagoras";
      row.task_id = i;
      row.lhs = r.c_hat;
      row.rhs = r.a_hat + r.b_hat;
      row.slack = -std::abs(r.c_hat - (r.a_hat + r.b_hat));
      row.tolerance = kPythagorasTol * r.c_hat;
      row.verdict = verdict_for(row.slack, row.tolerance);
      if (r.scaled_cross > kPythagorasTol) row.verdict = Verdict::violated;
      row.informational = informational;
      summary.rows.push_back(row);
    }
  }
}

void triangle_rows(const LoadedResult& result, CheckSummary& summary) {
  const ModelBundle& m = *result.models;
  for (std::size_t i = 0; i < m.weak_heads.size(); ++i) {
    const Matrix sample = check_sample(result, i);
    const Vector fns[] = {Predictor{m.ground_truth, m.true_heads[i]}(sample), Predictor{m.weak, m.weak_heads[i]}(sample),
                          Predictor{m.strong, m.strong_heads[i]}(sample)};
    // Every choice of the two endpoints and the midpoint.
    for (int a = 0; a < 3; ++a) {
      for (int b = a + 1; b < 3; ++b) {
        const int h = 3 - a - b;
        const double fg = std::sqrt(distance_on_sample(fns[a], fns[b]).value);
        const double fh = std::sqrt(distance_on_sample(fns[a], fns[h]).value);
        const double hg = std::sqrt(distance_on_sample(fns[h], fns[b]).value);
        CheckRow row;
        row.check = "triangle";
        row.task_id = i;
        row.lhs = fg;
        row.rhs = fh + hg;
        row.slack = row.rhs - row.lhs;
        row.tolerance = kTriangleTol * row.rhs;
        row.verdict = verdict_for(row.slack, row.tolerance);
        summary.rows.push_back(row);
      }
    }
  }
}

}  // namespace

CheckSummary run_checks(const LoadedResult& result, const std::set<std::string>& checks) {
  for (const auto& name : checks) {
    if (std::find(std::begin(kCheckNames), std::end(kCheckNames), name) == std::end(kCheckNames)) {
      throw std::invalid_argument("unknown check '" + name + "'");
    }
  }
  CheckSummary summary;
  if (checks.contains("realizable")) {
    for (const auto& b : realizable_reports(result.config, result.records)) {
      summary.rows.push_back(row_from_bound("realizable", b));
    }
  }
  if (checks.contains("skeleton")) {
    const auto reports = skeleton_reports(result.config, result.records);
    if (reports.empty()) summary.skipped.push_back("skeleton: no record carries epsilon_hat");
    for (const auto& b : reports) summary.rows.push_back(row_from_bound("skeleton", b));
  }
  for (const char* name : {"pythagoras", "triangle"}) {
    if (!checks.contains(name)) continue;
    if (!result.models) {
      summary.skipped.push_back(std::string(name) + ": result has no models");
      continue;
    }
    if (std::string_view(name) == "pythagoras") {
      pythagoras_rows(result, summary);
    } else {
      triangle_rows(result, summary);
    }
  }
  for (const auto& row : summary.rows) {
    if (!row.informational && row.verdict == Verdict::violated) summary.hard_violation = true;
  }
  return summary;
}

json check_summary_to_json(const CheckSummary& summary) {
  json rows = json::array();
  for (const auto& r : summary.rows) {
    rows.push_back({{"check", r.check},
                    {"task_id", r.task_id},
                    {"lhs", r.lhs},
                    {"rhs", r.rhs},
                    {"slack", r.slack},
                    {"tolerance", r.tolerance},
                    {"verdict", std::string(to_string(r.verdict))},
                    {"informational", r.informational}});
  }
  return json{{"rows", std::move(rows)}, {"skipped", summary.skipped}, {"hard_violation", summary.hard_violation}};
}

std::string format_check_table(const CheckSummary& summary) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-11s %5s %14s %14s %14s %12s  %s\n", "check", "task", "lhs", "rhs", "slack",
                "tol", "verdict");
  out += line;
  for (const auto& r : summary.rows) {
    std::snprintf(line, sizeof line, "%-11s %5zu %14.6g %14.6g %14.6g %12.3g  %s%s\n", r.check.c_str(), r.task_id,
                  r.lhs, r.rhs, r.slack, r.tolerance, std::string(to_string(r.verdict)).c_str(),
                  r.informational ? " (info)" : "");
    out += line;
  }
  for (const auto& s : summary.skipped) out += "skipped " + s + "\n";
  out += summary.hard_violation ? "result: hard violations found\n" : "result: no hard violations\n";
  return out;
}

bool same_ground_truth(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.master_seed == b.master_seed && a.input_dim == b.input_dim && a.sigma == b.sigma &&
         a.rep_dim == b.rep_dim && a.ground_truth == b.ground_truth && a.finetune_tasks == b.finetune_tasks &&
         a.head_kind == b.head_kind && a.task_sampling.weight_std == b.task_sampling.weight_std &&
         a.task_sampling.bias_enabled == b.task_sampling.bias_enabled &&
         a.task_sampling.bias_std == b.task_sampling.bias_std;
}

std::string format_rank_table(const HeuristicRanking& ranking) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %24s %24s %6s\n", "weak_model_id", "weak_err - misfit", "w2s true error",
                "n");
  out += line;
  for (const auto& r : ranking.rows) {
    char bound[64];
    char err[64];
    std::snprintf(bound, sizeof bound, "%.4f +/- %.4f", r.mean_bound, r.std_bound);
    std::snprintf(err, sizeof err, "%.4f +/- %.4f", r.mean_w2s_err, r.std_w2s_err);
    std::snprintf(line, sizeof line, "%-24s %24s %24s %6zu\n", r.weak_model_id.c_str(), bound, err, r.count);
    out += line;
  }
  out += ranking.argmin_coincides ? "argmin of weak_err - misfit has the lowest w2s error\n"
                                  : "argmin of weak_err - misfit does not have the lowest w2s error\n";
  return out;
}

json ranking_to_json(const HeuristicRanking& ranking) {
  json rows = json::array();
  for (const auto& r : ranking.rows) {
    rows.push_back({{"weak_model_id", r.weak_model_id},
                    {"count", r.count},
                    {"mean_bound", r.mean_bound},
                    {"std_bound", r.std_bound},
                    {"mean_w2s_err", r.mean_w2s_err},
                    {"std_w2s_err", r.std_w2s_err}});
  }
  return json{{"rows", std::move(rows)}, {"argmin_coincides", ranking.argmin_coincides}};
}

}  // namespace w2s
