#include "w2s/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "w2s/errors.hpp"

namespace w2s {

std::string_view to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::holds: return "holds";
    case Verdict::holds_within_tol: return "holds_within_tol";
    case Verdict::violated: return "violated";
  }
  return "holds";
}

Verdict parse_verdict(std::string_view text) {
  if (text == "holds") return Verdict::holds;
  if (text == "holds_within_tol") return Verdict::holds_within_tol;
  if (text == "violated") return Verdict::violated;
  throw std::invalid_argument("unknown verdict '" + std::string(text) + "'");
}

Verdict verdict_for(double slack, double tolerance) {
  if (slack >= 0.0) return Verdict::holds;
  if (slack >= -tolerance) return Verdict::holds_within_tol;
  return Verdict::violated;
}

double mc_tolerance(const EvalRecord& record, double tol_sigmas) { return tol_sigmas * record.gap_se; }

BoundReport check_realizable_bound(const EvalRecord& record, double tol, bool realizable_run) {
  if (tol < 0.0) throw std::invalid_argument("check_realizable_bound: tolerance must be non-negative");
  BoundReport report;
  report.task_id = record.task_id;
  report.lhs = record.w2s_true_err;
  report.rhs = record.weak_true_err - record.misfit;
  report.slack = report.rhs - report.lhs;
  report.tolerance = tol;
  report.verdict = verdict_for(report.slack, tol);
  report.informational = !realizable_run;
  report.required_slack = std::max(0.0, -report.slack);
  return report;
}

BoundReport check_nonrealizable_skeleton(const EvalRecord& record, double tol, double k1, double kn) {
  if (!record.epsilon_hat) {
    throw std::invalid_argument("skeleton check: record for task " + std::to_string(record.task_id) +
                                " has no epsilon_hat");
  }
  BoundReport report;
  report.task_id = record.task_id;
  report.budget = k1 * std::sqrt(*record.epsilon_hat) + kn;
  report.lhs = record.w2s_true_err;
  report.rhs = record.weak_true_err - record.misfit + report.budget;
  report.slack = report.rhs - report.lhs;
  report.tolerance = tol;
  report.verdict = verdict_for(report.slack, tol);
  report.informational = true;
  report.required_slack = std::max(0.0, record.w2s_true_err - (record.weak_true_err - record.misfit));
  return report;
}

Head project_onto_strong(const BatchFn& weak_fn, const Mlp& strong_rep, const Matrix& sample, bool bias_enabled) {
  HeadTrainOptions options;
  options.kind = HeadKind::linear;
  options.method = HeadTrainMethod::closed_form;
  options.bias_enabled = bias_enabled;
  options.fallback_on_singular = true;
  Rng unused(0);
  return train_head(strong_rep, sample, weak_fn(sample), options, unused);
}

PythagorasReport pythagorean_report(const BatchFn& weak_fn, const Mlp& strong_rep, const Head& projection,
                                    const BatchFn& probe_g, const Matrix& sample) {
  if (projection.origin != HeadOrigin::closed_form) {
    throw std::invalid_argument("pythagorean check: projection head must be a closed-form fit, got " +
                                std::string(to_string(projection.origin)));
  }
  if (!projection.convex()) throw std::invalid_argument("pythagorean check: projection head must be linear");
  const Vector weak = weak_fn(sample);
  const Vector strong = apply_head(projection, strong_rep.forward(sample));
  const Vector g = probe_g(sample);

  PythagorasReport r;
  r.a_hat = distance_on_sample(strong, g).value;
  r.b_hat = distance_on_sample(strong, weak).value;
  r.c_hat = distance_on_sample(weak, g).value;
  double cross = 0.0;
  for (std::size_t i = 0; i < sample.rows(); ++i) cross += (g[i] - strong[i]) * (strong[i] - weak[i]);
  r.cross_term = cross / static_cast<double>(sample.rows());
  const double scale = std::sqrt(r.a_hat * r.b_hat);
  r.scaled_cross = scale > 0.0 ? std::abs(r.cross_term) / scale : 0.0;
  r.identity_residual = r.c_hat > 0.0 ? std::abs(r.c_hat - (r.a_hat + r.b_hat)) / r.c_hat : 0.0;
  return r;
}

double check_pythagorean(const BatchFn& weak_fn, const Mlp& strong_rep, const Head& projection, const BatchFn& probe_g,
                         const Matrix& sample) {
  return pythagorean_report(weak_fn, strong_rep, projection, probe_g, sample).cross_term;
}

std::vector<Head> pythagorean_probes(const Head& projection, std::size_t count, Rng& rng) {
  std::vector<Head> probes;
  probes.push_back(projection);
  for (std::size_t k = 0; k < count; ++k) {
    TaskSampling sampling;
    sampling.bias_enabled = projection.bias_enabled;
    Head probe = sample_linear_task(projection.dim(), rng, sampling);
    probes.push_back(std::move(probe));
  }
  return probes;
}

bool check_triangle(const BatchFn& f, const BatchFn& g, const BatchFn& h, const Matrix& sample) {
  const Vector fv = f(sample);
  const Vector gv = g(sample);
  const Vector hv = h(sample);
  const double fg = std::sqrt(distance_on_sample(fv, gv).value);
  const double fh = std::sqrt(distance_on_sample(fv, hv).value);
  const double hg = std::sqrt(distance_on_sample(hv, gv).value);
  return fg <= (fh + hg) * (1.0 + 1e-12);
}

namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

HeuristicRanking heuristic_rank(const std::vector<std::vector<EvalRecord>>& groups) {
  HeuristicRanking ranking;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& group = groups[g];
    if (group.empty()) throw std::invalid_argument("heuristic_rank: group " + std::to_string(g) + " is empty");
    Vector bound;
    Vector w2s;
    for (const auto& r : group) {
      if (r.weak_model_id != group.front().weak_model_id) {
        throw std::invalid_argument("heuristic_rank: group " + std::to_string(g) + " mixes weak model ids");
      }
      bound.push_back(r.weak_true_err - r.misfit);
      w2s.push_back(r.w2s_true_err);
    }
    RankRow row;
    row.weak_model_id = group.front().weak_model_id;
    row.count = group.size();
    row.mean_bound = mean_of(bound);
    row.std_bound = sample_std(bound, row.mean_bound);
    row.mean_w2s_err = mean_of(w2s);
    row.std_w2s_err = sample_std(w2s, row.mean_w2s_err);
    ranking.rows.push_back(std::move(row));
  }
  std::stable_sort(ranking.rows.begin(), ranking.rows.end(), [](const RankRow& x, const RankRow& y) {
    if (x.mean_bound != y.mean_bound) return x.mean_bound < y.mean_bound;
    return x.weak_model_id < y.weak_model_id;
  });
  if (!ranking.rows.empty()) {
    const auto best_true = std::min_element(ranking.rows.begin(), ranking.rows.end(),
                                            [](const RankRow& x, const RankRow& y) { return x.mean_w2s_err < y.mean_w2s_err; });
    ranking.argmin_coincides = best_true->mean_w2s_err == ranking.rows.front().mean_w2s_err;
  }
  return ranking;
}

double pearson_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("pearson: need two equal-length samples");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

namespace {

// Average ranks, ties sharing the mean of their positions.
Vector ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  Vector r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman_correlation(std::span<const double> x, std::span<const double> y) {
  const Vector rx = ranks(x);
  const Vector ry = ranks(y);
  return pearson_correlation(rx, ry);
}

}  // namespace w2s
