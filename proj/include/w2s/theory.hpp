#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "w2s/head.hpp"
#include "w2s/metrics.hpp"
#include "w2s/mlp.hpp"

namespace w2s {

enum class Verdict { holds, holds_within_tol, violated };

std::string_view to_string(Verdict verdict);
Verdict parse_verdict(std::string_view text);

// Comparison of a = d(f_sw o h_s, f* o h*) against b - c (+ budget).
struct BoundReport {
  std::size_t task_id = 0;
  double lhs = 0.0;  // a
  double rhs = 0.0;  // b - c (+ budget for the non-realizable skeleton)
  double slack = 0.0;
  double tolerance = 0.0;
  Verdict verdict = Verdict::holds;
  // Not a hard check: the run is not realizable, or this is the skeleton form.
  bool informational = false;
  // Budget added to b - c; zero for the realizable check.
  double budget = 0.0;
  // max(0, a - (b - c)): extra slack the plain inequality would need.
  double required_slack = 0.0;
};

Verdict verdict_for(double slack, double tolerance);

// tol_sigmas standard errors of the estimated b - a - c.
double mc_tolerance(const EvalRecord& record, double tol_sigmas = 6.0);

// a <= b - c with Monte-Carlo tolerance `tol`. Records from non-realizable
// runs get an informational report.
BoundReport check_realizable_bound(const EvalRecord& record, double tol, bool realizable_run = true);

// a <= b - c + k1 * sqrt(eps_hat) + kn. Always informational; throws
// std::invalid_argument if the record has no epsilon_hat.
BoundReport check_nonrealizable_skeleton(const EvalRecord& record, double tol, double k1, double kn);

// Exact least-squares projection of weak_fn onto {linear head o strong_rep}
// over `sample`.
Head project_onto_strong(const BatchFn& weak_fn, const Mlp& strong_rep, const Matrix& sample, bool bias_enabled = true);

// Empirical cross term E_n[(g - f_sw o h_s)(f_sw o h_s - f_w o h_w)] on
// `sample`. `projection` must be a closed-form head fit on this same sample;
// gd heads are rejected with std::invalid_argument.
double check_pythagorean(const BatchFn& weak_fn, const Mlp& strong_rep, const Head& projection, const BatchFn& probe_g,
                         const Matrix& sample);

struct PythagorasReport {
  double a_hat = 0.0;  // d(f_sw o h_s, g)
  double b_hat = 0.0;  // d(f_sw o h_s, f_w o h_w)
  double c_hat = 0.0;  // d(f_w o h_w, g)
  double cross_term = 0.0;
  // |cross| / sqrt(a_hat * b_hat), zero when either distance is zero.
  double scaled_cross = 0.0;
  // |c_hat - (a_hat + b_hat)| / c_hat, zero when c_hat is zero.
  double identity_residual = 0.0;
};

PythagorasReport pythagorean_report(const BatchFn& weak_fn, const Mlp& strong_rep, const Head& projection,
                                    const BatchFn& probe_g, const Matrix& sample);

// Random linear probes over h_s, plus the projection itself.
std::vector<Head> pythagorean_probes(const Head& projection, std::size_t count, Rng& rng);

// sqrt d(f, g) <= sqrt d(f, h) + sqrt d(h, g) on the shared sample, up to
// 1e-12 relative rounding.
bool check_triangle(const BatchFn& f, const BatchFn& g, const BatchFn& h, const Matrix& sample);

struct RankRow {
  std::string weak_model_id;
  std::size_t count = 0;
  double mean_bound = 0.0;  // mean of b - c
  double std_bound = 0.0;
  double mean_w2s_err = 0.0;  // mean of a
  double std_w2s_err = 0.0;
};

struct HeuristicRanking {
  // Ascending by mean (b - c), ties broken by weak_model_id.
  std::vector<RankRow> rows;
  // The row with the smallest mean (b - c) also has the smallest mean a.
  bool argmin_coincides = true;
};

// Ranks weak models by mean (weak error - misfit). Each group holds the
// records of one weak model; stds are sample stds (zero for one record).
HeuristicRanking heuristic_rank(const std::vector<std::vector<EvalRecord>>& groups);

double pearson_correlation(std::span<const double> x, std::span<const double> y);
double spearman_correlation(std::span<const double> x, std::span<const double> y);

}  // namespace w2s
