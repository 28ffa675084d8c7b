#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dplc/inference.hpp"
#include "dplc/trainer.hpp"

namespace dplc {

enum class GCase { linear, additive, deep1, deep2 };
GCase g_case_from_string(const std::string& s);
std::string to_string(GCase c);

struct SimDesign {
  std::size_t n = 500;
  int r = 10;
  double copula_theta = 2.0;          // Kendall tau = theta / (theta + 2)
  double margin_lo = -2.0, margin_hi = 2.0;
  double mu = 0.0;                    // <= 0: log(2) / (tau/2)^kappa
  double kappa = 1.0;
  double beta0 = 1.2;
  double visit_p = 0.7;
  double tau = 5.0;
  int n_visits = 10;
  GCase g_case = GCase::linear;
  // The nonparametric signal is rescaled so Var(g(Z)) / Var(X'beta) hits this
  // target; <= 0 keeps the raw case formulas.
  double target_var_ratio = 5.0;

  double mu_eff() const;
};

// n x r uniforms with Clayton dependence (Marshall-Olkin frailty draw).
Matrix sample_clayton(std::size_t n, int r, double theta, std::mt19937_64& rng);

// X ~ Bernoulli(1/2), Z = margin_lo + (margin_hi - margin_lo) * U.
void make_covariates(const SimDesign& d, std::mt19937_64& rng, double& x,
                     std::vector<double>& z);

// The four candidate nonparametric effects, at their paper scale factors.
double g_true(GCase c, std::span<const double> z);

// Multiplier applied to g_true so the signal ratio matches
// target_var_ratio; 1.0 when targeting is disabled. Monte Carlo estimate
// with a fixed internal stream, so it is a pure function of the design.
double g_signal_scale(const SimDesign& d);

// Monte Carlo Var(scale * g(Z)) / Var(X'beta) at n_draws samples.
double variance_ratio(const SimDesign& d, std::mt19937_64& rng, std::size_t n_draws = 100000);

// Inverse-transform event time under Lambda_0(t) = mu t^kappa.
double sample_event(const SimDesign& d, double eta, std::mt19937_64& rng);

// Interval from the random visit schedule; schedules with no realized visit
// are redrawn. Fills only (left, right) of the returned pair.
std::pair<double, double> censor(double event_time, const SimDesign& d, std::mt19937_64& rng);

std::vector<Observation> generate_dataset(const SimDesign& d, std::size_t n,
                                          std::mt19937_64& rng);

// Relative MSE of ghat against g0 on a common test sample; both are centered
// on that sample, the denominator is the centered sum of squares of g0.
double rmse_g(std::span<const double> ghat, std::span<const double> g0);

// Mean over subjects of int_0^L (1-S)^2 dt + int_{min(R,tau)}^tau S^2 dt,
// 200-interval composite Simpson per segment.
double imse(const ModelState& st, const std::vector<Observation>& test, double tau);

// ---- study harness ----

struct StudyConfig {
  SimDesign design;
  std::vector<std::string> models = {"dplc", "cph"};  // cph = depth-0 g
  int n_reps = 50;
  std::uint64_t seed = 0;
  TrainConfig train;
  LfdConfig lfd;
  bool with_inference = true;
  bool with_metrics = true;
  std::size_t test_n = 4000;
};

struct RepResult {
  int rep = 0;
  std::string model;
  bool ok = false;
  double beta_hat = 0.0;
  double se = 0.0;  // NaN when inference unavailable
  bool covered = false;
  double rmse = 0.0;
  double imse_value = 0.0;
};

struct MetricReport {
  std::string model;
  double bias = 0.0;
  double ese = 0.0;      // NaN when n_reps < 2
  double coverage = 0.0;
  double rmse_mean = 0.0;
  double rmse_median = 0.0;
  double imse_mean = 0.0;
  int n_reps = 0;
  int n_failures = 0;
};

std::vector<RepResult> run_replication(const StudyConfig& cfg, int rep);

// Throws std::runtime_error if more than 10% of replications failed.
std::vector<MetricReport> aggregate(const StudyConfig& cfg,
                                    const std::vector<RepResult>& reps);

// checkpoint_dir (optional): one JSON file per replication, written
// atomically; finished replications are loaded instead of recomputed.
std::vector<MetricReport> run_study(const StudyConfig& cfg,
                                    const std::string& checkpoint_dir = "",
                                    std::vector<RepResult>* raw = nullptr);

}  // namespace dplc
