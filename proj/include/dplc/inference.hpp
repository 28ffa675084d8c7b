#pragma once

#include <string>
#include <vector>

#include "dplc/trainer.hpp"

namespace dplc {

// Training settings for the two auxiliary direction networks.
struct LfdConfig {
  double learning_rate = 1e-3;
  int epochs = 500;
  int h1_depth = 2;
  int h1_width = 8;
  int h2_depth = 2;
  int h2_width = 0;  // 0 -> max(8, r)
  std::uint64_t seed = 0;
};

// Estimated least-favourable direction: h1 perturbs the baseline hazard
// (input t / t_max), h2 perturbs g (input z); both output d values.
struct LfdPair {
  NetParams h1;
  NetParams h2;
  double t_max = 1.0;
  double initial_objective = 0.0;  // rho at h1 = h2 = 0
  double final_objective = 0.0;
};

struct InferenceResult {
  Matrix info;  // estimated information matrix, d x d
  std::vector<double> est, se, ci_lower, ci_upper, z_values, p_values, hazard_ratio;
  double rho_initial = 0.0;
  double rho_final = 0.0;
  std::size_t n = 0;
  bool singular = false;
  double condition = 0.0;
};

// Least-squares projection of the beta-score onto the two nuisance score
// ranges, by full-batch gradient descent over both networks jointly.
LfdPair estimate_lfd(const PreparedData& data, const FitResult& fit, const LfdConfig& cfg);

// Plug-in information matrix from the projection residuals, with standard
// errors, 95% confidence intervals and Wald statistics. A near-singular
// information matrix (condition number > 1e12) is reported via `singular`
// with no standard errors.
InferenceResult information_matrix(const PreparedData& data, const FitResult& fit,
                                   const LfdPair& lfd);

// EST / HR / SE / Z / p rows, one per coefficient.
std::string wald_table(const InferenceResult& r, const std::vector<std::string>& names);

// Normal two-sided p-value and the erfc-based helper used for it.
double two_sided_p(double z);

}  // namespace dplc
