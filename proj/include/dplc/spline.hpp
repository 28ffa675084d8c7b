#pragma once

#include <span>
#include <vector>

namespace dplc {

// Monotone spline basis for the baseline cumulative hazard.
//
// M-splines of order `degree` are non-negative spline densities on
// [t_min, t_max]; their antiderivatives (I-splines) increase from 0 to 1.
// A non-negative combination of I-splines is therefore a valid cumulative
// hazard. Coefficients are stored on the log scale (gamma_tilde), so the
// implied spline coefficients exp(gamma_tilde_k) are always positive.
struct SplineConfig {
  int degree = 3;  // spline order l; polynomial degree l - 1
  std::vector<double> interior_knots;
  double t_min = 0.0;
  double t_max = 1.0;

  int basis_count() const { return static_cast<int>(interior_knots.size()) + degree; }
  void validate() const;  // throws std::invalid_argument on a bad config

  // Interior knots at empirical quantiles of the pooled finite interval
  // endpoints; duplicates are dropped. n_interior < 0 selects ceil(n^{1/5}).
  static SplineConfig from_endpoints(std::span<const double> endpoints,
                                     int n_interior = -1, int degree = 3);
};

struct BaselineCoef {
  std::vector<double> gamma_tilde;
};

// Basis values at t; each output has length cfg.basis_count().
std::vector<double> mspline_eval(double t, const SplineConfig& cfg);
std::vector<double> ispline_eval(double t, const SplineConfig& cfg);
void ispline_eval(double t, const SplineConfig& cfg, std::span<double> out);

// Lambda(t) = sum_k exp(gamma_tilde_k) I_k(t), and its gradient in gamma_tilde.
double cum_hazard(double t, const BaselineCoef& coef, const SplineConfig& cfg);
std::vector<double> cum_hazard_grad(double t, const BaselineCoef& coef,
                                    const SplineConfig& cfg);

}  // namespace dplc
