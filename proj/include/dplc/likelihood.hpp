#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "dplc/matrix.hpp"
#include "dplc/net.hpp"
#include "dplc/spline.hpp"

namespace dplc {

constexpr double kInf = std::numeric_limits<double>::infinity();

// One subject. The censoring class is derived from (left, right):
//   left-censored:     left == 0,  right finite   (event in (0, right])
//   interval-censored: 0 < left < right < inf
//   right-censored:    right == inf               (event after `left`)
struct Observation {
  std::vector<double> x;  // parametric covariates
  std::vector<double> z;  // nonparametric covariates
  double left = 0.0;
  double right = kInf;

  bool is_left() const { return left == 0.0 && right < kInf; }
  bool is_interval() const { return left > 0.0 && right < kInf; }
  bool is_right() const { return !(right < kInf); }
  void validate() const;  // throws std::invalid_argument
};

struct ModelState {
  std::vector<double> beta;
  BaselineCoef baseline;
  SplineConfig spline;
  CenteredNet g;
};

// Batch with the I-spline basis frozen at the interval endpoints; the knots
// do not move during optimization, so these rows are computed once.
struct PreparedData {
  SplineConfig spline;
  std::vector<Observation> obs;
  Matrix x, z;            // n x d, n x r
  Matrix isp_left, isp_right;
  std::size_t size() const { return obs.size(); }

  static PreparedData build(std::vector<Observation> observations, const SplineConfig& cfg);
};

struct Gradients {
  std::vector<double> beta, gamma, net;
  void resize(std::size_t d, std::size_t q, std::size_t p) {
    beta.assign(d, 0.0);
    gamma.assign(q, 0.0);
    net.assign(p, 0.0);
  }
  void zero();
};

struct EvalDiag {
  std::size_t floor_events = 0;  // log-likelihood terms clamped at the numerical floor
};

// ---- single-observation operations ----

double survival(double t, const Observation& obs, const ModelState& st);
double loglik(const Observation& obs, const ModelState& st);

// d(loglik)/d(eta) with eta = x'beta + g(z); the beta-score is x * score_eta
// and the g-direction score is h2(z) * score_eta.
double score_eta(const Observation& obs, const ModelState& st);

// Directional derivative of loglik when Lambda is perturbed to Lambda + s*h1,
// given h1 evaluated at the two interval endpoints.
double score_lambda(const Observation& obs, const ModelState& st, double h1_at_left,
                    double h1_at_right);

// ---- batch operations ----

// Total log-likelihood over data (or the subset of row indices if given);
// when grad is non-null, accumulates exact gradients for beta, gamma_tilde
// and the network parameters. OpenMP-parallel over fixed chunks with a
// deterministic reduction order, so results do not depend on thread count.
double batch_loglik(const PreparedData& data, const ModelState& st, Gradients* grad,
                    EvalDiag* diag = nullptr, const std::vector<int>* subset = nullptr);

// Serial reference implementation with the straightforward per-observation
// loop; kept for testing and benchmarking against the parallel kernel.
double batch_loglik_serial(const PreparedData& data, const ModelState& st, Gradients* grad,
                           EvalDiag* diag = nullptr, const std::vector<int>* subset = nullptr);

// Per-observation pieces needed by the efficient-score machinery:
// the eta-score and the Lambda-channel weights at the two endpoints
// (score_lambda = wL * h1(L) + wR * h1(R)).
struct ScoreParts {
  double eta = 0.0;
  double s_eta = 0.0;
  double wL = 0.0;
  double wR = 0.0;
};
ScoreParts score_parts(const PreparedData& data, std::size_t i, const ModelState& st,
                       NetWorkspace& ws);

}  // namespace dplc
