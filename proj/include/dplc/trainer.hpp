#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dplc/likelihood.hpp"
#include "dplc/optim.hpp"

namespace dplc {

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 500;
  int batch_size = 0;  // 0 = full batch for n <= 2000, else 256
  int restarts = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::vector<Architecture> grid;  // architecture candidates for g
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
  double early_stop_tol = 1e-6;  // per-observation log-likelihood improvement
  int early_stop_patience = 25;
  int spline_degree = 3;
  int spline_interior = -1;  // -1: ceil(n^{1/5})
};

// K in {2,3,4} x widths {ceil(u*r/4): u=1..8}, uniform width across layers.
std::vector<Architecture> default_grid(int r);

struct RestartLog {
  std::uint64_t seed = 0;
  double train_loglik = 0.0;
  double val_loglik = 0.0;
  bool failed = false;
};

struct FitResult {
  ModelState state;
  Architecture selected_arch;
  double train_loglik = 0.0;
  double val_loglik = 0.0;
  std::vector<RestartLog> restart_logs;
  std::vector<double> grid_val_logliks;  // one per grid candidate (selection stage)
  std::size_t numerical_floor_events = 0;
  int epochs_run = 0;
};

// Spline configuration from the pooled finite endpoints of `data`, with the
// interior knot count driven by the sample size unless pinned in cfg.
SplineConfig spline_for(const std::vector<Observation>& data, const TrainConfig& cfg);

// One optimization run from a seeded initialization; val may equal train.
// Throws std::runtime_error if the data is all right-censored or if the run
// diverges even after halving the learning rate three times.
FitResult fit_once(const PreparedData& train, const PreparedData& val,
                   const Architecture& arch, const TrainConfig& cfg, std::uint64_t seed);

// Multi-restart wrapper; keeps the restart with the best validation
// log-likelihood. Failed restarts are logged and skipped.
FitResult fit_with_restarts(const PreparedData& train, const PreparedData& val,
                            const Architecture& arch, const TrainConfig& cfg,
                            std::uint64_t stream);

// Full protocol: 80/20 split, per-architecture restarts scored on the
// hold-out fold, then a refit of the winning architecture on all the data.
FitResult select_and_refit(const std::vector<Observation>& data, const TrainConfig& cfg);

}  // namespace dplc
