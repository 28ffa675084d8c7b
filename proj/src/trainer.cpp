#include "dplc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dplc/rng.hpp"

namespace dplc {

std::vector<Architecture> default_grid(int r) {
  std::vector<Architecture> grid;
  for (int K : {2, 3, 4})
    for (int u = 1; u <= 8; ++u) {
      int w = (u * r + 3) / 4;  // ceil(u*r/4)
      Architecture a;
      a.input_dim = r;
      a.widths.assign(K, w);
      a.output_dim = 1;
      grid.push_back(a);
    }
  return grid;
}

SplineConfig spline_for(const std::vector<Observation>& data, const TrainConfig& cfg) {
  std::vector<double> endpoints;
  endpoints.reserve(2 * data.size());
  for (const auto& o : data) {
    if (o.left > 0.0) endpoints.push_back(o.left);
    if (o.right < kInf) endpoints.push_back(o.right);
  }
  int p = cfg.spline_interior >= 0
              ? cfg.spline_interior
              : static_cast<int>(std::ceil(std::pow(double(data.size()), 0.2)));
  return SplineConfig::from_endpoints(endpoints, p, cfg.spline_degree);
}

namespace {

struct FlatView {
  std::size_t d, q, p;
  std::size_t total() const { return d + q + p; }
  void pack(const ModelState& st, std::vector<double>& flat) const {
    flat.resize(total());
    std::copy(st.beta.begin(), st.beta.end(), flat.begin());
    std::copy(st.baseline.gamma_tilde.begin(), st.baseline.gamma_tilde.end(),
              flat.begin() + d);
    std::copy(st.g.params.data.begin(), st.g.params.data.end(), flat.begin() + d + q);
  }
  void unpack(const std::vector<double>& flat, ModelState& st) const {
    std::copy(flat.begin(), flat.begin() + d, st.beta.begin());
    std::copy(flat.begin() + d, flat.begin() + d + q, st.baseline.gamma_tilde.begin());
    std::copy(flat.begin() + d + q, flat.end(), st.g.params.data.begin());
  }
  void pack_grad(const Gradients& g, std::vector<double>& flat) const {
    flat.resize(total());
    std::copy(g.beta.begin(), g.beta.end(), flat.begin());
    std::copy(g.gamma.begin(), g.gamma.end(), flat.begin() + d);
    std::copy(g.net.begin(), g.net.end(), flat.begin() + d + q);
  }
};

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Single Adam run at a fixed learning rate; returns nullopt on divergence.
std::optional<FitResult> try_fit(const PreparedData& train, const PreparedData& val,
                                 const Architecture& arch, const TrainConfig& cfg,
                                 std::uint64_t seed, double lr) {
  const std::size_t n = train.size();
  const std::size_t d = train.x.cols;
  const std::size_t q = train.isp_left.cols;

  auto rng = make_rng(seed);
  ModelState st;
  st.spline = train.spline;
  st.beta.assign(d, 0.0);
  st.baseline.gamma_tilde.assign(q, std::log(1.0 / double(q)));
  st.g.params = net_init(arch, rng);
  st.g.offset = 0.0;

  FlatView fv{d, q, st.g.params.data.size()};
  std::vector<double> flat, flat_grad, best_flat;
  fv.pack(st, flat);

  Adam opt(fv.total(), {lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
  Gradients grad;
  EvalDiag diag;

  int batch = cfg.batch_size;
  if (batch <= 0) batch = (n <= 2000) ? static_cast<int>(n) : 256;
  const bool full_batch = std::size_t(batch) >= n;

  double best_ll = -kInf;
  int since_improve = 0;
  int epoch = 0;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (epoch = 0; epoch < cfg.epochs; ++epoch) {
    double monitor_ll;
    if (full_batch) {
      monitor_ll = batch_loglik(train, st, &grad, &diag);
      if (!std::isfinite(monitor_ll) || !all_finite(grad.beta) || !all_finite(grad.gamma) ||
          !all_finite(grad.net))
        return std::nullopt;
      fv.pack_grad(grad, flat_grad);
      opt.step(flat, flat_grad, +1.0);
      if (!all_finite(flat)) return std::nullopt;
      fv.unpack(flat, st);
    } else {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t lo = 0; lo < n; lo += batch) {
        std::vector<int> idx(order.begin() + lo,
                             order.begin() + std::min(n, lo + batch));
        double ll = batch_loglik(train, st, &grad, &diag, &idx);
        if (!std::isfinite(ll)) return std::nullopt;
        fv.pack_grad(grad, flat_grad);
        opt.step(flat, flat_grad, +1.0);
        if (!all_finite(flat)) return std::nullopt;
        fv.unpack(flat, st);
      }
      monitor_ll = batch_loglik(train, st, nullptr, &diag);
      if (!std::isfinite(monitor_ll)) return std::nullopt;
    }

    if (monitor_ll > best_ll + cfg.early_stop_tol * double(n)) {
      best_ll = monitor_ll;
      best_flat = flat;
      since_improve = 0;
    } else {
      if (monitor_ll > best_ll) {
        best_ll = monitor_ll;
        best_flat = flat;
      }
      if (++since_improve >= cfg.early_stop_patience) break;
    }
  }

  if (!best_flat.empty()) fv.unpack(best_flat, st);

  // Center g and absorb the offset into the baseline so that predictions are
  // unchanged: eta drops by c while Lambda gains a factor exp(c).
  auto centered = center_net(std::move(st.g.params), train.z);
  st.g = std::move(centered);
  for (double& gt : st.baseline.gamma_tilde) gt += st.g.offset;

  FitResult res;
  res.selected_arch = arch;
  res.train_loglik = batch_loglik(train, st, nullptr);
  res.val_loglik = (&val == &train) ? res.train_loglik : batch_loglik(val, st, nullptr);
  res.numerical_floor_events = diag.floor_events;
  res.epochs_run = epoch;
  res.state = std::move(st);
  return res;
}

}  // namespace

FitResult fit_once(const PreparedData& train, const PreparedData& val,
                   const Architecture& arch, const TrainConfig& cfg, std::uint64_t seed) {
  if (std::none_of(train.obs.begin(), train.obs.end(),
                   [](const Observation& o) { return !o.is_right(); }))
    throw std::runtime_error("baseline hazard unidentified: all observations right-censored");
  double lr = cfg.learning_rate;
  for (int attempt = 0; attempt <= 3; ++attempt, lr *= 0.5) {
    auto res = try_fit(train, val, arch, cfg, seed, lr);
    if (res) return std::move(*res);
  }
  throw std::runtime_error("optimization diverged after 3 learning-rate halvings");
}

FitResult fit_with_restarts(const PreparedData& train, const PreparedData& val,
                            const Architecture& arch, const TrainConfig& cfg,
                            std::uint64_t stream) {
  std::optional<FitResult> best;
  std::vector<RestartLog> logs;
  for (int r = 0; r < cfg.restarts; ++r) {
    std::uint64_t seed = seed_hash(cfg.seed, stream, std::uint64_t(r));
    RestartLog log{seed, 0.0, 0.0, false};
    try {
      FitResult fit = fit_once(train, val, arch, cfg, seed);
      log.train_loglik = fit.train_loglik;
      log.val_loglik = fit.val_loglik;
      if (!best || fit.val_loglik > best->val_loglik) best = std::move(fit);
    } catch (const std::runtime_error&) {
      log.failed = true;
    }
    logs.push_back(log);
  }
  if (!best) throw std::runtime_error("all restarts failed");
  best->restart_logs = std::move(logs);
  return std::move(*best);
}

FitResult select_and_refit(const std::vector<Observation>& data, const TrainConfig& cfg) {
  if (cfg.grid.empty()) throw std::invalid_argument("empty architecture grid");
  const std::size_t n = data.size();
  SplineConfig spline = spline_for(data, cfg);

  // Seeded 80/20 split (membership depends on the seed only, not row order
  // beyond index identity).
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  auto rng = make_rng(seed_hash(cfg.seed, 0x5e11u));
  std::shuffle(perm.begin(), perm.end(), rng);
  std::size_t n_val = std::max<std::size_t>(1, std::size_t(cfg.validation_fraction * n));
  std::vector<Observation> tr, va;
  for (std::size_t i = 0; i < n; ++i)
    ((i < n - n_val) ? tr : va).push_back(data[perm[i]]);

  PreparedData train = PreparedData::build(std::move(tr), spline);
  PreparedData valid = PreparedData::build(std::move(va), spline);

  std::size_t best_arch = 0;
  double best_val = -kInf;
  std::vector<double> grid_vals;
  for (std::size_t a = 0; a < cfg.grid.size(); ++a) {
    double v;
    try {
      v = fit_with_restarts(train, valid, cfg.grid[a], cfg, a).val_loglik;
    } catch (const std::runtime_error&) {
      v = -kInf;
    }
    grid_vals.push_back(v);
    if (v > best_val) {
      best_val = v;
      best_arch = a;
    }
  }
  if (!std::isfinite(best_val)) throw std::runtime_error("every architecture candidate failed");

  PreparedData full = PreparedData::build(data, spline);
  FitResult res =
      fit_with_restarts(full, full, cfg.grid[best_arch], cfg, 0x8000u + best_arch);
  res.state.spline = spline;
  res.grid_val_logliks = std::move(grid_vals);
  return res;
}

}  // namespace dplc
