#include "dplc/likelihood.hpp"

#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dplc {

void Observation::validate() const {
  if (!(left >= 0.0)) throw std::invalid_argument("left endpoint must be >= 0");
  if (!(right > left)) throw std::invalid_argument("interval must satisfy left < right");
  if (left == 0.0 && !(right < kInf))
    throw std::invalid_argument("observation carries no information (left=0, right=inf)");
  for (double v : x)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite x covariate");
  for (double v : z)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite z covariate");
}

PreparedData PreparedData::build(std::vector<Observation> observations,
                                 const SplineConfig& cfg) {
  cfg.validate();
  PreparedData d;
  d.spline = cfg;
  d.obs = std::move(observations);
  const std::size_t n = d.obs.size();
  const std::size_t q = cfg.basis_count();
  const std::size_t dx = n ? d.obs[0].x.size() : 0;
  const std::size_t dz = n ? d.obs[0].z.size() : 0;
  d.x = Matrix(n, dx);
  d.z = Matrix(n, dz);
  d.isp_left = Matrix(n, q);
  d.isp_right = Matrix(n, q);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& o = d.obs[i];
    o.validate();
    if (o.x.size() != dx || o.z.size() != dz)
      throw std::invalid_argument("ragged covariate dimensions");
    std::copy(o.x.begin(), o.x.end(), d.x.row(i).begin());
    std::copy(o.z.begin(), o.z.end(), d.z.row(i).begin());
    ispline_eval(o.left, cfg, d.isp_left.row(i));
    if (o.right < kInf) ispline_eval(o.right, cfg, d.isp_right.row(i));
  }
  return d;
}

void Gradients::zero() {
  std::fill(beta.begin(), beta.end(), 0.0);
  std::fill(gamma.begin(), gamma.end(), 0.0);
  std::fill(net.begin(), net.end(), 0.0);
}

namespace {

constexpr double kFloor = 1e-300;

// Log-likelihood of one observation given G(t) = Lambda(t) * exp(eta) at the
// relevant endpoints, plus dl/dG at each endpoint (aL, aR).
struct ObsLik {
  double loglik = 0.0;
  double aL = 0.0, aR = 0.0;
  bool floored = false;
};

ObsLik obs_core(const Observation& o, double G_L, double G_R) {
  ObsLik r;
  if (o.is_left()) {
    double g = std::max(G_R, kFloor);
    r.floored = G_R < kFloor;
    r.loglik = std::log(-std::expm1(-g));  // log(1 - S(R))
    r.aR = 1.0 / std::expm1(g);
  } else if (o.is_interval()) {
    double diff = G_R - G_L;
    if (diff < kFloor) {
      diff = kFloor;
      r.floored = true;
    }
    // log(S(L) - S(R)) = -G_L + log(1 - exp(-(G_R - G_L)))
    r.loglik = -G_L + std::log(-std::expm1(-diff));
    double inv = 1.0 / std::expm1(diff);
    r.aR = inv;
    r.aL = -1.0 - inv;
  } else {
    r.loglik = -G_L;  // log S at the last examination time
    r.aL = -1.0;
  }
  return r;
}

struct ObsEval {
  double loglik;
  double eta, eeta;
  double G_L, G_R;
  double aL, aR;
  bool floored;
};

// Shared per-observation evaluation for the batch kernels. exp_gamma holds
// exp(gamma_tilde).
ObsEval eval_obs(const PreparedData& data, std::size_t i, const ModelState& st,
                 std::span<const double> exp_gamma, NetWorkspace& ws) {
  const auto& o = data.obs[i];
  double eta = 0.0;
  auto xi = data.x.row(i);
  for (std::size_t j = 0; j < xi.size(); ++j) eta += xi[j] * st.beta[j];
  eta += net_forward(st.g.params, data.z.row(i), ws)[0] - st.g.offset;
  double eeta = std::exp(eta);

  auto bl = data.isp_left.row(i);
  double lamL = 0.0;
  for (std::size_t k = 0; k < bl.size(); ++k) lamL += exp_gamma[k] * bl[k];
  double G_L = lamL * eeta;
  double G_R = 0.0;
  if (o.right < kInf) {
    auto br = data.isp_right.row(i);
    double lamR = 0.0;
    for (std::size_t k = 0; k < br.size(); ++k) lamR += exp_gamma[k] * br[k];
    G_R = lamR * eeta;
  }
  auto core = obs_core(o, G_L, G_R);
  return {core.loglik, eta, eeta, G_L, G_R, core.aL, core.aR, core.floored};
}

std::vector<double> exp_of(const std::vector<double>& v) {
  std::vector<double> e(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) e[k] = std::exp(v[k]);
  return e;
}

// Accumulate one observation's gradient contributions.
void accumulate_grad(const PreparedData& data, std::size_t i, const ModelState& st,
                     const ObsEval& ev, std::span<const double> exp_gamma,
                     NetWorkspace& ws, Gradients& g) {
  double dldeta = ev.aL * ev.G_L + ev.aR * ev.G_R;
  auto xi = data.x.row(i);
  for (std::size_t j = 0; j < xi.size(); ++j) g.beta[j] += dldeta * xi[j];
  const double up[1] = {dldeta};
  net_backward(st.g.params, ws, up, g.net);
  auto bl = data.isp_left.row(i);
  auto br = data.isp_right.row(i);
  double wl = ev.aL * ev.eeta, wr = ev.aR * ev.eeta;
  for (std::size_t k = 0; k < bl.size(); ++k) {
    double s = wl * bl[k];
    if (data.obs[i].right < kInf) s += wr * br[k];
    g.gamma[k] += s * exp_gamma[k];
  }
}

}  // namespace

double batch_loglik_serial(const PreparedData& data, const ModelState& st, Gradients* grad,
                           EvalDiag* diag, const std::vector<int>* subset) {
  const std::size_t q = st.baseline.gamma_tilde.size();
  if (grad) grad->resize(st.beta.size(), q, st.g.params.data.size());
  auto exp_gamma = exp_of(st.baseline.gamma_tilde);
  NetWorkspace ws;
  double total = 0.0;
  std::size_t floors = 0;
  const std::size_t n = subset ? subset->size() : data.size();
  for (std::size_t idx = 0; idx < n; ++idx) {
    std::size_t i = subset ? std::size_t((*subset)[idx]) : idx;
    auto ev = eval_obs(data, i, st, exp_gamma, ws);
    total += ev.loglik;
    if (ev.floored) ++floors;
    if (grad) accumulate_grad(data, i, st, ev, exp_gamma, ws, *grad);
  }
  if (diag) diag->floor_events += floors;
  return total;
}

double batch_loglik(const PreparedData& data, const ModelState& st, Gradients* grad,
                    EvalDiag* diag, const std::vector<int>* subset) {
  const std::size_t n = subset ? subset->size() : data.size();
  const std::size_t q = st.baseline.gamma_tilde.size();
  const std::size_t np = st.g.params.data.size();
  if (grad) grad->resize(st.beta.size(), q, np);

  constexpr std::size_t kChunk = 128;
  const std::size_t n_chunks = (n + kChunk - 1) / kChunk;
  if (n_chunks <= 1) return batch_loglik_serial(data, st, grad, diag, subset);

  auto exp_gamma = exp_of(st.baseline.gamma_tilde);
  std::vector<double> chunk_ll(n_chunks, 0.0);
  std::vector<std::size_t> chunk_floors(n_chunks, 0);
  std::vector<Gradients> chunk_grad(grad ? n_chunks : 0);

  // Fixed-size chunks accumulated in index order, then reduced in chunk
  // order: the result is independent of the number of threads.
#ifdef _OPENMP
#pragma omp parallel
#endif
  {
    NetWorkspace ws;
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
    for (long long c = 0; c < static_cast<long long>(n_chunks); ++c) {
      Gradients* cg = nullptr;
      if (grad) {
        chunk_grad[c].resize(st.beta.size(), q, np);
        cg = &chunk_grad[c];
      }
      double ll = 0.0;
      std::size_t floors = 0;
      const std::size_t lo = c * kChunk, hi = std::min(n, lo + kChunk);
      for (std::size_t idx = lo; idx < hi; ++idx) {
        std::size_t i = subset ? std::size_t((*subset)[idx]) : idx;
        auto ev = eval_obs(data, i, st, exp_gamma, ws);
        ll += ev.loglik;
        if (ev.floored) ++floors;
        if (cg) accumulate_grad(data, i, st, ev, exp_gamma, ws, *cg);
      }
      chunk_ll[c] = ll;
      chunk_floors[c] = floors;
    }
  }

  double total = 0.0;
  std::size_t floors = 0;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    total += chunk_ll[c];
    floors += chunk_floors[c];
    if (grad) {
      for (std::size_t j = 0; j < grad->beta.size(); ++j) grad->beta[j] += chunk_grad[c].beta[j];
      for (std::size_t j = 0; j < q; ++j) grad->gamma[j] += chunk_grad[c].gamma[j];
      for (std::size_t j = 0; j < np; ++j) grad->net[j] += chunk_grad[c].net[j];
    }
  }
  if (diag) diag->floor_events += floors;
  return total;
}

// ---- single-observation surface ----

namespace {
ObsEval eval_single(const Observation& o, const ModelState& st, NetWorkspace& ws) {
  PreparedData d = PreparedData::build({o}, st.spline);
  auto exp_gamma = exp_of(st.baseline.gamma_tilde);
  return eval_obs(d, 0, st, exp_gamma, ws);
}
}  // namespace

double survival(double t, const Observation& obs, const ModelState& st) {
  NetWorkspace ws;
  double eta = 0.0;
  for (std::size_t j = 0; j < obs.x.size(); ++j) eta += obs.x[j] * st.beta[j];
  eta += st.g.eval1(obs.z, ws);
  return std::exp(-cum_hazard(t, st.baseline, st.spline) * std::exp(eta));
}

double loglik(const Observation& obs, const ModelState& st) {
  NetWorkspace ws;
  return eval_single(obs, st, ws).loglik;
}

double score_eta(const Observation& obs, const ModelState& st) {
  NetWorkspace ws;
  auto ev = eval_single(obs, st, ws);
  return ev.aL * ev.G_L + ev.aR * ev.G_R;
}

double score_lambda(const Observation& obs, const ModelState& st, double h1_at_left,
                    double h1_at_right) {
  NetWorkspace ws;
  auto ev = eval_single(obs, st, ws);
  return ev.eeta * (ev.aL * h1_at_left + ev.aR * h1_at_right);
}

ScoreParts score_parts(const PreparedData& data, std::size_t i, const ModelState& st,
                       NetWorkspace& ws) {
  static thread_local std::vector<double> eg;
  eg.resize(st.baseline.gamma_tilde.size());
  for (std::size_t k = 0; k < eg.size(); ++k) eg[k] = std::exp(st.baseline.gamma_tilde[k]);
  auto ev = eval_obs(data, i, st, eg, ws);
  return {ev.eta, ev.aL * ev.G_L + ev.aR * ev.G_R, ev.aL * ev.eeta, ev.aR * ev.eeta};
}

}  // namespace dplc
