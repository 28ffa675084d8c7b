#include "dplc/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "dplc/rng.hpp"

namespace dplc {

namespace {

// Per-observation pieces of the projection problem, frozen at the fitted
// state before the auxiliary optimization starts.
struct ProjData {
  std::size_t n = 0, d = 0;
  std::vector<double> s;        // eta-score
  std::vector<double> wL, wR;   // Lambda-channel endpoint weights
  std::vector<double> tL, tR;   // rescaled endpoints (t / t_max); tR < 0 if absent
  const Matrix* x = nullptr;
  const Matrix* z = nullptr;
};

ProjData project_data(const PreparedData& data, const ModelState& st, double t_max) {
  ProjData pd;
  pd.n = data.size();
  pd.d = data.x.cols;
  pd.s.resize(pd.n);
  pd.wL.resize(pd.n);
  pd.wR.resize(pd.n);
  pd.tL.resize(pd.n);
  pd.tR.resize(pd.n);
  pd.x = &data.x;
  pd.z = &data.z;
  NetWorkspace ws;
  for (std::size_t i = 0; i < pd.n; ++i) {
    auto sp = score_parts(data, i, st, ws);
    pd.s[i] = sp.s_eta;
    pd.wL[i] = sp.wL;
    pd.wR[i] = sp.wR;
    pd.tL[i] = data.obs[i].left / t_max;
    pd.tR[i] = data.obs[i].right < kInf ? data.obs[i].right / t_max : -1.0;
  }
  return pd;
}

// Residual e_i = x_i s_i - wL h1(tL) - wR h1(tR) - s_i h2(z_i).
void residual(const ProjData& pd, std::size_t i, const NetParams& h1, const NetParams& h2,
              NetWorkspace& ws, std::vector<double>& e, std::vector<double>& h1L,
              std::vector<double>& h1R, std::vector<double>& h2z) {
  const std::size_t d = pd.d;
  e.resize(d);
  auto xi = pd.x->row(i);
  for (std::size_t j = 0; j < d; ++j) e[j] = xi[j] * pd.s[i];
  if (pd.wL[i] != 0.0) {
    double in[1] = {pd.tL[i]};
    auto out = net_forward(h1, in, ws);
    h1L.assign(out.begin(), out.end());
    for (std::size_t j = 0; j < d; ++j) e[j] -= pd.wL[i] * h1L[j];
  }
  if (pd.wR[i] != 0.0 && pd.tR[i] >= 0.0) {
    double in[1] = {pd.tR[i]};
    auto out = net_forward(h1, in, ws);
    h1R.assign(out.begin(), out.end());
    for (std::size_t j = 0; j < d; ++j) e[j] -= pd.wR[i] * h1R[j];
  }
  {
    auto out = net_forward(h2, pd.z->row(i), ws);
    h2z.assign(out.begin(), out.end());
    for (std::size_t j = 0; j < d; ++j) e[j] -= pd.s[i] * h2z[j];
  }
}

// Objective and (optionally) gradients with respect to both networks.
// Chunked like the likelihood kernel so the reduction is deterministic.
double objective(const ProjData& pd, const NetParams& h1, const NetParams& h2,
                 std::vector<double>* g1, std::vector<double>* g2) {
  const std::size_t n = pd.n;
  constexpr std::size_t kChunk = 128;
  const std::size_t n_chunks = (n + kChunk - 1) / kChunk;
  std::vector<double> chunk_obj(n_chunks, 0.0);
  std::vector<std::vector<double>> cg1(g1 ? n_chunks : 0), cg2(g2 ? n_chunks : 0);

#ifdef _OPENMP
#pragma omp parallel
#endif
  {
    NetWorkspace ws;
    std::vector<double> e, h1L, h1R, h2z, up;
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
    for (long long c = 0; c < static_cast<long long>(n_chunks); ++c) {
      if (g1) cg1[c].assign(h1.data.size(), 0.0);
      if (g2) cg2[c].assign(h2.data.size(), 0.0);
      double obj = 0.0;
      const std::size_t lo = c * kChunk, hi = std::min(n, lo + kChunk);
      for (std::size_t i = lo; i < hi; ++i) {
        residual(pd, i, h1, h2, ws, e, h1L, h1R, h2z);
        for (double ej : e) obj += ej * ej;
        if (!g1 && !g2) continue;
        const double scale = 2.0 / double(n);
        up.resize(pd.d);
        if (g2) {
          // d obj / d h2(z_i) = -(2/n) s_i e_i
          for (std::size_t j = 0; j < pd.d; ++j) up[j] = -scale * pd.s[i] * e[j];
          net_forward(h2, pd.z->row(i), ws);
          net_backward(h2, ws, up, cg2[c]);
        }
        if (g1 && pd.wL[i] != 0.0) {
          for (std::size_t j = 0; j < pd.d; ++j) up[j] = -scale * pd.wL[i] * e[j];
          double in[1] = {pd.tL[i]};
          net_forward(h1, in, ws);
          net_backward(h1, ws, up, cg1[c]);
        }
        if (g1 && pd.wR[i] != 0.0 && pd.tR[i] >= 0.0) {
          for (std::size_t j = 0; j < pd.d; ++j) up[j] = -scale * pd.wR[i] * e[j];
          double in[1] = {pd.tR[i]};
          net_forward(h1, in, ws);
          net_backward(h1, ws, up, cg1[c]);
        }
      }
      chunk_obj[c] = obj;
    }
  }

  double total = 0.0;
  if (g1) g1->assign(h1.data.size(), 0.0);
  if (g2) g2->assign(h2.data.size(), 0.0);
  for (std::size_t c = 0; c < n_chunks; ++c) {
    total += chunk_obj[c];
    if (g1)
      for (std::size_t j = 0; j < g1->size(); ++j) (*g1)[j] += cg1[c][j];
    if (g2)
      for (std::size_t j = 0; j < g2->size(); ++j) (*g2)[j] += cg2[c][j];
  }
  return total / double(n);
}

// Zero the last layer so the networks start as the zero map.
void zero_last_layer(NetParams& p) {
  int last = p.n_layers() - 1;
  std::fill(p.weight(last).begin(), p.weight(last).end(), 0.0);
  std::fill(p.bias(last).begin(), p.bias(last).end(), 0.0);
}

// Gauss-Jordan inverse with partial pivoting; returns false if singular.
bool invert(const Matrix& a, Matrix& inv) {
  const std::size_t d = a.rows;
  Matrix w = a;
  inv = Matrix(d, d);
  for (std::size_t i = 0; i < d; ++i) inv(i, i) = 1.0;
  for (std::size_t col = 0; col < d; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < d; ++r)
      if (std::fabs(w(r, col)) > std::fabs(w(piv, col))) piv = r;
    if (w(piv, col) == 0.0) return false;
    if (piv != col)
      for (std::size_t j = 0; j < d; ++j) {
        std::swap(w(piv, j), w(col, j));
        std::swap(inv(piv, j), inv(col, j));
      }
    double p = w(col, col);
    for (std::size_t j = 0; j < d; ++j) {
      w(col, j) /= p;
      inv(col, j) /= p;
    }
    for (std::size_t r = 0; r < d; ++r) {
      if (r == col) continue;
      double f = w(r, col);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) {
        w(r, j) -= f * w(col, j);
        inv(r, j) -= f * inv(col, j);
      }
    }
  }
  return true;
}

double norm1(const Matrix& a) {
  double best = 0.0;
  for (std::size_t j = 0; j < a.cols; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) s += std::fabs(a(i, j));
    best = std::max(best, s);
  }
  return best;
}

}  // namespace

LfdPair estimate_lfd(const PreparedData& data, const FitResult& fit, const LfdConfig& cfg) {
  const std::size_t d = data.x.cols;
  const int r = static_cast<int>(data.z.cols);
  const double t_max = fit.state.spline.t_max;
  ProjData pd = project_data(data, fit.state, t_max);

  Architecture a1{1, std::vector<int>(cfg.h1_depth, cfg.h1_width), static_cast<int>(d)};
  int w2 = cfg.h2_width > 0 ? cfg.h2_width : std::max(8, r);
  Architecture a2{r, std::vector<int>(cfg.h2_depth, w2), static_cast<int>(d)};

  auto rng = make_rng(seed_hash(cfg.seed, 0x1fd1u));
  LfdPair lfd;
  lfd.t_max = t_max;
  lfd.h1 = net_init(a1, rng);
  lfd.h2 = net_init(a2, rng);
  zero_last_layer(lfd.h1);
  zero_last_layer(lfd.h2);

  lfd.initial_objective = objective(pd, lfd.h1, lfd.h2, nullptr, nullptr);

  double lr = cfg.learning_rate;
  for (int attempt = 0; attempt <= 3; ++attempt, lr *= 0.5) {
    NetParams h1 = lfd.h1, h2 = lfd.h2;
    Adam opt1(h1.data.size(), {lr});
    Adam opt2(h2.data.size(), {lr});
    std::vector<double> g1, g2;
    double best_obj = lfd.initial_objective;
    NetParams best_h1 = h1, best_h2 = h2;
    bool diverged = false;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      double obj = objective(pd, h1, h2, &g1, &g2);
      if (!std::isfinite(obj)) {
        diverged = true;
        break;
      }
      if (obj < best_obj) {
        best_obj = obj;
        best_h1 = h1;
        best_h2 = h2;
      }
      opt1.step(h1.data, g1, -1.0);
      opt2.step(h2.data, g2, -1.0);
    }
    if (!diverged) {
      double final_obj = objective(pd, h1, h2, nullptr, nullptr);
      if (std::isfinite(final_obj) && final_obj < best_obj) {
        best_obj = final_obj;
        best_h1 = std::move(h1);
        best_h2 = std::move(h2);
      }
      lfd.h1 = std::move(best_h1);
      lfd.h2 = std::move(best_h2);
      lfd.final_objective = best_obj;
      return lfd;
    }
  }
  throw std::runtime_error("least-favourable-direction optimization diverged");
}

InferenceResult information_matrix(const PreparedData& data, const FitResult& fit,
                                   const LfdPair& lfd) {
  const std::size_t n = data.size();
  const std::size_t d = data.x.cols;
  ProjData pd = project_data(data, fit.state, lfd.t_max);

  InferenceResult res;
  res.n = n;
  res.info = Matrix(d, d);
  res.est = fit.state.beta;
  res.rho_initial = lfd.initial_objective;
  res.rho_final = lfd.final_objective;

  NetWorkspace ws;
  std::vector<double> e, h1L, h1R, h2z;
  for (std::size_t i = 0; i < n; ++i) {
    residual(pd, i, lfd.h1, lfd.h2, ws, e, h1L, h1R, h2z);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) res.info(a, b) += e[a] * e[b] / double(n);
  }

  Matrix inv;
  if (!invert(res.info, inv)) {
    res.singular = true;
    res.condition = kInf;
    return res;
  }
  res.condition = norm1(res.info) * norm1(inv);
  if (res.condition > 1e12) {
    res.singular = true;
    return res;
  }

  res.se.resize(d);
  res.ci_lower.resize(d);
  res.ci_upper.resize(d);
  res.z_values.resize(d);
  res.p_values.resize(d);
  res.hazard_ratio.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    res.se[j] = std::sqrt(inv(j, j) / double(n));
    res.ci_lower[j] = res.est[j] - 1.96 * res.se[j];
    res.ci_upper[j] = res.est[j] + 1.96 * res.se[j];
    res.z_values[j] = res.est[j] / res.se[j];
    res.p_values[j] = two_sided_p(res.z_values[j]);
    res.hazard_ratio[j] = std::exp(res.est[j]);
  }
  return res;
}

double two_sided_p(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

std::string wald_table(const InferenceResult& r, const std::vector<std::string>& names) {
  std::string out = "term                              EST        HR        SE   Z-value   p-value\n";
  char buf[160];
  for (std::size_t j = 0; j < r.est.size(); ++j) {
    std::string name = j < names.size() ? names[j] : ("beta_" + std::to_string(j));
    if (r.singular) {
      std::snprintf(buf, sizeof(buf), "%-28s %9.3f %9.3f        --        --        --\n",
                    name.c_str(), r.est[j], std::exp(r.est[j]));
    } else {
      std::snprintf(buf, sizeof(buf), "%-28s %9.3f %9.3f %9.3f %9.3f %9.3g\n", name.c_str(),
                    r.est[j], r.hazard_ratio[j], r.se[j], r.z_values[j], r.p_values[j]);
    }
    out += buf;
  }
  return out;
}

}  // namespace dplc
