#include "dplc/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "dplc/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dplc {

using json = nlohmann::json;

GCase g_case_from_string(const std::string& s) {
  if (s == "linear") return GCase::linear;
  if (s == "additive") return GCase::additive;
  if (s == "deep1" || s == "deep-1") return GCase::deep1;
  if (s == "deep2" || s == "deep-2") return GCase::deep2;
  throw std::invalid_argument("unknown g case: " + s);
}

std::string to_string(GCase c) {
  switch (c) {
    case GCase::linear: return "linear";
    case GCase::additive: return "additive";
    case GCase::deep1: return "deep1";
    default: return "deep2";
  }
}

double SimDesign::mu_eff() const {
  if (mu > 0.0) return mu;
  return std::log(2.0) / std::pow(tau / 2.0, kappa);
}

Matrix sample_clayton(std::size_t n, int r, double theta, std::mt19937_64& rng) {
  if (!(theta > 0.0)) throw std::invalid_argument("Clayton theta must be > 0");
  std::gamma_distribution<double> gamma(1.0 / theta, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix u(n, r);
  for (std::size_t i = 0; i < n; ++i) {
    double w = gamma(rng);
    while (w <= 0.0) w = gamma(rng);
    for (int k = 0; k < r; ++k) {
      double e = unif(rng);
      while (e <= 0.0) e = unif(rng);
      u(i, k) = std::pow(1.0 - std::log(e) / w, -1.0 / theta);
    }
  }
  return u;
}

void make_covariates(const SimDesign& d, std::mt19937_64& rng, double& x,
                     std::vector<double>& z) {
  std::bernoulli_distribution bern(0.5);
  x = bern(rng) ? 1.0 : 0.0;
  Matrix u = sample_clayton(1, d.r, d.copula_theta, rng);
  z.resize(d.r);
  for (int k = 0; k < d.r; ++k)
    z[k] = d.margin_lo + (d.margin_hi - d.margin_lo) * u(0, k);
}

double g_true(GCase c, std::span<const double> z) {
  switch (c) {
    case GCase::linear: {
      double s = 0.0;
      for (double v : z) s += v - 0.5;
      return 2.4 * s;
    }
    case GCase::additive: {
      double s = 0.0;
      for (std::size_t k = 0; k < z.size(); ++k)
        s += std::cos(2.0 * M_PI * z[k] / double(k + 1));
      return 1.2 * s;
    }
    case GCase::deep1: {
      double s = 0.0;
      for (double v : z) s += v - 0.5;
      return 4.0 * std::fabs(s);
    }
    default: {  // deep2
      double mx = z[0], mn = z[0];
      for (std::size_t k = 1; k < std::min<std::size_t>(3, z.size()); ++k) {
        mx = std::max(mx, z[k]);
        mn = std::min(mn, z[k]);
      }
      return 4.5 * (mx - mn);
    }
  }
}

double g_signal_scale(const SimDesign& d) {
  if (d.target_var_ratio <= 0.0) return 1.0;
  const std::size_t m = 20000;
  auto rng = make_rng(seed_hash(0x9ca1e5u, std::uint64_t(d.g_case), d.r));
  Matrix u = sample_clayton(m, d.r, d.copula_theta, rng);
  std::vector<double> z(d.r);
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (int k = 0; k < d.r; ++k)
      z[k] = d.margin_lo + (d.margin_hi - d.margin_lo) * u(i, k);
    double g = g_true(d.g_case, z);
    s1 += g;
    s2 += g * g;
  }
  double var_g = s2 / m - (s1 / m) * (s1 / m);
  double var_xb = d.beta0 * d.beta0 * 0.25;
  return std::sqrt(d.target_var_ratio * var_xb / var_g);
}

double variance_ratio(const SimDesign& d, std::mt19937_64& rng, std::size_t n_draws) {
  double scale = g_signal_scale(d);
  Matrix u = sample_clayton(n_draws, d.r, d.copula_theta, rng);
  std::vector<double> z(d.r);
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n_draws; ++i) {
    for (int k = 0; k < d.r; ++k)
      z[k] = d.margin_lo + (d.margin_hi - d.margin_lo) * u(i, k);
    double g = scale * g_true(d.g_case, z);
    s1 += g;
    s2 += g * g;
  }
  double var_g = s2 / n_draws - (s1 / n_draws) * (s1 / n_draws);
  return var_g / (d.beta0 * d.beta0 * 0.25);
}

double sample_event(const SimDesign& d, double eta, std::mt19937_64& rng) {
  std::exponential_distribution<double> ex(1.0);
  double e = ex(rng);
  return std::pow(e / (d.mu_eff() * std::exp(eta)), 1.0 / d.kappa);
}

std::pair<double, double> censor(double event_time, const SimDesign& d,
                                 std::mt19937_64& rng) {
  std::bernoulli_distribution keep(d.visit_p);
  const double step = d.tau / d.n_visits;
  for (;;) {
    double left = 0.0, right = kInf;
    bool any = false;
    for (int k = 1; k <= d.n_visits; ++k) {
      if (!keep(rng)) continue;
      any = true;
      double v = k * step;
      if (v < event_time)
        left = std::max(left, v);
      else
        right = std::min(right, v);
    }
    if (any) return {left, right};
    // empty schedule: redraw rather than emit a zero-information row
  }
}

std::vector<Observation> generate_dataset(const SimDesign& d, std::size_t n,
                                          std::mt19937_64& rng) {
  const double scale = g_signal_scale(d);
  std::vector<Observation> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Observation o;
    double x;
    make_covariates(d, rng, x, o.z);
    o.x = {x};
    double eta = d.beta0 * x + scale * g_true(d.g_case, o.z);
    double t = sample_event(d, eta, rng);
    auto [l, r] = censor(t, d, rng);
    o.left = l;
    o.right = r;
    out.push_back(std::move(o));
  }
  return out;
}

double rmse_g(std::span<const double> ghat, std::span<const double> g0) {
  if (ghat.size() != g0.size() || g0.empty())
    throw std::invalid_argument("rmse_g: size mismatch");
  double mh = 0.0, m0 = 0.0;
  for (std::size_t i = 0; i < g0.size(); ++i) {
    mh += ghat[i];
    m0 += g0[i];
  }
  mh /= double(g0.size());
  m0 /= double(g0.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < g0.size(); ++i) {
    double dh = ghat[i] - mh, d0 = g0[i] - m0;
    num += (dh - d0) * (dh - d0);
    den += d0 * d0;
  }
  return num / den;
}

namespace {

// Composite Simpson with 200 subintervals.
template <class F>
double simpson(F f, double a, double b) {
  if (!(b > a)) return 0.0;
  const int m = 200;
  const double h = (b - a) / m;
  double s = f(a) + f(b);
  for (int i = 1; i < m; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace

double imse(const ModelState& st, const std::vector<Observation>& test, double tau) {
  if (test.empty()) return 0.0;
  NetWorkspace ws;
  double total = 0.0;
  std::vector<double> expg(st.baseline.gamma_tilde.size());
  for (std::size_t k = 0; k < expg.size(); ++k) expg[k] = std::exp(st.baseline.gamma_tilde[k]);
  std::vector<double> isp(expg.size());
  auto lam = [&](double t) {
    ispline_eval(t, st.spline, isp);
    double v = 0.0;
    for (std::size_t k = 0; k < expg.size(); ++k) v += expg[k] * isp[k];
    return v;
  };
  for (const auto& o : test) {
    double eta = 0.0;
    for (std::size_t j = 0; j < o.x.size(); ++j) eta += o.x[j] * st.beta[j];
    eta += st.g.eval1(o.z, ws);
    double ee = std::exp(eta);
    auto surv = [&](double t) { return std::exp(-lam(t) * ee); };
    double a = simpson([&](double t) { double s = 1.0 - surv(t); return s * s; }, 0.0, o.left);
    double hi = std::min(o.right, tau);
    double b = simpson([&](double t) { double s = surv(t); return s * s; }, hi, tau);
    total += a + b;
  }
  return total / double(test.size());
}

// ---- study harness ----

namespace {

json rep_to_json(const RepResult& r) {
  return json{{"rep", r.rep},       {"model", r.model},   {"ok", r.ok},
              {"beta_hat", r.beta_hat}, {"se", r.se},     {"covered", r.covered},
              {"rmse", r.rmse},     {"imse", r.imse_value}};
}

RepResult rep_from_json(const json& j) {
  RepResult r;
  r.rep = j.at("rep");
  r.model = j.at("model");
  r.ok = j.at("ok");
  r.beta_hat = j.at("beta_hat");
  // NaN round-trips through JSON as null
  r.se = j.at("se").is_null() ? std::numeric_limits<double>::quiet_NaN()
                              : j.at("se").get<double>();
  r.covered = j.at("covered");
  r.rmse = j.at("rmse");
  r.imse_value = j.at("imse");
  return r;
}

Architecture cph_arch(int r) { return Architecture{r, {}, 1}; }

FitResult fit_model(const std::string& model, const std::vector<Observation>& data,
                    const StudyConfig& cfg, std::uint64_t rep_seed) {
  TrainConfig tc = cfg.train;
  tc.seed = rep_seed;
  if (model == "cph") {
    tc.grid = {cph_arch(cfg.design.r)};
  } else if (tc.grid.empty()) {
    Architecture a{cfg.design.r, {cfg.design.r, cfg.design.r}, 1};
    tc.grid = {a};
  }
  if (tc.grid.size() == 1) {
    // forced selection: refit directly on the full data
    SplineConfig spline = spline_for(data, tc);
    PreparedData full = PreparedData::build(data, spline);
    FitResult res = fit_with_restarts(full, full, tc.grid[0], tc, 0x8000u);
    return res;
  }
  return select_and_refit(data, tc);
}

}  // namespace

std::vector<RepResult> run_replication(const StudyConfig& cfg, int rep) {
  const SimDesign& d = cfg.design;
  auto rng = make_rng(seed_hash(cfg.seed, std::uint64_t(rep), 0xda7au));
  auto data = generate_dataset(d, d.n, rng);

  std::vector<Observation> test;
  std::vector<double> g0;
  if (cfg.with_metrics) {
    auto trng = make_rng(seed_hash(cfg.seed, std::uint64_t(rep), 0x7e57u));
    test = generate_dataset(d, cfg.test_n, trng);
    const double scale = g_signal_scale(d);
    g0.reserve(test.size());
    for (const auto& o : test) g0.push_back(scale * g_true(d.g_case, o.z));
  }

  std::vector<RepResult> out;
  for (const auto& model : cfg.models) {
    RepResult r;
    r.rep = rep;
    r.model = model;
    r.se = std::numeric_limits<double>::quiet_NaN();
    try {
      std::uint64_t rep_seed = seed_hash(cfg.seed, std::uint64_t(rep), 0xf17u);
      FitResult fit = fit_model(model, data, cfg, rep_seed);
      r.beta_hat = fit.state.beta[0];
      if (cfg.with_inference) {
        PreparedData full = PreparedData::build(data, fit.state.spline);
        LfdConfig lc = cfg.lfd;
        lc.seed = rep_seed;
        LfdPair lfd = estimate_lfd(full, fit, lc);
        auto inf = information_matrix(full, fit, lfd);
        if (!inf.singular) {
          r.se = inf.se[0];
          r.covered = inf.ci_lower[0] <= d.beta0 && d.beta0 <= inf.ci_upper[0];
        }
      }
      if (cfg.with_metrics) {
        NetWorkspace ws;
        std::vector<double> ghat;
        ghat.reserve(test.size());
        for (const auto& o : test) ghat.push_back(fit.state.g.eval1(o.z, ws));
        r.rmse = rmse_g(ghat, g0);
        r.imse_value = imse(fit.state, test, d.tau);
      }
      r.ok = true;
    } catch (const std::exception&) {
      r.ok = false;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<MetricReport> aggregate(const StudyConfig& cfg,
                                    const std::vector<RepResult>& reps) {
  std::vector<MetricReport> reports;
  for (const auto& model : cfg.models) {
    MetricReport m;
    m.model = model;
    std::vector<double> betas, rmses, imses;
    int n_cov = 0, n_cov_valid = 0;
    for (const auto& r : reps) {
      if (r.model != model) continue;
      ++m.n_reps;
      if (!r.ok) {
        ++m.n_failures;
        continue;
      }
      betas.push_back(r.beta_hat);
      if (cfg.with_metrics) {
        rmses.push_back(r.rmse);
        imses.push_back(r.imse_value);
      }
      if (cfg.with_inference && std::isfinite(r.se)) {
        ++n_cov_valid;
        if (r.covered) ++n_cov;
      }
    }
    if (m.n_reps > 0 && double(m.n_failures) / m.n_reps > 0.10)
      throw std::runtime_error("study failure rate above 10% for model " + model);
    double nb = double(betas.size());
    double mean = 0.0;
    for (double b : betas) mean += b;
    mean = betas.empty() ? 0.0 : mean / nb;
    m.bias = mean - cfg.design.beta0;
    if (betas.size() >= 2) {
      double ss = 0.0;
      for (double b : betas) ss += (b - mean) * (b - mean);
      m.ese = std::sqrt(ss / (nb - 1.0));
    } else {
      m.ese = std::numeric_limits<double>::quiet_NaN();
    }
    m.coverage = n_cov_valid ? double(n_cov) / n_cov_valid : 0.0;
    if (!rmses.empty()) {
      for (double v : rmses) m.rmse_mean += v;
      m.rmse_mean /= rmses.size();
      std::sort(rmses.begin(), rmses.end());
      m.rmse_median = rmses[rmses.size() / 2];
      for (double v : imses) m.imse_mean += v;
      m.imse_mean /= imses.size();
    }
    reports.push_back(std::move(m));
  }
  return reports;
}

std::vector<MetricReport> run_study(const StudyConfig& cfg, const std::string& checkpoint_dir,
                                    std::vector<RepResult>* raw) {
  namespace fs = std::filesystem;
  if (!checkpoint_dir.empty()) fs::create_directories(checkpoint_dir);

  std::vector<std::vector<RepResult>> per_rep(cfg.n_reps);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (int rep = 0; rep < cfg.n_reps; ++rep) {
    std::string path;
    if (!checkpoint_dir.empty()) {
      path = checkpoint_dir + "/rep_" + std::to_string(rep) + ".json";
      std::ifstream in(path);
      if (in) {
        try {
          json j = json::parse(in);
          std::vector<RepResult> loaded;
          for (const auto& jr : j) loaded.push_back(rep_from_json(jr));
          per_rep[rep] = std::move(loaded);
          continue;
        } catch (const std::exception&) {
          // unreadable checkpoint: recompute and overwrite it
        }
      }
    }
    per_rep[rep] = run_replication(cfg, rep);
    if (!path.empty()) {
      json j = json::array();
      for (const auto& r : per_rep[rep]) j.push_back(rep_to_json(r));
      std::string tmp = path + ".tmp";
      {
        std::ofstream out(tmp);
        out << j.dump(2);
      }
      fs::rename(tmp, path);
    }
  }

  std::vector<RepResult> all;
  for (auto& v : per_rep) all.insert(all.end(), v.begin(), v.end());
  if (raw) *raw = all;
  return aggregate(cfg, all);
}

}  // namespace dplc
