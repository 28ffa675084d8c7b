#include "dplc/spline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dplc {

void SplineConfig::validate() const {
  if (degree < 1) throw std::invalid_argument("spline degree must be >= 1");
  if (!(t_min < t_max)) throw std::invalid_argument("spline boundary must satisfy t_min < t_max");
  double prev = t_min;
  for (double k : interior_knots) {
    if (!(k > t_min && k < t_max))
      throw std::invalid_argument("interior knot outside (t_min, t_max)");
    if (k < prev) throw std::invalid_argument("interior knots must be non-decreasing");
    prev = k;
  }
}

namespace {

// Knot vector with boundary multiplicity degree+1; supports B-splines of
// order degree+1 (used for I-splines) and order degree (the M-splines).
std::vector<double> extended_knots(const SplineConfig& cfg) {
  const int m = cfg.degree + 1;
  std::vector<double> s;
  s.reserve(cfg.interior_knots.size() + 2 * m);
  s.insert(s.end(), m, cfg.t_min);
  s.insert(s.end(), cfg.interior_knots.begin(), cfg.interior_knots.end());
  s.insert(s.end(), m, cfg.t_max);
  return s;
}

// All B-splines of order `order` on knots s, evaluated at t in [t_min, t_max).
// out[j] = N_{j,order}(t), j = 0 .. s.size()-order-1.
void bspline_all(double t, std::span<const double> s, int order, std::vector<double>& out) {
  const int n1 = static_cast<int>(s.size()) - 1;
  std::vector<double> cur(n1, 0.0);
  for (int j = 0; j < n1; ++j)
    if (s[j] <= t && t < s[j + 1]) cur[j] = 1.0;
  for (int k = 2; k <= order; ++k) {
    for (int j = 0; j + k <= n1; ++j) {
      double v = 0.0;
      double d1 = s[j + k - 1] - s[j];
      if (d1 > 0.0) v += (t - s[j]) / d1 * cur[j];
      double d2 = s[j + k] - s[j + 1];
      if (d2 > 0.0) v += (s[j + k] - t) / d2 * cur[j + 1];
      cur[j] = v;
    }
  }
  out.assign(cur.begin(), cur.begin() + (static_cast<int>(s.size()) - order));
}

}  // namespace

std::vector<double> mspline_eval(double t, const SplineConfig& cfg) {
  cfg.validate();
  const int q = cfg.basis_count();
  std::vector<double> out(q, 0.0);
  if (!(t >= cfg.t_min && t < cfg.t_max)) return out;
  const auto s = extended_knots(cfg);
  std::vector<double> b;
  bspline_all(t, s, cfg.degree, b);
  // M_i is the order-l B-spline with index i+1, normalized to unit integral.
  for (int i = 0; i < q; ++i) {
    double width = s[i + 1 + cfg.degree] - s[i + 1];
    if (width > 0.0) out[i] = cfg.degree * b[i + 1] / width;
  }
  return out;
}

void ispline_eval(double t, const SplineConfig& cfg, std::span<double> out) {
  const int q = cfg.basis_count();
  if (t <= cfg.t_min) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  if (t >= cfg.t_max) {  // Lambda held constant beyond the last support point
    std::fill(out.begin(), out.end(), 1.0);
    return;
  }
  const auto s = extended_knots(cfg);
  std::vector<double> b;
  bspline_all(t, s, cfg.degree + 1, b);
  // I_i(t) = sum of the order-(l+1) B-splines with index > i.
  double acc = 0.0;
  for (int i = q - 1; i >= 0; --i) {
    acc += b[i + 1];
    out[i] = std::min(acc, 1.0);
  }
}

std::vector<double> ispline_eval(double t, const SplineConfig& cfg) {
  cfg.validate();
  std::vector<double> out(cfg.basis_count());
  ispline_eval(t, cfg, out);
  return out;
}

double cum_hazard(double t, const BaselineCoef& coef, const SplineConfig& cfg) {
  const auto isp = ispline_eval(t, cfg);
  double v = 0.0;
  for (size_t k = 0; k < isp.size(); ++k) v += std::exp(coef.gamma_tilde[k]) * isp[k];
  return v;
}

std::vector<double> cum_hazard_grad(double t, const BaselineCoef& coef,
                                    const SplineConfig& cfg) {
  auto isp = ispline_eval(t, cfg);
  for (size_t k = 0; k < isp.size(); ++k) isp[k] *= std::exp(coef.gamma_tilde[k]);
  return isp;
}

SplineConfig SplineConfig::from_endpoints(std::span<const double> endpoints,
                                          int n_interior, int degree) {
  std::vector<double> pool;
  pool.reserve(endpoints.size());
  for (double e : endpoints)
    if (std::isfinite(e) && e > 0.0) pool.push_back(e);
  if (pool.empty()) throw std::invalid_argument("no finite positive endpoints");
  std::sort(pool.begin(), pool.end());

  SplineConfig cfg;
  cfg.degree = degree;
  cfg.t_min = 0.0;
  cfg.t_max = pool.back();
  int p = n_interior >= 0 ? n_interior
                          : static_cast<int>(std::ceil(std::pow(double(pool.size()), 0.2)));
  for (int j = 1; j <= p; ++j) {
    double frac = double(j) / (p + 1);
    double v = pool[std::min(pool.size() - 1, size_t(frac * pool.size()))];
    if (v > cfg.t_min && v < cfg.t_max &&
        (cfg.interior_knots.empty() || v > cfg.interior_knots.back()))
      cfg.interior_knots.push_back(v);
  }
  cfg.validate();
  return cfg;
}

}  // namespace dplc
