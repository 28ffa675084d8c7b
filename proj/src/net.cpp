#include "dplc/net.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dplc {

std::vector<int> Architecture::layer_dims() const {
  std::vector<int> d;
  d.reserve(widths.size() + 2);
  d.push_back(input_dim);
  d.insert(d.end(), widths.begin(), widths.end());
  d.push_back(output_dim);
  return d;
}

std::size_t Architecture::param_count() const {
  auto d = layer_dims();
  std::size_t n = 0;
  for (size_t l = 0; l + 1 < d.size(); ++l) n += std::size_t(d[l + 1]) * d[l] + d[l + 1];
  return n;
}

void Architecture::validate() const {
  if (input_dim < 1 || output_dim < 1)
    throw std::invalid_argument("network dims must be positive");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("hidden widths must be positive");
}

std::string Architecture::describe() const {
  std::string s = std::to_string(input_dim);
  for (int w : widths) s += "-" + std::to_string(w);
  return s + "-" + std::to_string(output_dim);
}

namespace {
std::size_t layer_offset(const Architecture& a, int layer) {
  auto d = a.layer_dims();
  std::size_t off = 0;
  for (int l = 0; l < layer; ++l) off += std::size_t(d[l + 1]) * d[l] + d[l + 1];
  return off;
}
}  // namespace

std::span<double> NetParams::weight(int layer) {
  auto d = arch.layer_dims();
  return {data.data() + layer_offset(arch, layer), std::size_t(d[layer + 1]) * d[layer]};
}
std::span<const double> NetParams::weight(int layer) const {
  auto d = arch.layer_dims();
  return {data.data() + layer_offset(arch, layer), std::size_t(d[layer + 1]) * d[layer]};
}
std::span<double> NetParams::bias(int layer) {
  auto d = arch.layer_dims();
  std::size_t off = layer_offset(arch, layer) + std::size_t(d[layer + 1]) * d[layer];
  return {data.data() + off, std::size_t(d[layer + 1])};
}
std::span<const double> NetParams::bias(int layer) const {
  auto d = arch.layer_dims();
  std::size_t off = layer_offset(arch, layer) + std::size_t(d[layer + 1]) * d[layer];
  return {data.data() + off, std::size_t(d[layer + 1])};
}

NetParams net_init(const Architecture& arch, std::mt19937_64& rng) {
  arch.validate();
  NetParams p{arch, std::vector<double>(arch.param_count(), 0.0)};
  auto dims = arch.layer_dims();
  for (int l = 0; l + 1 < static_cast<int>(dims.size()); ++l) {
    std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / dims[l]));
    for (double& w : p.weight(l)) w = nd(rng);
  }
  return p;
}

std::span<const double> net_forward(const NetParams& p, std::span<const double> z,
                                    NetWorkspace& ws) {
  auto dims = p.arch.layer_dims();
  if (z.size() != std::size_t(dims[0])) throw std::invalid_argument("net_forward: input size mismatch");
  const int L = p.n_layers();
  ws.act.resize(L + 1);
  ws.act[0].assign(z.begin(), z.end());
  for (int l = 0; l < L; ++l) {
    const int nin = dims[l], nout = dims[l + 1];
    auto& out = ws.act[l + 1];
    out.resize(nout);
    auto W = p.weight(l);
    auto b = p.bias(l);
    const auto& in = ws.act[l];
    for (int i = 0; i < nout; ++i) {
      double s = b[i];
      const double* wrow = W.data() + std::size_t(i) * nin;
      for (int j = 0; j < nin; ++j) s += wrow[j] * in[j];
      out[i] = (l + 1 < L) ? std::max(s, 0.0) : s;  // final layer is affine
    }
  }
  return {ws.act[L].data(), ws.act[L].size()};
}

std::vector<double> net_forward(const NetParams& p, std::span<const double> z) {
  NetWorkspace ws;
  auto out = net_forward(p, z, ws);
  return {out.begin(), out.end()};
}

void net_backward(const NetParams& p, NetWorkspace& ws, std::span<const double> upstream,
                  std::span<double> grad, std::span<double> dz) {
  auto dims = p.arch.layer_dims();
  const int L = p.n_layers();
  if (upstream.size() != std::size_t(dims[L])) throw std::invalid_argument("net_backward: upstream size mismatch");
  if (grad.size() != p.data.size()) throw std::invalid_argument("net_backward: grad size mismatch");
  ws.delta.resize(L + 1);
  ws.delta[L].assign(upstream.begin(), upstream.end());
  for (int l = L - 1; l >= 0; --l) {
    const int nin = dims[l], nout = dims[l + 1];
    const auto& d_out = ws.delta[l + 1];
    const auto& in = ws.act[l];
    auto W = p.weight(l);
    std::size_t off = layer_offset(p.arch, l);
    double* gW = grad.data() + off;
    double* gb = gW + std::size_t(nout) * nin;
    auto& d_in = ws.delta[l];
    d_in.assign(nin, 0.0);
    for (int i = 0; i < nout; ++i) {
      double d = d_out[i];
      gb[i] += d;
      const double* wrow = W.data() + std::size_t(i) * nin;
      double* grow = gW + std::size_t(i) * nin;
      for (int j = 0; j < nin; ++j) {
        grow[j] += d * in[j];
        d_in[j] += d * wrow[j];
      }
    }
    if (l > 0) {
      // ReLU mask: activation value > 0 iff the unit was active
      for (int j = 0; j < nin; ++j)
        if (in[j] <= 0.0) d_in[j] = 0.0;
    }
  }
  if (!dz.empty()) {
    if (dz.size() != std::size_t(dims[0])) throw std::invalid_argument("net_backward: dz size mismatch");
    for (int j = 0; j < dims[0]; ++j) dz[j] += ws.delta[0][j];
  }
}

double CenteredNet::eval1(std::span<const double> z, NetWorkspace& ws) const {
  return net_forward(params, z, ws)[0] - offset;
}

CenteredNet center_net(NetParams params, const Matrix& z) {
  NetWorkspace ws;
  double mean = 0.0;
  for (std::size_t i = 0; i < z.rows; ++i) mean += net_forward(params, z.row(i), ws)[0];
  mean /= double(z.rows);
  return CenteredNet{std::move(params), mean};
}

NetClassDiagnostics net_class_diagnostics(const NetParams& p, const Matrix& probe_z) {
  NetClassDiagnostics d;
  for (double w : p.data) {
    d.max_weight_norm = std::max(d.max_weight_norm, std::fabs(w));
    if (std::fabs(w) < 1e-8) ++d.near_zero_params;
  }
  NetWorkspace ws;
  for (std::size_t i = 0; i < probe_z.rows; ++i) {
    auto out = net_forward(p, probe_z.row(i), ws);
    for (double o : out) d.max_output = std::max(d.max_output, std::fabs(o));
  }
  return d;
}

}  // namespace dplc
