#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dplc/matrix.hpp"

namespace dplc {

// Dense feedforward ReLU network. Depth 0 is a plain affine map, which is the
// linear-Cox baseline's g.
struct Architecture {
  int input_dim = 1;
  std::vector<int> widths;  // hidden layer widths
  int output_dim = 1;

  int depth() const { return static_cast<int>(widths.size()); }
  // [input_dim, widths..., output_dim]
  std::vector<int> layer_dims() const;
  std::size_t param_count() const;
  void validate() const;
  std::string describe() const;  // e.g. "10-8-8-1"
};

// Weights and biases in one flat buffer: per layer, W (out x in, row-major)
// followed by b. The flat layout is what the optimizer steps over.
struct NetParams {
  Architecture arch;
  std::vector<double> data;

  int n_layers() const { return arch.depth() + 1; }
  std::span<double> weight(int layer);
  std::span<const double> weight(int layer) const;
  std::span<double> bias(int layer);
  std::span<const double> bias(int layer) const;
};

// Per-thread scratch: post-activation values per layer, and the backward
// sensitivities. Reused across calls to avoid allocation in hot loops.
struct NetWorkspace {
  std::vector<std::vector<double>> act;    // act[0] = input copy, act[L] = output
  std::vector<std::vector<double>> delta;
};

// He-style initialization: N(0, 2/fan_in) weights, zero biases.
NetParams net_init(const Architecture& arch, std::mt19937_64& rng);

// Forward pass; leaves activations in ws for a subsequent backward call.
// Returns a view of the output layer (valid until the next forward on ws).
std::span<const double> net_forward(const NetParams& p, std::span<const double> z,
                                    NetWorkspace& ws);
std::vector<double> net_forward(const NetParams& p, std::span<const double> z);

// Accumulates d(upstream . f(z))/d(params) into grad (same flat layout as
// params.data, +=). Requires net_forward(p, z, ws) to have just run.
// If dz is non-empty, also accumulates the input gradient there.
void net_backward(const NetParams& p, NetWorkspace& ws, std::span<const double> upstream,
                  std::span<double> grad, std::span<double> dz = {});

struct CenteredNet {
  NetParams params;
  double offset = 0.0;

  double eval1(std::span<const double> z, NetWorkspace& ws) const;  // scalar output nets
};

// offset = empirical mean of raw outputs over the rows of z (scalar-output nets).
CenteredNet center_net(NetParams params, const Matrix& z);

// Diagnostics for the theoretical network class (reported, never enforced).
struct NetClassDiagnostics {
  double max_weight_norm = 0.0;  // max |W|, |b| entries
  double max_output = 0.0;       // max |g(z)| over a probe batch
  std::size_t near_zero_params = 0;  // |theta| < 1e-8
};
NetClassDiagnostics net_class_diagnostics(const NetParams& p, const Matrix& probe_z);

}  // namespace dplc
