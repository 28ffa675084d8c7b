// Benchmark of the chunked parallel likelihood kernel against the serial
// reference implementation on a synthetic batch.

#include <chrono>
#include <cstdio>

#include "dplc/likelihood.hpp"
#include "dplc/rng.hpp"
#include "dplc/simgen.hpp"
#include "dplc/trainer.hpp"

using namespace dplc;

int main(int argc, char** argv) {
  std::size_t n = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 20000;
  int iters = argc > 2 ? std::atoi(argv[2]) : 20;

  SimDesign d;
  d.n = n;
  auto rng = make_rng(7);
  auto obs = generate_dataset(d, n, rng);
  TrainConfig tc;
  PreparedData data = PreparedData::build(obs, spline_for(obs, tc));

  ModelState st;
  st.spline = data.spline;
  st.beta = {0.5};
  st.baseline.gamma_tilde.assign(data.spline.basis_count(), -1.0);
  Architecture a{d.r, {d.r, d.r}, 1};
  st.g.params = net_init(a, rng);

  Gradients g;
  auto bench = [&](const char* name, auto fn) {
    fn();  // warm-up
    auto t0 = std::chrono::steady_clock::now();
    double ll = 0.0;
    for (int i = 0; i < iters; ++i) ll = fn();
    double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%-10s %8.2f ms/iter   loglik %.10f\n", name, 1e3 * dt / iters, ll);
    return ll;
  };

  double a1 = bench("serial", [&] { return batch_loglik_serial(data, st, &g); });
  double a2 = bench("parallel", [&] { return batch_loglik(data, st, &g); });
  std::printf("difference %.3e\n", a1 - a2);
  return 0;
}
