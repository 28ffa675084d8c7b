#pragma once

#include <string>
#include <vector>

#include "dplc/inference.hpp"
#include "dplc/simgen.hpp"
#include "dplc/trainer.hpp"

namespace dplc {

// Dataset CSV schema: header with d columns prefixed "x_", r columns prefixed
// "z_", then "left" and "right"; "inf" (any case) marks right censoring.
struct DatasetError {
  std::size_t row;  // 1-based data row; 0 for header problems
  std::string message;
};

struct Dataset {
  std::vector<std::string> x_names, z_names;
  std::vector<Observation> obs;
};

// Collects every violation instead of stopping at the first.
Dataset read_dataset(const std::string& path, std::vector<DatasetError>& errors);
void write_dataset(const std::string& path, const Dataset& ds);

// Model file: architecture, flat weights/biases, centering offset, beta,
// gamma_tilde and the spline configuration, under a version tag.
void save_model(const std::string& path, const FitResult& fit);
FitResult load_model(const std::string& path);

void save_inference(const std::string& path, const InferenceResult& res,
                    const std::vector<std::string>& names);
InferenceResult load_inference(const std::string& path);

// JSON config files for fit/study runs.
TrainConfig train_config_from_file(const std::string& path, int r_hint);
LfdConfig lfd_config_from_file(const std::string& path);
SimDesign sim_design_from_file(const std::string& path);
StudyConfig study_config_from_file(const std::string& path);

// Long-format metric table (setting, rho, p, n, model, kappa, metric, value);
// round-trips losslessly through metrics_from_csv.
std::string metrics_to_csv(const StudyConfig& cfg, const std::vector<MetricReport>& reports);
std::vector<MetricReport> metrics_from_csv(const std::string& content);

// Every command writes one manifest next to its outputs.
struct RunManifest {
  std::string command;
  std::string config_snapshot;  // serialized JSON of the effective config
  std::uint64_t seed = 0;
  std::string version;
  double wall_seconds = 0.0;
  std::vector<std::string> outputs;
};
void write_manifest(const std::string& path, const RunManifest& m);

// temp-then-rename text write
void atomic_write(const std::string& path, const std::string& content);

}  // namespace dplc
