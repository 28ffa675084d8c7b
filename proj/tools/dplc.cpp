// Command-line driver: fit / infer / simulate / study / predict.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dplc/dataset.hpp"
#include "dplc/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dplc;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

void setup_threads(int threads) {
#ifdef _OPENMP
  if (threads <= 0) {
    const char* env = std::getenv("DPLC_THREADS");
    if (env) threads = std::atoi(env);
  }
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

int report_dataset_errors(const std::vector<DatasetError>& errors) {
  for (const auto& e : errors) {
    if (e.row == 0)
      std::cerr << "dataset error: " << e.message << "\n";
    else
      std::cerr << "dataset error (row " << e.row << "): " << e.message << "\n";
  }
  return 1;
}

Dataset load_or_die(const std::string& path) {
  std::vector<DatasetError> errors;
  Dataset ds = read_dataset(path, errors);
  if (!errors.empty()) {
    report_dataset_errors(errors);
    std::exit(1);
  }
  return ds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep partial-linear Cox regression for interval-censored data"};
  app.require_subcommand(1);

  std::string data_path, config_path, model_path, out_dir = ".", times_arg;
  std::int64_t seed = -1;
  int threads = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "override the config seed");
    cmd->add_option("--threads", threads, "worker thread count (default: DPLC_THREADS or all)");
    cmd->add_option("--out", out_dir, "output directory");
  };

  auto* fit = app.add_subcommand("fit", "fit the model to a dataset");
  fit->add_option("--data", data_path, "dataset CSV")->required();
  fit->add_option("--config", config_path, "training config JSON");
  add_common(fit);

  auto* infer = app.add_subcommand("infer", "standard errors and Wald tests for a fitted model");
  infer->add_option("--model", model_path, "model JSON")->required();
  infer->add_option("--data", data_path, "dataset CSV")->required();
  infer->add_option("--config", config_path, "LFD config JSON");
  add_common(infer);

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic dataset");
  simulate->add_option("--config", config_path, "design config JSON");
  add_common(simulate);

  auto* study = app.add_subcommand("study", "run a replication study");
  study->add_option("--config", config_path, "study config JSON")->required();
  add_common(study);

  auto* predict = app.add_subcommand("predict", "per-subject survival probabilities");
  predict->add_option("--model", model_path, "model JSON")->required();
  predict->add_option("--data", data_path, "dataset CSV")->required();
  predict->add_option("--times", times_arg, "comma-separated evaluation times")->required();
  add_common(predict);

  CLI11_PARSE(app, argc, argv);
  setup_threads(threads);
  Timer timer;

  try {
    fs::create_directories(out_dir);

    if (*fit) {
      Dataset ds = load_or_die(data_path);
      TrainConfig cfg;
      if (!config_path.empty())
        cfg = train_config_from_file(config_path, int(ds.z_names.size()));
      if (seed >= 0) cfg.seed = std::uint64_t(seed);
      if (cfg.grid.empty()) cfg.grid = default_grid(int(ds.z_names.size()));

      FitResult res = select_and_refit(ds.obs, cfg);
      std::string model_out = out_dir + "/model.json";
      save_model(model_out, res);

      json log{{"train_loglik", res.train_loglik},
               {"val_loglik", res.val_loglik},
               {"epochs_run", res.epochs_run},
               {"floor_events", res.numerical_floor_events},
               {"grid_val_logliks", res.grid_val_logliks},
               {"selected_arch", res.selected_arch.describe()}};
      json restarts = json::array();
      for (const auto& r : res.restart_logs)
        restarts.push_back(json{{"seed", r.seed},
                                {"train_loglik", r.train_loglik},
                                {"val_loglik", r.val_loglik},
                                {"failed", r.failed}});
      log["restarts"] = restarts;
      atomic_write(out_dir + "/training_log.json", log.dump(2) + "\n");

      write_manifest(out_dir + "/manifest.json",
                     {"fit", json{{"config", config_path}, {"data", data_path}}.dump(),
                      cfg.seed, "", timer.seconds(),
                      {model_out, out_dir + "/training_log.json"}});
      std::cout << "selected " << res.selected_arch.describe()
                << "  loglik " << res.train_loglik << "\n";
    }

    if (*infer) {
      Dataset ds = load_or_die(data_path);
      FitResult fitres = load_model(model_path);
      LfdConfig cfg;
      if (!config_path.empty()) cfg = lfd_config_from_file(config_path);
      if (seed >= 0) cfg.seed = std::uint64_t(seed);
      PreparedData data = PreparedData::build(ds.obs, fitres.state.spline);
      LfdPair lfd = estimate_lfd(data, fitres, cfg);
      InferenceResult res = information_matrix(data, fitres, lfd);
      std::string out = out_dir + "/inference.json";
      save_inference(out, res, ds.x_names);
      write_manifest(out_dir + "/manifest.json",
                     {"infer", json{{"model", model_path}, {"data", data_path}}.dump(),
                      cfg.seed, "", timer.seconds(), {out}});
      std::cout << wald_table(res, ds.x_names);
      if (res.singular) {
        std::cerr << "information matrix is singular or ill-conditioned (condition "
                  << res.condition << "); no standard errors\n";
        return 1;
      }
    }

    if (*simulate) {
      SimDesign d;
      std::uint64_t s = seed >= 0 ? std::uint64_t(seed) : 0;
      if (!config_path.empty()) d = sim_design_from_file(config_path);
      auto rng = make_rng(seed_hash(s, 0x51u));
      Dataset ds;
      ds.x_names = {"x_1"};
      for (int k = 1; k <= d.r; ++k) ds.z_names.push_back("z_" + std::to_string(k));
      ds.obs = generate_dataset(d, d.n, rng);
      std::string out = out_dir + "/dataset.csv";
      write_dataset(out, ds);
      write_manifest(out_dir + "/manifest.json",
                     {"simulate", json{{"config", config_path}}.dump(), s, "",
                      timer.seconds(), {out}});
      std::cout << "wrote " << ds.obs.size() << " rows to " << out << "\n";
    }

    if (*study) {
      StudyConfig cfg = study_config_from_file(config_path);
      if (seed >= 0) cfg.seed = std::uint64_t(seed);
      std::vector<RepResult> raw;
      auto reports = run_study(cfg, out_dir + "/checkpoints", &raw);
      std::string out = out_dir + "/metrics.csv";
      atomic_write(out, metrics_to_csv(cfg, reports));
      write_manifest(out_dir + "/manifest.json",
                     {"study", json{{"config", config_path}}.dump(), cfg.seed, "",
                      timer.seconds(), {out}});
      for (const auto& m : reports)
        std::cout << m.model << ": bias " << m.bias << "  ese " << m.ese << "  coverage "
                  << m.coverage << "  (" << m.n_failures << " failures)\n";
    }

    if (*predict) {
      Dataset ds = load_or_die(data_path);
      FitResult fitres = load_model(model_path);
      std::vector<double> times;
      std::stringstream ss(times_arg);
      std::string tok;
      while (std::getline(ss, tok, ',')) times.push_back(std::stod(tok));

      std::ostringstream out;
      out.precision(17);
      out << "subject,time,survival\n";
      for (std::size_t i = 0; i < ds.obs.size(); ++i)
        for (double t : times)
          out << i + 1 << "," << t << "," << survival(t, ds.obs[i], fitres.state) << "\n";
      std::string path = out_dir + "/predictions.csv";
      atomic_write(path, out.str());
      write_manifest(out_dir + "/manifest.json",
                     {"predict", json{{"model", model_path}, {"data", data_path}}.dump(),
                      0, "", timer.seconds(), {path}});
      std::cout << "wrote " << path << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
