#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dplc/dataset.hpp"
#include "dplc/rng.hpp"

using namespace dplc;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path tmpdir() {
  fs::path p = fs::temp_directory_path() / "dplc_dataset_test";
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

void spit(const fs::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary);
  out << body;
}

Dataset toy_dataset() {
  Dataset ds;
  ds.x_names = {"x_1"};
  ds.z_names = {"z_1", "z_2"};
  Observation a{{1.0}, {0.25, -1.5}, 0.0, 1.5};
  Observation b{{0.0}, {1.0 / 3.0, 0.125}, 0.5, 2.0};
  Observation c{{1.0}, {-0.7, 1.9}, 2.5, kInf};
  ds.obs = {a, b, c};
  return ds;
}

}  // namespace

TEST_CASE("dataset round-trips through CSV") {
  auto dir = tmpdir();
  auto path = (dir / "roundtrip.csv").string();
  Dataset ds = toy_dataset();
  write_dataset(path, ds);

  std::vector<DatasetError> errors;
  Dataset back = read_dataset(path, errors);
  CHECK(errors.empty());
  CHECK(back.x_names == ds.x_names);
  CHECK(back.z_names == ds.z_names);
  REQUIRE(back.obs.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.obs[i].x == ds.obs[i].x);  // precision 17 is lossless
    CHECK(back.obs[i].z == ds.obs[i].z);
    CHECK(back.obs[i].left == ds.obs[i].left);
    CHECK(back.obs[i].right == ds.obs[i].right);
  }
}

TEST_CASE("right-censoring sentinel is case-insensitive") {
  auto dir = tmpdir();
  auto path = dir / "inf.csv";
  spit(path, "x_1,z_1,left,right\n1,0.5,1.0,INF\n0,0.2,0.0,2.5\n1,0.1,1.5,Infinity\n");
  std::vector<DatasetError> errors;
  Dataset ds = read_dataset(path.string(), errors);
  CHECK(errors.empty());
  REQUIRE(ds.obs.size() == 3);
  CHECK(ds.obs[0].right == kInf);
  CHECK(ds.obs[2].right == kInf);
}

TEST_CASE("schema errors name the offending column") {
  auto dir = tmpdir();
  auto path = dir / "schema.csv";
  spit(path, "x_1,z_1,left,duration\n1,0.5,1.0,2.0\n");
  std::vector<DatasetError> errors;
  read_dataset(path.string(), errors);
  REQUIRE(!errors.empty());
  bool missing_right = false, unknown = false;
  for (const auto& e : errors) {
    CHECK(e.row == 0);
    if (e.message.find("right") != std::string::npos) missing_right = true;
    if (e.message.find("duration") != std::string::npos) unknown = true;
  }
  CHECK(missing_right);
  CHECK(unknown);
}

TEST_CASE("every bad row is reported, not just the first") {
  auto dir = tmpdir();
  auto path = dir / "bad.csv";
  spit(path,
       "x_1,z_1,left,right\n"
       "1,0.5,1.0,2.0\n"        // ok
       "1,0.5,3.0,2.0\n"        // left > right
       "1,abc,1.0,2.0\n"        // bad numeric
       "1,0.5,1.0\n"            // wrong field count
       "0,0.1,0.0,inf\n"        // left-censored AND right-censored: no info
       "1,0.2,0.5,1.5\n");      // ok
  std::vector<DatasetError> errors;
  Dataset ds = read_dataset(path.string(), errors);
  REQUIRE(errors.size() == 4);
  CHECK(errors[0].row == 2);
  CHECK(errors[1].row == 3);
  CHECK(errors[2].row == 4);
  CHECK(errors[3].row == 5);
  CHECK(ds.obs.size() == 2);
}

TEST_CASE("all-right-censored data is rejected") {
  auto dir = tmpdir();
  auto path = dir / "rc.csv";
  spit(path, "x_1,z_1,left,right\n1,0.5,1.0,inf\n0,0.2,2.0,inf\n");
  std::vector<DatasetError> errors;
  read_dataset(path.string(), errors);
  REQUIRE(errors.size() == 1);
  CHECK(errors[0].message.find("right-censored") != std::string::npos);
}

TEST_CASE("model files round-trip and are byte-stable") {
  auto dir = tmpdir();
  FitResult fit;
  fit.state.beta = {0.37, -1.2};
  fit.state.baseline.gamma_tilde = {-0.5, 0.25, 1.0 / 3.0};
  fit.state.spline.degree = 3;
  fit.state.spline.interior_knots = {};
  fit.state.spline.t_min = 0.0;
  fit.state.spline.t_max = 4.5;
  Architecture arch{2, {3}, 1};
  auto rng = make_rng(12);
  fit.state.g.params = net_init(arch, rng);
  fit.state.g.offset = 0.125;
  fit.selected_arch = arch;
  fit.train_loglik = -123.456;
  fit.val_loglik = -30.0;
  fit.numerical_floor_events = 2;
  fit.epochs_run = 77;

  auto path = (dir / "model.json").string();
  save_model(path, fit);
  FitResult back = load_model(path);
  CHECK(back.state.beta == fit.state.beta);
  CHECK(back.state.baseline.gamma_tilde == fit.state.baseline.gamma_tilde);
  CHECK(back.state.spline.t_max == fit.state.spline.t_max);
  CHECK(back.state.g.params.data == fit.state.g.params.data);
  CHECK(back.state.g.offset == fit.state.g.offset);
  CHECK(back.selected_arch.describe() == "2-3-1");
  CHECK(back.train_loglik == fit.train_loglik);
  CHECK(back.numerical_floor_events == 2);
  CHECK(back.epochs_run == 77);

  auto path2 = (dir / "model2.json").string();
  save_model(path2, back);
  CHECK(slurp(path) == slurp(path2));

  spit(dir / "wrong.json", "{\"format\": \"other/9\"}");
  CHECK_THROWS(load_model((dir / "wrong.json").string()));
}

TEST_CASE("inference files round-trip exactly") {
  auto dir = tmpdir();
  InferenceResult res;
  res.n = 500;
  res.info = Matrix(2, 2);
  res.info(0, 0) = 1.25;
  res.info(0, 1) = res.info(1, 0) = -0.037;
  res.info(1, 1) = 0.8123456789012345;
  res.est = {0.148, -0.283};
  res.se = {0.019, 0.023};
  res.ci_lower = {0.1108, -0.32808};
  res.ci_upper = {0.1852, -0.23792};
  res.z_values = {7.789, -12.3};
  res.p_values = {1e-14, 2e-30};
  res.hazard_ratio = {1.159, 0.753};
  res.rho_initial = 0.9;
  res.rho_final = 0.4;

  auto path = (dir / "inference.json").string();
  save_inference(path, res, {"gender", "exercise"});
  InferenceResult back = load_inference(path);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(std::abs(back.info(i, j) - res.info(i, j)) <= 1e-15);
  CHECK(back.est == res.est);
  CHECK(back.se == res.se);
  CHECK(back.p_values == res.p_values);
  CHECK(back.n == 500);
  CHECK(!back.singular);

  // singular results carry no standard errors
  InferenceResult sing;
  sing.n = 10;
  sing.info = Matrix(1, 1);
  sing.est = {0.5};
  sing.singular = true;
  sing.condition = kInf;
  auto spath = (dir / "singular.json").string();
  save_inference(spath, sing, {"x_1"});
  InferenceResult sback = load_inference(spath);
  CHECK(sback.singular);
  CHECK(sback.se.empty());
}

TEST_CASE("config files") {
  auto dir = tmpdir();
  spit(dir / "train.json",
       R"({"learning_rate": 0.01, "epochs": 250, "restarts": 3, "seed": 11,
           "grid": [[4], [8, 8]]})");
  TrainConfig tc = train_config_from_file((dir / "train.json").string(), 6);
  CHECK(tc.learning_rate == 0.01);
  CHECK(tc.epochs == 250);
  CHECK(tc.restarts == 3);
  CHECK(tc.seed == 11);
  REQUIRE(tc.grid.size() == 2);
  CHECK(tc.grid[0].input_dim == 6);
  CHECK(tc.grid[0].widths == std::vector<int>{4});
  CHECK(tc.grid[1].widths == std::vector<int>{8, 8});

  spit(dir / "train_default.json", R"({"default_grid": true})");
  CHECK(train_config_from_file((dir / "train_default.json").string(), 10).grid.size() == 24);

  spit(dir / "lfd.json", R"({"epochs": 99, "h1_width": 16})");
  LfdConfig lc = lfd_config_from_file((dir / "lfd.json").string());
  CHECK(lc.epochs == 99);
  CHECK(lc.h1_width == 16);
  CHECK(lc.h2_depth == 2);  // default preserved

  spit(dir / "design.json", R"({"n": 750, "r": 4, "kappa": 2.0, "g_case": "deep2"})");
  SimDesign d = sim_design_from_file((dir / "design.json").string());
  CHECK(d.n == 750);
  CHECK(d.r == 4);
  CHECK(d.kappa == 2.0);
  CHECK(d.g_case == GCase::deep2);

  spit(dir / "study.json",
       R"({"n_reps": 5, "seed": 3, "models": ["dplc"], "with_inference": false,
           "design": {"n": 200, "r": 3}, "train": {"epochs": 40}})");
  StudyConfig sc = study_config_from_file((dir / "study.json").string());
  CHECK(sc.n_reps == 5);
  CHECK(sc.models == std::vector<std::string>{"dplc"});
  CHECK(!sc.with_inference);
  CHECK(sc.design.n == 200);
  CHECK(sc.train.epochs == 40);

  CHECK_THROWS(train_config_from_file((dir / "nope.json").string(), 3));
}

TEST_CASE("metrics table round-trips losslessly") {
  StudyConfig cfg;
  cfg.design.g_case = GCase::deep1;
  cfg.design.n = 500;
  cfg.design.visit_p = 0.4;
  MetricReport a;
  a.model = "dplc";
  a.bias = -0.052;
  a.ese = 0.2312345678901234;
  a.coverage = 0.95;
  a.rmse_mean = 0.07;
  a.rmse_median = 0.056;
  a.imse_mean = 0.118;
  a.n_reps = 50;
  a.n_failures = 1;
  MetricReport b = a;
  b.model = "cph";
  b.bias = -0.782;
  b.ese = std::numeric_limits<double>::quiet_NaN();

  std::string csv = metrics_to_csv(cfg, {a, b});
  CHECK(csv.rfind("setting,rho,p,n,model,kappa,metric,value\n", 0) == 0);
  CHECK(csv.find("deep1,0.5,0.4") != std::string::npos);
  CHECK(csv.find(",500,dplc,1,bias,") != std::string::npos);
  CHECK(csv.find(",500,cph,1,ese,nan") != std::string::npos);

  auto back = metrics_from_csv(csv);
  REQUIRE(back.size() == 2);
  CHECK(back[0].model == "dplc");
  CHECK(back[0].bias == a.bias);
  CHECK(back[0].ese == a.ese);
  CHECK(back[0].rmse_median == a.rmse_median);
  CHECK(back[0].n_reps == 50);
  CHECK(back[0].n_failures == 1);
  CHECK(back[1].bias == b.bias);
  CHECK(std::isnan(back[1].ese));
}

TEST_CASE("manifests are valid JSON with the run metadata") {
  auto dir = tmpdir();
  RunManifest m{"fit", R"({"data": "toy.csv"})", 42, "", 1.5, {"model.json"}};
  auto path = (dir / "manifest.json").string();
  write_manifest(path, m);
  json j = json::parse(slurp(path));
  CHECK(j.at("command") == "fit");
  CHECK(j.at("seed") == 42);
  CHECK(j.at("config").at("data") == "toy.csv");
  CHECK(j.at("outputs").size() == 1);
  CHECK(j.at("version").is_string());
}

TEST_CASE("atomic_write leaves no temp file behind") {
  auto dir = tmpdir();
  auto path = dir / "x.txt";
  atomic_write(path.string(), "hello");
  CHECK(slurp(path) == "hello");
  CHECK(!fs::exists(path.string() + ".tmp"));
}
