#include "dplc/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dplc {

using json = nlohmann::json;

static constexpr const char* kVersion = "0.1.0";
static constexpr const char* kModelFormat = "dplc-model/1";

void atomic_write(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  for (auto& f : fields) {
    while (!f.empty() && std::isspace(static_cast<unsigned char>(f.front()))) f.erase(f.begin());
    while (!f.empty() && std::isspace(static_cast<unsigned char>(f.back()))) f.pop_back();
  }
  return fields;
}

bool parse_number(const std::string& s, double& out, bool allow_inf) {
  if (s.empty()) return false;
  std::string lower;
  for (char c : s) lower += char(std::tolower(static_cast<unsigned char>(c)));
  if (allow_inf && (lower == "inf" || lower == "+inf" || lower == "infinity")) {
    out = kInf;
    return true;
  }
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace

Dataset read_dataset(const std::string& path, std::vector<DatasetError>& errors) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  Dataset ds;
  std::string line;
  if (!std::getline(in, line)) {
    errors.push_back({0, "empty file"});
    return ds;
  }
  auto header = split_csv_line(line);
  std::vector<int> x_idx, z_idx;
  int left_idx = -1, right_idx = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto& h = header[i];
    if (h.rfind("x_", 0) == 0) {
      x_idx.push_back(int(i));
      ds.x_names.push_back(h);
    } else if (h.rfind("z_", 0) == 0) {
      z_idx.push_back(int(i));
      ds.z_names.push_back(h);
    } else if (h == "left") {
      left_idx = int(i);
    } else if (h == "right") {
      right_idx = int(i);
    } else {
      errors.push_back({0, "unrecognized column: " + h});
    }
  }
  if (left_idx < 0) errors.push_back({0, "missing required column: left"});
  if (right_idx < 0) errors.push_back({0, "missing required column: right"});
  if (!errors.empty()) return ds;

  std::size_t row = 0;
  bool any_informative = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      errors.push_back({row, "wrong field count"});
      continue;
    }
    Observation o;
    bool row_ok = true;
    for (int i : x_idx) {
      double v;
      if (!parse_number(f[i], v, false)) {
        errors.push_back({row, "bad value in column " + header[i]});
        row_ok = false;
      } else {
        o.x.push_back(v);
      }
    }
    for (int i : z_idx) {
      double v;
      if (!parse_number(f[i], v, false)) {
        errors.push_back({row, "bad value in column " + header[i]});
        row_ok = false;
      } else {
        o.z.push_back(v);
      }
    }
    double l = 0, r = 0;
    if (!parse_number(f[left_idx], l, false)) {
      errors.push_back({row, "bad value in column left"});
      row_ok = false;
    }
    if (!parse_number(f[right_idx], r, true)) {
      errors.push_back({row, "bad value in column right"});
      row_ok = false;
    }
    if (!row_ok) continue;
    o.left = l;
    o.right = r;
    try {
      o.validate();
    } catch (const std::invalid_argument& e) {
      errors.push_back({row, e.what()});
      continue;
    }
    if (!o.is_right()) any_informative = true;
    ds.obs.push_back(std::move(o));
  }
  if (!ds.obs.empty() && !any_informative)
    errors.push_back({0, "all rows right-censored; baseline hazard unidentified"});
  return ds;
}

void write_dataset(const std::string& path, const Dataset& ds) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& n : ds.x_names) out << n << ",";
  for (const auto& n : ds.z_names) out << n << ",";
  out << "left,right\n";
  for (const auto& o : ds.obs) {
    for (double v : o.x) out << v << ",";
    for (double v : o.z) out << v << ",";
    out << o.left << ",";
    if (o.right < kInf)
      out << o.right;
    else
      out << "inf";
    out << "\n";
  }
  atomic_write(path, out.str());
}

namespace {

json arch_to_json(const Architecture& a) {
  return json{{"input_dim", a.input_dim}, {"widths", a.widths}, {"output_dim", a.output_dim}};
}

Architecture arch_from_json(const json& j) {
  Architecture a;
  a.input_dim = j.at("input_dim");
  a.widths = j.at("widths").get<std::vector<int>>();
  a.output_dim = j.at("output_dim");
  return a;
}

json net_to_json(const NetParams& p, double offset) {
  json weights = json::array(), biases = json::array();
  for (int l = 0; l < p.n_layers(); ++l) {
    auto w = p.weight(l);
    auto b = p.bias(l);
    weights.push_back(std::vector<double>(w.begin(), w.end()));
    biases.push_back(std::vector<double>(b.begin(), b.end()));
  }
  return json{{"format", "dplc-net/1"},
              {"architecture", arch_to_json(p.arch)},
              {"weights", weights},
              {"biases", biases},
              {"offset", offset}};
}

void net_from_json(const json& j, NetParams& p, double& offset) {
  if (j.at("format") != "dplc-net/1") throw std::runtime_error("unknown net format tag");
  p.arch = arch_from_json(j.at("architecture"));
  p.data.assign(p.arch.param_count(), 0.0);
  for (int l = 0; l < p.n_layers(); ++l) {
    auto w = j.at("weights").at(l).get<std::vector<double>>();
    auto b = j.at("biases").at(l).get<std::vector<double>>();
    auto wd = p.weight(l);
    auto bd = p.bias(l);
    if (w.size() != wd.size() || b.size() != bd.size())
      throw std::runtime_error("net parameter shape mismatch");
    std::copy(w.begin(), w.end(), wd.begin());
    std::copy(b.begin(), b.end(), bd.begin());
  }
  offset = j.at("offset");
}

json spline_to_json(const SplineConfig& c) {
  return json{{"degree", c.degree},
              {"interior_knots", c.interior_knots},
              {"t_min", c.t_min},
              {"t_max", c.t_max}};
}

SplineConfig spline_from_json(const json& j) {
  SplineConfig c;
  c.degree = j.at("degree");
  c.interior_knots = j.at("interior_knots").get<std::vector<double>>();
  c.t_min = j.at("t_min");
  c.t_max = j.at("t_max");
  return c;
}

}  // namespace

void save_model(const std::string& path, const FitResult& fit) {
  json j{{"format", kModelFormat},
         {"version", kVersion},
         {"beta", fit.state.beta},
         {"gamma_tilde", fit.state.baseline.gamma_tilde},
         {"spline", spline_to_json(fit.state.spline)},
         {"net", net_to_json(fit.state.g.params, fit.state.g.offset)},
         {"selected_arch", arch_to_json(fit.selected_arch)},
         {"train_loglik", fit.train_loglik},
         {"val_loglik", fit.val_loglik},
         {"floor_events", fit.numerical_floor_events},
         {"epochs_run", fit.epochs_run}};
  atomic_write(path, j.dump(2) + "\n");
}

FitResult load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model: " + path);
  json j = json::parse(in);
  if (j.at("format") != kModelFormat) throw std::runtime_error("unknown model format tag");
  FitResult fit;
  fit.state.beta = j.at("beta").get<std::vector<double>>();
  fit.state.baseline.gamma_tilde = j.at("gamma_tilde").get<std::vector<double>>();
  fit.state.spline = spline_from_json(j.at("spline"));
  net_from_json(j.at("net"), fit.state.g.params, fit.state.g.offset);
  fit.selected_arch = arch_from_json(j.at("selected_arch"));
  fit.train_loglik = j.at("train_loglik");
  fit.val_loglik = j.at("val_loglik");
  fit.numerical_floor_events = j.at("floor_events");
  fit.epochs_run = j.at("epochs_run");
  return fit;
}

void save_inference(const std::string& path, const InferenceResult& res,
                    const std::vector<std::string>& names) {
  json info = json::array();
  for (std::size_t i = 0; i < res.info.rows; ++i) {
    json row = json::array();
    for (std::size_t jx = 0; jx < res.info.cols; ++jx) row.push_back(res.info(i, jx));
    info.push_back(row);
  }
  json j{{"format", "dplc-inference/1"},
         {"n", res.n},
         {"names", names},
         {"info", info},
         {"est", res.est},
         {"singular", res.singular},
         {"condition", res.condition},
         {"rho_initial", res.rho_initial},
         {"rho_final", res.rho_final}};
  if (!res.singular) {
    j["se"] = res.se;
    j["ci_lower"] = res.ci_lower;
    j["ci_upper"] = res.ci_upper;
    j["z_values"] = res.z_values;
    j["p_values"] = res.p_values;
    j["hazard_ratio"] = res.hazard_ratio;
  }
  atomic_write(path, j.dump(2) + "\n");
}

InferenceResult load_inference(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open inference file: " + path);
  json j = json::parse(in);
  InferenceResult res;
  res.n = j.at("n");
  res.est = j.at("est").get<std::vector<double>>();
  auto info = j.at("info");
  std::size_t d = info.size();
  res.info = Matrix(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t jx = 0; jx < d; ++jx) res.info(i, jx) = info.at(i).at(jx);
  res.singular = j.at("singular");
  // an infinite condition number serializes as JSON null
  res.condition = j.at("condition").is_null() ? kInf : j.at("condition").get<double>();
  res.rho_initial = j.at("rho_initial");
  res.rho_final = j.at("rho_final");
  if (!res.singular) {
    res.se = j.at("se").get<std::vector<double>>();
    res.ci_lower = j.at("ci_lower").get<std::vector<double>>();
    res.ci_upper = j.at("ci_upper").get<std::vector<double>>();
    res.z_values = j.at("z_values").get<std::vector<double>>();
    res.p_values = j.at("p_values").get<std::vector<double>>();
    res.hazard_ratio = j.at("hazard_ratio").get<std::vector<double>>();
  }
  return res;
}

namespace {

void train_config_from_json(const json& j, TrainConfig& c, int r_hint) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.restarts = j.value("restarts", c.restarts);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.seed = j.value("seed", c.seed);
  c.early_stop_tol = j.value("early_stop_tol", c.early_stop_tol);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.spline_degree = j.value("spline_degree", c.spline_degree);
  c.spline_interior = j.value("spline_interior", c.spline_interior);
  if (j.value("default_grid", false)) {
    c.grid = default_grid(r_hint);
  } else if (j.contains("grid")) {
    c.grid.clear();
    for (const auto& widths : j.at("grid")) {
      Architecture a;
      a.input_dim = r_hint;
      a.widths = widths.get<std::vector<int>>();
      a.output_dim = 1;
      c.grid.push_back(a);
    }
  }
}

void lfd_config_from_json(const json& j, LfdConfig& c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.h1_depth = j.value("h1_depth", c.h1_depth);
  c.h1_width = j.value("h1_width", c.h1_width);
  c.h2_depth = j.value("h2_depth", c.h2_depth);
  c.h2_width = j.value("h2_width", c.h2_width);
  c.seed = j.value("seed", c.seed);
}

void design_from_json(const json& j, SimDesign& d) {
  d.n = j.value("n", d.n);
  d.r = j.value("r", d.r);
  d.copula_theta = j.value("copula_theta", d.copula_theta);
  d.margin_lo = j.value("margin_lo", d.margin_lo);
  d.margin_hi = j.value("margin_hi", d.margin_hi);
  d.mu = j.value("mu", d.mu);
  d.kappa = j.value("kappa", d.kappa);
  d.beta0 = j.value("beta0", d.beta0);
  d.visit_p = j.value("visit_p", d.visit_p);
  d.tau = j.value("tau", d.tau);
  d.n_visits = j.value("n_visits", d.n_visits);
  if (j.contains("g_case")) d.g_case = g_case_from_string(j.at("g_case"));
  d.target_var_ratio = j.value("target_var_ratio", d.target_var_ratio);
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  return json::parse(in);
}

}  // namespace

TrainConfig train_config_from_file(const std::string& path, int r_hint) {
  TrainConfig c;
  train_config_from_json(load_json_file(path), c, r_hint);
  return c;
}

LfdConfig lfd_config_from_file(const std::string& path) {
  LfdConfig c;
  lfd_config_from_json(load_json_file(path), c);
  return c;
}

SimDesign sim_design_from_file(const std::string& path) {
  SimDesign d;
  json j = load_json_file(path);
  design_from_json(j.contains("design") ? j.at("design") : j, d);
  return d;
}

StudyConfig study_config_from_file(const std::string& path) {
  StudyConfig c;
  json j = load_json_file(path);
  if (j.contains("design")) design_from_json(j.at("design"), c.design);
  if (j.contains("train")) train_config_from_json(j.at("train"), c.train, c.design.r);
  if (j.contains("lfd")) lfd_config_from_json(j.at("lfd"), c.lfd);
  c.models = j.value("models", c.models);
  c.n_reps = j.value("n_reps", c.n_reps);
  c.seed = j.value("seed", c.seed);
  c.with_inference = j.value("with_inference", c.with_inference);
  c.with_metrics = j.value("with_metrics", c.with_metrics);
  c.test_n = j.value("test_n", c.test_n);
  return c;
}

std::string metrics_to_csv(const StudyConfig& cfg, const std::vector<MetricReport>& reports) {
  std::ostringstream out;
  out.precision(17);
  double rho = cfg.design.copula_theta / (cfg.design.copula_theta + 2.0);
  out << "setting,rho,p,n,model,kappa,metric,value\n";
  for (const auto& m : reports) {
    auto row = [&](const std::string& metric, double value) {
      out << to_string(cfg.design.g_case) << "," << rho << "," << cfg.design.visit_p << ","
          << cfg.design.n << "," << m.model << "," << cfg.design.kappa << "," << metric << ","
          << value << "\n";
    };
    row("bias", m.bias);
    row("ese", m.ese);
    row("coverage", m.coverage);
    row("rmse_mean", m.rmse_mean);
    row("rmse_median", m.rmse_median);
    row("imse_mean", m.imse_mean);
    row("n_reps", m.n_reps);
    row("n_failures", m.n_failures);
  }
  return out.str();
}

std::vector<MetricReport> metrics_from_csv(const std::string& content) {
  std::istringstream in(content);
  std::string line;
  std::getline(in, line);  // header
  std::vector<MetricReport> reports;
  auto find = [&](const std::string& model) -> MetricReport& {
    for (auto& m : reports)
      if (m.model == model) return m;
    reports.push_back(MetricReport{});
    reports.back().model = model;
    return reports.back();
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 8) throw std::runtime_error("bad metrics row: " + line);
    MetricReport& m = find(f[4]);
    double v = std::strtod(f[7].c_str(), nullptr);
    if (f[7] == "nan" || f[7] == "-nan") v = std::numeric_limits<double>::quiet_NaN();
    const std::string& metric = f[6];
    if (metric == "bias") m.bias = v;
    else if (metric == "ese") m.ese = v;
    else if (metric == "coverage") m.coverage = v;
    else if (metric == "rmse_mean") m.rmse_mean = v;
    else if (metric == "rmse_median") m.rmse_median = v;
    else if (metric == "imse_mean") m.imse_mean = v;
    else if (metric == "n_reps") m.n_reps = int(v);
    else if (metric == "n_failures") m.n_failures = int(v);
    else throw std::runtime_error("unknown metric: " + metric);
  }
  return reports;
}

void write_manifest(const std::string& path, const RunManifest& m) {
  json j{{"command", m.command},
         {"config", m.config_snapshot.empty() ? json(nullptr) : json::parse(m.config_snapshot)},
         {"seed", m.seed},
         {"version", m.version.empty() ? kVersion : m.version},
         {"wall_seconds", m.wall_seconds},
         {"outputs", m.outputs}};
  atomic_write(path, j.dump(2) + "\n");
}

}  // namespace dplc
