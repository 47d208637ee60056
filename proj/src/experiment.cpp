#include "steinsim/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "steinsim/errors.hpp"

namespace fs = std::filesystem;

namespace steinsim {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr const char* kStateNames[4] = {"q0", "q1", "qd0", "qd1"};

const char* field_name(LinkField f) {
  switch (f) {
    case LinkField::kMass: return "mass";
    case LinkField::kInertia: return "inertia";
    case LinkField::kComX: return "com_x";
    case LinkField::kComY: return "com_y";
    case LinkField::kLength: return "length";
    case LinkField::kDamping: return "damping";
  }
  throw ConfigError("unknown link field");
}

LinkField field_from_name(const std::string& name) {
  if (name == "mass") return LinkField::kMass;
  if (name == "inertia") return LinkField::kInertia;
  if (name == "com_x") return LinkField::kComX;
  if (name == "com_y") return LinkField::kComY;
  if (name == "length") return LinkField::kLength;
  if (name == "damping") return LinkField::kDamping;
  throw ConfigError("unknown link field '" + name + "'");
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed)
      if (item.key() == key) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

Eigen::VectorXd vector_from(const json& j, const char* where) {
  if (!j.is_array()) throw ConfigError(std::string(where) + " must be an array");
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

Eigen::MatrixXd matrix_from(const json& j, const char* where) {
  if (!j.is_array() || j.empty()) throw ConfigError(std::string(where) + " must be a matrix");
  const size_t rows = j.size();
  const size_t cols = j[0].size();
  Eigen::MatrixXd m(rows, cols);
  for (size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols)
      throw ConfigError(std::string(where) + " rows differ in length");
    for (size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

void parse_model(const json& j, PendulumModel& m) {
  check_keys(j, {"gravity", "dt", "links", "observed_dims", "params"}, "model");
  m.gravity = j.value("gravity", m.gravity);
  m.dt = j.value("dt", m.dt);
  if (j.contains("links")) {
    const json& links = j.at("links");
    if (!links.is_array() || links.size() != 2)
      throw ConfigError("model.links must list exactly two links");
    for (int i = 0; i < 2; ++i) {
      check_keys(links[i], {"mass", "inertia", "com_x", "com_y", "length", "damping"}, "link");
      LinkParams& lk = m.links[i];
      lk.mass = links[i].value("mass", lk.mass);
      lk.inertia = links[i].value("inertia", lk.inertia);
      lk.com_x = links[i].value("com_x", lk.com_x);
      lk.com_y = links[i].value("com_y", lk.com_y);
      lk.length = links[i].value("length", lk.length);
      lk.damping = links[i].value("damping", lk.damping);
    }
  }
  if (j.contains("observed_dims"))
    m.observed_dims = j.at("observed_dims").get<std::vector<int>>();
  if (j.contains("params")) {
    m.param_spec.clear();
    for (const json& p : j.at("params")) {
      check_keys(p, {"name", "targets", "min", "max"}, "param");
      ParamBinding b;
      b.name = p.at("name").get<std::string>();
      for (const json& t : p.at("targets")) {
        if (!t.is_array() || t.size() != 2)
          throw ConfigError("param target must be [link_index, field]");
        b.targets.emplace_back(t[0].get<int>(), field_from_name(t[1].get<std::string>()));
      }
      b.min = p.at("min").get<double>();
      b.max = p.at("max").get<double>();
      m.param_spec.push_back(std::move(b));
    }
  }
}

void parse_likelihood(const json& j, LikelihoodConfig& cfg) {
  check_keys(j,
             {"sigma_obs", "sigma_def", "shooting_windows", "window_length", "combination",
              "normalization"},
             "likelihood");
  if (j.contains("sigma_obs")) {
    const json& s = j.at("sigma_obs");
    if (s.is_number()) {
      cfg.sigma_obs.resize(1);
      cfg.sigma_obs[0] = s.get<double>();
    } else {
      cfg.sigma_obs = vector_from(s, "likelihood.sigma_obs");
    }
  }
  cfg.sigma_def = j.value("sigma_def", cfg.sigma_def);
  cfg.num_shooting_windows = j.value("shooting_windows", cfg.num_shooting_windows);
  cfg.window_length = j.value("window_length", cfg.window_length);
  if (j.contains("combination")) {
    const std::string c = j.at("combination").get<std::string>();
    if (c == "sum") cfg.combination = Combination::kSum;
    else if (c == "product") cfg.combination = Combination::kProduct;
    else throw ConfigError("likelihood.combination must be 'sum' or 'product'");
  }
  if (j.contains("normalization"))
    cfg.normalization = vector_from(j.at("normalization"), "likelihood.normalization");
}

void parse_estimator(const json& j, EstimatorConfig& est) {
  check_keys(j,
             {"method", "particles", "iterations", "lr", "bandwidth", "lambda_step", "damping_c",
              "shooting_lr", "population", "elite_fraction", "step_eps", "posterior_samples",
              "walkers", "stretch_a", "record_iterates"},
             "estimator");
  est.method = j.value("method", est.method);
  if (est.method != "csvgd" && est.method != "svgd" && est.method != "cem" &&
      est.method != "sgld" && est.method != "stretch")
    throw ConfigError("estimator.method must be one of csvgd, svgd, cem, sgld, stretch");
  est.svgd.num_particles = j.value("particles", est.svgd.num_particles);
  if (j.contains("iterations")) {
    const int it = j.at("iterations").get<int>();
    if (it < 1) throw ConfigError("estimator.iterations must be positive");
    est.svgd.iterations = it;
    est.cem.iterations = it;
    est.sgld.iterations = it;
    est.stretch.iterations = it;
  }
  est.svgd.lr = j.value("lr", est.svgd.lr);
  if (j.contains("bandwidth")) {
    const json& b = j.at("bandwidth");
    if (b.is_string() && b.get<std::string>() == "median") {
      est.svgd.kernel.bandwidth_rule = BandwidthRule::kMedian;
    } else if (b.is_number()) {
      est.svgd.kernel.bandwidth_rule = BandwidthRule::kFixed;
      est.svgd.kernel.fixed_bandwidth = b.get<double>();
    } else {
      throw ConfigError("estimator.bandwidth must be 'median' or a number");
    }
  }
  est.mdmm.lambda_step = j.value("lambda_step", est.mdmm.lambda_step);
  est.mdmm.damping_c = j.value("damping_c", est.mdmm.damping_c);
  est.mdmm.shooting_state_step = j.value("shooting_lr", est.mdmm.shooting_state_step);
  est.cem.population = j.value("population", est.cem.population);
  est.cem.elite_fraction = j.value("elite_fraction", est.cem.elite_fraction);
  est.sgld.step_eps = j.value("step_eps", est.sgld.step_eps);
  if (j.contains("posterior_samples")) {
    const int n = j.at("posterior_samples").get<int>();
    if (n < 1) throw ConfigError("estimator.posterior_samples must be positive");
    est.sgld.posterior_samples = n;
    est.stretch.posterior_samples = n;
  }
  est.stretch.walkers = j.value("walkers", est.stretch.walkers);
  est.stretch.stretch_a = j.value("stretch_a", est.stretch.stretch_a);
  est.svgd.record_iterates = j.value("record_iterates", est.svgd.record_iterates);
}

SyntheticSpec parse_synthetic(const json& j) {
  check_keys(j, {"mean", "cov", "std", "trajectories", "steps", "start_state", "noise"},
             "data.synthetic");
  SyntheticSpec spec;
  spec.mean = vector_from(j.at("mean"), "synthetic.mean");
  const int dim = static_cast<int>(spec.mean.size());
  spec.cov = Eigen::MatrixXd::Zero(dim, dim);
  if (j.contains("cov") && j.contains("std"))
    throw ConfigError("synthetic takes cov or std, not both");
  if (j.contains("cov")) {
    spec.cov = matrix_from(j.at("cov"), "synthetic.cov");
    if (spec.cov.rows() != dim || spec.cov.cols() != dim)
      throw ConfigError("synthetic.cov must be square and match mean");
  } else if (j.contains("std")) {
    const Eigen::VectorXd sd = vector_from(j.at("std"), "synthetic.std");
    if (sd.size() != dim) throw ConfigError("synthetic.std must match mean");
    spec.cov = sd.array().square().matrix().asDiagonal();
  }
  spec.num_trajectories = j.value("trajectories", spec.num_trajectories);
  spec.steps = j.value("steps", spec.steps);
  if (j.contains("start_state")) {
    const Eigen::VectorXd s = vector_from(j.at("start_state"), "synthetic.start_state");
    if (s.size() != 4) throw ConfigError("synthetic.start_state needs 4 entries");
    spec.start_state = state_from_vector(s);
  }
  spec.obs_noise = j.value("noise", spec.obs_noise);
  if (spec.num_trajectories < 1 || spec.steps < 1)
    throw ConfigError("synthetic needs at least one trajectory and one step");
  return spec;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

char* format_double(char* buf, double v) {
  std::snprintf(buf, 32, "%.17g", v);
  return buf;
}

// per-particle rollouts from the reference start state, long format
void write_rollout_table(const std::string& path, const Posterior& posterior,
                         const Trajectory& ref, const PendulumModel& model, int max_particles) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "particle,t";
  for (int d : model.observed_dims) out << "," << kStateNames[d];
  out << "\n";
  char buf[32];
  PendulumModel local = model;
  local.dt = ref.dt;
  const int count = std::min<int>(max_particles, static_cast<int>(posterior.particles.size()));
  for (int i = 0; i < count; ++i) {
    Trajectory sim;
    try {
      sim = rollout(local, posterior.particles[i].theta, ref.start_state,
                    static_cast<int>(ref.observations.rows()));
    } catch (const DivergenceError&) {
      continue;
    }
    for (long r = 0; r < sim.observations.rows(); ++r) {
      out << i << "," << format_double(buf, (r + 1) * sim.dt);
      for (long c = 0; c < sim.observations.cols(); ++c)
        out << "," << format_double(buf, sim.observations(r, c));
      out << "\n";
    }
  }
}

}  // namespace

void align_observations(TrajectorySet& set, const PendulumModel& model) {
  const int want = static_cast<int>(model.observed_dims.size());
  for (Trajectory& traj : set) {
    const int have = static_cast<int>(traj.observations.cols());
    if (have == want) continue;
    if (have != 4)
      throw ConfigError("trajectory has " + std::to_string(have) +
                        " observation dims, model observes " + std::to_string(want));
    Eigen::MatrixXd projected(traj.observations.rows(), want);
    for (int j = 0; j < want; ++j) projected.col(j) = traj.observations.col(model.observed_dims[j]);
    traj.observations = std::move(projected);
  }
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  try {
    check_keys(j, {"seed", "threads", "out_dir", "model", "likelihood", "estimator", "data"},
               "config");
    if (!j.contains("seed")) throw ConfigError("config requires a seed");
    ExperimentConfig cfg;
    cfg.seed = j.at("seed").get<uint64_t>();
    cfg.threads = j.value("threads", cfg.threads);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    if (j.contains("model")) parse_model(j.at("model"), cfg.model);
    if (j.contains("likelihood")) parse_likelihood(j.at("likelihood"), cfg.likelihood);
    if (j.contains("estimator")) parse_estimator(j.at("estimator"), cfg.estimator);
    if (j.contains("data")) {
      const json& d = j.at("data");
      check_keys(d, {"train", "test", "synthetic"}, "data");
      cfg.train_path = d.value("train", cfg.train_path);
      cfg.test_path = d.value("test", cfg.test_path);
      if (d.contains("synthetic")) cfg.synthetic = parse_synthetic(d.at("synthetic"));
    }
    if (!cfg.train_path.empty() && cfg.train_path == cfg.test_path)
      throw ConfigError("train and test paths must differ");
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config schema error: ") + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string resolved_config_json(const ExperimentConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["out_dir"] = cfg.out_dir;

  ordered_json model;
  model["gravity"] = cfg.model.gravity;
  model["dt"] = cfg.model.dt;
  model["links"] = ordered_json::array();
  for (const LinkParams& lk : cfg.model.links) {
    ordered_json link;
    link["mass"] = lk.mass;
    link["inertia"] = lk.inertia;
    link["com_x"] = lk.com_x;
    link["com_y"] = lk.com_y;
    link["length"] = lk.length;
    link["damping"] = lk.damping;
    model["links"].push_back(link);
  }
  model["observed_dims"] = cfg.model.observed_dims;
  model["params"] = ordered_json::array();
  for (const ParamBinding& b : cfg.model.param_spec) {
    ordered_json p;
    p["name"] = b.name;
    p["targets"] = ordered_json::array();
    for (const auto& [link, field] : b.targets)
      p["targets"].push_back(ordered_json::array({link, field_name(field)}));
    p["min"] = b.min;
    p["max"] = b.max;
    model["params"].push_back(p);
  }
  j["model"] = model;

  ordered_json lik;
  if (cfg.likelihood.sigma_obs.size() == 0) {
    lik["sigma_obs"] = 0.1;
  } else if (cfg.likelihood.sigma_obs.size() == 1) {
    lik["sigma_obs"] = cfg.likelihood.sigma_obs[0];
  } else {
    lik["sigma_obs"] =
        std::vector<double>(cfg.likelihood.sigma_obs.data(),
                            cfg.likelihood.sigma_obs.data() + cfg.likelihood.sigma_obs.size());
  }
  lik["sigma_def"] = cfg.likelihood.sigma_def;
  lik["shooting_windows"] = cfg.likelihood.num_shooting_windows;
  lik["window_length"] = cfg.likelihood.window_length;
  lik["combination"] = cfg.likelihood.combination == Combination::kSum ? "sum" : "product";
  if (cfg.likelihood.normalization.size() > 0)
    lik["normalization"] =
        std::vector<double>(cfg.likelihood.normalization.data(),
                            cfg.likelihood.normalization.data() + cfg.likelihood.normalization.size());
  j["likelihood"] = lik;

  ordered_json est;
  est["method"] = cfg.estimator.method;
  est["particles"] = cfg.estimator.svgd.num_particles;
  est["iterations"] = cfg.estimator.svgd.iterations;
  est["lr"] = cfg.estimator.svgd.lr;
  if (cfg.estimator.svgd.kernel.bandwidth_rule == BandwidthRule::kMedian)
    est["bandwidth"] = "median";
  else
    est["bandwidth"] = cfg.estimator.svgd.kernel.fixed_bandwidth;
  est["lambda_step"] = cfg.estimator.mdmm.lambda_step;
  est["damping_c"] = cfg.estimator.mdmm.damping_c;
  est["shooting_lr"] = cfg.estimator.mdmm.shooting_state_step;
  est["population"] = cfg.estimator.cem.population;
  est["elite_fraction"] = cfg.estimator.cem.elite_fraction;
  est["step_eps"] = cfg.estimator.sgld.step_eps;
  est["posterior_samples"] = cfg.estimator.sgld.posterior_samples;
  est["walkers"] = cfg.estimator.stretch.walkers;
  est["stretch_a"] = cfg.estimator.stretch.stretch_a;
  est["record_iterates"] = cfg.estimator.svgd.record_iterates;
  j["estimator"] = est;

  ordered_json data;
  if (!cfg.train_path.empty()) data["train"] = cfg.train_path;
  if (!cfg.test_path.empty()) data["test"] = cfg.test_path;
  if (cfg.synthetic) {
    const SyntheticSpec& s = *cfg.synthetic;
    ordered_json syn;
    syn["mean"] = std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size());
    syn["cov"] = ordered_json::array();
    for (int r = 0; r < s.cov.rows(); ++r)
      syn["cov"].push_back(
          std::vector<double>(s.cov.row(r).data(), s.cov.row(r).data() + s.cov.cols()));
    syn["trajectories"] = s.num_trajectories;
    syn["steps"] = s.steps;
    const Eigen::Vector4d sv = state_vector(s.start_state);
    syn["start_state"] = std::vector<double>{sv[0], sv[1], sv[2], sv[3]};
    syn["noise"] = s.obs_noise;
    data["synthetic"] = syn;
  }
  j["data"] = data;
  return j.dump(2) + "\n";
}

Trajectory load_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.empty())
    throw ConfigError(path + ": empty trajectory file");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const std::vector<std::string> header = split_line(line);
  if (header.empty() || header[0] != "t")
    throw ConfigError(path + ": header must start with column 't'");
  std::vector<int> dims;
  for (size_t c = 1; c < header.size(); ++c) {
    int dim = -1;
    for (int d = 0; d < 4; ++d)
      if (header[c] == kStateNames[d]) dim = d;
    if (dim < 0) throw ConfigError(path + ": unknown column '" + header[c] + "'");
    if (!dims.empty() && dim <= dims.back())
      throw ConfigError(path + ": state columns must appear once, in q0,q1,qd0,qd1 order");
    dims.push_back(dim);
  }
  if (dims.empty()) throw ConfigError(path + ": no state columns");

  std::vector<double> times;
  std::vector<Eigen::VectorXd> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != dims.size() + 1)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(dims.size() + 1) + " columns");
    Eigen::VectorXd row(dims.size());
    try {
      size_t pos = 0;
      times.push_back(std::stod(cells[0], &pos));
      if (pos != cells[0].size()) throw ConfigError("");
      for (size_t c = 0; c < dims.size(); ++c) {
        row[c] = std::stod(cells[c + 1], &pos);
        if (pos != cells[c + 1].size()) throw ConfigError("");
      }
    } catch (const std::exception&) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": malformed number");
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2)
    throw ConfigError(path + ": need a start state row and at least one step");

  const double dt = times[1] - times[0];
  if (!(dt > 0)) throw ConfigError(path + ": time column must increase");
  for (size_t i = 1; i + 1 < times.size(); ++i)
    if (std::abs(times[i + 1] - times[i] - dt) > 1e-6 * std::max(1.0, std::abs(dt)))
      throw ConfigError(path + ": non-uniform time step near row " + std::to_string(i + 2));

  if (dims.size() != 4)
    throw ConfigError(path + ": start state needs the full q0,q1,qd0,qd1 columns");
  Eigen::Vector4d start;
  for (int c = 0; c < 4; ++c) start[dims[c]] = rows[0][c];

  Trajectory traj;
  traj.dt = dt;
  traj.start_state = state_from_vector(start);
  traj.observations.resize(rows.size() - 1, dims.size());
  for (size_t r = 1; r < rows.size(); ++r) traj.observations.row(r - 1) = rows[r].transpose();
  return traj;
}

void save_trajectory_csv(const std::string& path, const Trajectory& traj,
                         const PendulumModel& model) {
  if (traj.observations.cols() != static_cast<long>(model.observed_dims.size()))
    throw ConfigError("trajectory dims do not match the model's observed dims");
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "t";
  for (int d : model.observed_dims) out << "," << kStateNames[d];
  out << "\n";
  char buf[32];
  const Eigen::VectorXd first = observe(model, traj.start_state);
  out << format_double(buf, 0.0);
  for (long c = 0; c < first.size(); ++c) out << "," << format_double(buf, first[c]);
  out << "\n";
  for (long r = 0; r < traj.observations.rows(); ++r) {
    out << format_double(buf, (r + 1) * traj.dt);
    for (long c = 0; c < traj.observations.cols(); ++c)
      out << "," << format_double(buf, traj.observations(r, c));
    out << "\n";
  }
}

TrajectorySet load_trajectories(const std::string& dir_or_file) {
  if (!fs::exists(dir_or_file)) throw ConfigError("no such path: " + dir_or_file);
  std::vector<std::string> files;
  if (fs::is_directory(dir_or_file)) {
    for (const auto& entry : fs::directory_iterator(dir_or_file))
      if (entry.is_regular_file() && entry.path().extension() == ".csv")
        files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigError("no .csv trajectories in " + dir_or_file);
  } else {
    files.push_back(dir_or_file);
  }
  TrajectorySet set;
  for (const std::string& f : files) set.push_back(load_trajectory_csv(f));
  for (size_t i = 1; i < set.size(); ++i) {
    if (set[i].observations.cols() != set[0].observations.cols())
      throw ConfigError(files[i] + ": observation dims differ from " + files[0]);
    if (std::abs(set[i].dt - set[0].dt) > 1e-9)
      throw ConfigError(files[i] + ": dt differs from " + files[0]);
  }
  return set;
}

void save_trajectories(const std::string& dir, const TrajectorySet& set,
                       const PendulumModel& model) {
  fs::create_directories(dir);
  char name[64];
  for (size_t i = 0; i < set.size(); ++i) {
    std::snprintf(name, sizeof(name), "trajectory_%03zu.csv", i);
    save_trajectory_csv((fs::path(dir) / name).string(), set[i], model);
  }
}

SyntheticData generate_synthetic(const ExperimentConfig& cfg, uint64_t seed) {
  if (!cfg.synthetic) throw ConfigError("config has no data.synthetic section");
  const SyntheticSpec& spec = *cfg.synthetic;
  validate(cfg.model);
  const int dim = static_cast<int>(cfg.model.param_spec.size());
  if (spec.mean.size() != dim)
    throw ConfigError("synthetic.mean size does not match the parameter count");
  const ParamLimits limits = param_limits(cfg.model);

  Eigen::MatrixXd chol = Eigen::MatrixXd::Zero(dim, dim);
  const bool point_mass = spec.cov.norm() == 0.0;
  if (!point_mass) {
    const Eigen::LLT<Eigen::MatrixXd> llt(spec.cov);
    if (llt.info() != Eigen::Success)
      throw ConfigError("synthetic.cov is not positive definite");
    chol = llt.matrixL();
  }
  if (point_mass)
    for (int d = 0; d < dim; ++d)
      if (spec.mean[d] < limits.min[d] || spec.mean[d] > limits.max[d])
        throw ConfigError("synthetic.mean lies outside the parameter limits");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SyntheticData data;
  data.true_params.resize(spec.num_trajectories, dim);
  for (int k = 0; k < spec.num_trajectories; ++k) {
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      Eigen::VectorXd z(dim);
      for (int d = 0; d < dim; ++d) z[d] = normal(rng);
      const Eigen::VectorXd theta = spec.mean + chol * z;
      bool inside = true;
      for (int d = 0; d < dim; ++d)
        if (theta[d] < limits.min[d] || theta[d] > limits.max[d]) inside = false;
      if (!inside) continue;
      try {
        Trajectory traj = rollout(cfg.model, theta, spec.start_state, spec.steps);
        if (spec.obs_noise > 0.0)
          for (long r = 0; r < traj.observations.rows(); ++r)
            for (long c = 0; c < traj.observations.cols(); ++c)
              traj.observations(r, c) += spec.obs_noise * normal(rng);
        data.trajectories.push_back(std::move(traj));
        data.true_params.row(k) = theta.transpose();
        ok = true;
      } catch (const DivergenceError&) {
      }
    }
    if (!ok)
      throw NumericalError("failed to sample a stable trajectory after 100 attempts");
  }
  return data;
}

Posterior run_estimator(const TrajectorySet& train, const ExperimentConfig& cfg) {
  if (cfg.model.param_spec.empty())
    throw ConfigError("model.params must define at least one parameter");
  EstimatorConfig est = cfg.estimator;
  est.svgd.seed = cfg.seed;
  est.svgd.threads = cfg.threads;
  est.cem.seed = cfg.seed;
  est.cem.threads = cfg.threads;
  est.sgld.seed = cfg.seed;
  est.stretch.seed = cfg.seed;
  est.stretch.threads = cfg.threads;

  if (est.method == "csvgd") return csvgd_run(train, cfg.model, cfg.likelihood, est.svgd, est.mdmm);
  if (est.method == "svgd") return svgd_run(train, cfg.model, cfg.likelihood, est.svgd);
  if (est.method == "cem") return cem_run(train, cfg.model, cfg.likelihood, est.cem);
  if (est.method == "sgld") return sgld_run(train, cfg.model, cfg.likelihood, est.sgld);
  if (est.method == "stretch") return stretch_move_run(train, cfg.model, cfg.likelihood, est.stretch);
  throw ConfigError("unknown estimator method '" + est.method + "'");
}

RunReport run_experiment(const ExperimentConfig& cfg) {
  TrajectorySet train;
  if (!cfg.train_path.empty()) {
    train = load_trajectories(cfg.train_path);
  } else if (cfg.synthetic) {
    train = generate_synthetic(cfg, cfg.seed).trajectories;
  } else {
    throw ConfigError("no training data: set data.train or data.synthetic");
  }
  align_observations(train, cfg.model);

  const auto t0 = std::chrono::steady_clock::now();
  RunReport report;
  report.posterior = run_estimator(train, cfg);
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report.mean_ll_trace = report.posterior.mean_ll_trace;

  TrajectorySet test;
  if (!cfg.test_path.empty()) {
    test = load_trajectories(cfg.test_path);
    align_observations(test, cfg.model);
    report.metrics = compute_metrics(report.posterior, test, cfg.model, cfg.likelihood);
    report.has_metrics = true;
  }
  write_run_outputs(cfg, report);
  const Trajectory& ref = test.empty() ? train[0] : test[0];
  write_rollout_table((fs::path(cfg.out_dir) / "rollouts.csv").string(), report.posterior, ref,
                      cfg.model, 16);
  return report;
}

void save_particles_csv(const std::string& path, const Posterior& posterior,
                        const PendulumModel& model) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  for (size_t d = 0; d < model.param_spec.size(); ++d)
    out << model.param_spec[d].name << ",";
  out << "log_likelihood,max_defect_norm\n";
  char buf[32];
  for (size_t i = 0; i < posterior.particles.size(); ++i) {
    const Eigen::VectorXd& theta = posterior.particles[i].theta;
    for (long d = 0; d < theta.size(); ++d) out << format_double(buf, theta[d]) << ",";
    const double ll =
        i < static_cast<size_t>(posterior.log_likelihoods.size()) ? posterior.log_likelihoods[i] : 0.0;
    const double defect = i < static_cast<size_t>(posterior.max_defect_norms.size())
                              ? posterior.max_defect_norms[i]
                              : 0.0;
    out << format_double(buf, ll) << "," << format_double(buf, defect) << "\n";
  }
}

Posterior load_particles_csv(const std::string& path, const PendulumModel& model) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw ConfigError(path + ": empty particle file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_line(line);
  const size_t dim = model.param_spec.size();
  if (header.size() != dim + 2)
    throw ConfigError(path + ": expected " + std::to_string(dim + 2) + " columns");
  for (size_t d = 0; d < dim; ++d)
    if (header[d] != model.param_spec[d].name)
      throw ConfigError(path + ": column '" + header[d] + "' does not match parameter '" +
                        model.param_spec[d].name + "'");

  Posterior post;
  std::vector<double> lls;
  std::vector<double> defects;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != dim + 2)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(dim + 2) + " columns");
    AugmentedParams p;
    p.theta.resize(dim);
    try {
      for (size_t d = 0; d < dim; ++d) p.theta[d] = std::stod(cells[d]);
      lls.push_back(std::stod(cells[dim]));
      defects.push_back(std::stod(cells[dim + 1]));
    } catch (const std::exception&) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": malformed number");
    }
    p.lambda_lim = Eigen::VectorXd::Zero(dim);
    post.particles.push_back(std::move(p));
  }
  if (post.particles.empty()) throw ConfigError(path + ": no particles");
  post.log_likelihoods = Eigen::Map<Eigen::VectorXd>(lls.data(), lls.size());
  post.max_defect_norms = Eigen::Map<Eigen::VectorXd>(defects.data(), defects.size());
  return post;
}

void write_run_outputs(const ExperimentConfig& cfg, const RunReport& report) {
  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);
  save_particles_csv((out / "particles.csv").string(), report.posterior, cfg.model);

  {
    std::ofstream trace((out / "trace.csv").string());
    if (!trace) throw ConfigError("cannot write " + (out / "trace.csv").string());
    trace << "iteration,mean_log_likelihood\n";
    char buf[32];
    for (size_t i = 0; i < report.mean_ll_trace.size(); ++i)
      trace << i << "," << format_double(buf, report.mean_ll_trace[i]) << "\n";
  }

  ordered_json rj;
  rj["wall_clock_seconds"] = report.wall_clock_seconds;
  rj["particles"] = report.posterior.particles.size();
  rj["out_of_bounds"] = report.posterior.out_of_bounds.size();
  if (!report.mean_ll_trace.empty()) rj["final_mean_log_likelihood"] = report.mean_ll_trace.back();
  rj["has_metrics"] = report.has_metrics;
  if (report.has_metrics) {
    ordered_json m;
    m["kl_real_sim"] = report.metrics.kl_real_sim;
    m["kl_sim_real"] = report.metrics.kl_sim_real;
    m["mmd"] = report.metrics.mmd;
    m["log_likelihood"] = report.metrics.log_likelihood;
    m["real_count"] = report.metrics.real_count;
    m["sim_count"] = report.metrics.sim_count;
    rj["metrics"] = m;
  }
  write_text((out / "report.json").string(), rj.dump(2) + "\n");
  write_text((out / "resolved_config.json").string(), resolved_config_json(cfg));
}

void export_plot_data(const ExperimentConfig& cfg) {
  const fs::path out(cfg.out_dir);
  const std::string particles_path = (out / "particles.csv").string();
  if (!fs::exists(particles_path))
    throw ConfigError("no particles at " + particles_path + "; run estimate first");
  const Posterior posterior = load_particles_csv(particles_path, cfg.model);
  const fs::path plots = out / "plots";
  fs::create_directories(plots);
  char buf[32];

  {
    std::ofstream scatter((plots / "scatter.csv").string());
    if (!scatter) throw ConfigError("cannot write scatter.csv");
    for (const ParamBinding& b : cfg.model.param_spec) scatter << b.name << ",";
    scatter << "log_likelihood\n";
    for (size_t i = 0; i < posterior.particles.size(); ++i) {
      const Eigen::VectorXd& theta = posterior.particles[i].theta;
      for (long d = 0; d < theta.size(); ++d) scatter << format_double(buf, theta[d]) << ",";
      scatter << format_double(buf, posterior.log_likelihoods[i]) << "\n";
    }
  }

  TrajectorySet refs;
  if (!cfg.test_path.empty()) refs = load_trajectories(cfg.test_path);
  else if (!cfg.train_path.empty()) refs = load_trajectories(cfg.train_path);
  else if (cfg.synthetic) refs = generate_synthetic(cfg, cfg.seed).trajectories;
  else throw ConfigError("export needs data.test, data.train, or data.synthetic");
  align_observations(refs, cfg.model);

  write_rollout_table((plots / "density.csv").string(), posterior, refs[0], cfg.model, 32);

  const fs::path trace_in = out / "trace.csv";
  if (fs::exists(trace_in)) fs::copy_file(trace_in, plots / "trace.csv",
                                          fs::copy_options::overwrite_existing);
}

}  // namespace steinsim
