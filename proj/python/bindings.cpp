#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <vector>

#include "steinsim/baselines.hpp"
#include "steinsim/errors.hpp"
#include "steinsim/experiment.hpp"
#include "steinsim/metrics.hpp"
#include "steinsim/sobol.hpp"
#include "steinsim/svgd.hpp"

namespace py = pybind11;
using namespace steinsim;

namespace {

TrajectorySet make_set(const std::vector<Eigen::MatrixXd>& observations,
                       const Eigen::MatrixXd& start_states, double dt) {
  if (start_states.rows() != static_cast<long>(observations.size()) || start_states.cols() != 4)
    throw ConfigError("start_states must be (num_trajectories, 4)");
  if (!(dt > 0)) throw ConfigError("dt must be positive");
  TrajectorySet set;
  for (size_t i = 0; i < observations.size(); ++i) {
    Trajectory traj;
    traj.observations = observations[i];
    traj.dt = dt;
    traj.start_state = state_from_vector(start_states.row(i).transpose());
    set.push_back(std::move(traj));
  }
  return set;
}

py::dict posterior_dict(const Posterior& post) {
  py::dict out;
  out["particles"] = particle_matrix(post);
  out["log_likelihoods"] = post.log_likelihoods;
  out["max_defect_norms"] = post.max_defect_norms;
  out["trace"] = post.mean_ll_trace;
  out["out_of_bounds"] = post.out_of_bounds;
  return out;
}

py::dict metrics_dict(const MetricReport& m) {
  py::dict out;
  out["kl_real_sim"] = m.kl_real_sim;
  out["kl_sim_real"] = m.kl_sim_real;
  out["mmd"] = m.mmd;
  out["log_likelihood"] = m.log_likelihood;
  out["real_count"] = m.real_count;
  out["sim_count"] = m.sim_count;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "stein variational parameter inference for a planar two-link pendulum";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<NumericalError>(m, "NumericalError");

  py::class_<ExperimentConfig>(m, "Config")
      .def_static("from_json", &parse_config, py::arg("text"))
      .def_static("from_file", &load_config, py::arg("path"))
      .def("to_json", &resolved_config_json)
      .def_readwrite("seed", &ExperimentConfig::seed)
      .def_readwrite("threads", &ExperimentConfig::threads)
      .def_readwrite("out_dir", &ExperimentConfig::out_dir)
      .def_readwrite("train_path", &ExperimentConfig::train_path)
      .def_readwrite("test_path", &ExperimentConfig::test_path)
      .def_property_readonly(
          "method", [](const ExperimentConfig& cfg) { return cfg.estimator.method; })
      .def_property_readonly("param_names", [](const ExperimentConfig& cfg) {
        std::vector<std::string> names;
        for (const ParamBinding& b : cfg.model.param_spec) names.push_back(b.name);
        return names;
      });

  m.def("digamma", &digamma, py::arg("x"));
  m.def("knn_kl", &knn_kl, py::arg("samples_p"), py::arg("samples_q"), py::arg("k") = 3,
        py::arg("l") = 3);
  m.def("mmd", &mmd, py::arg("samples_p"), py::arg("samples_q"));
  m.def("sobol_points", &sobol_points, py::arg("n"), py::arg("dim"));

  m.def(
      "rollout",
      [](const ExperimentConfig& cfg, const Eigen::VectorXd& theta,
         const Eigen::Vector4d& start, int steps) {
        const Trajectory traj = rollout(cfg.model, theta, state_from_vector(start), steps);
        return traj.observations;
      },
      py::arg("config"), py::arg("theta"), py::arg("start_state"), py::arg("steps"));

  m.def(
      "simulate",
      [](const ExperimentConfig& cfg, std::optional<uint64_t> seed) {
        const SyntheticData data = generate_synthetic(cfg, seed.value_or(cfg.seed));
        std::vector<Eigen::MatrixXd> obs;
        Eigen::MatrixXd starts(data.trajectories.size(), 4);
        for (size_t i = 0; i < data.trajectories.size(); ++i) {
          obs.push_back(data.trajectories[i].observations);
          starts.row(i) = state_vector(data.trajectories[i].start_state).transpose();
        }
        py::dict out;
        out["observations"] = obs;
        out["start_states"] = starts;
        out["dt"] = data.trajectories.empty() ? cfg.model.dt : data.trajectories[0].dt;
        out["true_params"] = data.true_params;
        return out;
      },
      py::arg("config"), py::arg("seed") = std::nullopt);

  m.def(
      "log_likelihood",
      [](const ExperimentConfig& cfg, const Eigen::VectorXd& theta,
         const std::vector<Eigen::MatrixXd>& observations, const Eigen::MatrixXd& start_states,
         double dt) {
        const TrajectorySet set = make_set(observations, start_states, dt);
        return set_log_likelihood(set, theta, cfg.model, cfg.likelihood);
      },
      py::arg("config"), py::arg("theta"), py::arg("observations"), py::arg("start_states"),
      py::arg("dt"));

  m.def(
      "log_likelihood_grad",
      [](const ExperimentConfig& cfg, const Eigen::VectorXd& theta,
         const std::vector<Eigen::MatrixXd>& observations, const Eigen::MatrixXd& start_states,
         double dt) {
        const TrajectorySet set = make_set(observations, start_states, dt);
        const LikelihoodConfig lik = resolve_likelihood(cfg.likelihood, set);
        std::vector<std::vector<State>> shoot;
        for (const Trajectory& traj : set)
          shoot.push_back(boundary_states_from(traj, cfg.model, lik));
        const SetEval ev = set_eval(set, theta, shoot, cfg.model, lik, true);
        return py::make_tuple(ev.obs_ll,
                              Eigen::VectorXd(ev.grad.head(theta.size())));
      },
      py::arg("config"), py::arg("theta"), py::arg("observations"), py::arg("start_states"),
      py::arg("dt"));

  m.def(
      "estimate",
      [](const ExperimentConfig& cfg, const std::vector<Eigen::MatrixXd>& observations,
         const Eigen::MatrixXd& start_states, double dt) {
        const TrajectorySet set = make_set(observations, start_states, dt);
        return posterior_dict(run_estimator(set, cfg));
      },
      py::arg("config"), py::arg("observations"), py::arg("start_states"), py::arg("dt"));

  m.def(
      "run_experiment",
      [](const ExperimentConfig& cfg) {
        const RunReport report = run_experiment(cfg);
        py::dict out = posterior_dict(report.posterior);
        out["wall_clock_seconds"] = report.wall_clock_seconds;
        out["metrics"] = report.has_metrics ? py::object(metrics_dict(report.metrics))
                                            : py::object(py::none());
        return out;
      },
      py::arg("config"));

  m.def(
      "compute_metrics",
      [](const ExperimentConfig& cfg, const Eigen::MatrixXd& particles,
         const std::vector<Eigen::MatrixXd>& observations, const Eigen::MatrixXd& start_states,
         double dt) {
        Posterior post;
        for (long i = 0; i < particles.rows(); ++i) {
          AugmentedParams p;
          p.theta = particles.row(i).transpose();
          post.particles.push_back(std::move(p));
        }
        const TrajectorySet held_out = make_set(observations, start_states, dt);
        return metrics_dict(compute_metrics(post, held_out, cfg.model, cfg.likelihood));
      },
      py::arg("config"), py::arg("particles"), py::arg("observations"), py::arg("start_states"),
      py::arg("dt"));
}
