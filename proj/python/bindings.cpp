#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ccgame/errors.hpp"
#include "ccgame/pipeline.hpp"
#include "ccgame/policy_io.hpp"
#include "ccgame/scenario_io.hpp"
#include "ccgame/simulate.hpp"

namespace py = pybind11;
using namespace ccgame;

namespace {

struct LoadedProblem {
  std::string fingerprint;
  GameProblem problem;
};

LoadedProblem load_problem(const std::filesystem::path& path) {
  const auto text = read_file(path);
  return {sha256_hex(text), build_problem(validate_scenario(parse_scenario(text)))};
}

py::array_t<double> stack(const Trajectory& traj) {
  const auto rows = static_cast<py::ssize_t>(traj.size());
  const auto cols = rows ? static_cast<py::ssize_t>(traj.front().size()) : 0;
  py::array_t<double> out({rows, cols});
  auto m = out.mutable_unchecked<2>();
  for (py::ssize_t r = 0; r < rows; ++r) {
    for (py::ssize_t c = 0; c < cols; ++c) m(r, c) = traj[r][c];
  }
  return out;
}

py::array_t<double> stack(const std::vector<Matrix>& mats) {
  const auto n = static_cast<py::ssize_t>(mats.size());
  const auto rows = n ? static_cast<py::ssize_t>(mats.front().rows()) : 0;
  const auto cols = n ? static_cast<py::ssize_t>(mats.front().cols()) : 0;
  py::array_t<double> out({n, rows, cols});
  auto a = out.mutable_unchecked<3>();
  for (py::ssize_t s = 0; s < n; ++s) {
    for (py::ssize_t r = 0; r < rows; ++r) {
      for (py::ssize_t c = 0; c < cols; ++c) a(s, r, c) = mats[s](r, c);
    }
  }
  return out;
}

DualAscentOptions dual_options(int iters, std::optional<double> eta) {
  DualAscentOptions o;
  o.max_iterations = iters;
  o.step_size = eta;
  return o;
}

py::dict stats_dict(const SafetyStats& s) {
  py::dict d;
  d["samples"] = s.samples;
  d["violations"] = s.violations;
  d["collision_rate"] = s.collision_rate;
  d["wilson_lo"] = s.interval.lo;
  d["wilson_hi"] = s.interval.hi;
  d["cost_mean"] = s.cost_mean;
  d["cost_std"] = s.cost_std;
  d["travel_mean_s"] = s.travel_mean;
  d["unreached"] = s.unreached;
  return d;
}

}  // namespace

PYBIND11_MODULE(_ccgame, m) {
  m.doc() = "Chance-constrained LQG game solver";
  m.attr("__version__") = CCGAME_VERSION;

  py::register_exception<Error>(m, "CcgameError", PyExc_RuntimeError);

  py::class_<FeedbackPolicy>(m, "FeedbackPolicy")
      .def_readonly("K", &FeedbackPolicy::K)
      .def_readonly("alpha", &FeedbackPolicy::alpha)
      .def_property_readonly("horizon", &FeedbackPolicy::horizon)
      .def_property_readonly("num_players", &FeedbackPolicy::num_players)
      .def("input", &FeedbackPolicy::input, py::arg("t"), py::arg("player"), py::arg("x"));

  py::class_<LoadedProblem>(m, "Problem")
      .def_static("from_file", &load_problem, py::arg("path"))
      .def_readonly("fingerprint", &LoadedProblem::fingerprint)
      .def_property_readonly("horizon", [](const LoadedProblem& p) { return p.problem.horizon; })
      .def_property_readonly("dt", [](const LoadedProblem& p) { return p.problem.dt; })
      .def_property_readonly("num_players",
                             [](const LoadedProblem& p) { return p.problem.game.num_players(); })
      .def_property_readonly("state_dim", [](const LoadedProblem& p) { return p.problem.state_dim(); })
      .def_property_readonly("risk_epsilon",
                             [](const LoadedProblem& p) { return p.problem.risk_epsilon; })
      .def_property_readonly("seed", [](const LoadedProblem& p) { return p.problem.seed; })
      .def_property_readonly("state_offset",
                             [](const LoadedProblem& p) { return stack(p.problem.state_offset); })
      .def("num_constraints", [](const LoadedProblem& p) {
        return build_constraints(p.problem, passive_reference_means(p.problem)).size();
      });

  py::class_<SolveOutcome>(m, "SolveResult")
      .def_property_readonly("lambda_bar", [](const SolveOutcome& s) { return s.report.lambda_bar; })
      .def_property_readonly("policy", [](const SolveOutcome& s) { return s.report.policy; })
      .def_property_readonly("mean", [](const SolveOutcome& s) { return stack(s.reference_means); })
      .def_property_readonly("g", [](const SolveOutcome& s) { return s.report.g; })
      .def_property_readonly("feasibility_residual",
                             [](const SolveOutcome& s) { return s.report.feasibility_residual; })
      .def_property_readonly("complementarity",
                             [](const SolveOutcome& s) { return s.report.complementarity; })
      .def_property_readonly("lipschitz", [](const SolveOutcome& s) { return s.report.lipschitz; })
      .def_property_readonly("eta", [](const SolveOutcome& s) { return s.report.eta; })
      .def_property_readonly("iterations", [](const SolveOutcome& s) { return s.report.iterations; })
      .def_property_readonly("termination",
                             [](const SolveOutcome& s) { return to_string(s.report.termination); })
      .def_property_readonly("player_costs",
                             [](const SolveOutcome& s) { return s.report.player_costs; })
      .def_property_readonly("dual_trace", [](const SolveOutcome& s) {
        std::vector<double> v;
        for (const auto& r : s.report.trace) v.push_back(r.dual_value);
        return v;
      });

  m.def(
      "solve",
      [](const LoadedProblem& p, int iters, std::optional<double> eta, int relinearize) {
        py::gil_scoped_release release;
        return solve_problem(p.problem, dual_options(iters, eta), relinearize);
      },
      py::arg("problem"), py::arg("iters") = 2000, py::arg("eta") = py::none(),
      py::arg("relinearize") = 0, "Dual ascent feedback GNE solve.");

  m.def(
      "rollout",
      [](const LoadedProblem& p, const FeedbackPolicy& policy, std::uint64_t seed, int samples,
         int threads) {
        RolloutBatch batch;
        {
          py::gil_scoped_release release;
          batch = rollout(p.problem, policy, seed, samples, {threads});
        }
        py::dict out = stats_dict(evaluate_safety(batch, p.problem));
        out["states"] = stack(batch.states);
        std::vector<double> costs;
        for (int s = 0; s < batch.samples; ++s) costs.push_back(batch.total_cost(s));
        out["costs"] = costs;
        return out;
      },
      py::arg("problem"), py::arg("policy"), py::arg("seed"), py::arg("samples"),
      py::arg("threads") = 1, "Seeded Monte Carlo rollouts; states are in game coordinates.");

  m.def(
      "central_mpc",
      [](const LoadedProblem& p, std::uint64_t seed, int samples, int replan_every, int iters) {
        MpcResult result;
        {
          py::gil_scoped_release release;
          MpcOptions o;
          o.replan_every = replan_every;
          o.dual = dual_options(iters, std::nullopt);
          result = central_mpc(p.problem, passive_reference_means(p.problem), seed, samples, o);
        }
        py::dict out = stats_dict(evaluate_safety(result.batch, p.problem));
        out["failures"] = result.failures.size();
        out["mean_replan_seconds"] = result.mean_replan_seconds;
        return out;
      },
      py::arg("problem"), py::arg("seed"), py::arg("samples"), py::arg("replan_every") = 1,
      py::arg("iters") = 2000);

  m.def("normal_cdf", &normal_cdf, py::arg("z"));
  m.def("inverse_normal_cdf", &inverse_normal_cdf, py::arg("p"));
  m.def(
      "wilson_interval",
      [](int successes, int trials) {
        const auto w = wilson_interval(successes, trials);
        return py::make_tuple(w.lo, w.hi);
      },
      py::arg("successes"), py::arg("trials"));
  m.def("file_fingerprint", &file_fingerprint, py::arg("path"));
}
