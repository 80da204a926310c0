#include "ccgame/linearize.hpp"

#include <cmath>

namespace ccgame {

Eigen::Vector4d unicycle_step(const Eigen::Vector4d& x, const Eigen::Vector2d& u, double dt) {
  const double theta = x[2];
  const double v = x[3];
  Eigen::Vector4d next;
  next << x[0] + dt * v * std::cos(theta), x[1] + dt * v * std::sin(theta), theta + dt * u[1],
      v + dt * u[0];
  return next;
}

Eigen::Matrix4d unicycle_state_jacobian(const Eigen::Vector4d& x, double dt) {
  const double c = std::cos(x[2]);
  const double s = std::sin(x[2]);
  const double v = x[3];
  Eigen::Matrix4d a = Eigen::Matrix4d::Identity();
  a(0, 2) = -dt * v * s;
  a(0, 3) = dt * c;
  a(1, 2) = dt * v * c;
  a(1, 3) = dt * s;
  return a;
}

Eigen::Matrix<double, 4, 2> unicycle_input_jacobian(const Eigen::Vector4d& /*x*/, double dt) {
  Eigen::Matrix<double, 4, 2> b = Eigen::Matrix<double, 4, 2>::Zero();
  b(2, 1) = dt;
  b(3, 0) = dt;
  return b;
}

NominalTrajectory nominal_rollout(const UnicycleSpec& spec, int horizon) {
  const auto n_agents = spec.initial_states.size();
  NominalTrajectory nominal;
  nominal.states.resize(n_agents);
  nominal.inputs.resize(n_agents);
  for (std::size_t i = 0; i < n_agents; ++i) {
    auto& inputs = nominal.inputs[i];
    if (spec.nominal_inputs.empty()) {
      inputs.assign(horizon, Eigen::Vector2d::Zero());
    } else {
      inputs = spec.nominal_inputs[i];
    }
    auto& states = nominal.states[i];
    states.reserve(horizon + 1);
    states.push_back(spec.initial_states[i]);
    for (int t = 0; t < horizon; ++t) {
      states.push_back(unicycle_step(states.back(), inputs[t], spec.dt));
    }
  }
  return nominal;
}

LtvGameDynamics linearize_unicycle(const UnicycleSpec& spec, const NominalTrajectory& nominal) {
  const int n_agents = static_cast<int>(nominal.states.size());
  const int horizon = static_cast<int>(nominal.inputs.front().size());
  const int n_x = 4 * n_agents;

  LtvGameDynamics dyn;
  dyn.x0 = Vector::Zero(n_x);
  dyn.A.reserve(horizon);
  dyn.B.reserve(horizon);
  for (int t = 0; t < horizon; ++t) {
    Matrix a = Matrix::Zero(n_x, n_x);
    std::vector<Matrix> b(n_agents, Matrix::Zero(n_x, 2));
    for (int i = 0; i < n_agents; ++i) {
      const Eigen::Vector4d& x = nominal.states[i][t];
      a.block<4, 4>(4 * i, 4 * i) = unicycle_state_jacobian(x, spec.dt);
      b[i].block<4, 2>(4 * i, 0) = unicycle_input_jacobian(x, spec.dt);
    }
    dyn.A.push_back(std::move(a));
    dyn.B.push_back(std::move(b));
  }
  dyn.W = spec.W;
  return dyn;
}

}  // namespace ccgame
