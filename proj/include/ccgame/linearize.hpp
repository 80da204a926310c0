#pragma once

#include "ccgame/model.hpp"

namespace ccgame {

/// Per-agent nominal state sequences [agent][t], t = 0..T.
struct NominalTrajectory {
  std::vector<std::vector<Eigen::Vector4d>> states;
  std::vector<std::vector<Eigen::Vector2d>> inputs;  // [agent][t], t = 0..T-1
};

/// One forward-Euler step of the unicycle
/// (px' = v cos th, py' = v sin th, th' = omega, v' = a).
Eigen::Vector4d unicycle_step(const Eigen::Vector4d& x, const Eigen::Vector2d& u, double dt);

/// Forward-Euler Jacobians at x: A = I + dt df/dx and B = dt df/du.
Eigen::Matrix4d unicycle_state_jacobian(const Eigen::Vector4d& x, double dt);
Eigen::Matrix<double, 4, 2> unicycle_input_jacobian(const Eigen::Vector4d& x, double dt);

/// `horizon` is needed when the spec carries no nominal inputs (zero inputs,
/// i.e. constant speed along the initial heading).
NominalTrajectory nominal_rollout(const UnicycleSpec& spec, int horizon);

/// Block-diagonal LTV game around the nominal; states are deviations from it.
LtvGameDynamics linearize_unicycle(const UnicycleSpec& spec, const NominalTrajectory& nominal);

}  // namespace ccgame
