#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace ccgame {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
/// Sequence of states x_0..x_T (or any per-time vector sequence).
using Trajectory = std::vector<Vector>;

inline constexpr double kTolPsd = 1e-9;
inline constexpr double kTolPd = 1e-12;

struct AgentSpec {
  std::string name;
  int state_dim = 0;
  int input_dim = 0;
  /// Indices inside the agent's own state block that hold its planar
  /// position. Used for travel time and trajectory dumps.
  std::vector<int> position_indices;
};

/// x_{t+1} = A_t x_t + sum_i B_t^i u_t^i + w_t, w_t ~ N(0, W_t).
struct LtvGameDynamics {
  std::vector<Matrix> A;               // [t], t = 0..T-1
  std::vector<std::vector<Matrix>> B;  // [t][player]
  std::vector<Matrix> W;               // [t]
  Vector x0;

  int horizon() const { return static_cast<int>(A.size()); }
  int num_players() const { return B.empty() ? 0 : static_cast<int>(B.front().size()); }
  int state_dim() const { return static_cast<int>(x0.size()); }
  int input_dim(int player) const { return static_cast<int>(B.front()[player].cols()); }
};

/// Unicycle agents (state [px, py, theta, v], input [a, omega]) linearized
/// around a nominal input sequence.
struct UnicycleSpec {
  std::vector<Eigen::Vector4d> initial_states;
  /// [agent][t]; empty outer vector means zero nominal inputs.
  std::vector<std::vector<Eigen::Vector2d>> nominal_inputs;
  double dt = 0.0;
  std::vector<Matrix> W;  // [t], n_x x n_x
};

/// Player cost sum_t ||x_{t+1} - r_{t+1}||^2_{Q_{t+1}} + ||u_t||^2_{R_t}.
struct CostSpec {
  std::vector<Matrix> Q;     // [t-1] weights x_t, t = 1..T
  std::vector<Matrix> R;     // [t], t = 0..T-1
  std::vector<Vector> goal;  // [t-1] reference r_t, t = 1..T
};

/// Per-coordinate bounds on the shared state; absent entries are unconstrained.
struct BoxConstraint {
  std::vector<std::optional<double>> lower;
  std::vector<std::optional<double>> upper;
};

/// ||x^i - x^j||^2_C >= R^2 on the agents' substates.
struct CollisionConstraint {
  int agent_i = 0;
  int agent_j = 1;
  double radius = 0.0;
  Matrix C;
};

struct ConstraintSpec {
  std::variant<BoxConstraint, CollisionConstraint> kind;
  /// Times in 1..T at which the constraint holds. Empty means all.
  std::vector<int> active_times;

  bool active_at(int t) const;
};

struct Scenario {
  std::vector<AgentSpec> agents;
  int horizon = 0;
  double dt = 0.0;
  std::optional<double> duration;
  std::variant<LtvGameDynamics, UnicycleSpec> dynamics;
  std::vector<CostSpec> costs;
  std::vector<ConstraintSpec> constraints;
  double risk_epsilon = 0.05;
  std::uint64_t seed = 0;

  int num_agents() const { return static_cast<int>(agents.size()); }
  int state_dim() const;
  /// Offset of agent i's block inside the shared state.
  int state_offset(int agent) const;
};

/// A scenario that passed `validate_scenario`. Only constructible through it.
class ValidatedScenario {
 public:
  const Scenario& get() const noexcept { return scenario_; }
  const Scenario* operator->() const noexcept { return &scenario_; }

 private:
  explicit ValidatedScenario(Scenario s) : scenario_(std::move(s)) {}
  friend ValidatedScenario validate_scenario(const Scenario&);

  Scenario scenario_;
};

/// Throws ValidationError listing every violation found.
ValidatedScenario validate_scenario(const Scenario& s);
/// Idempotent: an already validated scenario is returned unchanged.
ValidatedScenario validate_scenario(const ValidatedScenario& s);

/// Materializes the linear time-varying game dynamics, linearizing unicycle
/// agents around their nominal when needed. For unicycle scenarios the state
/// is the deviation from the nominal trajectory, so x0 is zero.
LtvGameDynamics assemble_dynamics(const ValidatedScenario& s);

/// Quadratic stage cost x'Qx + 2q'x + c at each time t = 0..T (entry 0 is
/// unused and zero) plus input weights R_t for t = 0..T-1.
struct PlayerCost {
  std::vector<Matrix> Q;
  std::vector<Vector> q;
  std::vector<double> c;
  std::vector<Matrix> R;

  /// ||x - r||^2_Q expanded into the (Q, q, c) form.
  static PlayerCost from_goals(const std::vector<Matrix>& Q_by_time,
                               const std::vector<Vector>& goal_by_time,
                               const std::vector<Matrix>& R_by_time);
  double state_cost(int t, const Vector& x) const;
};

struct LqGame {
  LtvGameDynamics dynamics;
  std::vector<PlayerCost> costs;

  int horizon() const { return dynamics.horizon(); }
  int num_players() const { return dynamics.num_players(); }
  int state_dim() const { return dynamics.state_dim(); }
};

/// Everything the solvers and the simulator need, in the coordinates the
/// linear game is posed in. The true state is `state_offset[t] + x_t`.
struct GameProblem {
  std::vector<AgentSpec> agents;
  std::vector<int> agent_offsets;
  int horizon = 0;
  double dt = 0.0;
  double risk_epsilon = 0.05;
  std::uint64_t seed = 0;
  LqGame game;
  Trajectory state_offset;                   // [t], t = 0..T
  std::vector<std::vector<Vector>> input_offset;  // [t][player]
  std::vector<ConstraintSpec> constraints;   // in true coordinates
  std::vector<Vector> goal_positions;        // [agent], true coordinates
  bool unicycle = false;

  int num_agents() const { return static_cast<int>(agents.size()); }
  int state_dim() const { return game.state_dim(); }
  Vector agent_state(int agent, const Vector& shared) const;
};

/// Builds the solver-facing problem from a validated scenario.
GameProblem build_problem(const ValidatedScenario& s);

/// Restricts a problem to times s..T, re-rooted at `x_start` (game
/// coordinates). Constraint active times shift down by s.
GameProblem tail_problem(const GameProblem& p, int start, const Vector& x_start);

/// Single-agent view: inputs of all players stacked, costs summed.
GameProblem aggregate_players(const GameProblem& p);

bool is_symmetric(const Matrix& m, double tol = 1e-9);
/// Smallest eigenvalue of the symmetric part.
double min_eigenvalue(const Matrix& m);

}  // namespace ccgame
