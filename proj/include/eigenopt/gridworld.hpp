#pragma once

#include <Eigen/Dense>

#include <array>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "eigenopt/random.hpp"

namespace eigenopt {

using StateId = int;

enum Action : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };
inline constexpr int kNumActions = 4;

char action_letter(int action);

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

class LayoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One possible result of taking an action: the landing state and its mass.
struct Outcome {
  StateId next = 0;
  double prob = 0.0;
};

/// Tabular gridworld with four actions and optional slip.
///
/// Non-wall cells are numbered 0..n_states-1 in row-major order. Moving into
/// a wall or off the grid leaves the agent where it was. With probability
/// `slip` the executed direction is replaced by one of the three other
/// directions, chosen uniformly. Instances are immutable.
class GridWorld {
 public:
  GridWorld(int width, int height, std::vector<bool> walls, Cell start,
            std::optional<Cell> goal = std::nullopt, double slip = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  int n_states() const { return static_cast<int>(cells_.size()); }
  double slip() const { return slip_; }

  StateId start() const { return start_; }
  std::optional<StateId> goal() const { return goal_; }

  bool is_wall(Cell c) const;
  bool in_bounds(Cell c) const;
  // State id of a cell, or -1 for walls and out-of-bounds cells.
  StateId state_of(Cell c) const;
  Cell cell_of(StateId s) const;
  bool valid_state(StateId s) const { return s >= 0 && s < n_states(); }

  // Deterministic move (no slip).
  StateId neighbor(StateId s, int action) const;

  // The four direction outcomes of intending `action` in `s`. Entries may
  // share a landing state; probabilities sum to one.
  std::array<Outcome, kNumActions> outcomes(StateId s, int action) const;

  GridWorld with_slip(double slip) const;
  GridWorld with_start(StateId s) const;
  GridWorld with_goal(std::optional<StateId> g) const;

  // Inverse of load_layout.
  std::string to_layout() const;

 private:
  int width_;
  int height_;
  std::vector<bool> walls_;
  std::vector<Cell> cells_;
  std::vector<StateId> index_;  // cell -> state or -1
  std::vector<std::array<StateId, kNumActions>> moves_;
  StateId start_;
  std::optional<StateId> goal_;
  double slip_;
};

// Parses the text layout format: a rectangle of `X` (wall), `.` (floor),
// `S` (start, exactly one) and `G` (goal, at most one), LF line endings.
// Every floor cell must be reachable from the start.
GridWorld load_layout(std::string_view text);
GridWorld load_layout_file(const std::filesystem::path& path);

// Samples one transition.
StateId step(const GridWorld& env, StateId s, int action, Rng& rng);

// n_states x 4 matrix, each row a distribution over actions.
using Policy = Eigen::MatrixXd;

Policy uniform_policy(const GridWorld& env);
// Samples an action from row s of the policy.
int sample_action(const Policy& policy, StateId s, Rng& rng);

/// Row-stochastic square matrix. Construction checks non-negativity and that
/// every row sums to one within 1e-12.
class StochasticMatrix {
 public:
  explicit StochasticMatrix(Eigen::MatrixXd entries);
  const Eigen::MatrixXd& entries() const { return entries_; }
  Eigen::Index size() const { return entries_.rows(); }

 private:
  Eigen::MatrixXd entries_;
};

StochasticMatrix transition_kernel(const GridWorld& env, const Policy& policy);

struct WeightMatrix {
  Eigen::MatrixXd entries;
  Eigen::VectorXd degrees;
};

// W[i][j] = 1 iff states i and j are orthogonally adjacent floor cells.
WeightMatrix weight_matrix(const GridWorld& env);

// height*width image flattened row-major: wall 1.0, floor 0.0, agent 0.5.
Eigen::VectorXd render_pixels(const GridWorld& env, StateId s);

// Manhattan distance between the cells of two states.
int cell_distance(const GridWorld& env, StateId a, StateId b);

}  // namespace eigenopt
