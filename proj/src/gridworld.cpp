#include "eigenopt/gridworld.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

namespace eigenopt {

namespace {

constexpr std::array<int, kNumActions> kRowDelta{-1, 1, 0, 0};
constexpr std::array<int, kNumActions> kColDelta{0, 0, -1, 1};

void check_action(int action) {
  if (action < 0 || action >= kNumActions)
    throw std::invalid_argument("invalid action id " + std::to_string(action));
}

}  // namespace

char action_letter(int action) {
  check_action(action);
  return "UDLR"[action];
}

GridWorld::GridWorld(int width, int height, std::vector<bool> walls,
                     Cell start, std::optional<Cell> goal, double slip)
    : width_(width), height_(height), walls_(std::move(walls)), slip_(slip) {
  if (width <= 0 || height <= 0)
    throw LayoutError("grid dimensions must be positive");
  if (walls_.size() != static_cast<std::size_t>(width) * height)
    throw LayoutError("wall grid size does not match dimensions");
  if (!(slip >= 0.0 && slip <= 1.0))
    throw std::invalid_argument("slip must lie in [0, 1]");

  index_.assign(walls_.size(), -1);
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      const std::size_t k = static_cast<std::size_t>(r) * width_ + c;
      if (!walls_[k]) {
        index_[k] = static_cast<StateId>(cells_.size());
        cells_.push_back({r, c});
      }
    }
  }

  start_ = state_of(start);
  if (start_ < 0) throw LayoutError("start cell is a wall or out of bounds");
  if (goal) {
    const StateId g = state_of(*goal);
    if (g < 0) throw LayoutError("goal cell is a wall or out of bounds");
    goal_ = g;
  }

  moves_.resize(cells_.size());
  for (StateId s = 0; s < n_states(); ++s) {
    for (int a = 0; a < kNumActions; ++a) {
      const Cell next{cells_[s].row + kRowDelta[a], cells_[s].col + kColDelta[a]};
      const StateId t = state_of(next);
      moves_[s][a] = t < 0 ? s : t;
    }
  }
}

bool GridWorld::in_bounds(Cell c) const {
  return c.row >= 0 && c.row < height_ && c.col >= 0 && c.col < width_;
}

bool GridWorld::is_wall(Cell c) const {
  return !in_bounds(c) ||
         walls_[static_cast<std::size_t>(c.row) * width_ + c.col];
}

StateId GridWorld::state_of(Cell c) const {
  if (!in_bounds(c)) return -1;
  return index_[static_cast<std::size_t>(c.row) * width_ + c.col];
}

Cell GridWorld::cell_of(StateId s) const {
  if (!valid_state(s))
    throw std::out_of_range("invalid state id " + std::to_string(s));
  return cells_[s];
}

StateId GridWorld::neighbor(StateId s, int action) const {
  if (!valid_state(s))
    throw std::out_of_range("invalid state id " + std::to_string(s));
  check_action(action);
  return moves_[s][action];
}

std::array<Outcome, kNumActions> GridWorld::outcomes(StateId s,
                                                     int action) const {
  if (!valid_state(s))
    throw std::out_of_range("invalid state id " + std::to_string(s));
  check_action(action);
  std::array<Outcome, kNumActions> out;
  for (int d = 0; d < kNumActions; ++d) {
    out[d].next = moves_[s][d];
    out[d].prob = d == action ? 1.0 - slip_ : slip_ / 3.0;
  }
  return out;
}

GridWorld GridWorld::with_slip(double slip) const {
  std::optional<Cell> g;
  if (goal_) g = cells_[*goal_];
  return GridWorld(width_, height_, walls_, cells_[start_], g, slip);
}

GridWorld GridWorld::with_start(StateId s) const {
  std::optional<Cell> g;
  if (goal_) g = cells_[*goal_];
  return GridWorld(width_, height_, walls_, cell_of(s), g, slip_);
}

GridWorld GridWorld::with_goal(std::optional<StateId> goal) const {
  std::optional<Cell> g;
  if (goal) g = cell_of(*goal);
  return GridWorld(width_, height_, walls_, cells_[start_], g, slip_);
}

std::string GridWorld::to_layout() const {
  std::string out;
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      const StateId s = state_of({r, c});
      if (s < 0)
        out += 'X';
      else if (s == start_)
        out += 'S';
      else if (goal_ && s == *goal_)
        out += 'G';
      else
        out += '.';
    }
    out += '\n';
  }
  return out;
}

GridWorld load_layout(std::string_view text) {
  std::vector<std::string_view> rows;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    rows.push_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  while (!rows.empty() && rows.back().empty()) rows.pop_back();
  if (rows.empty()) throw LayoutError("empty layout");

  const std::size_t width = rows.front().size();
  if (width == 0) throw LayoutError("empty first row");
  std::vector<bool> walls;
  std::optional<Cell> start, goal;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != width)
      throw LayoutError("layout is not rectangular (row " + std::to_string(r) +
                        ")");
    for (std::size_t c = 0; c < width; ++c) {
      const char ch = rows[r][c];
      const Cell cell{static_cast<int>(r), static_cast<int>(c)};
      switch (ch) {
        case 'X':
          walls.push_back(true);
          break;
        case '.':
          walls.push_back(false);
          break;
        case 'S':
          if (start) throw LayoutError("layout has more than one start");
          start = cell;
          walls.push_back(false);
          break;
        case 'G':
          if (goal) throw LayoutError("layout has more than one goal");
          goal = cell;
          walls.push_back(false);
          break;
        default:
          throw LayoutError(std::string("unexpected character '") + ch +
                            "' in layout");
      }
    }
  }
  if (!start) throw LayoutError("layout has no start");

  GridWorld env(static_cast<int>(width), static_cast<int>(rows.size()),
                std::move(walls), *start, goal);

  std::vector<bool> seen(env.n_states(), false);
  std::deque<StateId> frontier{env.start()};
  seen[env.start()] = true;
  int reached = 1;
  while (!frontier.empty()) {
    const StateId s = frontier.front();
    frontier.pop_front();
    for (int a = 0; a < kNumActions; ++a) {
      const StateId t = env.neighbor(s, a);
      if (!seen[t]) {
        seen[t] = true;
        ++reached;
        frontier.push_back(t);
      }
    }
  }
  if (reached != env.n_states())
    throw LayoutError("floor cells unreachable from the start: " +
                      std::to_string(env.n_states() - reached));
  return env;
}

GridWorld load_layout_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LayoutError("cannot open layout file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_layout(buf.str());
}

StateId step(const GridWorld& env, StateId s, int action, Rng& rng) {
  int direction = action;
  if (env.slip() > 0.0) {
    check_action(action);
    if (uniform01(rng) < env.slip()) {
      const int k = static_cast<int>(uniform_index(rng, kNumActions - 1));
      direction = k < action ? k : k + 1;
    }
  }
  return env.neighbor(s, direction);
}

Policy uniform_policy(const GridWorld& env) {
  return Policy::Constant(env.n_states(), kNumActions, 1.0 / kNumActions);
}

int sample_action(const Policy& policy, StateId s, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (int a = 0; a < kNumActions - 1; ++a) {
    acc += policy(s, a);
    if (u < acc) return a;
  }
  return kNumActions - 1;
}

StochasticMatrix::StochasticMatrix(Eigen::MatrixXd entries)
    : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols())
    throw std::invalid_argument("stochastic matrix must be square");
  if ((entries_.array() < 0.0).any())
    throw std::invalid_argument("stochastic matrix has negative entries");
  const Eigen::VectorXd sums = entries_.rowwise().sum();
  for (Eigen::Index i = 0; i < sums.size(); ++i)
    if (std::abs(sums[i] - 1.0) > 1e-12)
      throw std::invalid_argument("stochastic matrix row " + std::to_string(i) +
                                  " does not sum to one");
}

StochasticMatrix transition_kernel(const GridWorld& env,
                                   const Policy& policy) {
  const int n = env.n_states();
  if (policy.rows() != n || policy.cols() != kNumActions)
    throw std::invalid_argument("policy shape does not match environment");
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n);
  for (StateId s = 0; s < n; ++s) {
    if (std::abs(policy.row(s).sum() - 1.0) > 1e-12 ||
        (policy.row(s).array() < 0.0).any())
      throw std::invalid_argument("policy row " + std::to_string(s) +
                                  " is not a distribution");
    for (int a = 0; a < kNumActions; ++a) {
      if (policy(s, a) == 0.0) continue;
      for (const Outcome& o : env.outcomes(s, a))
        t(s, o.next) += policy(s, a) * o.prob;
    }
  }
  return StochasticMatrix(std::move(t));
}

WeightMatrix weight_matrix(const GridWorld& env) {
  const int n = env.n_states();
  WeightMatrix w{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n)};
  for (StateId s = 0; s < n; ++s) {
    for (int a = 0; a < kNumActions; ++a) {
      const StateId t = env.neighbor(s, a);
      if (t != s) w.entries(s, t) = 1.0;
    }
  }
  w.degrees = w.entries.rowwise().sum();
  return w;
}

Eigen::VectorXd render_pixels(const GridWorld& env, StateId s) {
  const Cell agent = env.cell_of(s);
  Eigen::VectorXd img(static_cast<Eigen::Index>(env.width()) * env.height());
  for (int r = 0; r < env.height(); ++r)
    for (int c = 0; c < env.width(); ++c)
      img[r * env.width() + c] = env.is_wall({r, c}) ? 1.0 : 0.0;
  img[agent.row * env.width() + agent.col] = 0.5;
  return img;
}

int cell_distance(const GridWorld& env, StateId a, StateId b) {
  const Cell ca = env.cell_of(a);
  const Cell cb = env.cell_of(b);
  return std::abs(ca.row - cb.row) + std::abs(ca.col - cb.col);
}

}  // namespace eigenopt
