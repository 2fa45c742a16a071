#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <vector>

#include "eigenopt/gridworld.hpp"
#include "eigenopt/options.hpp"

namespace eigenopt {

class DisconnectedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Markov chain at decision resolution under the uniform meta-policy over
/// the four primitives plus every option whose initiation set holds the
/// current state. An option jumps to its termination distribution; with a
/// target, options also stop when they pass through it.
struct DecisionChain {
  StochasticMatrix kernel;
  std::vector<std::vector<int>> available;  // option indices per state

  int menu_size(StateId s) const {
    return kNumActions + static_cast<int>(available[s].size());
  }
};

DecisionChain decision_chain(const GridWorld& env,
                             const std::vector<Eigenoption>& options,
                             std::optional<StateId> target = std::nullopt);

enum class DiffusionMode { exact, monte_carlo };

struct DiffusionSettings {
  DiffusionMode mode = DiffusionMode::exact;
  long pairs = 100000;               // monte-carlo only
  long decision_cap = 10000000;      // per pair, monte-carlo only
};

// Expected number of decisions to travel between two distinct states, averaged
// uniformly over ordered pairs. Each primitive action or option call is one
// decision, and the target counts as reached even mid-option.
double diffusion_time(const GridWorld& env,
                      const std::vector<Eigenoption>& options,
                      const DiffusionSettings& settings, Rng& rng);
double diffusion_time_exact(const GridWorld& env,
                            const std::vector<Eigenoption>& options);

// Hitting times h[u] to `target` on the decision chain (h[target] = 0).
Eigen::VectorXd hitting_times(const DecisionChain& chain, StateId target);

// k options, each navigating to a distinct uniformly sampled state.
std::vector<Eigenoption> random_subgoal_options(
    const GridWorld& env, int k, const OptionSolveSettings& settings, Rng& rng);

enum class ControlEvaluation {
  behavior,  // return of the exploratory behaviour episode
  greedy,    // separate greedy rollout over primitives after each episode
};

struct ControlConfig {
  double alpha = 0.1;
  double gamma = 0.9;
  int n_episodes = 100;
  int episode_len = 100;
  int n_runs = 100;
  ControlEvaluation evaluation = ControlEvaluation::behavior;
};

struct LearningCurve {
  std::vector<double> returns;  // mean return per episode
  int runs = 0;

  // Mean of the curve, i.e. area under it normalised by its length.
  double area() const;
};

struct ControlRun {
  Eigen::MatrixXd q;  // n_states x 4, primitive actions only
  std::vector<double> returns;
};

// One Q-learning run: the behaviour policy picks uniformly among primitives
// and available options; every primitive transition (including those made
// inside options) updates Q towards the max over primitive actions. Reward 1
// on entering the goal, which ends the episode. When `trace` is given, every
// primitive transition is appended to it.
ControlRun q_learning_run(const GridWorld& env,
                          const std::vector<Eigenoption>& options,
                          const ControlConfig& config, Rng& rng,
                          std::vector<Transition>* trace = nullptr);

// Mean over config.n_runs independent runs drawn from `rng`.
LearningCurve q_learning_control(const GridWorld& env,
                                 const std::vector<Eigenoption>& options,
                                 const ControlConfig& config, Rng& rng);

}  // namespace eigenopt
