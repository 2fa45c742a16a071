#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

#include "eigenopt/gridworld.hpp"
#include "eigenopt/spectral.hpp"

namespace eigenopt {

/// An option maximising an eigenpurpose.
///
/// `potential[s]` is e^T phi(s); the intrinsic reward of a transition is the
/// potential difference. A state terminates the option when no action has a
/// positive optimal value there; the initiation set is every other state.
struct Eigenoption {
  Eigenpurpose purpose;
  Eigen::VectorXd potential;
  Eigen::MatrixXd q_star;              // n_states x 4
  std::vector<int> policy;             // greedy action, -1 on terminal states
  std::vector<bool> terminal;          // membership in the termination set
  std::vector<StateId> termination_set;
  std::vector<StateId> initiation_set;

  bool terminates(StateId s) const { return terminal.at(s); }
  bool initiates(StateId s) const { return !terminal.at(s); }
};

class OptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double eigenpurpose_reward(const Eigenpurpose& e, const Eigen::VectorXd& phi_s,
                           const Eigen::VectorXd& phi_next);

struct OptionSolveSettings {
  double gamma = 0.9;
  double tolerance = 1e-10;
  long max_sweeps = 1000000;
};

// Value iteration for v(s) = max(0, max_a sum_s' p(s'|s,a)[r(s,s') +
// gamma v(s')]) with one-hot features, i.e. potential = e.
Eigenoption solve_option(const GridWorld& env, const Eigenpurpose& e,
                         const OptionSolveSettings& settings = {});

// Same solve for an arbitrary per-state potential e^T phi(s).
Eigenoption solve_option_for_potential(const GridWorld& env,
                                       const Eigenpurpose& e,
                                       Eigen::VectorXd potential,
                                       const OptionSolveSettings& settings = {});

std::vector<Eigenoption> solve_options(const GridWorld& env,
                                       const std::vector<Eigenpurpose>& purposes,
                                       const OptionSolveSettings& settings = {});

struct Transition {
  StateId from = 0;
  int action = 0;
  StateId to = 0;
};

struct OptionRun {
  StateId final_state = 0;
  int duration = 0;
  std::vector<Transition> transitions;
  bool capped = false;  // step_cap reached before termination
};

inline constexpr int kDefaultStepCap = 400;

// Call-and-return execution from s, which must be in the initiation set.
OptionRun execute_option(const GridWorld& env, const Eigenoption& option,
                         StateId s, Rng& rng, int step_cap = kDefaultStepCap);

struct TerminationDistribution {
  Eigen::VectorXd distribution;  // over all states; zero off the termination set
  double expected_duration = 0.0;
};

/// Absorbing-chain model of an option for every start state at once.
/// Rows of `absorption` belonging to terminal states are zero.
struct OptionModel {
  Eigen::MatrixXd absorption;
  Eigen::VectorXd durations;
};

OptionModel option_model(const GridWorld& env, const Eigenoption& option);

TerminationDistribution option_termination_distribution(
    const GridWorld& env, const Eigenoption& option, StateId s);

// Option whose purpose is the indicator of `target` (navigate there).
Eigenoption subgoal_option(const GridWorld& env, StateId target,
                           const OptionSolveSettings& settings = {});

}  // namespace eigenopt
