#include "eigenopt/options.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace eigenopt {

double eigenpurpose_reward(const Eigenpurpose& e, const Eigen::VectorXd& phi_s,
                           const Eigen::VectorXd& phi_next) {
  if (phi_s.size() != e.vector.size() || phi_next.size() != e.vector.size())
    throw std::invalid_argument("eigenpurpose_reward: dimension mismatch");
  return e.vector.dot(phi_next - phi_s);
}

Eigenoption solve_option(const GridWorld& env, const Eigenpurpose& e,
                         const OptionSolveSettings& settings) {
  if (e.vector.size() != env.n_states())
    throw std::invalid_argument(
        "solve_option: one-hot purpose must have one entry per state");
  return solve_option_for_potential(env, e, e.vector, settings);
}

Eigenoption solve_option_for_potential(const GridWorld& env,
                                       const Eigenpurpose& e,
                                       Eigen::VectorXd potential,
                                       const OptionSolveSettings& settings) {
  const int n = env.n_states();
  if (potential.size() != n)
    throw std::invalid_argument("potential must have one entry per state");
  if (!(settings.gamma > 0.0 && settings.gamma < 1.0))
    throw std::invalid_argument("option discount must lie in (0, 1)");
  if (!potential.allFinite())
    throw std::invalid_argument("potential has non-finite entries");

  std::vector<std::array<std::array<Outcome, kNumActions>, kNumActions>> model(n);
  for (StateId s = 0; s < n; ++s)
    for (int a = 0; a < kNumActions; ++a) model[s][a] = env.outcomes(s, a);

  const double gamma = settings.gamma;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd next(n);
  Eigen::MatrixXd q(n, kNumActions);
  auto backup = [&](const Eigen::VectorXd& values) {
    for (StateId s = 0; s < n; ++s) {
      for (int a = 0; a < kNumActions; ++a) {
        double acc = 0.0;
        for (const Outcome& o : model[s][a])
          acc += o.prob * (potential[o.next] - potential[s] +
                           gamma * values[o.next]);
        q(s, a) = acc;
      }
    }
  };

  long sweep = 0;
  for (;; ++sweep) {
    if (sweep >= settings.max_sweeps)
      throw OptionError("value iteration did not converge within " +
                        std::to_string(settings.max_sweeps) + " sweeps");
    backup(v);
    for (StateId s = 0; s < n; ++s) next[s] = std::max(0.0, q.row(s).maxCoeff());
    const double change = (next - v).lpNorm<Eigen::Infinity>();
    v.swap(next);
    if (change < settings.tolerance) break;
  }
  backup(v);

  Eigenoption opt;
  opt.purpose = e;
  opt.q_star = q;
  opt.policy.assign(n, -1);
  opt.terminal.assign(n, false);
  // Value iteration from zero approaches v* from below, so q never
  // overshoots; the cut only absorbs rounding.
  const double cut =
      1e-12 * std::max(1.0, potential.lpNorm<Eigen::Infinity>());
  for (StateId s = 0; s < n; ++s) {
    int best = 0;
    for (int a = 1; a < kNumActions; ++a)
      if (q(s, a) > q(s, best)) best = a;
    if (q(s, best) <= cut) {
      opt.terminal[s] = true;
      opt.termination_set.push_back(s);
    } else {
      opt.policy[s] = best;
      opt.initiation_set.push_back(s);
    }
  }
  opt.potential = std::move(potential);
  return opt;
}

std::vector<Eigenoption> solve_options(const GridWorld& env,
                                       const std::vector<Eigenpurpose>& purposes,
                                       const OptionSolveSettings& settings) {
  std::vector<Eigenoption> out;
  out.reserve(purposes.size());
  for (const Eigenpurpose& p : purposes)
    out.push_back(solve_option(env, p, settings));
  return out;
}

OptionRun execute_option(const GridWorld& env, const Eigenoption& option,
                         StateId s, Rng& rng, int step_cap) {
  if (!env.valid_state(s))
    throw std::out_of_range("execute_option: invalid state");
  if (!option.initiates(s))
    throw OptionError("execute_option: state " + std::to_string(s) +
                      " is not in the initiation set");
  OptionRun run;
  while (true) {
    const int a = option.policy[s];
    const StateId next = step(env, s, a, rng);
    run.transitions.push_back({s, a, next});
    ++run.duration;
    s = next;
    if (option.terminates(s)) break;
    if (run.duration >= step_cap) {
      run.capped = true;
      break;
    }
  }
  run.final_state = s;
  return run;
}

OptionModel option_model(const GridWorld& env, const Eigenoption& option) {
  const int n = env.n_states();
  const std::vector<StateId>& transient = option.initiation_set;
  const int m = static_cast<int>(transient.size());
  std::vector<int> pos(n, -1);
  for (int i = 0; i < m; ++i) pos[transient[i]] = i;

  Eigen::MatrixXd i_minus_q = Eigen::MatrixXd::Identity(m, m);
  Eigen::MatrixXd to_terminal = Eigen::MatrixXd::Zero(m, n);
  for (int i = 0; i < m; ++i) {
    const StateId s = transient[i];
    for (const Outcome& o : env.outcomes(s, option.policy[s])) {
      if (pos[o.next] >= 0)
        i_minus_q(i, pos[o.next]) -= o.prob;
      else
        to_terminal(i, o.next) += o.prob;
    }
  }

  OptionModel model{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n)};
  if (m == 0) return model;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(i_minus_q);
  if (!lu.isInvertible())
    throw OptionError(
        "option policy has a recurrent class outside its termination set");
  const Eigen::MatrixXd absorption = lu.solve(to_terminal);
  const Eigen::VectorXd durations = lu.solve(Eigen::VectorXd::Ones(m));
  for (int i = 0; i < m; ++i) {
    if (std::abs(absorption.row(i).sum() - 1.0) > 1e-9 ||
        !(durations[i] >= 1.0 - 1e-9))
      throw OptionError(
          "option policy does not terminate with probability one from state " +
          std::to_string(transient[i]));
    model.absorption.row(transient[i]) = absorption.row(i);
    model.durations[transient[i]] = durations[i];
  }
  return model;
}

TerminationDistribution option_termination_distribution(
    const GridWorld& env, const Eigenoption& option, StateId s) {
  if (!env.valid_state(s))
    throw std::out_of_range("option_termination_distribution: invalid state");
  if (!option.initiates(s))
    throw OptionError("state " + std::to_string(s) +
                      " is not in the initiation set");
  const OptionModel model = option_model(env, option);
  return {model.absorption.row(s).transpose(), model.durations[s]};
}

Eigenoption subgoal_option(const GridWorld& env, StateId target,
                           const OptionSolveSettings& settings) {
  if (!env.valid_state(target))
    throw std::out_of_range("subgoal_option: invalid state");
  Eigenpurpose p;
  p.vector = Eigen::VectorXd::Zero(env.n_states());
  p.vector[target] = 1.0;
  p.source_index = target;
  p.sign = 1;
  return solve_option(env, p, settings);
}

}  // namespace eigenopt
