#include "eigenopt/eval.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <string>

namespace eigenopt {

namespace {

bool strongly_connected(const Eigen::MatrixXd& p) {
  const Eigen::Index n = p.rows();
  auto reach_all = [&](bool forward) {
    std::vector<bool> seen(n, false);
    std::deque<Eigen::Index> frontier{0};
    seen[0] = true;
    Eigen::Index count = 1;
    while (!frontier.empty()) {
      const Eigen::Index u = frontier.front();
      frontier.pop_front();
      for (Eigen::Index w = 0; w < n; ++w) {
        const double mass = forward ? p(u, w) : p(w, u);
        if (mass > 0.0 && !seen[w]) {
          seen[w] = true;
          ++count;
          frontier.push_back(w);
        }
      }
    }
    return count == n;
  };
  return n == 0 || (reach_all(true) && reach_all(false));
}

// Runs an option until it terminates or reaches `target`.
StateId run_option_quietly(const GridWorld& env, const Eigenoption& option,
                           StateId s, StateId target, Rng& rng) {
  int steps = 0;
  do {
    s = step(env, s, option.policy[s], rng);
    ++steps;
  } while (s != target && !option.terminates(s) && steps < kDefaultStepCap);
  return s;
}

std::vector<std::vector<int>> availability(
    const GridWorld& env, const std::vector<Eigenoption>& options) {
  std::vector<std::vector<int>> available(env.n_states());
  for (StateId s = 0; s < env.n_states(); ++s)
    for (int o = 0; o < static_cast<int>(options.size()); ++o)
      if (options[o].initiates(s)) available[s].push_back(o);
  return available;
}

double diffusion_time_monte_carlo(const GridWorld& env,
                                  const std::vector<Eigenoption>& options,
                                  const DiffusionSettings& settings, Rng& rng) {
  const int n = env.n_states();
  if (settings.pairs < 1)
    throw std::invalid_argument("monte-carlo diffusion needs at least 1 pair");
  const auto available = availability(env, options);

  double total = 0.0;
  for (long pair = 0; pair < settings.pairs; ++pair) {
    const StateId from = static_cast<StateId>(uniform_index(rng, n));
    StateId to = static_cast<StateId>(uniform_index(rng, n - 1));
    if (to >= from) ++to;
    StateId s = from;
    long decisions = 0;
    while (s != to) {
      if (decisions >= settings.decision_cap)
        throw DisconnectedError("decision cap reached; layout may be "
                                "disconnected");
      const std::size_t choice =
          uniform_index(rng, kNumActions + available[s].size());
      if (choice < kNumActions)
        s = step(env, s, static_cast<int>(choice), rng);
      else
        s = run_option_quietly(env, options[available[s][choice - kNumActions]],
                               s, to, rng);
      ++decisions;
    }
    total += static_cast<double>(decisions);
  }
  return total / static_cast<double>(settings.pairs);
}

}  // namespace

DecisionChain decision_chain(const GridWorld& env,
                             const std::vector<Eigenoption>& options,
                             std::optional<StateId> target) {
  const int n = env.n_states();
  if (target && !env.valid_state(*target))
    throw std::out_of_range("decision_chain: invalid target");
  auto available = availability(env, options);

  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (StateId s = 0; s < n; ++s)
    for (int a = 0; a < kNumActions; ++a)
      for (const Outcome& o : env.outcomes(s, a)) p(s, o.next) += o.prob;
  for (const Eigenoption& option : options) {
    if (option.initiation_set.empty()) continue;
    OptionModel model;
    if (target && option.initiates(*target)) {
      // The option also stops on reaching the target.
      Eigenoption stopped = option;
      stopped.terminal[*target] = true;
      std::erase(stopped.initiation_set, *target);
      model = option_model(env, stopped);
      model.absorption(*target, *target) = 1.0;
    } else {
      model = option_model(env, option);
    }
    for (StateId s : option.initiation_set) p.row(s) += model.absorption.row(s);
  }
  for (StateId s = 0; s < n; ++s)
    p.row(s) /= static_cast<double>(kNumActions + available[s].size());
  // Re-normalise away accumulated rounding so the kernel invariant holds.
  for (StateId s = 0; s < n; ++s) p.row(s) /= p.row(s).sum();
  return DecisionChain{StochasticMatrix(std::move(p)), std::move(available)};
}

Eigen::VectorXd hitting_times(const DecisionChain& chain, StateId target) {
  const Eigen::MatrixXd& p = chain.kernel.entries();
  const Eigen::Index n = p.rows();
  if (target < 0 || target >= n)
    throw std::out_of_range("hitting_times: invalid target");
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n; ++i)
    if (i != target) keep.push_back(i);
  const Eigen::Index m = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd a(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      a(i, j) = (i == j ? 1.0 : 0.0) - p(keep[i], keep[j]);
  const Eigen::VectorXd h = a.partialPivLu().solve(Eigen::VectorXd::Ones(m));
  if (!h.allFinite() || (h.array() < 1.0 - 1e-9).any())
    throw DisconnectedError("hitting-time system is singular");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i) out[keep[i]] = h[i];
  return out;
}

double diffusion_time_exact(const GridWorld& env,
                            const std::vector<Eigenoption>& options) {
  const int n = env.n_states();
  if (n < 2) throw std::invalid_argument("diffusion time needs two states");
  if (!strongly_connected(decision_chain(env, options).kernel.entries()))
    throw DisconnectedError("some state pairs are mutually unreachable");
  double total = 0.0;
  for (StateId v = 0; v < n; ++v)
    total += hitting_times(decision_chain(env, options, v), v).sum();
  return total / (static_cast<double>(n) * (n - 1));
}

double diffusion_time(const GridWorld& env,
                      const std::vector<Eigenoption>& options,
                      const DiffusionSettings& settings, Rng& rng) {
  if (settings.mode == DiffusionMode::exact)
    return diffusion_time_exact(env, options);
  return diffusion_time_monte_carlo(env, options, settings, rng);
}

std::vector<Eigenoption> random_subgoal_options(
    const GridWorld& env, int k, const OptionSolveSettings& settings, Rng& rng) {
  const int n = env.n_states();
  if (k < 0 || k > n)
    throw std::invalid_argument("random_subgoal_options: k must lie in [0, n]");
  std::vector<StateId> states(n);
  std::iota(states.begin(), states.end(), 0);
  std::vector<Eigenoption> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(rng, n - i);
    std::swap(states[i], states[j]);
    Eigenoption opt = subgoal_option(env, states[i], settings);
    opt.purpose.source_index = i;
    out.push_back(std::move(opt));
  }
  return out;
}

double LearningCurve::area() const {
  if (returns.empty()) return 0.0;
  return std::accumulate(returns.begin(), returns.end(), 0.0) /
         static_cast<double>(returns.size());
}

namespace {

void validate(const GridWorld& env, const ControlConfig& c) {
  if (!env.goal()) throw std::invalid_argument("control needs a goal cell");
  if (!(c.alpha > 0.0 && c.alpha <= 1.0))
    throw std::invalid_argument("alpha must lie in (0, 1]");
  if (!(c.gamma >= 0.0 && c.gamma <= 1.0))
    throw std::invalid_argument("gamma must lie in [0, 1]");
  if (c.n_episodes < 1 || c.episode_len < 1 || c.n_runs < 1)
    throw std::invalid_argument("episodes, episode length and runs must be >= 1");
}

int greedy_action(const Eigen::MatrixXd& q, StateId s, Rng& rng) {
  const double best = q.row(s).maxCoeff();
  int ties[kNumActions];
  int count = 0;
  for (int a = 0; a < kNumActions; ++a)
    if (q(s, a) == best) ties[count++] = a;
  return ties[uniform_index(rng, count)];
}

double greedy_rollout(const GridWorld& env, const Eigen::MatrixXd& q,
                      int episode_len, Rng& rng) {
  StateId s = env.start();
  const StateId goal = *env.goal();
  for (int t = 0; t < episode_len; ++t) {
    s = step(env, s, greedy_action(q, s, rng), rng);
    if (s == goal) return 1.0;
  }
  return 0.0;
}

}  // namespace

ControlRun q_learning_run(const GridWorld& env,
                          const std::vector<Eigenoption>& options,
                          const ControlConfig& config, Rng& rng,
                          std::vector<Transition>* trace) {
  validate(env, config);
  const int n = env.n_states();
  const StateId goal = *env.goal();
  const auto available = availability(env, options);

  ControlRun run;
  run.q = Eigen::MatrixXd::Zero(n, kNumActions);
  run.returns.reserve(config.n_episodes);
  Rng eval_rng(config.evaluation == ControlEvaluation::greedy ? rng() : 0);

  for (int episode = 0; episode < config.n_episodes; ++episode) {
    StateId s = env.start();
    int t = 0;
    bool reached = s == goal;
    // Applies one primitive transition; returns true when the episode ends.
    auto apply = [&](int a) {
      const StateId next = step(env, s, a, rng);
      const bool at_goal = next == goal;
      const double target =
          (at_goal ? 1.0 : 0.0) +
          (at_goal ? 0.0 : config.gamma * run.q.row(next).maxCoeff());
      run.q(s, a) += config.alpha * (target - run.q(s, a));
      if (trace) trace->push_back({s, a, next});
      s = next;
      ++t;
      reached = at_goal;
      return at_goal || t >= config.episode_len;
    };

    bool done = reached;
    while (!done) {
      const std::size_t choice =
          uniform_index(rng, kNumActions + available[s].size());
      if (choice < kNumActions) {
        done = apply(static_cast<int>(choice));
        continue;
      }
      const Eigenoption& opt = options[available[s][choice - kNumActions]];
      do {
        done = apply(opt.policy[s]);
      } while (!done && !opt.terminates(s));
    }

    if (config.evaluation == ControlEvaluation::behavior)
      run.returns.push_back(reached ? 1.0 : 0.0);
    else
      run.returns.push_back(
          greedy_rollout(env, run.q, config.episode_len, eval_rng));
  }
  return run;
}

LearningCurve q_learning_control(const GridWorld& env,
                                 const std::vector<Eigenoption>& options,
                                 const ControlConfig& config, Rng& rng) {
  validate(env, config);
  LearningCurve curve;
  curve.returns.assign(config.n_episodes, 0.0);
  curve.runs = config.n_runs;
  for (int r = 0; r < config.n_runs; ++r) {
    Rng run_rng(rng());
    const ControlRun run = q_learning_run(env, options, config, run_rng);
    for (int e = 0; e < config.n_episodes; ++e) curve.returns[e] += run.returns[e];
  }
  for (double& v : curve.returns) v /= static_cast<double>(config.n_runs);
  return curve;
}

}  // namespace eigenopt
