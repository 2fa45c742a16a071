#include "eigenopt/sr.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace eigenopt {

SRTable SRTable::zeros(int n_states, double gamma, double eta) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("gamma must lie in (0, 1)");
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
  SRTable t;
  t.psi = Eigen::MatrixXd::Zero(n_states, n_states);
  t.gamma = gamma;
  t.eta = eta;
  t.visits.assign(n_states, 0);
  return t;
}

void sr_td_update(SRTable& table, StateId s, StateId s_next) {
  const int n = table.n_states();
  if (s < 0 || s >= n || s_next < 0 || s_next >= n)
    throw std::out_of_range("sr_td_update: invalid state id");
  // Row s_next is read before row s is written (they may coincide).
  Eigen::RowVectorXd target = table.gamma * table.psi.row(s_next);
  target[s] += 1.0;
  table.psi.row(s) += table.eta * (target - table.psi.row(s));
  ++table.visits[s];
}

void extend_sr(SRTable& table, const GridWorld& env, const Policy& policy,
               int n_episodes, int episode_len, Rng& rng) {
  if (n_episodes < 1 || episode_len < 1)
    throw std::invalid_argument("episode count and length must be >= 1");
  if (table.n_states() != env.n_states())
    throw std::invalid_argument("SR table does not match environment");
  for (int e = 0; e < n_episodes; ++e) {
    StateId s = env.start();
    for (int t = 0; t < episode_len; ++t) {
      const StateId next = step(env, s, sample_action(policy, s, rng), rng);
      sr_td_update(table, s, next);
      s = next;
    }
    ++table.episodes_seen;
  }
}

SRTable learn_sr(const GridWorld& env, const Policy& policy,
                 const SrLearnConfig& config, Rng& rng) {
  SRTable table = SRTable::zeros(env.n_states(), config.gamma, config.eta);
  extend_sr(table, env, policy, config.n_episodes, config.episode_len, rng);
  return table;
}

Eigen::MatrixXd closed_form_sr(const StochasticMatrix& t, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("gamma must lie in (0, 1)");
  const Eigen::Index n = t.size();
  const Eigen::MatrixXd a =
      Eigen::MatrixXd::Identity(n, n) - gamma * t.entries();
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  Eigen::MatrixXd psi = lu.solve(Eigen::MatrixXd::Identity(n, n));
  if (!psi.allFinite())
    throw std::runtime_error("closed_form_sr: singular system");
  return psi;
}

LaplacianPair normalized_laplacian(const WeightMatrix& w) {
  const Eigen::Index n = w.entries.rows();
  if (w.entries.cols() != n || w.degrees.size() != n)
    throw std::invalid_argument("weight matrix shape mismatch");
  if ((w.entries - w.entries.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("weight matrix is not symmetric");
  LaplacianPair out;
  out.degree_sqrt.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(w.degrees[i] > 0.0))
      throw std::invalid_argument("state " + std::to_string(i) +
                                  " has zero degree");
    out.degree_sqrt[i] = std::sqrt(w.degrees[i]);
  }
  const Eigen::VectorXd inv = out.degree_sqrt.cwiseInverse();
  Eigen::MatrixXd d_minus_w = -w.entries;
  d_minus_w.diagonal() += w.degrees;
  out.laplacian = inv.asDiagonal() * d_minus_w * inv.asDiagonal();
  return out;
}

std::vector<StateId> visited_states(const SRTable& table,
                                    std::int64_t min_visits) {
  std::vector<StateId> out;
  for (int s = 0; s < table.n_states(); ++s)
    if (table.visits[s] >= min_visits) out.push_back(s);
  return out;
}

double sr_relative_error(const Eigen::MatrixXd& estimate,
                         const Eigen::MatrixXd& exact,
                         const std::vector<StateId>& rows) {
  if (estimate.rows() != exact.rows() || estimate.cols() != exact.cols())
    throw std::invalid_argument("sr_relative_error: shape mismatch");
  double num = 0.0, den = 0.0;
  for (StateId s : rows) {
    num += (estimate.row(s) - exact.row(s)).squaredNorm();
    den += exact.row(s).squaredNorm();
  }
  if (den == 0.0)
    throw std::invalid_argument("no state reaches the visit threshold");
  return std::sqrt(num / den);
}

double sr_relative_error(const SRTable& estimate, const Eigen::MatrixXd& exact,
                         std::int64_t min_visits) {
  return sr_relative_error(estimate.psi, exact,
                           visited_states(estimate, min_visits));
}

}  // namespace eigenopt
