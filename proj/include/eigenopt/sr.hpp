#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "eigenopt/gridworld.hpp"

namespace eigenopt {

/// Tabular successor representation estimate plus learning metadata.
struct SRTable {
  Eigen::MatrixXd psi;
  double gamma = 0.9;
  double eta = 0.1;
  std::int64_t episodes_seen = 0;
  // Number of TD updates applied to each row.
  std::vector<std::int64_t> visits;

  static SRTable zeros(int n_states, double gamma, double eta);
  int n_states() const { return static_cast<int>(psi.rows()); }
};

// One TD(0) update of row s towards 1{s=j} + gamma * psi[s_next][j].
void sr_td_update(SRTable& table, StateId s, StateId s_next);

struct SrLearnConfig {
  int n_episodes = 1000;
  int episode_len = 100;
  double eta = 0.1;
  double gamma = 0.9;
};

// Runs further episodes from env.start() and appends them to `table`.
void extend_sr(SRTable& table, const GridWorld& env, const Policy& policy,
               int n_episodes, int episode_len, Rng& rng);

// Learns the SR from scratch (zero initialisation).
SRTable learn_sr(const GridWorld& env, const Policy& policy,
                 const SrLearnConfig& config, Rng& rng);

// (I - gamma T)^-1.
Eigen::MatrixXd closed_form_sr(const StochasticMatrix& t, double gamma);

struct LaplacianPair {
  Eigen::MatrixXd laplacian;
  Eigen::VectorXd degree_sqrt;
};

// D^{-1/2} (D - W) D^{-1/2}.
LaplacianPair normalized_laplacian(const WeightMatrix& w);

// Relative Frobenius error of `estimate` against `exact`, over the rows whose
// visit count is at least `min_visits` (all columns kept).
double sr_relative_error(const SRTable& estimate, const Eigen::MatrixXd& exact,
                         std::int64_t min_visits);
// Same over an explicit row set, e.g. one fixed across checkpoints.
double sr_relative_error(const Eigen::MatrixXd& estimate,
                         const Eigen::MatrixXd& exact,
                         const std::vector<StateId>& rows);

std::vector<StateId> visited_states(const SRTable& table,
                                    std::int64_t min_visits);

}  // namespace eigenopt
