#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "eigenopt/gridworld.hpp"
#include "eigenopt/options.hpp"

namespace eigenopt {

struct SFNetworkDims {
  int obs = 0;       // flattened observation size
  int d = 32;        // latent and successor-feature dimension
  int hidden = 64;
  int actions = kNumActions;

  friend bool operator==(const SFNetworkDims&, const SFNetworkDims&) = default;
};

// One weight tensor inside the flat parameter buffer (column-major).
struct TensorSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

/// Successor-feature network with three parts sharing a latent code phi:
///
///   encoder   obs -> hidden -> hidden -> d        (ReLU on hidden layers)
///   SR head   phi -> hidden -> d = psi            (ReLU on hidden layer)
///   decoder   (phi * embed[a]) -> hidden -> obs   (element-wise gating)
///
/// All parameters live in one contiguous buffer, in the order listed by
/// tensors(); gradients use the same layout.
class SFNetwork {
 public:
  SFNetwork() = default;
  explicit SFNetwork(SFNetworkDims dims);  // all-zero parameters

  // Uniform in +-sqrt(6 / (fan_in + fan_out)) for weights and the action
  // embedding, zero biases.
  static SFNetwork initialized(SFNetworkDims dims, Rng& rng);

  const SFNetworkDims& dims() const { return dims_; }
  const std::vector<TensorSpec>& tensors() const { return tensors_; }
  const TensorSpec& tensor(const std::string& name) const;

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  Eigen::Map<Eigen::MatrixXd> view(const std::string& name);
  Eigen::Map<const Eigen::MatrixXd> view(const std::string& name) const;

 private:
  SFNetworkDims dims_;
  std::vector<TensorSpec> tensors_;
  std::vector<double> params_;
};

struct ForwardResult {
  Eigen::VectorXd phi;
  Eigen::VectorXd psi;
  Eigen::VectorXd recon;
};

ForwardResult forward(const SFNetwork& net, const Eigen::VectorXd& obs,
                      int action);

// Latent features for every state of the environment (columns).
Eigen::MatrixXd state_features(const SFNetwork& net, const GridWorld& env);

/// Lagged copy of the network used for bootstrapped SR targets.
struct TargetCopy {
  SFNetwork net;
  int sync_period = 1000;

  void sync(const SFNetwork& main) { net = main; }
};

// Columns are samples: obs and next_obs are obs x B.
struct TransitionBatch {
  Eigen::MatrixXd obs;
  std::vector<int> actions;
  Eigen::MatrixXd next_obs;

  int size() const { return static_cast<int>(actions.size()); }
};

struct LossWeights {
  double reconstruction = 1.0;
  double successor = 1.0;
  // When false the SR loss also trains the encoder (ablation only).
  bool stop_gradient = true;
};

struct Losses {
  double sr = 0.0;     // mean over batch and features
  double re = 0.0;     // mean over batch and pixels
  double total = 0.0;  // weighted sum
};

// L_SR = mean (phi-(s) + gamma psi-(phi-(s')) - psi(phi(s)))^2,
// L_RE = mean (zeta(phi(s), a) - s')^2.
Losses losses(const SFNetwork& net, const SFNetwork& target,
              const TransitionBatch& batch, double gamma,
              const LossWeights& weights = {});

// Gradient of the weighted loss with respect to net's parameters (same
// layout). With stop_gradient the SR loss does not reach the encoder or the
// action embedding. The target network never receives a gradient.
std::vector<double> backward(const SFNetwork& net, const SFNetwork& target,
                             const TransitionBatch& batch, double gamma,
                             const LossWeights& weights = {},
                             Losses* out_losses = nullptr);

struct GradientCheckEntry {
  std::string tensor;
  double max_relative_error = 0.0;
  double max_abs_gradient = 0.0;
};

struct GradientCheckReport {
  std::vector<GradientCheckEntry> tensors;
  double max_relative_error = 0.0;
  int refined = 0;  // parameters that needed a smaller step
  int skipped = 0;  // kink still inside the smallest step
};

// Central differences with step h on every parameter. Encoder parameters are
// compared against differences of the reconstruction loss alone, since the
// SR path into them is cut by design. Where a +-h step flips a ReLU the
// step is shrunk tenfold, up to four times, before the parameter is skipped.
// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradientCheckReport gradient_check(const SFNetwork& net,
                                   const SFNetwork& target,
                                   const TransitionBatch& batch, double gamma,
                                   double h = 1e-5, double floor = 1e-6);

TransitionBatch random_transitions(const GridWorld& env, int count, Rng& rng);

struct TrainConfig {
  int dataset_size = 200000;  // transitions collected under a uniform policy
  int passes = 10;
  double lr = 1e-4;
  double gamma = 0.9;
  int batch = 32;
  int sync_period = 1000;
  int d = 32;
  int hidden = 64;
  double rms_decay = 0.95;
  double rms_epsilon = 1e-8;
  LossWeights weights;
  int log_every = 100;  // optimizer steps between loss-log rows
};

struct LossRecord {
  long step = 0;
  double sr = 0.0;
  double re = 0.0;
  double total = 0.0;
  double phi_norm = 0.0;  // mean |phi| over the logged batch
  double psi_norm = 0.0;
};

struct TrainResult {
  SFNetwork net;
  std::vector<LossRecord> log;
  long steps = 0;
};

class TrainingDivergence : public std::runtime_error {
 public:
  TrainingDivergence(const std::string& what, long step)
      : std::runtime_error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

// Collects one uniform-random trajectory of dataset_size transitions from
// the start state, then runs `passes` shuffled passes of RMSProp on the
// weighted loss, refreshing the target copy every sync_period updates.
TrainResult train(const GridWorld& env, const TrainConfig& config, Rng& rng);

// Same, starting from a given network (used for ablations and lr=0 checks).
TrainResult train_from(SFNetwork initial, const GridWorld& env,
                       const TrainConfig& config, Rng& rng);

/// psi along a uniform-random trajectory from the start state.
struct PsiMatrix {
  Eigen::MatrixXd rows;  // m x d
  std::vector<StateId> states;
};

PsiMatrix build_psi_matrix(const SFNetwork& net, const GridWorld& env, int m,
                           Rng& rng);

// Eigenoptions whose purposes come from the psi matrix (via M^T M) and whose
// rewards use the network's phi on rendered states.
std::vector<Eigenoption> deep_eigenoptions(const SFNetwork& net,
                                           const GridWorld& env, int k,
                                           int psi_samples,
                                           const OptionSolveSettings& settings,
                                           Rng& rng);

// Flat checkpoint: 8 magic bytes, four little-endian u64 dims (obs, d,
// hidden, actions), then every parameter as a little-endian f64.
void save_checkpoint(const SFNetwork& net, const std::filesystem::path& path);
SFNetwork load_checkpoint(const std::filesystem::path& path);

}  // namespace eigenopt
