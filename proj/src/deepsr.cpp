#include "eigenopt/deepsr.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <optional>

#include "eigenopt/spectral.hpp"

namespace eigenopt {

namespace {

constexpr char kMagic[8] = {'E', 'O', 'S', 'F', 'N', 'E', 'T', '1'};

using Mat = Eigen::MatrixXd;

Mat relu(const Mat& z) { return z.cwiseMax(0.0); }

Mat relu_mask(const Mat& z) {
  return (z.array() > 0.0).cast<double>().matrix();
}

// Dense layer y = W x + b applied column-wise.
Mat dense(const SFNetwork& net, const std::string& layer, const Mat& x) {
  const auto w = net.view(layer + ".w");
  const auto b = net.view(layer + ".b");
  Mat y = w * x;
  y.colwise() += b.col(0);
  return y;
}

struct EncoderPass {
  Mat z1, h1, z2, h2, phi;
};

EncoderPass encode(const SFNetwork& net, const Mat& x) {
  EncoderPass e;
  e.z1 = dense(net, "enc1", x);
  e.h1 = relu(e.z1);
  e.z2 = dense(net, "enc2", e.h1);
  e.h2 = relu(e.z2);
  e.phi = dense(net, "enc3", e.h2);
  return e;
}

struct SrPass {
  Mat y1, g1, psi;
};

SrPass sr_head(const SFNetwork& net, const Mat& phi) {
  SrPass s;
  s.y1 = dense(net, "sr1", phi);
  s.g1 = relu(s.y1);
  s.psi = dense(net, "sr2", s.g1);
  return s;
}

struct DecoderPass {
  Mat gate, r1, k1, recon;
};

DecoderPass decode(const SFNetwork& net, const Mat& phi,
                   const std::vector<int>& actions) {
  const auto embed = net.view("embed");
  DecoderPass d;
  d.gate.resize(phi.rows(), phi.cols());
  for (Eigen::Index b = 0; b < phi.cols(); ++b) {
    const int a = actions[b];
    if (a < 0 || a >= embed.cols())
      throw std::invalid_argument("invalid action id in batch");
    d.gate.col(b) = phi.col(b).cwiseProduct(embed.col(a));
  }
  d.r1 = dense(net, "rec1", d.gate);
  d.k1 = relu(d.r1);
  d.recon = dense(net, "rec2", d.k1);
  return d;
}

void check_batch(const SFNetwork& net, const TransitionBatch& batch) {
  const int obs = net.dims().obs;
  if (batch.obs.rows() != obs || batch.next_obs.rows() != obs)
    throw std::invalid_argument("observation size does not match network");
  if (batch.obs.cols() != batch.size() || batch.next_obs.cols() != batch.size())
    throw std::invalid_argument("batch columns do not match action count");
  if (batch.size() == 0) throw std::invalid_argument("empty batch");
}

// phi-(s) + gamma psi-(phi-(s')); constant with respect to the main network.
Mat sr_target(const SFNetwork& target, const TransitionBatch& batch,
              double gamma) {
  const Mat phi_now = encode(target, batch.obs).phi;
  const Mat psi_next = sr_head(target, encode(target, batch.next_obs).phi).psi;
  return phi_now + gamma * psi_next;
}

double sr_loss(const Mat& target, const Mat& psi) {
  return (target - psi).squaredNorm() /
         static_cast<double>(psi.rows() * psi.cols());
}

double re_loss(const Mat& recon, const Mat& next_obs) {
  return (recon - next_obs).squaredNorm() /
         static_cast<double>(recon.rows() * recon.cols());
}

void add_to(SFNetwork& grad_layout, std::vector<double>& grad,
            const std::string& name, const Mat& value) {
  const TensorSpec& t = grad_layout.tensor(name);
  Eigen::Map<Mat>(grad.data() + t.offset, t.rows, t.cols) += value;
}

}  // namespace

SFNetwork::SFNetwork(SFNetworkDims dims) : dims_(dims) {
  if (dims.obs <= 0 || dims.d <= 0 || dims.hidden <= 0 || dims.actions <= 0)
    throw std::invalid_argument("network dimensions must be positive");
  const int o = dims.obs, d = dims.d, h = dims.hidden;
  const std::vector<std::tuple<std::string, int, int>> shapes = {
      {"enc1.w", h, o}, {"enc1.b", h, 1}, {"enc2.w", h, h}, {"enc2.b", h, 1},
      {"enc3.w", d, h}, {"enc3.b", d, 1}, {"sr1.w", h, d},  {"sr1.b", h, 1},
      {"sr2.w", d, h},  {"sr2.b", d, 1},  {"embed", d, dims.actions},
      {"rec1.w", h, d}, {"rec1.b", h, 1}, {"rec2.w", o, h}, {"rec2.b", o, 1},
  };
  std::size_t offset = 0;
  for (const auto& [name, rows, cols] : shapes) {
    tensors_.push_back({name, rows, cols, offset});
    offset += static_cast<std::size_t>(rows) * cols;
  }
  params_.assign(offset, 0.0);
}

SFNetwork SFNetwork::initialized(SFNetworkDims dims, Rng& rng) {
  SFNetwork net(dims);
  for (const TensorSpec& t : net.tensors_) {
    if (t.name.ends_with(".b")) continue;
    // Weights map cols (fan in) to rows (fan out).
    const double limit = std::sqrt(6.0 / (t.rows + t.cols));
    for (std::size_t i = 0; i < t.size(); ++i)
      net.params_[t.offset + i] = limit * (2.0 * uniform01(rng) - 1.0);
  }
  return net;
}

const TensorSpec& SFNetwork::tensor(const std::string& name) const {
  for (const TensorSpec& t : tensors_)
    if (t.name == name) return t;
  throw std::out_of_range("no tensor named " + name);
}

Eigen::Map<Eigen::MatrixXd> SFNetwork::view(const std::string& name) {
  const TensorSpec& t = tensor(name);
  return {params_.data() + t.offset, t.rows, t.cols};
}

Eigen::Map<const Eigen::MatrixXd> SFNetwork::view(
    const std::string& name) const {
  const TensorSpec& t = tensor(name);
  return {params_.data() + t.offset, t.rows, t.cols};
}

ForwardResult forward(const SFNetwork& net, const Eigen::VectorXd& obs,
                      int action) {
  if (obs.size() != net.dims().obs)
    throw std::invalid_argument("observation size does not match network");
  const Mat x = obs;
  const EncoderPass e = encode(net, x);
  return {e.phi.col(0), sr_head(net, e.phi).psi.col(0),
          decode(net, e.phi, {action}).recon.col(0)};
}

Eigen::MatrixXd state_features(const SFNetwork& net, const GridWorld& env) {
  Mat x(net.dims().obs, env.n_states());
  for (StateId s = 0; s < env.n_states(); ++s) x.col(s) = render_pixels(env, s);
  return encode(net, x).phi;
}

Losses losses(const SFNetwork& net, const SFNetwork& target,
              const TransitionBatch& batch, double gamma,
              const LossWeights& weights) {
  check_batch(net, batch);
  const EncoderPass e = encode(net, batch.obs);
  Losses l;
  l.sr = sr_loss(sr_target(target, batch, gamma), sr_head(net, e.phi).psi);
  l.re = re_loss(decode(net, e.phi, batch.actions).recon, batch.next_obs);
  l.total = weights.reconstruction * l.re + weights.successor * l.sr;
  return l;
}

std::vector<double> backward(const SFNetwork& net, const SFNetwork& target,
                             const TransitionBatch& batch, double gamma,
                             const LossWeights& weights, Losses* out_losses) {
  check_batch(net, batch);
  const double count = batch.size();
  const EncoderPass e = encode(net, batch.obs);
  const SrPass s = sr_head(net, e.phi);
  const DecoderPass d = decode(net, e.phi, batch.actions);
  const Mat sr_err = sr_target(target, batch, gamma) - s.psi;
  const Mat re_err = d.recon - batch.next_obs;

  if (out_losses) {
    out_losses->sr = sr_err.squaredNorm() / (count * sr_err.rows());
    out_losses->re = re_err.squaredNorm() / (count * re_err.rows());
    out_losses->total = weights.reconstruction * out_losses->re +
                        weights.successor * out_losses->sr;
  }

  std::vector<double> grad(net.params().size(), 0.0);
  SFNetwork& layout = const_cast<SFNetwork&>(net);

  // SR head.
  const Mat dpsi = (-2.0 * weights.successor / (count * sr_err.rows())) * sr_err;
  add_to(layout, grad, "sr2.w", dpsi * s.g1.transpose());
  add_to(layout, grad, "sr2.b", dpsi.rowwise().sum());
  const Mat dy1 =
      (net.view("sr2.w").transpose() * dpsi).cwiseProduct(relu_mask(s.y1));
  add_to(layout, grad, "sr1.w", dy1 * e.phi.transpose());
  add_to(layout, grad, "sr1.b", dy1.rowwise().sum());

  // Decoder.
  const Mat drecon =
      (2.0 * weights.reconstruction / (count * re_err.rows())) * re_err;
  add_to(layout, grad, "rec2.w", drecon * d.k1.transpose());
  add_to(layout, grad, "rec2.b", drecon.rowwise().sum());
  const Mat dr1 =
      (net.view("rec2.w").transpose() * drecon).cwiseProduct(relu_mask(d.r1));
  add_to(layout, grad, "rec1.w", dr1 * d.gate.transpose());
  add_to(layout, grad, "rec1.b", dr1.rowwise().sum());
  const Mat dgate = net.view("rec1.w").transpose() * dr1;

  const auto embed = net.view("embed");
  Mat dphi(e.phi.rows(), e.phi.cols());
  Mat dembed = Mat::Zero(embed.rows(), embed.cols());
  for (int b = 0; b < batch.size(); ++b) {
    const int a = batch.actions[b];
    dphi.col(b) = dgate.col(b).cwiseProduct(embed.col(a));
    dembed.col(a) += dgate.col(b).cwiseProduct(e.phi.col(b));
  }
  add_to(layout, grad, "embed", dembed);
  if (!weights.stop_gradient) dphi += net.view("sr1.w").transpose() * dy1;

  // Encoder.
  add_to(layout, grad, "enc3.w", dphi * e.h2.transpose());
  add_to(layout, grad, "enc3.b", dphi.rowwise().sum());
  const Mat dz2 =
      (net.view("enc3.w").transpose() * dphi).cwiseProduct(relu_mask(e.z2));
  add_to(layout, grad, "enc2.w", dz2 * e.h1.transpose());
  add_to(layout, grad, "enc2.b", dz2.rowwise().sum());
  const Mat dz1 =
      (net.view("enc2.w").transpose() * dz2).cwiseProduct(relu_mask(e.z1));
  add_to(layout, grad, "enc1.w", dz1 * batch.obs.transpose());
  add_to(layout, grad, "enc1.b", dz1.rowwise().sum());
  return grad;
}

GradientCheckReport gradient_check(const SFNetwork& net,
                                   const SFNetwork& target,
                                   const TransitionBatch& batch, double gamma,
                                   double h, double floor) {
  check_batch(net, batch);
  const std::vector<double> analytic = backward(net, target, batch, gamma);
  const Mat target_values = sr_target(target, batch, gamma);
  SFNetwork probe = net;
  const Mat phi = encode(net, batch.obs).phi;

  // Residual of the one loss term a tensor can move, plus the ReLU masks on
  // its path: encoder -> reconstruction (the SR path is cut), SR head -> SR
  // loss, decoder and embedding -> reconstruction.
  struct Probe {
    Mat residual;
    std::vector<Mat> masks;
  };
  auto evaluate = [&](const std::string& name) {
    if (name.starts_with("enc")) {
      const EncoderPass e = encode(probe, batch.obs);
      const DecoderPass d = decode(probe, e.phi, batch.actions);
      return Probe{d.recon - batch.next_obs,
                   {relu_mask(e.z1), relu_mask(e.z2), relu_mask(d.r1)}};
    }
    if (name.starts_with("sr")) {
      const SrPass sp = sr_head(probe, phi);
      return Probe{target_values - sp.psi, {relu_mask(sp.y1)}};
    }
    const DecoderPass d = decode(probe, phi, batch.actions);
    return Probe{d.recon - batch.next_obs, {relu_mask(d.r1)}};
  };
  auto same_masks = [](const Probe& a, const Probe& b) {
    for (std::size_t i = 0; i < a.masks.size(); ++i)
      if (a.masks[i] != b.masks[i]) return false;
    return true;
  };
  // L(a) - L(b) for a mean-squared residual, accumulated per element so the
  // shared part of the two residuals cancels exactly.
  auto loss_difference = [](const Mat& a, const Mat& b) {
    return ((a - b).cwiseProduct(a + b)).sum() /
           static_cast<double>(a.rows() * a.cols());
  };

  GradientCheckReport report;
  for (const TensorSpec& t : net.tensors()) {
    GradientCheckEntry entry{t.name, 0.0, 0.0};
    const Probe base = evaluate(t.name);
    for (std::size_t i = t.offset; i < t.offset + t.size(); ++i) {
      const double original = probe.params()[i];
      // A ReLU kink within the step breaks the difference; shrink it.
      std::optional<double> numeric;
      double step = h;
      for (int attempt = 0; attempt < 5 && !numeric; ++attempt, step /= 10.0) {
        probe.params()[i] = original + step;
        const Probe plus = evaluate(t.name);
        probe.params()[i] = original - step;
        const Probe minus = evaluate(t.name);
        probe.params()[i] = original;
        if (same_masks(base, plus) && same_masks(base, minus)) {
          numeric = loss_difference(plus.residual, minus.residual) / (2.0 * step);
          if (attempt > 0) ++report.refined;
        }
      }
      if (!numeric) {
        ++report.skipped;
        continue;
      }
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(*numeric), floor});
      entry.max_relative_error =
          std::max(entry.max_relative_error, std::abs(a - *numeric) / denom);
      entry.max_abs_gradient = std::max(entry.max_abs_gradient, std::abs(a));
    }
    report.max_relative_error =
        std::max(report.max_relative_error, entry.max_relative_error);
    report.tensors.push_back(entry);
  }
  return report;
}

TransitionBatch random_transitions(const GridWorld& env, int count, Rng& rng) {
  const int obs = env.width() * env.height();
  TransitionBatch batch{Mat(obs, count), std::vector<int>(count),
                        Mat(obs, count)};
  for (int i = 0; i < count; ++i) {
    const StateId s = static_cast<StateId>(uniform_index(rng, env.n_states()));
    const int a = static_cast<int>(uniform_index(rng, kNumActions));
    const StateId next = step(env, s, a, rng);
    batch.obs.col(i) = render_pixels(env, s);
    batch.actions[i] = a;
    batch.next_obs.col(i) = render_pixels(env, next);
  }
  return batch;
}

TrainResult train(const GridWorld& env, const TrainConfig& config, Rng& rng) {
  SFNetworkDims dims{env.width() * env.height(), config.d, config.hidden,
                     kNumActions};
  SFNetwork initial = SFNetwork::initialized(dims, rng);
  return train_from(std::move(initial), env, config, rng);
}

TrainResult train_from(SFNetwork initial, const GridWorld& env,
                       const TrainConfig& config, Rng& rng) {
  if (config.batch < 1 || config.dataset_size < config.batch)
    throw std::invalid_argument("dataset must hold at least one batch");
  if (config.passes < 1 || config.sync_period < 1 || config.log_every < 1)
    throw std::invalid_argument("passes, sync period and log interval must be >= 1");
  if (!(config.lr >= 0.0)) throw std::invalid_argument("lr must be >= 0");
  if (!(config.gamma >= 0.0 && config.gamma < 1.0))
    throw std::invalid_argument("gamma must lie in [0, 1)");
  if (initial.dims().obs != env.width() * env.height())
    throw std::invalid_argument("network does not match the rendered size");

  // Uniform-random trajectory; observations are rendered per state once.
  const int n = env.n_states();
  Mat rendered(initial.dims().obs, n);
  for (StateId s = 0; s < n; ++s) rendered.col(s) = render_pixels(env, s);
  std::vector<StateId> from(config.dataset_size), to(config.dataset_size);
  std::vector<int> acts(config.dataset_size);
  StateId s = env.start();
  for (int i = 0; i < config.dataset_size; ++i) {
    const int a = static_cast<int>(uniform_index(rng, kNumActions));
    const StateId next = step(env, s, a, rng);
    from[i] = s;
    acts[i] = a;
    to[i] = next;
    s = next;
  }

  TrainResult result;
  result.net = std::move(initial);
  SFNetwork& net = result.net;
  TargetCopy target{net, config.sync_period};
  std::vector<double> cache(net.params().size(), 0.0);
  std::vector<int> order(config.dataset_size);
  std::iota(order.begin(), order.end(), 0);

  long step_count = 0;
  TransitionBatch batch;
  for (int pass = 0; pass < config.passes; ++pass) {
    for (int i = config.dataset_size - 1; i > 0; --i)
      std::swap(order[i], order[uniform_index(rng, i + 1)]);
    for (int begin = 0; begin < config.dataset_size; begin += config.batch) {
      const int size = std::min(config.batch, config.dataset_size - begin);
      batch.obs.resize(net.dims().obs, size);
      batch.next_obs.resize(net.dims().obs, size);
      batch.actions.resize(size);
      for (int b = 0; b < size; ++b) {
        const int k = order[begin + b];
        batch.obs.col(b) = rendered.col(from[k]);
        batch.next_obs.col(b) = rendered.col(to[k]);
        batch.actions[b] = acts[k];
      }

      Losses l;
      const std::vector<double> grad =
          backward(net, target.net, batch, config.gamma, config.weights, &l);
      if (!std::isfinite(l.total))
        throw TrainingDivergence(
            "non-finite loss at step " + std::to_string(step_count),
            step_count);
      if (step_count % config.log_every == 0) {
        const Mat phi = encode(net, batch.obs).phi;
        const Mat psi = sr_head(net, phi).psi;
        result.log.push_back({step_count, l.sr, l.re, l.total,
                              phi.colwise().norm().mean(),
                              psi.colwise().norm().mean()});
      }

      std::vector<double>& p = net.params();
      for (std::size_t i = 0; i < p.size(); ++i) {
        cache[i] = config.rms_decay * cache[i] +
                   (1.0 - config.rms_decay) * grad[i] * grad[i];
        p[i] -= config.lr * grad[i] / (std::sqrt(cache[i]) + config.rms_epsilon);
      }
      ++step_count;
      if (step_count % target.sync_period == 0) target.sync(net);
    }
  }
  result.steps = step_count;
  return result;
}

PsiMatrix build_psi_matrix(const SFNetwork& net, const GridWorld& env, int m,
                           Rng& rng) {
  if (m < 1) throw std::invalid_argument("psi matrix needs at least one row");
  const Mat phi = state_features(net, env);
  const Mat psi = sr_head(net, phi).psi;
  PsiMatrix out;
  out.rows.resize(m, net.dims().d);
  out.states.resize(m);
  StateId s = env.start();
  for (int t = 0; t < m; ++t) {
    out.rows.row(t) = psi.col(s).transpose();
    out.states[t] = s;
    s = step(env, s, static_cast<int>(uniform_index(rng, kNumActions)), rng);
  }
  return out;
}

std::vector<Eigenoption> deep_eigenoptions(const SFNetwork& net,
                                           const GridWorld& env, int k,
                                           int psi_samples,
                                           const OptionSolveSettings& settings,
                                           Rng& rng) {
  if (k < 0) throw std::invalid_argument("k must be non-negative");
  if (k == 0) return {};
  const PsiMatrix psi = build_psi_matrix(net, env, psi_samples, rng);
  const std::vector<Eigenpurpose> purposes =
      extract_eigenpurposes_from_samples(psi.rows, k);
  const Mat phi = state_features(net, env);
  std::vector<Eigenoption> out;
  out.reserve(purposes.size());
  for (const Eigenpurpose& p : purposes)
    out.push_back(solve_option_for_potential(env, p, phi.transpose() * p.vector,
                                             settings));
  return out;
}

namespace {

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(sizeof(T) == 8);
  std::uint64_t bits;
  std::memcpy(&bits, &value, 8);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8))
    throw std::runtime_error("truncated checkpoint");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  T value;
  std::memcpy(&value, &bits, 8);
  return value;
}

}  // namespace

void save_checkpoint(const SFNetwork& net, const std::filesystem::path& path) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    const SFNetworkDims& d = net.dims();
    for (int v : {d.obs, d.d, d.hidden, d.actions})
      write_le<std::uint64_t>(out, static_cast<std::uint64_t>(v));
    for (double p : net.params()) write_le<double>(out, p);
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

SFNetwork load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a network checkpoint: " + path.string());
  SFNetworkDims dims;
  dims.obs = static_cast<int>(read_le<std::uint64_t>(in));
  dims.d = static_cast<int>(read_le<std::uint64_t>(in));
  dims.hidden = static_cast<int>(read_le<std::uint64_t>(in));
  dims.actions = static_cast<int>(read_le<std::uint64_t>(in));
  SFNetwork net(dims);
  for (double& p : net.params()) p = read_le<double>(in);
  if (in.peek() != std::char_traits<char>::eof())
    throw std::runtime_error("trailing bytes in checkpoint");
  return net;
}

}  // namespace eigenopt
