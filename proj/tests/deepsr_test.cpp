#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "eigenopt/deepsr.hpp"
#include "test_util.hpp"

namespace eigenopt {
namespace {

using testing::layout;
using testing::open_grid;

SFNetworkDims small_dims(const GridWorld& env, int d = 4, int hidden = 8) {
  return {env.width() * env.height(), d, hidden, kNumActions};
}

Eigen::VectorXd relu(const Eigen::VectorXd& z) { return z.cwiseMax(0.0); }

// Independent forward pass straight from the tensor views.
ForwardResult manual_forward(const SFNetwork& net, const Eigen::VectorXd& x, int a) {
  auto layer = [&](const std::string& name, const Eigen::VectorXd& in) {
    return Eigen::VectorXd(net.view(name + ".w") * in + net.view(name + ".b"));
  };
  ForwardResult r;
  r.phi = layer("enc3", relu(layer("enc2", relu(layer("enc1", x)))));
  r.psi = layer("sr2", relu(layer("sr1", r.phi)));
  const Eigen::VectorXd gated = r.phi.cwiseProduct(net.view("embed").col(a));
  r.recon = layer("rec2", relu(layer("rec1", gated)));
  return r;
}

TEST(SFNetwork, TensorLayout) {
  const SFNetwork net(SFNetworkDims{9, 3, 5, 4});
  const std::vector<std::string> names{"enc1.w", "enc1.b", "enc2.w", "enc2.b",
                                       "enc3.w", "enc3.b", "sr1.w",  "sr1.b",
                                       "sr2.w",  "sr2.b",  "embed",  "rec1.w",
                                       "rec1.b", "rec2.w", "rec2.b"};
  ASSERT_EQ(net.tensors().size(), names.size());
  std::size_t offset = 0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    EXPECT_EQ(net.tensors()[i].name, names[i]);
    EXPECT_EQ(net.tensors()[i].offset, offset);
    offset += net.tensors()[i].size();
  }
  EXPECT_EQ(net.params().size(), offset);
  EXPECT_EQ(net.tensor("enc1.w").rows, 5);
  EXPECT_EQ(net.tensor("enc1.w").cols, 9);
  EXPECT_EQ(net.tensor("embed").rows, 3);
  EXPECT_EQ(net.tensor("embed").cols, 4);
  EXPECT_EQ(net.tensor("rec2.w").rows, 9);
  EXPECT_THROW(net.tensor("nope"), std::out_of_range);
  EXPECT_THROW(SFNetwork(SFNetworkDims{0, 1, 1, 4}), std::invalid_argument);
}

TEST(SFNetwork, GlorotInitialisation) {
  Rng rng(3);
  const SFNetwork net = SFNetwork::initialized({100, 32, 64, 4}, rng);
  for (const TensorSpec& t : net.tensors()) {
    const Eigen::Map<const Eigen::MatrixXd> v = net.view(t.name);
    if (t.name.ends_with(".b")) {
      EXPECT_EQ(v.cwiseAbs().maxCoeff(), 0.0) << t.name;
      continue;
    }
    const double bound = std::sqrt(6.0 / (t.rows + t.cols));
    EXPECT_LE(v.cwiseAbs().maxCoeff(), bound) << t.name;
    EXPECT_GT(v.cwiseAbs().maxCoeff(), 0.8 * bound) << t.name;
  }
}

TEST(Forward, ZeroWeightsGiveZeroOutputs) {
  const GridWorld env = layout("corridor.txt");
  const SFNetwork net(small_dims(env));
  const ForwardResult r = forward(net, render_pixels(env, 0), 1);
  EXPECT_EQ(r.phi.size(), 4);
  EXPECT_EQ(r.psi.size(), 4);
  EXPECT_EQ(r.recon.size(), 2);
  EXPECT_EQ(r.phi.cwiseAbs().sum() + r.psi.cwiseAbs().sum() + r.recon.cwiseAbs().sum(), 0.0);
}

TEST(Forward, MatchesManualComputation) {
  const GridWorld env = layout("rooms.txt");
  Rng rng(4);
  SFNetwork net = SFNetwork::initialized(small_dims(env, 6, 10), rng);
  for (double& p : net.params()) p += 0.01;  // non-zero biases too
  for (StateId s : {0, 50, 103})
    for (int a = 0; a < kNumActions; ++a) {
      const Eigen::VectorXd x = render_pixels(env, s);
      const ForwardResult got = forward(net, x, a);
      const ForwardResult want = manual_forward(net, x, a);
      EXPECT_LE((got.phi - want.phi).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LE((got.psi - want.psi).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LE((got.recon - want.recon).cwiseAbs().maxCoeff(), 1e-12);
    }
  EXPECT_THROW(forward(net, Eigen::VectorXd::Zero(3), 0), std::invalid_argument);
}

TEST(Forward, ZeroEmbeddingHidesTheAction) {
  const GridWorld env = layout("rooms.txt");
  Rng rng(5);
  SFNetwork net = SFNetwork::initialized(small_dims(env), rng);
  net.view("embed").setZero();
  const Eigen::VectorXd x = render_pixels(env, 7);
  const Eigen::VectorXd bias_only = relu(Eigen::VectorXd(net.view("rec1.b")));
  const Eigen::VectorXd expected =
      net.view("rec2.w") * bias_only + Eigen::VectorXd(net.view("rec2.b"));
  for (int a = 0; a < kNumActions; ++a)
    EXPECT_LE((forward(net, x, a).recon - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Losses, ZeroNetworkWithZeroTargetsHasZeroSrLoss) {
  const GridWorld env = layout("rooms.txt");
  const SFNetwork net(small_dims(env));
  Rng rng(1);
  const TransitionBatch batch = random_transitions(env, 16, rng);
  const Losses l = losses(net, net, batch, 0.9);
  EXPECT_EQ(l.sr, 0.0);
  // Reconstruction of zeros against the next frames.
  EXPECT_NEAR(l.re, batch.next_obs.squaredNorm() / batch.next_obs.size(), 1e-15);
}

TEST(Losses, IndependentOracle) {
  const GridWorld env = layout("rooms.txt");
  Rng rng(6);
  const SFNetwork net = SFNetwork::initialized(small_dims(env, 5, 7), rng);
  const SFNetwork target = SFNetwork::initialized(small_dims(env, 5, 7), rng);
  const TransitionBatch batch = random_transitions(env, 10, rng);
  const double gamma = 0.7;
  double sr = 0.0, re = 0.0;
  for (int b = 0; b < batch.size(); ++b) {
    const ForwardResult now = manual_forward(net, batch.obs.col(b), batch.actions[b]);
    const ForwardResult tgt_s = manual_forward(target, batch.obs.col(b), 0);
    const ForwardResult tgt_next = manual_forward(target, batch.next_obs.col(b), 0);
    sr += (tgt_s.phi + gamma * tgt_next.psi - now.psi).squaredNorm();
    re += (now.recon - batch.next_obs.col(b)).squaredNorm();
  }
  sr /= batch.size() * 5.0;
  re /= static_cast<double>(batch.next_obs.size());
  const Losses l = losses(net, target, batch, gamma, {2.0, 0.5, true});
  EXPECT_NEAR(l.sr, sr, 1e-12);
  EXPECT_NEAR(l.re, re, 1e-12);
  EXPECT_NEAR(l.total, 2.0 * re + 0.5 * sr, 1e-12);
}

TEST(Losses, GammaZeroRegressesOntoFeatures) {
  const GridWorld env = layout("rooms.txt");
  Rng rng(7);
  SFNetwork net = SFNetwork::initialized(small_dims(env), rng);
  net.view("sr2.w").setZero();
  const TransitionBatch batch = random_transitions(env, 8, rng);
  double expected = 0.0;
  for (int b = 0; b < batch.size(); ++b)
    expected += manual_forward(net, batch.obs.col(b), 0).phi.squaredNorm();
  expected /= batch.size() * 4.0;
  EXPECT_NEAR(losses(net, net, batch, 0.0).sr, expected, 1e-12);
}

TEST(Losses, RiggedPerfectReconstruction) {
  // A decoder that ignores its input and outputs the only possible next
  // frame: a 1x1 world.
  const GridWorld env = load_layout("S\n");
  SFNetwork net(SFNetworkDims{1, 2, 3, kNumActions});
  net.view("rec2.b")(0, 0) = 0.5;
  Rng rng(1);
  const TransitionBatch batch = random_transitions(env, 4, rng);
  EXPECT_EQ(losses(net, net, batch, 0.9).re, 0.0);
}

TEST(Backward, PassesGradientCheck) {
  const GridWorld env = layout("rooms.txt");
  for (std::uint64_t seed : {1, 2, 3}) {
    Rng rng(seed);
    const SFNetwork net = SFNetwork::initialized(small_dims(env, 6, 12), rng);
    const SFNetwork target = SFNetwork::initialized(small_dims(env, 6, 12), rng);
    const TransitionBatch batch = random_transitions(env, 8, rng);
    const GradientCheckReport report = gradient_check(net, target, batch, 0.9);
    EXPECT_LE(report.max_relative_error, 1e-4) << "seed " << seed;
    EXPECT_EQ(report.tensors.size(), net.tensors().size());
  }
}

TEST(Backward, StopGradientKeepsSrOutOfTheEncoder) {
  const GridWorld env = layout("rooms.txt");
  Rng rng(9);
  const SFNetwork net = SFNetwork::initialized(small_dims(env), rng);
  const TransitionBatch batch = random_transitions(env, 8, rng);
  const std::vector<double> grad = backward(net, net, batch, 0.9, {0.0, 1.0, true});
  for (const TensorSpec& t : net.tensors()) {
    double mag = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) mag += std::abs(grad[t.offset + i]);
    const bool sr_head = t.name.starts_with("sr");
    if (sr_head)
      EXPECT_GT(mag, 0.0) << t.name;
    else
      EXPECT_EQ(mag, 0.0) << t.name;
  }
  // Without the stop, the encoder does receive SR gradient.
  const std::vector<double> open = backward(net, net, batch, 0.9, {0.0, 1.0, false});
  const TensorSpec& enc = net.tensor("enc3.w");
  double mag = 0.0;
  for (std::size_t i = 0; i < enc.size(); ++i) mag += std::abs(open[enc.offset + i]);
  EXPECT_GT(mag, 0.0);
}

TEST(Backward, TargetIsNotModified) {
  const GridWorld env = layout("rooms.txt");
  Rng rng(10);
  const SFNetwork net = SFNetwork::initialized(small_dims(env), rng);
  const SFNetwork target = SFNetwork::initialized(small_dims(env), rng);
  const std::vector<double> before = target.params();
  const TransitionBatch batch = random_transitions(env, 8, rng);
  backward(net, target, batch, 0.9);
  EXPECT_EQ(target.params(), before);
}

TEST(Backward, RejectsMalformedBatches) {
  const GridWorld env = layout("corridor.txt");
  const SFNetwork net(small_dims(env));
  TransitionBatch batch{Eigen::MatrixXd::Zero(2, 1), {4}, Eigen::MatrixXd::Zero(2, 1)};
  EXPECT_THROW(backward(net, net, batch, 0.9), std::invalid_argument);
  batch.actions = {};
  EXPECT_THROW(backward(net, net, batch, 0.9), std::invalid_argument);
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.dataset_size = 500;
  c.passes = 2;
  c.batch = 16;
  c.sync_period = 10;
  c.d = 4;
  c.hidden = 8;
  c.log_every = 5;
  c.lr = 1e-3;
  return c;
}

TEST(Train, ZeroLearningRateLeavesWeights) {
  const GridWorld env = layout("rooms.txt");
  Rng init(1);
  const SFNetwork start = SFNetwork::initialized(small_dims(env), init);
  TrainConfig c = tiny_config();
  c.lr = 0.0;
  Rng rng(2);
  const TrainResult r = train_from(start, env, c, rng);
  EXPECT_EQ(r.net.params(), start.params());
  EXPECT_EQ(r.steps, 2 * 32);  // 500 / 16 rounded up, twice
  EXPECT_EQ(r.log.size(), 13u);
}

TEST(Train, CorridorReconstructionImproves) {
  const GridWorld env = layout("corridor.txt");
  TrainConfig c = tiny_config();
  c.dataset_size = 10000;
  c.passes = 1;
  c.batch = 1;
  c.lr = 1e-3;
  c.log_every = 100;
  Rng rng(3);
  const TrainResult r = train(env, c, rng);
  ASSERT_GE(r.log.size(), 2u);
  const auto mean_re = [&](std::size_t begin, std::size_t end) {
    double total = 0.0;
    for (std::size_t i = begin; i < end; ++i) total += r.log[i].re;
    return total / static_cast<double>(end - begin);
  };
  EXPECT_LT(mean_re(r.log.size() - 10, r.log.size()), mean_re(0, 10));
}

TEST(Train, SrOnlyTrainingFreezesTheEncoder) {
  const GridWorld env = layout("rooms.txt");
  TrainConfig c = tiny_config();
  c.weights = {0.0, 1.0, true};
  Rng init(4), rng(5);
  const SFNetwork start = SFNetwork::initialized(small_dims(env), init);
  const TrainResult r = train_from(start, env, c, rng);
  for (const std::string name : {"enc1.w", "enc1.b", "enc2.w", "enc3.w", "enc3.b", "embed"})
    EXPECT_EQ(Eigen::MatrixXd(r.net.view(name)), Eigen::MatrixXd(start.view(name))) << name;
  EXPECT_NE(Eigen::MatrixXd(r.net.view("sr2.w")), Eigen::MatrixXd(start.view("sr2.w")));
}

TEST(Train, TargetSyncPeriodMatters) {
  const GridWorld env = layout("rooms.txt");
  TrainConfig slow = tiny_config();
  slow.sync_period = 1000000;
  TrainConfig fast = tiny_config();
  fast.sync_period = 1;
  Rng a(6), b(6);
  const TrainResult rs = train(env, slow, a);
  const TrainResult rf = train(env, fast, b);
  // Identical data and order; only target freshness differs.
  EXPECT_EQ(rs.log.front().total, rf.log.front().total);
  EXPECT_NE(rs.net.params(), rf.net.params());
}

TEST(Train, ZeroIsAFixedPointOfTheSrLossAlone) {
  // Without reconstruction and without the stop, the all-zero network has
  // zero SR loss and zero gradient, so training never leaves it.
  const GridWorld env = layout("rooms.txt");
  TrainConfig c = tiny_config();
  c.weights = {0.0, 1.0, false};
  Rng rng(7);
  const SFNetwork zero(small_dims(env));
  const TrainResult r = train_from(zero, env, c, rng);
  EXPECT_EQ(r.net.params(), zero.params());
  for (const LossRecord& rec : r.log) {
    EXPECT_EQ(rec.sr, 0.0);
    EXPECT_EQ(rec.phi_norm, 0.0);
    EXPECT_EQ(rec.psi_norm, 0.0);
  }
}

TEST(Train, StopGradientOffLetsSrReachTheEncoder) {
  const GridWorld env = layout("rooms.txt");
  TrainConfig c = tiny_config();
  c.weights = {0.0, 1.0, false};
  Rng init(4), rng(5);
  const SFNetwork start = SFNetwork::initialized(small_dims(env), init);
  const TrainResult r = train_from(start, env, c, rng);
  EXPECT_NE(Eigen::MatrixXd(r.net.view("enc3.w")), Eigen::MatrixXd(start.view("enc3.w")));
}

TEST(Train, LogsAreReproducible) {
  const GridWorld env = layout("rooms.txt");
  Rng a(8), b(8);
  const TrainResult ra = train(env, tiny_config(), a);
  const TrainResult rb = train(env, tiny_config(), b);
  ASSERT_EQ(ra.log.size(), rb.log.size());
  for (std::size_t i = 0; i < ra.log.size(); ++i) {
    EXPECT_EQ(ra.log[i].step, rb.log[i].step);
    EXPECT_EQ(ra.log[i].total, rb.log[i].total);
    EXPECT_EQ(ra.log[i].phi_norm, rb.log[i].phi_norm);
  }
  EXPECT_EQ(ra.net.params(), rb.net.params());
}

TEST(Train, ValidatesConfig) {
  const GridWorld env = layout("rooms.txt");
  Rng rng(1);
  TrainConfig c = tiny_config();
  c.dataset_size = 4;
  EXPECT_THROW(train(env, c, rng), std::invalid_argument);
  c = tiny_config();
  c.gamma = 1.0;
  EXPECT_THROW(train(env, c, rng), std::invalid_argument);
  EXPECT_THROW(train_from(SFNetwork({3, 2, 2, 4}), env, tiny_config(), rng),
               std::invalid_argument);
}

TEST(Train, DivergenceIsReported) {
  const GridWorld env = layout("rooms.txt");
  Rng init(1);
  SFNetwork net = SFNetwork::initialized(small_dims(env), init);
  net.params()[0] = std::numeric_limits<double>::infinity();
  Rng rng(2);
  EXPECT_THROW(train_from(net, env, tiny_config(), rng), TrainingDivergence);
}

TEST(PsiMatrix, SingleRowIsTheStartState) {
  const GridWorld env = layout("rooms.txt");
  Rng init(1), rng(2);
  const SFNetwork net = SFNetwork::initialized(small_dims(env), init);
  const PsiMatrix m = build_psi_matrix(net, env, 1, rng);
  ASSERT_EQ(m.rows.rows(), 1);
  EXPECT_EQ(m.states, std::vector<StateId>{env.start()});
  const Eigen::VectorXd expected = forward(net, render_pixels(env, env.start()), 0).psi;
  EXPECT_LE((m.rows.row(0).transpose() - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(build_psi_matrix(net, env, 0, rng), std::invalid_argument);
}

TEST(PsiMatrix, RepeatedStatesGiveRepeatedRows) {
  const GridWorld env = layout("rooms.txt");
  Rng init(1), rng(3);
  const SFNetwork net = SFNetwork::initialized(small_dims(env), init);
  const PsiMatrix m = build_psi_matrix(net, env, 300, rng);
  ASSERT_EQ(m.states.size(), 300u);
  for (std::size_t i = 1; i < m.states.size(); ++i) {
    EXPECT_LE(cell_distance(env, m.states[i - 1], m.states[i]), 1);
    for (std::size_t j = 0; j < i; ++j)
      if (m.states[i] == m.states[j]) {
        EXPECT_EQ(m.rows.row(i), m.rows.row(j));
        break;
      }
  }
}

TEST(DeepEigenoptions, CountsAndPotentials) {
  const GridWorld env = layout("rooms.txt");
  Rng init(1), rng(2);
  const SFNetwork net = SFNetwork::initialized(small_dims(env), init);
  EXPECT_TRUE(deep_eigenoptions(net, env, 0, 200, {}, rng).empty());
  const std::vector<Eigenoption> opts = deep_eigenoptions(net, env, 2, 500, {}, rng);
  ASSERT_EQ(opts.size(), 4u);
  const Eigen::MatrixXd phi = state_features(net, env);
  for (const Eigenoption& o : opts) {
    EXPECT_EQ(o.purpose.vector.size(), 4);
    EXPECT_LE((o.potential - phi.transpose() * o.purpose.vector).cwiseAbs().maxCoeff(),
              1e-12);
  }
  EXPECT_LE((opts[0].potential + opts[1].potential).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Checkpoint, RoundTrip) {
  const GridWorld env = layout("rooms.txt");
  Rng init(11);
  const SFNetwork net = SFNetwork::initialized(small_dims(env, 3, 5), init);
  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / "eigenopt_checkpoint_test.bin";
  save_checkpoint(net, path);
  const SFNetwork back = load_checkpoint(path);
  EXPECT_EQ(back.dims(), net.dims());
  EXPECT_EQ(back.params(), net.params());
  EXPECT_EQ(std::filesystem::file_size(path), 8 + 4 * 8 + 8 * net.params().size());

  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out.put('x');
  }
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
  {
    std::ofstream out(path, std::ios::binary);
    out << "garbage!";
  }
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace eigenopt
