#include "eigenopt/commands.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <ostream>

#include "eigenopt/config.hpp"
#include "eigenopt/csv.hpp"
#include "eigenopt/deepsr.hpp"
#include "eigenopt/eval.hpp"
#include "eigenopt/spectral.hpp"
#include "eigenopt/sr.hpp"

namespace eigenopt {

namespace {

namespace fs = std::filesystem;

// Seed streams, so each stage draws from its own generator.
enum Stream : std::uint64_t {
  kStreamSr = 1,
  kStreamDiffusion = 2,
  kStreamControl = 3,
  kStreamDeepInit = 4,
  kStreamDeepTrain = 5,
  kStreamDeepPsi = 6,
  kStreamGradCheck = 7,
};

class StageFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Setup {
  ExperimentConfig config;
  GridWorld env;
};

// Loads, resolves and validates the config, then writes it into the output
// directory. Throws ConfigError or LayoutError.
Setup prepare(const CommandOptions& options) {
  ExperimentConfig config;
  std::vector<fs::path> bases;
  if (options.config) {
    config = load_config(*options.config);
    bases.push_back(fs::absolute(*options.config).parent_path());
  }
  bases.push_back(EIGENOPT_LAYOUT_DIR);
  if (options.seed) config.seed = *options.seed;
  validate_config(config);
  resolve_paths(config, bases);
  GridWorld env = load_layout_file(config.layout);
  if (options.out.empty()) throw ConfigError("--out is required");
  fs::create_directories(options.out);
  fs::remove(options.out / "FAILED");
  write_file_atomic(options.out / "config.txt", serialize_config(config));
  return {std::move(config), std::move(env)};
}

void run_stage(const fs::path& out, const std::string& name,
               std::ostream& log, const std::function<void()>& body) {
  log << "[" << name << "]\n";
  try {
    body();
  } catch (const std::exception& e) {
    write_file_atomic(out / "FAILED", "stage " + name + ": " + e.what() +
                                          "\nartifacts in this directory are "
                                          "partial\n");
    throw StageFailure("stage " + name + " failed: " + e.what());
  }
}

// Shared exit-code mapping around a command body.
int guarded(const CommandOptions& options, std::ostream& log,
            const std::function<int(Setup&)>& body) {
  Setup setup{ExperimentConfig{}, GridWorld(1, 1, {false}, {0, 0})};
  try {
    setup = prepare(options);
  } catch (const std::exception& e) {
    log << "validation error: " << e.what() << "\n";
    return kExitValidation;
  }
  try {
    return body(setup);
  } catch (const StageFailure& e) {
    log << e.what() << "\n";
    return kExitStage;
  }
}

std::string yes_no(bool v) { return v ? "true" : "false"; }

CsvTable grid_header(const GridWorld& env, std::vector<std::string> leading) {
  CsvTable t;
  t.header = std::move(leading);
  for (int c = 0; c < env.width(); ++c) t.header.push_back("c" + std::to_string(c));
  return t;
}

// Eigenvectors as per-state columns, with cell coordinates for plotting.
CsvTable eigenvector_grid(const GridWorld& env, const Spectrum& spectrum) {
  CsvTable t;
  t.header = {"state", "row", "col"};
  for (int i = 0; i < spectrum.size(); ++i) t.header.push_back("e" + std::to_string(i));
  for (StateId s = 0; s < env.n_states(); ++s) {
    const Cell c = env.cell_of(s);
    std::vector<std::string> row = {format_number(s), format_number(c.row),
                                    format_number(c.col)};
    for (int i = 0; i < spectrum.size(); ++i)
      row.push_back(format_number(spectrum.eigenvectors(s, i)));
    t.add_row(std::move(row));
  }
  return t;
}

// Greedy action letters per cell, T for terminal, X for wall.
CsvTable policy_maps(const GridWorld& env,
                     const std::vector<Eigenoption>& options) {
  CsvTable t = grid_header(env, {"option", "source_index", "sign", "row"});
  for (std::size_t o = 0; o < options.size(); ++o) {
    for (int r = 0; r < env.height(); ++r) {
      std::vector<std::string> row = {
          format_number(static_cast<int>(o)),
          format_number(options[o].purpose.source_index),
          format_number(options[o].purpose.sign), format_number(r)};
      for (int c = 0; c < env.width(); ++c) {
        const StateId s = env.state_of({r, c});
        if (s < 0)
          row.emplace_back("X");
        else if (options[o].terminates(s))
          row.emplace_back("T");
        else
          row.emplace_back(1, action_letter(options[o].policy[s]));
      }
      t.add_row(std::move(row));
    }
  }
  return t;
}

std::vector<Eigenoption> first(const std::vector<Eigenoption>& all, int k) {
  return {all.begin(), all.begin() + std::min<std::size_t>(k, all.size())};
}

int max_count(const std::vector<int>& counts) {
  return counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
}

// Options in eigenvalue order, both signs per index, enough for `count`.
std::vector<Eigenoption> sr_options(const GridWorld& env,
                                    const Eigen::MatrixXd& psi, int count,
                                    double gamma_o) {
  if (count == 0) return {};
  const int indices = std::min((count + 1) / 2, env.n_states());
  return first(solve_options(env, extract_eigenpurposes(psi, indices),
                             {gamma_o}),
               count);
}

std::vector<Eigenoption> pvf_options(const GridWorld& env,
                                     const Eigen::MatrixXd& laplacian,
                                     int count, double gamma_o) {
  if (count == 0) return {};
  const int indices = std::min((count + 1) / 2, env.n_states());
  return first(solve_options(env, pvf_eigenpurposes(laplacian, indices),
                             {gamma_o}),
               count);
}

DiffusionSettings diffusion_settings(const ExperimentConfig& c) {
  DiffusionSettings s;
  s.mode = c.diffusion_mode == "exact" ? DiffusionMode::exact
                                       : DiffusionMode::monte_carlo;
  s.pairs = c.diffusion_pairs;
  return s;
}

}  // namespace

int cmd_theorem_check(const CommandOptions& options, std::ostream& log) {
  return guarded(options, log, [&](Setup& setup) {
    TheoremReport report;
    run_stage(options.out, "theorem", log, [&] {
      report = verify_pvf_sr_equivalence(weight_matrix(setup.env),
                                         setup.config.sr_gamma);
      CsvTable t;
      t.header = {"sr_index",          "pvf_index",           "sr_eigenvalue",
                  "mapped_eigenvalue", "laplacian_eigenvalue", "eigenvalue_residual",
                  "degenerate",        "group_size",          "cosine",
                  "principal_angle"};
      for (const TheoremRow& r : report.rows)
        t.add_row({format_number(r.sr_index), format_number(r.pvf_index),
                   format_number(r.sr_eigenvalue),
                   format_number(r.mapped_eigenvalue),
                   format_number(r.laplacian_eigenvalue),
                   format_number(r.eigenvalue_residual), yes_no(r.degenerate),
                   format_number(r.group_size), format_number(r.cosine),
                   format_number(r.principal_angle)});
      write_csv(options.out / "theorem.csv", t);

      CsvTable summary;
      summary.header = {"metric", "value"};
      summary.add_row({"max_eigenvalue_residual",
                       format_number(report.max_eigenvalue_residual)});
      summary.add_row({"min_simple_cosine",
                       format_number(report.min_simple_cosine)});
      summary.add_row({"max_principal_angle",
                       format_number(report.max_principal_angle)});
      summary.add_row({"max_rescale_deviation",
                       format_number(report.max_rescale_deviation)});
      summary.add_row({"passed", yes_no(report.passed())});
      write_csv(options.out / "theorem_summary.csv", summary);
    });
    log << "max eigenvalue residual " << report.max_eigenvalue_residual
        << ", min simple cosine " << report.min_simple_cosine
        << ", max principal angle " << report.max_principal_angle << "\n";
    return report.passed() ? kExitOk : kExitThreshold;
  });
}

int cmd_pipeline(const CommandOptions& options, std::ostream& log) {
  return guarded(options, log, [&](Setup& setup) {
    const ExperimentConfig& c = setup.config;
    const GridWorld& env = setup.env;
    const fs::path& out = options.out;
    if (max_count(c.option_counts) > 2 * env.n_states() ||
        max_count(c.control_option_counts) > 2 * env.n_states()) {
      log << "validation error: option count exceeds 2 * n_states ("
          << 2 * env.n_states() << ")\n";
      return kExitValidation;
    }
    const Policy policy = uniform_policy(env);
    const int grid_k = std::min(8, env.n_states());

    // SR estimates at each checkpoint plus the exact SR and the Laplacian.
    std::map<int, Eigen::MatrixXd> estimates;
    Eigen::MatrixXd exact;
    LaplacianPair lap;
    run_stage(out, "sr", log, [&] {
      exact = closed_form_sr(transition_kernel(env, policy), c.sr_gamma);
      lap = normalized_laplacian(weight_matrix(env));
      std::vector<int> checkpoints = c.sr_checkpoints;
      checkpoints.push_back(c.option_checkpoint);
      std::sort(checkpoints.begin(), checkpoints.end());
      checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()),
                        checkpoints.end());

      Rng rng(mix_seed(c.seed, kStreamSr));
      SRTable table = SRTable::zeros(env.n_states(), c.sr_gamma, c.sr_eta);
      // Visit counts only grow, so rows past the threshold at the first
      // checkpoint stay past it and give a common set across checkpoints.
      CsvTable errors;
      errors.header = {"episodes", "relative_error_common", "relative_error_visited"};
      std::vector<StateId> common;
      for (int cp : checkpoints) {
        extend_sr(table, env, policy, cp - static_cast<int>(table.episodes_seen),
                  c.sr_episode_len, rng);
        estimates[cp] = table.psi;
        if (common.empty()) common = visited_states(table, 100);
        // Short runs may leave no row past the threshold; report nan then.
        const auto error_on = [&](const std::vector<StateId>& rows) {
          return rows.empty() ? std::numeric_limits<double>::quiet_NaN()
                              : sr_relative_error(table.psi, exact, rows);
        };
        errors.add_row({format_number(cp), format_number(error_on(common)),
                        format_number(error_on(visited_states(table, 100)))});
        write_csv(out / ("sr_" + std::to_string(cp) + ".csv"),
                  matrix_table(table.psi));
        write_csv(out / ("eigenvectors_sr_" + std::to_string(cp) + ".csv"),
                  eigenvector_grid(env, eigendecompose(table.psi, grid_k)));
      }
      write_csv(out / "sr_error.csv", errors);
      write_csv(out / "sr_exact.csv", matrix_table(exact));
      write_csv(out / "eigenvectors_exact.csv",
                eigenvector_grid(env, eigendecompose(exact, grid_k)));
      const Eigen::MatrixXd shifted =
          2.0 * Eigen::MatrixXd::Identity(env.n_states(), env.n_states()) -
          lap.laplacian;
      write_csv(out / "eigenvectors_pvf.csv",
                eigenvector_grid(env, eigendecompose(shifted, grid_k)));
    });

    // Option sets per source, large enough for the whole sweep.
    const int sweep_max = max_count(c.option_counts);
    std::vector<std::pair<std::string, std::vector<Eigenoption>>> sources;
    run_stage(out, "options", log, [&] {
      for (const auto& [cp, psi] : estimates)
        sources.emplace_back("sr_" + std::to_string(cp),
                             sr_options(env, psi, sweep_max, c.option_gamma));
      sources.emplace_back("exact", sr_options(env, exact, sweep_max, c.option_gamma));
      sources.emplace_back("pvf", pvf_options(env, lap.laplacian, sweep_max,
                                              c.option_gamma));
      for (const auto& [name, opts] : sources)
        write_csv(out / ("policies_" + name + ".csv"),
                  policy_maps(env, first(opts, 8)));
    });

    run_stage(out, "diffusion", log, [&] {
      Rng rng(mix_seed(c.seed, kStreamDiffusion));
      CsvTable t;
      t.header = {"option_count"};
      for (const auto& [name, opts] : sources) t.header.push_back(name);
      for (int k : c.option_counts) {
        std::vector<std::string> row = {format_number(k)};
        for (const auto& [name, opts] : sources)
          row.push_back(format_number(
              diffusion_time(env, first(opts, k), diffusion_settings(c), rng)));
        t.add_row(std::move(row));
        log << "  diffusion with " << k << " options done\n";
      }
      write_csv(out / "diffusion.csv", t);
    });

    run_stage(out, "control", log, [&] {
      ControlConfig cc;
      cc.alpha = c.control_alpha;
      cc.gamma = c.control_gamma;
      cc.n_episodes = c.control_episodes;
      cc.episode_len = c.control_episode_len;
      cc.n_runs = c.control_runs;
      cc.evaluation = c.control_evaluation == "greedy" ? ControlEvaluation::greedy
                                                       : ControlEvaluation::behavior;
      CsvTable auc;
      auc.header = {"layout", "option_count", "auc"};
      for (const fs::path& path : c.control_layouts) {
        const GridWorld task = load_layout_file(path);
        if (!task.goal())
          throw std::invalid_argument("control layout has no goal: " + path.string());
        if (task.n_states() != env.n_states())
          throw std::invalid_argument("control layout differs in size: " +
                                      path.string());
        const Policy task_policy = uniform_policy(task);
        const int needed = max_count(c.control_option_counts);
        std::vector<LearningCurve> sums(c.control_option_counts.size());
        for (auto& s : sums) s.returns.assign(c.control_episodes, 0.0);

        Rng rng(mix_seed(c.seed, kStreamControl));
        for (int seed = 0; seed < c.control_sr_seeds; ++seed) {
          Rng sr_rng(rng());
          const SRTable table =
              learn_sr(task, task_policy,
                       {c.option_checkpoint, c.sr_episode_len, c.sr_eta, c.sr_gamma},
                       sr_rng);
          const auto opts = sr_options(task, table.psi, needed, c.option_gamma);
          const std::uint64_t control_seed = rng();
          for (std::size_t i = 0; i < c.control_option_counts.size(); ++i) {
            Rng control_rng(control_seed);
            const LearningCurve curve = q_learning_control(
                task, first(opts, c.control_option_counts[i]), cc, control_rng);
            for (int e = 0; e < c.control_episodes; ++e)
              sums[i].returns[e] += curve.returns[e] / c.control_sr_seeds;
          }
        }

        CsvTable t;
        t.header = {"episode"};
        for (int k : c.control_option_counts)
          t.header.push_back("options_" + std::to_string(k));
        for (int e = 0; e < c.control_episodes; ++e) {
          std::vector<std::string> row = {format_number(e)};
          for (const auto& s : sums) row.push_back(format_number(s.returns[e]));
          t.add_row(std::move(row));
        }
        const std::string stem = path.stem().string();
        write_csv(out / ("control_" + stem + ".csv"), t);
        for (std::size_t i = 0; i < sums.size(); ++i)
          auc.add_row({stem, format_number(c.control_option_counts[i]),
                       format_number(sums[i].area())});
        log << "  control on " << stem << " done\n";
      }
      write_csv(out / "control_auc.csv", auc);
    });
    return kExitOk;
  });
}

int cmd_deep(const CommandOptions& options, std::ostream& log) {
  return guarded(options, log, [&](Setup& setup) {
    const ExperimentConfig& c = setup.config;
    const GridWorld& env = setup.env;
    const fs::path& out = options.out;
    if (c.deep_options > 2 * env.n_states()) {
      log << "validation error: deep.options exceeds 2 * n_states\n";
      return kExitValidation;
    }
    TrainConfig tc;
    tc.dataset_size = c.deep_dataset;
    tc.passes = c.deep_passes;
    tc.lr = c.deep_lr;
    tc.gamma = c.sr_gamma;
    tc.batch = c.deep_batch;
    tc.sync_period = c.deep_sync_period;
    tc.d = c.deep_d;
    tc.hidden = c.deep_hidden;
    const SFNetworkDims dims{env.width() * env.height(), c.deep_d, c.deep_hidden,
                             kNumActions};
    Rng init_rng(mix_seed(c.seed, kStreamDeepInit));
    const SFNetwork initial = SFNetwork::initialized(dims, init_rng);

    double gradient_error = 0.0;
    run_stage(out, "gradient-check", log, [&] {
      Rng rng(mix_seed(c.seed, kStreamGradCheck));
      const SFNetwork target = SFNetwork::initialized(dims, rng);
      const TransitionBatch batch =
          random_transitions(env, c.deep_gradcheck_samples, rng);
      const GradientCheckReport report =
          gradient_check(initial, target, batch, c.sr_gamma);
      CsvTable t;
      t.header = {"tensor", "max_relative_error", "max_abs_gradient"};
      for (const auto& e : report.tensors)
        t.add_row({e.tensor, format_number(e.max_relative_error),
                   format_number(e.max_abs_gradient)});
      t.add_row({"all", format_number(report.max_relative_error), ""});
      write_csv(out / "gradient_check.csv", t);
      gradient_error = report.max_relative_error;
      if (report.skipped > 0)
        log << "  " << report.skipped << " parameters skipped at ReLU kinks\n";
      log << "  max relative error " << gradient_error << "\n";
    });

    TrainResult trained;
    run_stage(out, "train", log, [&] {
      Rng rng(mix_seed(c.seed, kStreamDeepTrain));
      try {
        trained = train_from(initial, env, tc, rng);
      } catch (const TrainingDivergence& e) {
        throw std::runtime_error("training diverged at step " +
                                 std::to_string(e.step()));
      }
      CsvTable t;
      t.header = {"step", "sr_loss", "re_loss", "total_loss", "phi_norm", "psi_norm"};
      for (const LossRecord& r : trained.log)
        t.add_row({format_number(r.step), format_number(r.sr), format_number(r.re),
                   format_number(r.total), format_number(r.phi_norm),
                   format_number(r.psi_norm)});
      write_csv(out / "loss_log.csv", t);
      save_checkpoint(trained.net, out / "network.bin");
    });

    run_stage(out, "comparison", log, [&] {
      const bool degenerate = trained.net.params() == initial.params();
      OptionSolveSettings settings{c.option_gamma};
      Rng psi_rng(mix_seed(c.seed, kStreamDeepPsi));
      const auto trained_opts = deep_eigenoptions(
          trained.net, env, (c.deep_options + 1) / 2, c.deep_psi_samples,
          settings, psi_rng);
      Rng psi_rng_untrained(mix_seed(c.seed, kStreamDeepPsi));
      const auto untrained_opts =
          deep_eigenoptions(initial, env, (c.deep_options + 1) / 2,
                            c.deep_psi_samples, settings, psi_rng_untrained);
      const Eigen::MatrixXd exact =
          closed_form_sr(transition_kernel(env, uniform_policy(env)), c.sr_gamma);
      const auto tabular = sr_options(env, exact, c.deep_options, c.option_gamma);

      CsvTable t;
      t.header = {"variant", "option_count", "diffusion_time", "degenerate"};
      const int k = c.deep_options;
      const auto add = [&](const std::string& name,
                           const std::vector<Eigenoption>& opts) {
        t.add_row({name, format_number(k),
                   format_number(diffusion_time_exact(env, first(opts, k))),
                   yes_no(degenerate)});
      };
      add("none", {});
      add("trained", trained_opts);
      add("untrained", untrained_opts);
      add("tabular_exact_sr", tabular);
      write_csv(out / "comparison.csv", t);
      write_csv(out / "policies_deep.csv", policy_maps(env, first(trained_opts, k)));
    });
    return gradient_error <= 1e-4 ? kExitOk : kExitThreshold;
  });
}

}  // namespace eigenopt
