#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace eigenopt {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat `key = value` document with dotted namespaces. Lists are
// comma-separated. '#' starts a comment line.
struct ExperimentConfig {
  std::filesystem::path layout = "rooms.txt";
  std::uint64_t seed = 1;

  double sr_gamma = 0.9;
  double sr_eta = 0.1;
  int sr_episodes = 1000;
  int sr_episode_len = 100;
  std::vector<int> sr_checkpoints = {100, 500, 1000};

  std::vector<int> option_counts = {0, 2, 4, 8, 16, 32, 64, 128};
  double option_gamma = 0.9;
  int option_checkpoint = 100;  // SR episodes used for the option sweep

  std::string diffusion_mode = "exact";  // exact | monte_carlo
  long diffusion_pairs = 100000;

  std::vector<std::filesystem::path> control_layouts = {
      "rooms_setting1.txt", "rooms_setting2.txt", "rooms_setting3.txt",
      "rooms_setting4.txt"};
  std::vector<int> control_option_counts = {0, 4, 8};
  double control_alpha = 0.1;
  double control_gamma = 0.9;
  int control_episodes = 100;
  int control_episode_len = 100;
  int control_runs = 100;
  int control_sr_seeds = 1;
  std::string control_evaluation = "behavior";  // behavior | greedy

  int deep_d = 32;
  int deep_hidden = 64;
  double deep_lr = 1e-4;
  int deep_dataset = 200000;
  int deep_passes = 10;
  int deep_batch = 32;
  int deep_sync_period = 1000;
  int deep_psi_samples = 50000;
  int deep_options = 4;
  int deep_gradcheck_samples = 20;

  friend bool operator==(const ExperimentConfig&,
                         const ExperimentConfig&) = default;
};

// Relative paths stay as written; resolve_paths makes them absolute.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& config);

// Rebases each relative layout path onto the first base under which it
// exists. Throws ConfigError when none does.
void resolve_paths(ExperimentConfig& config,
                   const std::vector<std::filesystem::path>& bases);

// Range checks that need no files. Throws ConfigError.
void validate_config(const ExperimentConfig& config);

}  // namespace eigenopt
