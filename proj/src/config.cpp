#include "eigenopt/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace eigenopt {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  if (trim(value).empty()) return items;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) items.push_back(trim(item));
  return items;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() ||
      text.empty())
    throw ConfigError("bad value for " + key + ": '" + text + "'");
  return v;
}

std::string show(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
std::string join(const std::vector<T>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, std::filesystem::path>)
      out += items[i].generic_string();
    else
      out += std::to_string(items[i]);
  }
  return out;
}

// One entry per key: how to read it and how to write it back.
struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> read;
  std::function<std::string(const ExperimentConfig&)> write;
};

template <typename T>
Field number(std::string key, T ExperimentConfig::*member) {
  return {key,
          [key, member](ExperimentConfig& c, const std::string& v) {
            c.*member = parse_number<T>(key, v);
          },
          [member](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>)
              return show(c.*member);
            else
              return std::to_string(c.*member);
          }};
}

Field int_list(std::string key, std::vector<int> ExperimentConfig::*member) {
  return {key,
          [key, member](ExperimentConfig& c, const std::string& v) {
            std::vector<int> out;
            for (const auto& item : split_list(v))
              out.push_back(parse_number<int>(key, item));
            c.*member = out;
          },
          [member](const ExperimentConfig& c) { return join(c.*member); }};
}

Field text(std::string key, std::string ExperimentConfig::*member) {
  return {key,
          [member](ExperimentConfig& c, const std::string& v) { c.*member = v; },
          [member](const ExperimentConfig& c) { return c.*member; }};
}

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> all = {
      {"layout",
       [](C& c, const std::string& v) { c.layout = v; },
       [](const C& c) { return c.layout.generic_string(); }},
      number("seed", &C::seed),
      number("sr.gamma", &C::sr_gamma),
      number("sr.eta", &C::sr_eta),
      number("sr.episodes", &C::sr_episodes),
      number("sr.episode_len", &C::sr_episode_len),
      int_list("sr.checkpoints", &C::sr_checkpoints),
      int_list("options.counts", &C::option_counts),
      number("options.gamma", &C::option_gamma),
      number("options.sr_episodes", &C::option_checkpoint),
      text("diffusion.mode", &C::diffusion_mode),
      number("diffusion.pairs", &C::diffusion_pairs),
      {"control.layouts",
       [](C& c, const std::string& v) {
         c.control_layouts.clear();
         for (const auto& item : split_list(v)) c.control_layouts.push_back(item);
       },
       [](const C& c) { return join(c.control_layouts); }},
      int_list("control.option_counts", &C::control_option_counts),
      number("control.alpha", &C::control_alpha),
      number("control.gamma", &C::control_gamma),
      number("control.episodes", &C::control_episodes),
      number("control.episode_len", &C::control_episode_len),
      number("control.runs", &C::control_runs),
      number("control.sr_seeds", &C::control_sr_seeds),
      text("control.evaluation", &C::control_evaluation),
      number("deep.d", &C::deep_d),
      number("deep.hidden", &C::deep_hidden),
      number("deep.lr", &C::deep_lr),
      number("deep.dataset", &C::deep_dataset),
      number("deep.passes", &C::deep_passes),
      number("deep.batch", &C::deep_batch),
      number("deep.sync_period", &C::deep_sync_period),
      number("deep.psi_samples", &C::deep_psi_samples),
      number("deep.options", &C::deep_options),
      number("deep.gradcheck_samples", &C::deep_gradcheck_samples),
  };
  return all;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  std::map<std::string, const Field*> by_key;
  for (const Field& f : fields()) by_key[f.key] = &f;

  ExperimentConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(body.substr(0, eq));
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError("unknown key: " + key);
    if (!seen.insert(key).second) throw ConfigError("duplicate key: " + key);
    it->second->read(config, trim(body.substr(eq + 1)));
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string serialize_config(const ExperimentConfig& config) {
  std::string out;
  for (const Field& f : fields()) out += f.key + " = " + f.write(config) + "\n";
  return out;
}

void resolve_paths(ExperimentConfig& config,
                   const std::vector<std::filesystem::path>& bases) {
  auto fix = [&](std::filesystem::path& p) {
    if (p.is_relative()) {
      for (const auto& base : bases) {
        const auto candidate = (base / p).lexically_normal();
        if (std::filesystem::is_regular_file(candidate)) {
          p = std::filesystem::absolute(candidate);
          return;
        }
      }
    } else if (std::filesystem::is_regular_file(p)) {
      return;
    }
    throw ConfigError("layout file not found: " + p.string());
  };
  fix(config.layout);
  for (auto& p : config.control_layouts) fix(p);
}

void validate_config(const ExperimentConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(c.sr_gamma > 0.0 && c.sr_gamma < 1.0, "sr.gamma must lie in (0, 1)");
  require(c.sr_eta > 0.0 && c.sr_eta <= 1.0, "sr.eta must lie in (0, 1]");
  require(c.sr_episodes >= 1 && c.sr_episode_len >= 1,
          "sr.episodes and sr.episode_len must be >= 1");
  for (int cp : c.sr_checkpoints)
    require(cp >= 1 && cp <= c.sr_episodes,
            "sr.checkpoints must lie in [1, sr.episodes]");
  require(c.option_checkpoint >= 1 && c.option_checkpoint <= c.sr_episodes,
          "options.sr_episodes must lie in [1, sr.episodes]");
  for (int k : c.option_counts) require(k >= 0, "options.counts must be >= 0");
  for (int k : c.control_option_counts)
    require(k >= 0, "control.option_counts must be >= 0");
  require(c.option_gamma > 0.0 && c.option_gamma < 1.0,
          "options.gamma must lie in (0, 1)");
  require(c.diffusion_mode == "exact" || c.diffusion_mode == "monte_carlo",
          "diffusion.mode must be exact or monte_carlo");
  require(c.diffusion_pairs >= 1, "diffusion.pairs must be >= 1");
  require(c.control_alpha > 0.0 && c.control_alpha <= 1.0,
          "control.alpha must lie in (0, 1]");
  require(c.control_gamma >= 0.0 && c.control_gamma <= 1.0,
          "control.gamma must lie in [0, 1]");
  require(c.control_episodes >= 1 && c.control_episode_len >= 1 &&
              c.control_runs >= 1 && c.control_sr_seeds >= 1,
          "control counts must be >= 1");
  require(c.control_evaluation == "behavior" || c.control_evaluation == "greedy",
          "control.evaluation must be behavior or greedy");
  require(c.deep_d >= 1 && c.deep_hidden >= 1, "deep sizes must be >= 1");
  require(c.deep_lr >= 0.0, "deep.lr must be >= 0");
  require(c.deep_batch >= 1 && c.deep_dataset >= c.deep_batch,
          "deep.dataset must hold at least one batch");
  require(c.deep_passes >= 1 && c.deep_sync_period >= 1,
          "deep.passes and deep.sync_period must be >= 1");
  require(c.deep_psi_samples >= 1, "deep.psi_samples must be >= 1");
  require(c.deep_options >= 0, "deep.options must be >= 0");
  require(c.deep_gradcheck_samples >= 1, "deep.gradcheck_samples must be >= 1");
}

}  // namespace eigenopt
