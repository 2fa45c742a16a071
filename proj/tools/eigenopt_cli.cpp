#include <CLI11.hpp>

#include <iostream>

#include "eigenopt/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Eigenoption discovery through the successor representation"};
  app.require_subcommand(1);

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const eigenopt::CommandOptions&, std::ostream&);
  };
  const Command commands[] = {
      {"theorem-check", "Check the SR / Laplacian spectral correspondence",
       eigenopt::cmd_theorem_check},
      {"pipeline", "Learn the SR, discover eigenoptions, evaluate them",
       eigenopt::cmd_pipeline},
      {"deep", "Train the successor-feature network and compare its options",
       eigenopt::cmd_deep},
  };

  std::string config, out;
  std::uint64_t seed = 0;
  int exit_code = 0;
  for (const Command& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config, "Key-value config file")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Seed overriding the config");
    sub->add_option("--out", out, "Output directory")->required();
    sub->callback([&, sub, run = c.run] {
      eigenopt::CommandOptions options;
      if (!config.empty()) options.config = config;
      if (sub->count("--seed")) options.seed = seed;
      options.out = out;
      exit_code = run(options, std::cout);
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : eigenopt::kExitValidation;
  }
  return exit_code;
}
