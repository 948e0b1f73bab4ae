#include <string>

#include <CLI11.hpp>

#include "geostab/scenario.hpp"

int main(int argc, char** argv) {
  CLI::App app{"geostab - geometric stability analysis for vector flows and Lagrangian systems"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string output_dir;
  auto* run = app.add_subcommand("run", "execute a scenario file");
  run->add_option("scenario", scenario_path, "scenario JSON file")->required();
  run->add_option("--output-dir", output_dir, "override the scenario's output directory");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "check a scenario file without running it");
  validate->add_option("scenario", validate_path, "scenario JSON file")->required();

  std::string examples_dir = "examples-scenarios";
  auto* examples = app.add_subcommand("examples", "write the built-in example scenarios");
  examples->add_option("--directory", examples_dir, "target directory");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return geostab::cli::run_scenario(scenario_path, output_dir);
  if (validate->parsed()) return geostab::cli::validate_scenario(validate_path);
  if (examples->parsed()) return geostab::cli::write_example_scenarios(examples_dir);
  return 2;
}
