#ifndef GEOSTAB_SCENARIO_HPP
#define GEOSTAB_SCENARIO_HPP

#include <string>

namespace geostab::cli {

// Executes a scenario file: builds the system, fans the analyses out over at
// most GEOSTAB_THREADS workers, writes per-analysis reports plus a summary
// into the scenario's output directory. Returns the process exit code:
// 0 success, 2 configuration error, 3 numerical failure.
int run_scenario(const std::string& path, const std::string& output_dir_override = "");

// Parses and cross-checks a scenario without running any integration.
int validate_scenario(const std::string& path);

// Writes the built-in example scenarios (inverted-oscillator, radial-r2,
// vplus-vminus, sphere-geodesic) into the given directory.
int write_example_scenarios(const std::string& dir);

}  // namespace geostab::cli

#endif
