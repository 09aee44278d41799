// Command line front end: parse flags, hand the scenario to the runner,
// surface the report location, and map the outcome to the exit code.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ck/scenario.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "carleman-kit: scenario-driven checks for limiting weight catalogs,\n"
      "geodesic ray transforms, complex-phase solutions, and boundary recovery"};

  std::string scenario_path;
  ck::RunOptions opt;
  app.add_option("--scenario", scenario_path, "Scenario JSON file")->required();
  app.add_option("--out", opt.out_dir, "Directory for report.json and CSV output")
      ->capture_default_str();
  app.add_option("--threads", opt.threads,
                 "Worker threads for inner pipelines (0 keeps the library default)")
      ->envname("CARLEMAN_KIT_THREADS");
  app.add_option("--tolerance-scale", opt.tolerance_scale,
                 "Multiplier applied to every check tolerance")
      ->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  ck::RunResult r = ck::run_scenario(scenario_path, opt);
  if (!r.report_path.empty()) std::cout << "report: " << r.report_path << "\n";
  for (const auto& c : r.csv_paths) std::cout << "csv: " << c << "\n";
  switch (r.status) {
    case 0:
      std::cout << "status: all checks passed\n";
      break;
    case 1:
      std::cout << "status: checks FAILED (see report)\n";
      break;
    case 2:
      std::cerr << "scenario error: " << r.diagnostic << "\n";
      break;
    default:
      std::cerr << "runtime error: " << r.diagnostic << "\n";
      break;
  }
  return r.status;
}
