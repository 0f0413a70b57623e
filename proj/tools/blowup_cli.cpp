// Command-line runner for the blow-up experiments.
//
//   blowup_cli <command> [key=value ...] [--config file.json] [--report out.json]
//
// Exit status: 0 all checks passed, 1 a check failed, 2 usage error,
// 3 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "blowup/experiments.hpp"

namespace {

constexpr int kPass = 0;
constexpr int kFail = 1;
constexpr int kUsage = 2;
constexpr int kNumerical = 3;

void print_checks(const blowup::RunReport& rep) {
  for (const auto& c : rep.checks) {
    std::fprintf(stderr, "%s  %s: %.6g %s %.6g\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.measured,
                 c.relation.c_str(), c.tolerance);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blow-up experiments for the vector-valued semilinear wave equation"};
  app.require_subcommand(1);
  std::string config_path, report_path;
  app.add_option("--config", config_path, "JSON file with the same keys as key=value arguments")
      ->check(CLI::ExistingFile);
  app.add_option("--report", report_path, "Also write the JSON report to this file");
  app.fallthrough();

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"stationary-check", "Stationarity residual and energy of the soliton family"},
      {"classify-ode", "Shooting oracle for the profile modulus equation"},
      {"rotation-check", "Identities of the composed Givens rotations"},
      {"spectral-check", "Eigenmodes, dual modes and coercivity of the linearization"},
      {"simulate-physical", "Physical solver against exact blow-up solutions"},
      {"simulate-selfsim", "Energy monotonicity in self-similar variables"},
      {"modulation-check", "Modulation of perturbed solitons"},
      {"trapping", "Trapping near a soliton with the dynamics monitors"},
  };
  std::vector<std::string> assignments;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("assignments", assignments, "key=value settings");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kPass : kUsage;
  }

  blowup::ExperimentConfig cfg(app.get_subcommands().front()->get_name());
  blowup::RunReport rep;
  try {
    for (const auto& kv : assignments) cfg.set_assignment(kv);
    if (!config_path.empty()) {
      std::ifstream is(config_path);
      blowup::json j;
      try {
        j = blowup::json::parse(is);
      } catch (const blowup::json::exception& e) {
        throw blowup::UsageError(std::string("config file: ") + e.what());
      }
      cfg.merge_json(j);
    }
    rep = blowup::run(cfg);
  } catch (const blowup::UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const blowup::NumericalFailure& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const std::domain_error& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNumerical;
  }

  const std::string text = rep.to_json().dump(2);
  std::cout << text << '\n';
  if (!report_path.empty()) {
    std::ofstream os(report_path);
    os << text << '\n';
    if (!os) {
      std::fprintf(stderr, "cannot write report to %s\n", report_path.c_str());
      return kNumerical;
    }
  }
  print_checks(rep);
  return rep.passed() ? kPass : kFail;
}
