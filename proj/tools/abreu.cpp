#include <cstdint>
#include <string>

#include "CLI11.hpp"

#include "abreu/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Numerical toolkit for the generalized Abreu equation on toric surfaces"};
  app.require_subcommand(1);

  abreu::CliOptions opts;
  std::string out;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (overrides the config)");
    sub->add_option("--seed", seed, "seed for randomized checks (overrides the config)");
  };
  auto* solve = app.add_subcommand("solve", "Newton solve; writes psi CSVs, summary.json, equivalence.csv");
  auto* invariants = app.add_subcommand("invariants", "invariant and curvature fields as CSV");
  auto* verify = app.add_subcommand("verify", "estimate harness; writes ledger.csv and per-item JSON");
  for (auto* sub : {solve, invariants, verify}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : abreu::exit_config;
  }
  auto* active = app.get_subcommands().front();
  if (active->count("--out")) opts.out = out;
  if (active->count("--seed")) opts.seed = seed;

  if (active == solve) return abreu::cmd_solve(opts);
  if (active == invariants) return abreu::cmd_invariants(opts);
  return abreu::cmd_verify(opts);
}
