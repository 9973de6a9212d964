#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "roughflow/cli_harness.hpp"

int main(int argc, char** argv) {
  namespace rc = roughflow::cli;
  CLI::App app{"roughflow: rough slow-fast experiments"};
  app.set_version_flag("--version", std::string(ROUGHFLOW_VERSION));
  rc::CommandLine cmd;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t workers = 0;
  app.add_option("kind", cmd.kind, "experiment kind")->required()->check(CLI::IsMember(rc::experiment_kinds()));
  app.add_option("--config", cmd.config_path, "JSON config file")->required();
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides the config)");
  auto* out_opt = app.add_option("--out", out, "output directory");
  auto* workers_opt = app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return rc::kExitConfig;
  }
  if (*seed_opt) cmd.seed = seed;
  if (*out_opt) cmd.out = out;
  if (*workers_opt) cmd.workers = workers;
  return rc::execute(cmd);
}
