#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace roughflow::cli {

using Json = nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitInfeasible = 4;

inline constexpr int kConfigVersion = 1;

/// sample | lift | solve-rde | slowfast | average | rate | ldp-probe | weak-conv | sweep
const std::vector<std::string>& experiment_kinds();

struct Artifact {
  std::string name;
  std::string content;
};

struct RunOutput {
  std::vector<Artifact> artifacts;
  Json resolved;  ///< every defaulted parameter, echoed into the manifest
};

/// Reads a JSON config; parse failures become ConfigError.
Json load_config(const std::string& path);

/// Schema check: version, kind, allowed keys at every level, types and
/// ranges. Throws ConfigError naming the offending field.
void validate_config(const Json& config, const std::string& kind);

/// Validates, then runs entirely in memory. Nothing is written.
RunOutput run_experiment(const std::string& kind, const Json& config, std::uint64_t seed,
                         std::size_t workers);

std::string sha256_hex(const std::string& data);

/// Config serialized with sorted keys and no whitespace.
std::string canonical(const Json& config);

/// Writes artifacts, then manifest.json last. Returns the manifest.
Json write_run(const std::string& out_dir, const std::string& kind, const Json& config,
               const RunOutput& output, std::uint64_t seed, std::size_t workers,
               double wall_seconds);

/// %.17g
std::string format_double(double x);

struct CommandLine {
  std::string kind;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> workers;
};

/// Flag, else ROUGHFLOW_WORKERS, else the config's "workers", else 1.
std::size_t effective_workers(const CommandLine& cmd, const Json& config);

/// Full command: load, validate, run, write. Maps errors to exit codes and
/// prints diagnostics to stderr.
int execute(const CommandLine& cmd);

}  // namespace roughflow::cli
