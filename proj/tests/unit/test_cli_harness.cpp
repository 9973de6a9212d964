#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "doctest.h"
#include "roughflow/cli_harness.hpp"
#include "roughflow/error.hpp"
#include "roughflow/slowfast_sim.hpp"

using namespace roughflow;
using namespace roughflow::cli;
namespace fs = std::filesystem;

namespace {

constexpr double kLqr65536 = 1.1565060571648938;

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("roughflow_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string write_config(const TempDir& dir, const Json& config) {
  const auto file = dir.path / "config.json";
  std::ofstream(file) << config.dump(2);
  return file.string();
}

Json sample_config() {
  return Json::parse(R"({"version": 1, "kind": "sample", "seed": 7,
    "grid": {"horizon": 1.0, "steps": 1024}, "hurst": {"H": 0.4}, "d": 1, "e": 1})");
}

Json average_base() {
  return Json::parse(R"({"version": 1, "model": {"name": "linear-ou", "params": {"kappa": 0.5}},
    "grid": {"horizon": 1.0, "steps": 32}, "hurst": {"H": 0.4}, "refine": 2, "x0": [1.0], "n_mc": 8})");
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

const std::string& artifact(const RunOutput& out, const std::string& name) {
  for (const auto& a : out.artifacts) {
    if (a.name == name) return a.content;
  }
  throw std::runtime_error("missing artifact " + name);
}

std::string field_of(const Json& config, const std::string& kind) {
  try {
    validate_config(config, kind);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST_CASE("sha256 of known strings") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("format_double round-trips") {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) CHECK(std::stod(format_double(x)) == x);
  CHECK(format_double(std::nan("")) == "nan");
}

TEST_CASE("sample run twice gives identical checksums") {
  TempDir a, b;
  const Json config = sample_config();
  const auto out1 = run_experiment("sample", config, 7, 1);
  const auto out2 = run_experiment("sample", config, 7, 1);
  const Json m1 = write_run(a.path.string(), "sample", config, out1, 7, 1, 0.1);
  const Json m2 = write_run(b.path.string(), "sample", config, out2, 7, 1, 0.2);
  CHECK(m1["artifacts"] == m2["artifacts"]);
  CHECK(m1["config_hash"] == m2["config_hash"]);
  CHECK(parse_csv(artifact(out1, "driver.csv")).size() == 1026);
  const auto out3 = run_experiment("sample", config, 8, 1);
  CHECK(sha256_hex(artifact(out3, "driver.csv")) != sha256_hex(artifact(out1, "driver.csv")));
}

TEST_CASE("manifest is written last and lists every artifact") {
  TempDir dir;
  const Json config = sample_config();
  const auto out = run_experiment("sample", config, 7, 1);
  const Json manifest = write_run(dir.path.string(), "sample", config, out, 7, 1, 0.0);
  CHECK(fs::exists(dir.path / "manifest.json"));
  CHECK(fs::last_write_time(dir.path / "manifest.json") >= fs::last_write_time(dir.path / "driver.csv"));
  REQUIRE(manifest["artifacts"].size() == 1);
  std::ifstream in(dir.path / "driver.csv", std::ios::binary);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(manifest["artifacts"][0]["sha256"] == sha256_hex(text));
  CHECK(manifest["artifacts"][0]["bytes"] == text.size());
  CHECK(manifest["master_seed"] == 7);
  CHECK(manifest["resolved"]["hurst"]["alpha"].is_number());
}

TEST_CASE("rate config reproduces the linear oracle") {
  const Json config = Json::parse(R"({"version": 1, "kind": "rate",
    "model": {"name": "linear-slow", "params": {"a": 1.0, "s1": 1.0}},
    "grid": {"horizon": 1.0, "steps": 256}, "hurst": {"H": 0.5}, "x0": [0.0], "target": {"terminal": [1.0]}})");
  const auto out = run_experiment("rate", config, 1, 1);
  const Json rate = Json::parse(artifact(out, "rate.json"));
  CHECK(std::abs(rate["value"].get<double>() - kLqr65536) / kLqr65536 < 0.05);
  CHECK(rate["constraint_residual"].get<double>() < 1e-4);
}

TEST_CASE("delta above eps is a config error and writes nothing") {
  TempDir dir;
  Json config = Json::parse(R"({"version": 1, "kind": "slowfast", "model": {"name": "linear-ou"},
    "grid": {"horizon": 1.0, "steps": 32}, "hurst": {"H": 0.4}, "x0": [1.0],
    "scales": {"eps": 0.1, "delta": 0.2}})");
  CommandLine cmd;
  cmd.kind = "slowfast";
  cmd.config_path = write_config(dir, config);
  cmd.out = (dir.path / "out").string();
  CHECK(execute(cmd) == kExitConfig);
  CHECK_FALSE(fs::exists(dir.path / "out"));
  CHECK(field_of(config, "slowfast") == "scales");
}

TEST_CASE("config errors name the offending field") {
  Json config = sample_config();
  config["grid"]["stepz"] = 3;
  CHECK(field_of(config, "sample") == "grid.stepz");
  config = sample_config();
  config["hurst"]["H"] = 0.9;
  CHECK(field_of(config, "sample") == "hurst");
  config = sample_config();
  config["version"] = 2;
  CHECK(field_of(config, "sample") == "version");
  config = sample_config();
  CHECK(field_of(config, "lift") == "kind");
  config = average_base();
  config["kind"] = "average";
  config["scales"] = Json::array({{{"eps", 0.1}, {"delta", 0.01}}});
  config["model"]["params"]["bogus"] = 1.0;
  CHECK(field_of(config, "average") == "model.params.bogus");
  config["model"]["params"].erase("bogus");
  CHECK(field_of(config, "average").empty());
  config["reference"] = "other";
  CHECK(field_of(config, "average") == "reference");
}

TEST_CASE("exit codes for divergence and infeasibility") {
  TempDir dir;
  CommandLine cmd;
  cmd.out = (dir.path / "out").string();

  cmd.kind = "solve-rde";
  cmd.config_path = write_config(dir, Json::parse(R"({"version": 1, "kind": "solve-rde",
    "grid": {"horizon": 1.0, "steps": 64}, "hurst": {"H": 0.5}, "field": {"drift": [[60.0]], "noise": [[[0.1]]]}})"));
  CHECK(execute(cmd) == kExitDivergence);
  CHECK_FALSE(fs::exists(dir.path / "out"));

  cmd.kind = "rate";
  cmd.config_path = write_config(dir, Json::parse(R"({"version": 1, "kind": "rate",
    "model": {"name": "linear-slow", "params": {"a": 1.0, "s1": 0.0}},
    "grid": {"horizon": 1.0, "steps": 32}, "hurst": {"H": 0.5}, "x0": [0.0], "target": {"terminal": [1.0]},
    "optimizer": {"restarts": 1, "max_iters": 50}, "penalty": {"stages": 2}})"));
  CHECK(execute(cmd) == kExitInfeasible);
  CHECK_FALSE(fs::exists(dir.path / "out"));

  cmd.kind = "sample";
  cmd.config_path = (dir.path / "missing.json").string();
  CHECK(execute(cmd) == kExitConfig);
}

TEST_CASE("worker count precedence") {
  CommandLine cmd;
  Json config = {{"workers", 3}};
  ::unsetenv("ROUGHFLOW_WORKERS");
  CHECK(effective_workers(cmd, config) == 3);
  CHECK(effective_workers(cmd, Json::object()) == 1);
  ::setenv("ROUGHFLOW_WORKERS", "5", 1);
  CHECK(effective_workers(cmd, config) == 5);
  cmd.workers = 2;
  CHECK(effective_workers(cmd, config) == 2);
  ::unsetenv("ROUGHFLOW_WORKERS");
}

TEST_CASE("3x2 sweep gives six rows in lexicographic order") {
  Json config = average_base();
  config["kind"] = "sweep";
  config["n_mc"] = 4;
  config["scales"] = {{"delta", 0.004}};
  config["parameters"] = {{"eps", {0.2, 0.05, 0.1}}, {"block", {0.125, 0.0625}}};
  const auto out = run_experiment("sweep", config, 3, 2);
  const auto rows = parse_csv(artifact(out, "sweep.csv"));
  REQUIRE(rows.size() == 7);
  const auto& header = rows[0];
  CHECK(header.front() == "eps");
  CHECK(header.back() == "status");
  const std::vector<std::pair<double, double>> expect{{0.05, 0.0625}, {0.05, 0.125}, {0.1, 0.0625},
                                                      {0.1, 0.125},   {0.2, 0.0625}, {0.2, 0.125}};
  for (std::size_t i = 0; i < expect.size(); ++i) {
    CHECK(std::stod(rows[i + 1][0]) == expect[i].first);
    CHECK(std::stod(rows[i + 1][2]) == expect[i].second);
    CHECK(rows[i + 1].back() == "ok");
  }
}

TEST_CASE("sweep records failing cells and continues") {
  Json config = average_base();
  config["kind"] = "sweep";
  config["n_mc"] = 2;
  config["scales"] = {{"eps", 0.1}};
  config["parameters"] = {{"delta", {0.005, 0.5}}};
  const auto out = run_experiment("sweep", config, 3, 1);
  const auto rows = parse_csv(artifact(out, "sweep.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(rows[1].back() == "ok");
  CHECK(rows[2].back().rfind("error", 0) == 0);
  CHECK(rows[2][4].empty());
}

TEST_CASE("one-cell sweep matches the average run and the library") {
  Json avg = average_base();
  avg["kind"] = "average";
  avg["scales"] = Json::array({{{"eps", 0.1}, {"delta", 0.005}}});
  const auto avg_rows = parse_csv(artifact(run_experiment("average", avg, 9, 1), "averaging.csv"));

  Json sweep = average_base();
  sweep["kind"] = "sweep";
  sweep["scales"] = {{"eps", 0.1}, {"delta", 0.005}};
  sweep["parameters"] = {{"n_mc", {8}}};
  const auto sweep_rows = parse_csv(artifact(run_experiment("sweep", sweep, 9, 2), "sweep.csv"));
  REQUIRE(sweep_rows.size() == 2);
  REQUIRE(avg_rows.size() == 6);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(avg_rows[k + 1][3] == sweep_rows[0][4 + 2 * k]);
    CHECK(avg_rows[k + 1][4] == sweep_rows[1][4 + 2 * k]);
    CHECK(avg_rows[k + 1][5] == sweep_rows[1][5 + 2 * k]);
  }

  ExperimentSetup setup;
  setup.grid = TimeGrid::make(1.0, 32);
  setup.hurst = HurstParam::with_defaults(0.4);
  setup.refine = 2;
  setup.x0 = Vector::Constant(1, 1.0);
  setup.y0 = Vector::Zero(1);
  setup.n_mc = 8;
  setup.seed = 9;
  ScaleParams sc;
  sc.eps = 0.1;
  sc.delta = 0.005;
  const auto lib = averaging_experiment(builtin_model("linear-ou", {{"kappa", 0.5}}), {sc}, setup);
  CHECK(sweep_rows[1][4] == format_double(lib[0].sup_error.mean));
  CHECK(sweep_rows[1][5] == format_double(lib[0].sup_error.se));
  CHECK(sweep_rows[1][12] == format_double(lib[0].aux_gap.mean));
}

TEST_CASE("worker count does not change artifacts") {
  Json config = average_base();
  config["kind"] = "average";
  config["scales"] = Json::array({{{"eps", 0.1}, {"delta", 0.005}}});
  const auto one = run_experiment("average", config, 4, 1);
  const auto three = run_experiment("average", config, 4, 3);
  CHECK(artifact(one, "averaging.csv") == artifact(three, "averaging.csv"));
}

TEST_CASE("every kind validates its example config") {
  const fs::path dir = fs::path(ROUGHFLOW_SOURCE_DIR) / "configs";
  for (const auto& kind : experiment_kinds()) {
    CAPTURE(kind);
    const Json config = load_config((dir / (kind + ".json")).string());
    CHECK_NOTHROW(validate_config(config, kind));
  }
}
