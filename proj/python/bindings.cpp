#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "roughflow/cli_harness.hpp"
#include "roughflow/error.hpp"
#include "roughflow/gaussian_drivers.hpp"
#include "roughflow/rough_lift.hpp"
#include "roughflow/slowfast_sim.hpp"

namespace py = pybind11;
namespace rf = roughflow;

namespace {

rf::HurstParam hurst(double H) { return rf::HurstParam::with_defaults(H); }

py::dict run(const std::string& kind, const std::string& config, std::uint64_t seed, std::size_t workers) {
  const auto json = rf::cli::Json::parse(config);
  rf::cli::RunOutput out;
  {
    py::gil_scoped_release release;
    out = rf::cli::run_experiment(kind, json, seed, workers);
  }
  py::dict artifacts;
  for (const auto& a : out.artifacts) artifacts[py::str(a.name)] = py::str(a.content);
  py::dict result;
  result["artifacts"] = artifacts;
  result["resolved"] = out.resolved.dump();
  return result;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Rough slow-fast simulation core";
  m.attr("__version__") = ROUGHFLOW_VERSION;

  auto base = py::register_exception<rf::Error>(m, "RoughflowError", PyExc_RuntimeError);
  py::register_exception<rf::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<rf::ParameterError>(m, "ParameterError", base.ptr());
  py::register_exception<rf::DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<rf::InfeasibleError>(m, "InfeasibleError", base.ptr());

  m.def(
      "sample_fbm",
      [](std::size_t steps, double H, std::size_t dim, std::uint64_t seed, double horizon) {
        return rf::PathMatrix(rf::sample_fbm(rf::TimeGrid::make(horizon, steps), H, dim, seed));
      },
      py::arg("steps"), py::arg("H"), py::arg("dim") = 1, py::arg("seed") = 0, py::arg("horizon") = 1.0);

  m.def(
      "sample_mixed",
      [](std::size_t steps, double H, std::size_t d, std::size_t e, std::uint64_t seed, double horizon) {
        auto p = rf::sample_mixed(rf::TimeGrid::make(horizon, steps), hurst(H), d, e, seed);
        return py::make_tuple(p.bH, p.w);
      },
      py::arg("steps"), py::arg("H"), py::arg("d") = 1, py::arg("e") = 1, py::arg("seed") = 0,
      py::arg("horizon") = 1.0);

  m.def(
      "lift",
      [](std::size_t steps, double H, std::size_t d, std::size_t e, std::size_t refine, std::uint64_t seed,
         bool ito) {
        const auto path = rf::sample_mixed(rf::TimeGrid::make(1.0, steps * refine), hurst(H), d, e, seed);
        const auto rp = rf::lift_mixed(path, refine, ito ? rf::BrownianArea::ito : rf::BrownianArea::geometric);
        return py::make_tuple(rp.increments(), rp.areas());
      },
      "Per-step increments (n x dim) and areas (n x dim^2) of the mixed lift.", py::arg("steps"), py::arg("H"),
      py::arg("d") = 1, py::arg("e") = 1, py::arg("refine") = 1, py::arg("seed") = 0, py::arg("ito") = true);

  m.def("builtin_model_names", &rf::builtin_model_names);
  m.def("experiment_kinds", &rf::cli::experiment_kinds);
  m.def(
      "validate_config",
      [](const std::string& kind, const std::string& config) {
        rf::cli::validate_config(rf::cli::Json::parse(config), kind);
      },
      py::arg("kind"), py::arg("config"));
  m.def("run_experiment", &run, py::arg("kind"), py::arg("config"), py::arg("seed") = 0, py::arg("workers") = 1);
  m.def("sha256_hex", &rf::cli::sha256_hex);
}
