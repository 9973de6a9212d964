#include "roughflow/cli_harness.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string_view>

#include "roughflow/controlled_rde.hpp"
#include "roughflow/error.hpp"
#include "roughflow/gaussian_drivers.hpp"
#include "roughflow/ldp_engine.hpp"
#include "roughflow/parallel.hpp"
#include "roughflow/random.hpp"
#include "roughflow/rough_lift.hpp"
#include "roughflow/slowfast_sim.hpp"

#ifndef ROUGHFLOW_VERSION
#define ROUGHFLOW_VERSION "unknown"
#endif

namespace roughflow::cli {
namespace {

std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

/// A config object together with its dotted path, for error messages.
class Node {
 public:
  Node(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "config" : path_, "expected an object");
  }

  const std::string& path() const noexcept { return path_; }
  const Json& raw() const noexcept { return j_; }
  bool has(const char* key) const { return j_.contains(key); }
  std::string field(const char* key) const { return join_path(path_, key); }

  void allow(std::initializer_list<std::string_view> keys) const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (std::find(keys.begin(), keys.end(), it.key()) == keys.end()) {
        throw ConfigError(join_path(path_, it.key()), "unknown key");
      }
    }
  }

  const Json& value(const char* key) const {
    if (!has(key)) throw ConfigError(field(key), "required key missing");
    return j_.at(key);
  }

  Node child(const char* key) const { return Node(value(key), field(key)); }

  double number(const char* key) const {
    const Json& v = value(key);
    if (!v.is_number()) throw ConfigError(field(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(field(key), "must be finite");
    return x;
  }
  double number(const char* key, double fallback) const { return has(key) ? number(key) : fallback; }

  double positive(const char* key) const {
    const double x = number(key);
    if (!(x > 0.0)) throw ConfigError(field(key), "must be positive");
    return x;
  }
  double positive(const char* key, double fallback) const { return has(key) ? positive(key) : fallback; }

  std::uint64_t count(const char* key) const {
    const Json& v = value(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
      throw ConfigError(field(key), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }
  std::uint64_t count(const char* key, std::uint64_t fallback) const { return has(key) ? count(key) : fallback; }

  bool flag(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!j_.at(key).is_boolean()) throw ConfigError(field(key), "expected true or false");
    return j_.at(key).get<bool>();
  }

  std::string text(const char* key) const {
    const Json& v = value(key);
    if (!v.is_string()) throw ConfigError(field(key), "expected a string");
    return v.get<std::string>();
  }
  std::string text(const char* key, const std::string& fallback) const { return has(key) ? text(key) : fallback; }

  std::vector<double> list(const char* key) const {
    const Json& v = value(key);
    if (!v.is_array()) throw ConfigError(field(key), "expected an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number() || !std::isfinite(x.get<double>())) throw ConfigError(field(key), "expected finite numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  Vector vec(const char* key) const {
    const auto xs = list(key);
    return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
  }

  Matrix mat(const char* key) const {
    const Json& v = value(key);
    if (!v.is_array()) throw ConfigError(field(key), "expected an array of rows");
    Matrix out(static_cast<Eigen::Index>(v.size()), v.empty() ? 0 : static_cast<Eigen::Index>(v[0].size()));
    for (std::size_t r = 0; r < v.size(); ++r) {
      if (!v[r].is_array() || v[r].size() != static_cast<std::size_t>(out.cols())) {
        throw ConfigError(field(key), "rows must be arrays of equal length");
      }
      for (std::size_t c = 0; c < v[r].size(); ++c) {
        if (!v[r][c].is_number()) throw ConfigError(field(key), "expected numbers");
        out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[r][c].get<double>();
      }
    }
    return out;
  }

 private:
  const Json& j_;
  std::string path_;
};

/// Runs f, turning ParameterError into a ConfigError on `field`.
template <class F>
auto checked(const std::string& field, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ParameterError& e) {
    throw ConfigError(field, e.what());
  }
}

// ------------------------------------------------------------ sub-parsers

TimeGrid parse_grid(const Node& root) {
  const Node g = root.child("grid");
  g.allow({"horizon", "steps"});
  const double horizon = g.positive("horizon", 1.0);
  const auto steps = g.count("steps");
  if (steps == 0) throw ConfigError(g.field("steps"), "must be at least 1");
  return checked(g.path(), [&] { return TimeGrid::make(horizon, steps); });
}

HurstParam parse_hurst(const Node& root) {
  const Node h = root.child("hurst");
  h.allow({"H", "alpha", "beta"});
  const double H = h.number("H");
  return checked(h.path(), [&] {
    const HurstParam def = HurstParam::with_defaults(H);
    if (!h.has("alpha") && !h.has("beta")) return def;
    return HurstParam::make(H, h.number("alpha", def.alpha), h.number("beta", def.beta));
  });
}

std::size_t parse_refine(const Node& root) {
  const auto r = root.count("refine", 1);
  if (r == 0) throw ConfigError(root.field("refine"), "must be at least 1");
  return r;
}

struct ParsedModel {
  SlowFastModel model;
  Json echo;
};

ParsedModel parse_model(const Node& root) {
  const Node m = root.child("model");
  m.allow({"name", "params", "linear", "check_box", "check"});
  ParsedModel out;
  if (m.has("name") == m.has("linear")) {
    throw ConfigError(m.path(), "give exactly one of 'name' or 'linear'");
  }
  if (m.has("name")) {
    std::map<std::string, double> params;
    if (m.has("params")) {
      const Node p = m.child("params");
      for (auto it = p.raw().begin(); it != p.raw().end(); ++it) params[it.key()] = p.number(it.key().c_str());
    }
    out.model = builtin_model(m.text("name"), params);
    out.echo["name"] = out.model.name;
    out.echo["params"] = params;
  } else {
    if (m.has("params")) throw ConfigError(m.field("params"), "only valid with a builtin name");
    const Node lin = m.child("linear");
    lin.allow({"A", "B", "G", "K", "S1", "S2"});
    LinearCoefficients c;
    c.A = lin.mat("A");
    c.S1 = lin.mat("S1");
    const Eigen::Index dim = c.A.rows();
    c.G = lin.has("G") ? lin.mat("G") : Matrix(0, 0);
    const Eigen::Index fast = c.G.rows();
    c.B = lin.has("B") ? lin.mat("B") : Matrix::Zero(dim, fast);
    c.K = lin.has("K") ? lin.mat("K") : Matrix::Zero(fast, dim);
    c.S2 = lin.has("S2") ? lin.mat("S2") : Matrix(fast, 0);
    if (c.B.size() == 0) c.B.resize(dim, fast);
    if (c.K.size() == 0) c.K.resize(fast, dim);
    out.model = checked(lin.path(), [&] { return linear_model(c, "linear"); });
    out.echo["name"] = "linear";
  }
  if (m.flag("check", true)) {
    const double box = m.positive("check_box", 3.0);
    check_assumptions(out.model, box);
    out.echo["check_box"] = box;
  }
  out.echo["L"] = out.model.L;
  out.echo["beta1"] = out.model.beta1;
  out.echo["beta2"] = out.model.beta2;
  out.echo["averaged_drift"] = out.model.averaged ? "closed_form" : "lattice_table";
  out.echo["invariant_defaults"] = {{"burn_in", 5.0 / out.model.beta2},
                                    {"spacing", 1.0 / out.model.beta1},
                                    {"micro_h", std::min(0.01, 0.02 / out.model.beta1)}};
  out.echo["dims"] = {{"m", out.model.m}, {"n", out.model.n}, {"d", out.model.d}, {"e", out.model.e}};
  return out;
}

Vector parse_state(const Node& root, const char* key, std::size_t dim, double fallback) {
  if (!root.has(key)) return Vector::Constant(static_cast<Eigen::Index>(dim), fallback);
  Vector v = root.vec(key);
  if (static_cast<std::size_t>(v.size()) != dim) {
    throw ConfigError(root.field(key), "expected " + std::to_string(dim) + " entries");
  }
  return v;
}

ScaleParams parse_scales_object(const Node& s, bool require) {
  s.allow({"eps", "delta", "block", "micro_steps", "max_delta_ratio"});
  ScaleParams sc;
  if (require || s.has("eps")) sc.eps = s.positive("eps");
  if (require || s.has("delta")) sc.delta = s.positive("delta");
  sc.block = s.has("block") ? s.positive("block") : 0.0;
  sc.micro_steps = s.count("micro_steps", 0);
  sc.max_delta_ratio = s.positive("max_delta_ratio", sc.max_delta_ratio);
  return sc;
}

ScaleParams resolve_scales(const ScaleParams& sc, const std::string& field, const TimeGrid& grid, double beta,
                           std::size_t refine) {
  return checked(field, [&] { return sc.resolved(grid, beta, refine); });
}

Json scales_echo(const ScaleParams& s) {
  return {{"eps", s.eps},
          {"delta", s.delta},
          {"block", s.block},
          {"micro_steps", s.micro_steps},
          {"max_delta_ratio", s.max_delta_ratio}};
}

Json grid_echo(const TimeGrid& g) { return {{"horizon", g.horizon()}, {"steps", g.steps()}}; }
Json hurst_echo(const HurstParam& h) { return {{"H", h.H}, {"alpha", h.alpha}, {"beta", h.beta}}; }

CameronMartinControl parse_control(const Node& root, const TimeGrid& grid, double H, std::size_t d,
                                   std::size_t e) {
  const Node c = root.child("control");
  c.allow({"udot", "vdot", "csv"});
  if (c.has("csv")) {
    if (c.has("udot") || c.has("vdot")) throw ConfigError(c.path(), "give either csv or constant coefficients");
    std::ifstream in(c.text("csv"));
    if (!in) throw ConfigError(c.field("csv"), "cannot open control file");
    auto ctrl = checked(c.field("csv"), [&] { return read_control_csv(in); });
    if (!(ctrl.grid == grid) || ctrl.d() != d || ctrl.e() != e || ctrl.H != H) {
      throw ConfigError(c.field("csv"), "control grid, dimensions or Hurst index do not match");
    }
    return ctrl;
  }
  const Vector u = c.has("udot") ? c.vec("udot") : Vector::Zero(static_cast<Eigen::Index>(d));
  const Vector v = c.has("vdot") ? c.vec("vdot") : Vector::Zero(static_cast<Eigen::Index>(e));
  if (static_cast<std::size_t>(u.size()) != d) throw ConfigError(c.field("udot"), "expected d entries");
  if (static_cast<std::size_t>(v.size()) != e) throw ConfigError(c.field("vdot"), "expected e entries");
  const auto n = static_cast<Eigen::Index>(grid.steps());
  PathMatrix udot(n, static_cast<Eigen::Index>(d)), vdot(n, static_cast<Eigen::Index>(e));
  for (Eigen::Index k = 0; k < n; ++k) {
    udot.row(k) = u.transpose();
    vdot.row(k) = v.transpose();
  }
  return checked(c.path(), [&] { return CameronMartinControl::make(grid, H, udot, vdot); });
}

void parse_optimizer(const Node& root, RateProblem& p, std::uint64_t seed, std::size_t workers) {
  p.optimizer.seed = derive_seed(seed, 0x0b7);
  p.optimizer.workers = workers;
  if (root.has("optimizer")) {
    const Node o = root.child("optimizer");
    o.allow({"max_iters", "tolerance", "restarts", "random_scale"});
    p.optimizer.max_iters = o.count("max_iters", p.optimizer.max_iters);
    p.optimizer.tolerance = o.positive("tolerance", p.optimizer.tolerance);
    p.optimizer.restarts = o.count("restarts", p.optimizer.restarts);
    p.optimizer.random_scale = o.positive("random_scale", p.optimizer.random_scale);
    if (p.optimizer.restarts == 0) throw ConfigError(o.field("restarts"), "must be at least 1");
  }
  if (root.has("penalty")) {
    const Node q = root.child("penalty");
    q.allow({"initial", "factor", "stages"});
    p.penalty.initial = q.positive("initial", p.penalty.initial);
    p.penalty.factor = q.number("factor", p.penalty.factor);
    p.penalty.stages = q.count("stages", p.penalty.stages);
    if (!(p.penalty.factor > 1.0)) throw ConfigError(q.field("factor"), "schedule must increase (factor > 1)");
    if (p.penalty.stages == 0) throw ConfigError(q.field("stages"), "must be at least 1");
  }
}

Json rate_echo(const RateProblem& p) {
  return {{"H", p.H},
          {"penalty", {{"initial", p.penalty.initial}, {"factor", p.penalty.factor}, {"stages", p.penalty.stages}}},
          {"optimizer",
           {{"max_iters", p.optimizer.max_iters},
            {"tolerance", p.optimizer.tolerance},
            {"restarts", p.optimizer.restarts},
            {"random_scale", p.optimizer.random_scale}}}};
}

// ------------------------------------------------------------- artifacts

std::string csv_field(const std::string& s) {
  std::string out = s;
  std::replace(out.begin(), out.end(), ',', ';');
  std::replace(out.begin(), out.end(), '"', '\'');
  std::replace(out.begin(), out.end(), '\n', ' ');
  return out;
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : width_(header.size()) { row(header); }
  void row(const std::vector<std::string>& cells) {
    if (cells.size() != width_) throw Error("internal: csv row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }
  std::string str() const { return out_.str(); }

 private:
  std::size_t width_;
  std::ostringstream out_;
};

std::string fmt(double x) { return format_double(x); }
std::string fmt(std::size_t x) { return std::to_string(x); }

std::string path_csv(const TimeGrid& grid, const std::vector<std::pair<std::string, const PathMatrix*>>& blocks) {
  std::vector<std::string> header{"t"};
  for (const auto& [name, m] : blocks) {
    for (Eigen::Index c = 0; c < m->cols(); ++c) header.push_back(name + "_" + std::to_string(c));
  }
  CsvTable table(header);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    std::vector<std::string> cells{fmt(grid.at(k))};
    for (const auto& [name, m] : blocks) {
      for (Eigen::Index c = 0; c < m->cols(); ++c) cells.push_back(fmt((*m)(static_cast<Eigen::Index>(k), c)));
    }
    table.row(cells);
  }
  return table.str();
}

std::string json_text(const Json& j) { return j.dump(2) + "\n"; }

std::vector<std::pair<const char*, const MeanSe*>> averaging_metrics(const AveragingRow& row) {
  return {{"sup_error", &row.sup_error},
          {"bounded_error", &row.bounded_error},
          {"holder_sq", &row.holder_sq},
          {"fast_energy", &row.fast_energy},
          {"aux_gap", &row.aux_gap}};
}

/// Long format: one row per (cell, metric).
void add_averaging_rows(CsvTable& table, const AveragingRow& row) {
  for (const auto& [name, v] : averaging_metrics(row)) {
    table.row({fmt(row.scales.eps), fmt(row.scales.delta), fmt(row.scales.block), name, fmt(v->mean), fmt(v->se),
               fmt(row.n_mc)});
  }
}

// --------------------------------------------------------------- kinds

struct Context {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool execute = true;
};

using Common = std::initializer_list<std::string_view>;

RunOutput run_sample(const Node& root, const Context& ctx) {
  root.allow({"version", "kind", "seed", "workers", "out", "grid", "hurst", "d", "e", "method"});
  const TimeGrid grid = parse_grid(root);
  const HurstParam hurst = parse_hurst(root);
  const std::size_t d = root.count("d", 1), e = root.count("e", 0);
  if (d + e == 0) throw ConfigError(root.field("d"), "need at least one component");
  const std::string method = root.text("method", "auto");
  if (method != "auto" && method != "circulant" && method != "cholesky") {
    throw ConfigError(root.field("method"), "expected auto, circulant or cholesky");
  }
  RunOutput out;
  out.resolved = {{"grid", grid_echo(grid)}, {"hurst", hurst_echo(hurst)}, {"d", d}, {"e", e}, {"method", method}};
  if (!ctx.execute) return out;
  MixedDriverPath driver;
  if (method == "auto") {
    driver = sample_mixed(grid, hurst, d, e, ctx.seed);
  } else {
    // Same stream layout as sample_mixed with a forced fBm method.
    driver = sample_mixed(grid, hurst, 0, e, ctx.seed);
    driver.bH = sample_fbm(grid, hurst, d, ctx.seed, method == "circulant" ? FbmMethod::circulant : FbmMethod::cholesky);
  }
  out.artifacts.push_back({"driver.csv", path_csv(grid, {{"b", &driver.bH}, {"w", &driver.w}})});
  return out;
}

RunOutput run_lift(const Node& root, const Context& ctx) {
  root.allow({"version", "kind", "seed", "workers", "out", "grid", "hurst", "d", "e", "refine", "convention",
              "holder_exponent"});
  const TimeGrid grid = parse_grid(root);
  const HurstParam hurst = parse_hurst(root);
  const std::size_t refine = parse_refine(root);
  const std::size_t d = root.count("d", 1), e = root.count("e", 0);
  if (d + e == 0) throw ConfigError(root.field("d"), "need at least one component");
  const std::string conv = root.text("convention", "ito");
  if (conv != "ito" && conv != "geometric") throw ConfigError(root.field("convention"), "expected ito or geometric");
  const double exponent = root.number("holder_exponent", hurst.alpha);
  if (!(exponent > 0.0 && exponent < 0.5)) throw ConfigError(root.field("holder_exponent"), "must lie in (0, 1/2)");
  const TimeGrid fine = grid.refine(refine);
  if (fine.size() * std::max<std::size_t>((d + e) * (d + e), 1) > kLiftBudget) {
    throw ConfigError(root.field("grid"), "refined grid exceeds the lift memory budget");
  }
  RunOutput out;
  out.resolved = {{"grid", grid_echo(grid)}, {"hurst", hurst_echo(hurst)}, {"refine", refine},
                  {"d", d},                  {"e", e},                     {"convention", conv},
                  {"holder_exponent", exponent}};
  if (!ctx.execute) return out;
  const auto driver = sample_mixed(fine, hurst, d, e, ctx.seed);
  const auto lift = lift_mixed(driver, refine, conv == "ito" ? BrownianArea::ito : BrownianArea::geometric,
                               ctx.workers);
  const auto rep = holder_norms(lift, exponent);
  out.artifacts.push_back({"lift.json", to_json(lift) + "\n"});
  out.artifacts.push_back({"holder.json", json_text({{"exponent", rep.exponent},
                                                     {"first_level", rep.first_level_norm},
                                                     {"second_level", rep.second_level_norm},
                                                     {"triple_norm", rep.triple_norm},
                                                     {"dyadic", rep.dyadic}})});
  return out;
}

RunOutput run_solve_rde(const Node& root, const Context& ctx) {
  root.allow({"version", "kind", "seed", "workers", "out", "grid", "hurst", "refine", "field", "y0",
              "holder_exponent"});
  const TimeGrid grid = parse_grid(root);
  const HurstParam hurst = parse_hurst(root);
  const std::size_t refine = parse_refine(root);
  const Node f = root.child("field");
  f.allow({"drift", "noise"});
  const Matrix drift = f.mat("drift");
  const Json& noise_json = f.value("noise");
  if (!noise_json.is_array() || noise_json.empty()) throw ConfigError(f.field("noise"), "expected a list of matrices");
  std::vector<Matrix> noise;
  for (std::size_t i = 0; i < noise_json.size(); ++i) {
    Json wrap = {{"m", noise_json[i]}};
    noise.push_back(Node(wrap, f.field("noise") + "[" + std::to_string(i) + "]").mat("m"));
  }
  const VectorField vf = checked(f.path(), [&] { return linear_field(drift, noise); });
  const Vector y0 = parse_state(root, "y0", vf.state_dim, 1.0);
  const double exponent = root.number("holder_exponent", hurst.beta);
  if (!(exponent > 0.0 && exponent < 0.5)) throw ConfigError(root.field("holder_exponent"), "must lie in (0, 1/2)");
  RunOutput out;
  out.resolved = {{"grid", grid_echo(grid)},
                  {"hurst", hurst_echo(hurst)},
                  {"refine", refine},
                  {"state_dim", vf.state_dim},
                  {"noise_dim", vf.noise_dim},
                  {"holder_exponent", exponent}};
  if (!ctx.execute) return out;
  const auto driver = sample_mixed(grid.refine(refine), hurst, vf.noise_dim, 0, ctx.seed);
  const auto lift = lift_mixed(driver, refine);
  const auto sol = solve_rde(vf, lift, y0);
  out.artifacts.push_back({"solution.csv", path_csv(grid, {{"y", &sol.values}})});
  out.artifacts.push_back({"summary.json", json_text({{"remainder_norm", remainder_norm(sol, exponent)},
                                                      {"holder_norm", path_holder_norm(grid, sol.values, exponent)}})});
  return out;
}

struct SlowFastInputs {
  ParsedModel model;
  TimeGrid grid;
  HurstParam hurst;
  std::size_t refine = 1;
  Vector x0, y0;
};

SlowFastInputs parse_slowfast_inputs(const Node& root) {
  SlowFastInputs in;
  in.model = parse_model(root);
  in.grid = parse_grid(root);
  in.hurst = parse_hurst(root);
  in.refine = parse_refine(root);
  in.x0 = parse_state(root, "x0", in.model.model.m, 1.0);
  in.y0 = parse_state(root, "y0", in.model.model.n, 0.0);
  return in;
}

Json inputs_echo(const SlowFastInputs& in) {
  return {{"model", in.model.echo},
          {"grid", grid_echo(in.grid)},
          {"hurst", hurst_echo(in.hurst)},
          {"refine", in.refine},
          {"x0", std::vector<double>(in.x0.data(), in.x0.data() + in.x0.size())},
          {"y0", std::vector<double>(in.y0.data(), in.y0.data() + in.y0.size())}};
}

ExperimentSetup make_setup(const SlowFastInputs& in, std::size_t n_mc, const Context& ctx) {
  ExperimentSetup s;
  s.grid = in.grid;
  s.hurst = in.hurst;
  s.refine = in.refine;
  s.x0 = in.x0;
  s.y0 = in.y0;
  s.n_mc = n_mc;
  s.seed = ctx.seed;
  s.workers = ctx.workers;
  return s;
}

RunOutput run_slowfast(const Node& root, const Context& ctx) {
  root.allow({"version", "kind", "seed", "workers", "out", "model", "grid", "hurst", "refine", "x0", "y0", "scales",
              "control"});
  const SlowFastInputs in = parse_slowfast_inputs(root);
  const ScaleParams sc = resolve_scales(parse_scales_object(root.child("scales"), true), root.field("scales"),
                                        in.grid, in.hurst.beta, in.refine);
  std::optional<CameronMartinControl> ctrl;
  if (root.has("control")) ctrl = parse_control(root, in.grid, in.hurst.H, in.model.model.d, in.model.model.e);
  RunOutput out;
  out.resolved = inputs_echo(in);
  out.resolved["scales"] = scales_echo(sc);
  out.resolved["controlled"] = ctrl.has_value();
  if (!ctx.execute) return out;
  const auto driver = sample_mixed(in.grid.refine(in.refine), in.hurst, in.model.model.d, in.model.model.e, ctx.seed);
  const auto path = integrate_slowfast(in.model.model, sc, driver, in.refine, in.x0, in.y0,
                                       ctrl ? &*ctrl : nullptr, derive_seed(ctx.seed, 1));
  out.artifacts.push_back({"slow.csv", path_csv(in.grid, {{"x", &path.slow.values}})});
  out.artifacts.push_back({"fast.csv", path_csv(in.grid, {{"y", &path.fast}})});
  return out;
}

RunOutput run_average(const Node& root, const Context& ctx) {
  root.allow({"version", "kind", "seed", "workers", "out", "model", "grid", "hurst", "refine", "x0", "y0", "scales",
              "n_mc", "reference"});
  const SlowFastInputs in = parse_slowfast_inputs(root);
  const Json& list = root.value("scales");
  if (!list.is_array() || list.empty()) throw ConfigError(root.field("scales"), "expected a non-empty list");
  std::vector<ScaleParams> scales;
  Json scales_out = Json::array();
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string field = root.field("scales") + "[" + std::to_string(i) + "]";
    const ScaleParams sc = resolve_scales(parse_scales_object(Node(list[i], field), true), field, in.grid,
                                          in.hurst.beta, in.refine);
    scales.push_back(sc);
    scales_out.push_back(scales_echo(sc));
  }
  const std::size_t n_mc = root.count("n_mc", 100);
  if (n_mc == 0) throw ConfigError(root.field("n_mc"), "must be positive");
  const std::string reference = root.text("reference", "effective");
  if (reference != "effective" && reference != "skeleton") {
    throw ConfigError(root.field("reference"), "expected effective or skeleton");
  }
  RunOutput out;
  out.resolved = inputs_echo(in);
  out.resolved["scales"] = scales_out;
  out.resolved["n_mc"] = n_mc;
  out.resolved["reference"] = reference;
  if (!ctx.execute) return out;
  const auto rows = averaging_experiment(in.model.model, scales, make_setup(in, n_mc, ctx), nullptr,
                                         reference == "skeleton");
  CsvTable table({"eps", "delta", "Delta", "metric", "value", "stderr", "n_mc"});
  for (const auto& row : rows) add_averaging_rows(table, row);
  out.artifacts.push_back({"averaging.csv", table.str()});
  return out;
}

RateTarget parse_target(const Node& root, const RateProblem& base) {
  const Node t = root.child("target");
  t.allow({"terminal", "tube"});
  if (t.has("terminal") == t.has("tube")) throw ConfigError(t.path(), "give exactly one of terminal or tube");
  const std::size_t m = base.model.m;
  if (t.has("terminal")) {
    Vector xi = t.vec("terminal");
    if (static_cast<std::size_t>(xi.size()) != m) throw ConfigError(t.field("terminal"), "expected m entries");
    return RateTarget::point(std::move(xi));
  }
  const Node tube = t.child("tube");
  tube.allow({"radius", "path_csv", "around_terminal"});
  const double radius = tube.positive("radius");
  if (tube.has("path_csv") == tube.has("around_terminal")) {
    throw ConfigError(tube.path(), "give exactly one of path_csv or around_terminal");
  }
  if (tube.has("path_csv")) {
    std::ifstream in(tube.text("path_csv"));
    if (!in) throw ConfigError(tube.field("path_csv"), "cannot open path file");
    auto [grid, path] = checked(tube.field("path_csv"), [&] { return read_path_csv(in); });
    if (!(grid == base.grid) || static_cast<std::size_t>(path.cols()) != m) {
      throw ConfigError(tube.field("path_csv"), "path does not match the grid or slow dimension");
    }
    return RateTarget::tube(std::move(path), radius);
  }
  Vector xi = tube.vec("around_terminal");
  if (static_cast<std::size_t>(xi.size()) != m) throw ConfigError(tube.field("around_terminal"), "expected m entries");
  // Centre path resolved at run time from the point problem.
  RateTarget target = RateTarget::point(std::move(xi));
  target.radius = radius;
  return target;
}

RateProblem parse_rate_problem(const Node& root, const Context& ctx, Json& echo) {
  const ParsedModel pm = parse_model(root);
  RateProblem p;
  p.model = pm.model;
  p.grid = parse_grid(root);
  const HurstParam hurst = parse_hurst(root);
  p.H = hurst.H;
  if (p.H != 0.5 && p.grid.steps() > kMaxVolterraSteps) {
    throw ConfigError(root.field("grid.steps"), "at most " + std::to_string(kMaxVolterraSteps) + " steps for H != 1/2");
  }
  p.x0 = parse_state(root, "x0", p.model.m, 0.0);
  checked(root.field("model"), [&] { return analytic_averaged_drift(p.model); });
  parse_optimizer(root, p, ctx.seed, ctx.workers);
  echo = {{"model", pm.echo}, {"grid", grid_echo(p.grid)}, {"hurst", hurst_echo(hurst)}, {"rate", rate_echo(p)}};
  return p;
}

Json rate_result_json(const RateResult& r) {
  return {{"value", r.value},
          {"constraint_residual", r.constraint_residual},
          {"iterations", r.iterations},
          {"converged", r.converged}};
}

std::string control_text(const CameronMartinControl& c) {
  std::ostringstream os;
  write_control_csv(os, c);
  return os.str();
}

RunOutput run_rate(const Node& root, const Context& ctx) {
  root.allow({"version", "kind", "seed", "workers", "out", "model", "grid", "hurst", "x0", "target", "optimizer",
              "penalty"});
  RunOutput out;
  RateProblem p = parse_rate_problem(root, ctx, out.resolved);
  const RateTarget target = parse_target(root, p);
  const bool around = target.kind == TargetKind::terminal && target.radius > 0.0;
  p.target = target;
  out.resolved["target"] = target.kind == TargetKind::tube ? "tube" : (around ? "tube_around_terminal" : "terminal");
  if (!ctx.execute) return out;
  Json result;
  if (around) {
    RateProblem point = p;
    point.target = RateTarget::point(target.terminal);
    const RateResult centre = solve_rate(point);
    p.target = RateTarget::tube(centre.skeleton, target.radius);
    p.candidates = {centre.u_star};
    result["centre"] = rate_result_json(centre);
  }
  const RateResult r = solve_rate(p);
  result.update(rate_result_json(r));
  out.artifacts.push_back({"rate.json", json_text(result)});
  out.artifacts.push_back({"control.csv", control_text(r.u_star)});
  out.artifacts.push_back({"skeleton.csv", path_csv(p.grid, {{"x", &r.skeleton}})});
  return out;
}

RunOutput run_ldp_probe(const Node& root, const Context& ctx) {
  root.allow({"version", "kind", "seed", "workers", "out", "model", "grid", "hurst", "x0", "y0", "target", "radius",
              "probe", "optimizer", "penalty"});
  RunOutput out;
  RateProblem p = parse_rate_problem(root, ctx, out.resolved);
  const HurstParam hurst = parse_hurst(root);
  const Vector y0 = parse_state(root, "y0", p.model.n, 0.0);
  const Node t = root.child("target");
  t.allow({"terminal"});
  Vector xi = t.vec("terminal");
  if (static_cast<std::size_t>(xi.size()) != p.model.m) throw ConfigError(t.field("terminal"), "expected m entries");
  p.target = RateTarget::point(xi);
  const double radius = root.positive("radius");
  const Node pr = root.child("probe");
  pr.allow({"eps_list", "delta_ratio", "n_mc", "estimator", "refine", "micro_steps", "block", "plain_check_n_mc",
            "plain_check_eps"});
  ProbeSettings s;
  if (pr.has("eps_list")) s.eps_list = pr.list("eps_list");
  for (double eps : s.eps_list) {
    if (!(eps > 0.0 && eps <= 1.0)) throw ConfigError(pr.field("eps_list"), "entries must lie in (0, 1]");
  }
  s.delta_ratio = pr.positive("delta_ratio", s.delta_ratio);
  if (s.delta_ratio >= 1.0) throw ConfigError(pr.field("delta_ratio"), "delta must be smaller than eps");
  s.n_mc = pr.count("n_mc", s.n_mc);
  if (s.n_mc == 0) throw ConfigError(pr.field("n_mc"), "must be positive");
  const std::string est = pr.text("estimator", "importance");
  if (est != "importance" && est != "plain") throw ConfigError(pr.field("estimator"), "expected importance or plain");
  s.estimator = est == "importance" ? Estimator::importance : Estimator::plain;
  s.refine = pr.count("refine", 1);
  if (s.refine == 0 || (s.estimator == Estimator::importance && s.refine != 1)) {
    throw ConfigError(pr.field("refine"), "importance sampling needs refine = 1");
  }
  s.micro_steps = pr.count("micro_steps", 0);
  s.block = pr.has("block") ? pr.positive("block") : 0.0;
  s.seed = derive_seed(ctx.seed, 0x9b0);
  s.workers = ctx.workers;
  const std::size_t plain_n = pr.count("plain_check_n_mc", 0);
  const double plain_eps = pr.positive("plain_check_eps", s.eps_list.empty() ? 0.5 : s.eps_list.front());
  for (double eps : s.eps_list) {
    ScaleParams sc;
    sc.eps = eps;
    sc.delta = s.delta_ratio * eps;
    sc.max_delta_ratio = std::max(0.1, s.delta_ratio);
    sc.block = s.block;
    sc.micro_steps = s.micro_steps;
    resolve_scales(sc, pr.path(), p.grid, hurst.beta, s.refine);
  }
  out.resolved["probe"] = {{"eps_list", s.eps_list}, {"delta_ratio", s.delta_ratio}, {"n_mc", s.n_mc},
                           {"estimator", est},       {"refine", s.refine},           {"radius", radius},
                           {"plain_check_n_mc", plain_n}, {"plain_check_eps", plain_eps}};
  if (!ctx.execute) return out;

  const RateResult centre = solve_rate(p);
  RateProblem tube = p;
  tube.target = RateTarget::tube(centre.skeleton, radius);
  tube.candidates = {centre.u_star};
  const RateResult tilt = solve_rate(tube);
  auto rows = mc_probability(p.model, hurst, p.grid, p.x0, y0, centre.skeleton, radius, &tilt.u_star, s);
  std::vector<std::pair<std::string, ProbeRow>> all;
  for (const auto& r : rows) all.emplace_back(est, r);
  if (plain_n > 0) {
    ProbeSettings check = s;
    check.n_mc = plain_n;
    check.eps_list = {plain_eps};
    for (auto kind : {Estimator::plain, Estimator::importance}) {
      if (kind == Estimator::importance && s.refine != 1) continue;
      check.estimator = kind;
      check.seed = derive_seed(ctx.seed, kind == Estimator::plain ? 0x9b1 : 0x9b2);
      for (const auto& r : mc_probability(p.model, hurst, p.grid, p.x0, y0, centre.skeleton, radius, &tilt.u_star, check)) {
        all.emplace_back(kind == Estimator::plain ? "plain-check" : "importance-check", r);
      }
    }
  }
  CsvTable table({"estimator", "eps", "delta", "p_hat", "stderr", "neg_eps_log_p", "stderr_log", "hits", "n_mc",
                  "upper_95"});
  for (const auto& [name, r] : all) {
    table.row({name, fmt(r.eps), fmt(r.delta), fmt(r.p_hat), fmt(r.stderr_p), fmt(r.neg_eps_log_p),
               fmt(r.stderr_log), fmt(r.hits), fmt(r.n_mc), fmt(r.upper_95)});
  }
  Json rate = {{"point", rate_result_json(centre)}, {"tube", rate_result_json(tilt)}, {"radius", radius}};
  out.artifacts.push_back({"rate.json", json_text(rate)});
  out.artifacts.push_back({"probe.csv", table.str()});
  out.artifacts.push_back({"tilt.csv", control_text(tilt.u_star)});
  return out;
}

RunOutput run_weak_conv(const Node& root, const Context& ctx) {
  root.allow({"version", "kind", "seed", "workers", "out", "model", "grid", "hurst", "refine", "x0", "y0", "n_mc",
              "eps_list", "delta_rule", "control"});
  const SlowFastInputs in = parse_slowfast_inputs(root);
  const std::vector<double> eps_list = root.list("eps_list");
  if (eps_list.empty()) throw ConfigError(root.field("eps_list"), "must not be empty");
  double coefficient = 1.0, power = 2.0;
  if (root.has("delta_rule")) {
    const Node r = root.child("delta_rule");
    r.allow({"coefficient", "power"});
    coefficient = r.positive("coefficient", coefficient);
    power = r.positive("power", power);
  }
  auto delta_of = [coefficient, power](double eps) { return coefficient * std::pow(eps, power); };
  Json scales_out = Json::array();
  for (double eps : eps_list) {
    ScaleParams sc;
    sc.eps = eps;
    sc.delta = delta_of(eps);
    sc.max_delta_ratio = 1.0;
    scales_out.push_back(scales_echo(resolve_scales(sc, root.field("eps_list"), in.grid, in.hurst.beta, in.refine)));
  }
  const CameronMartinControl ctrl = root.has("control")
                                        ? parse_control(root, in.grid, in.hurst.H, in.model.model.d, in.model.model.e)
                                        : CameronMartinControl::zero(in.grid, in.hurst.H, in.model.model.d,
                                                                     in.model.model.e);
  checked(root.field("model"), [&] { return analytic_averaged_drift(in.model.model); });
  const std::size_t n_mc = root.count("n_mc", 100);
  if (n_mc == 0) throw ConfigError(root.field("n_mc"), "must be positive");
  RunOutput out;
  out.resolved = inputs_echo(in);
  out.resolved["scales"] = scales_out;
  out.resolved["n_mc"] = n_mc;
  out.resolved["delta_rule"] = {{"coefficient", coefficient}, {"power", power}};
  if (!ctx.execute) return out;
  const auto table = weak_convergence_probe(in.model.model, eps_list, delta_of, ctrl, make_setup(in, n_mc, ctx));
  CsvTable csv({"eps", "delta", "proxy", "stderr", "n_mc"});
  for (const auto& r : table.rows) csv.row({fmt(r.eps), fmt(r.delta), fmt(r.proxy.mean), fmt(r.proxy.se), fmt(r.n_mc)});
  out.artifacts.push_back({"weak_convergence.csv", csv.str()});
  out.artifacts.push_back({"summary.json", json_text({{"decreasing", table.decreasing}})});
  return out;
}

RunOutput run_sweep(const Node& root, const Context& ctx) {
  root.allow({"version", "kind", "seed", "workers", "out", "model", "grid", "hurst", "refine", "x0", "y0", "n_mc",
              "scales", "parameters"});
  const SlowFastInputs in = parse_slowfast_inputs(root);
  const ScaleParams base = root.has("scales") ? parse_scales_object(root.child("scales"), false) : ScaleParams{};
  const Node params = root.child("parameters");
  params.allow({"eps", "delta", "block", "n_mc"});
  auto axis = [&](const char* key, double fallback) {
    std::vector<double> xs = params.has(key) ? params.list(key) : std::vector<double>{fallback};
    if (xs.empty()) throw ConfigError(params.field(key), "must not be empty");
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    return xs;
  };
  const bool have_eps = params.has("eps") || (root.has("scales") && root.child("scales").has("eps"));
  const bool have_delta = params.has("delta") || (root.has("scales") && root.child("scales").has("delta"));
  if (!have_eps || !have_delta) throw ConfigError(params.path(), "eps and delta must be given in scales or parameters");
  const auto eps = axis("eps", base.eps), delta = axis("delta", base.delta), block = axis("block", base.block);
  std::vector<std::size_t> n_mc;
  for (double x : axis("n_mc", static_cast<double>(root.count("n_mc", 100)))) {
    if (!(x >= 1.0) || x != std::floor(x)) throw ConfigError(params.field("n_mc"), "entries must be positive integers");
    n_mc.push_back(static_cast<std::size_t>(x));
  }
  struct Cell {
    ScaleParams scales;
    std::size_t n_mc;
  };
  std::vector<Cell> cells;
  for (double a : eps) {
    for (double b : delta) {
      for (double c : block) {
        for (std::size_t n : n_mc) {
          ScaleParams sc = base;
          sc.eps = a;
          sc.delta = b;
          sc.block = c;
          cells.push_back({sc, n});
        }
      }
    }
  }
  RunOutput out;
  out.resolved = inputs_echo(in);
  out.resolved["cells"] = cells.size();
  Json resolved_cells = Json::array();
  for (const auto& cell : cells) {
    Json j = scales_echo(cell.scales);
    j["n_mc"] = cell.n_mc;
    try {
      const ScaleParams r = cell.scales.resolved(in.grid, in.hurst.beta, in.refine);
      j = scales_echo(r);
      j["n_mc"] = cell.n_mc;
    } catch (const ParameterError& e) {
      j["status"] = std::string("error: ") + e.what();
    }
    resolved_cells.push_back(j);
  }
  out.resolved["cell_scales"] = resolved_cells;
  if (!ctx.execute) return out;

  const DriftField fbar = checked(root.field("model"), [&] {
    ScaleParams pilot = base;
    pilot.eps = eps.front();
    pilot.delta = delta.front();
    try {
      return resolve_averaged_drift(in.model.model, pilot, make_setup(in, n_mc.front(), ctx));
    } catch (const ParameterError&) {
      return analytic_averaged_drift(in.model.model);
    }
  });
  AveragingReference reference;
  reference.fbar = fbar;
  std::vector<AveragingRow> rows(cells.size());
  std::vector<std::string> status(cells.size(), "ok");
  parallel_for(cells.size(), ctx.workers, [&](std::size_t i) {
    ExperimentSetup setup = make_setup(in, cells[i].n_mc, ctx);
    setup.workers = 1;
    try {
      rows[i] = averaging_cell(in.model.model, cells[i].scales, setup, nullptr, reference);
    } catch (const Error& e) {
      status[i] = csv_field(std::string("error: ") + e.what());
      rows[i].scales = cells[i].scales;
      rows[i].n_mc = cells[i].n_mc;
    }
  });
  std::vector<std::string> header{"eps", "delta", "Delta", "n_mc"};
  for (const auto& [name, v] : averaging_metrics(rows.front())) {
    header.push_back(name);
    header.push_back(std::string(name) + "_se");
  }
  header.push_back("status");
  CsvTable table(header);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const bool ok = status[i] == "ok";
    const ScaleParams& sc = ok ? rows[i].scales : cells[i].scales;
    std::vector<std::string> line{fmt(sc.eps), fmt(sc.delta), fmt(sc.block), fmt(cells[i].n_mc)};
    for (const auto& [name, v] : averaging_metrics(rows[i])) {
      line.push_back(ok ? fmt(v->mean) : "");
      line.push_back(ok ? fmt(v->se) : "");
    }
    line.push_back(status[i]);
    table.row(line);
  }
  out.artifacts.push_back({"sweep.csv", table.str()});
  return out;
}

RunOutput dispatch(const std::string& kind, const Json& config, const Context& ctx) {
  const Node root(config, "");
  if (!root.has("version")) throw ConfigError("version", "required key missing");
  if (!config.at("version").is_number_integer() || config.at("version").get<int>() != kConfigVersion) {
    throw ConfigError("version", "unsupported format version (expected " + std::to_string(kConfigVersion) + ")");
  }
  if (root.text("kind") != kind) throw ConfigError("kind", "config is for '" + root.text("kind") + "', not '" + kind + "'");
  root.count("seed", 0);
  root.count("workers", 1);
  root.text("out", "");
  if (kind == "sample") return run_sample(root, ctx);
  if (kind == "lift") return run_lift(root, ctx);
  if (kind == "solve-rde") return run_solve_rde(root, ctx);
  if (kind == "slowfast") return run_slowfast(root, ctx);
  if (kind == "average") return run_average(root, ctx);
  if (kind == "rate") return run_rate(root, ctx);
  if (kind == "ldp-probe") return run_ldp_probe(root, ctx);
  if (kind == "weak-conv") return run_weak_conv(root, ctx);
  if (kind == "sweep") return run_sweep(root, ctx);
  throw ConfigError("kind", "unknown experiment kind '" + kind + "'");
}

}  // namespace

const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds{"sample", "lift",      "solve-rde", "slowfast", "average",
                                              "rate",   "ldp-probe", "weak-conv", "sweep"};
  return kinds;
}

Json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config", std::string("malformed JSON: ") + e.what());
  }
}

void validate_config(const Json& config, const std::string& kind) {
  Context ctx;
  ctx.execute = false;
  dispatch(kind, config, ctx);
}

RunOutput run_experiment(const std::string& kind, const Json& config, std::uint64_t seed, std::size_t workers) {
  Context ctx;
  ctx.seed = seed;
  ctx.workers = std::max<std::size_t>(1, workers);
  ctx.execute = false;
  dispatch(kind, config, ctx);
  ctx.execute = true;
  RunOutput out = dispatch(kind, config, ctx);
  out.resolved["seed"] = seed;
  out.resolved["workers"] = ctx.workers;
  return out;
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

std::string canonical(const Json& config) { return config.dump(); }

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Json write_run(const std::string& out_dir, const std::string& kind, const Json& config, const RunOutput& output,
               std::uint64_t seed, std::size_t workers, double wall_seconds) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw ResourceError("cannot create output directory '" + out_dir + "': " + ec.message());
  Json artifacts = Json::array();
  for (const auto& a : output.artifacts) {
    const fs::path file = fs::path(out_dir) / a.name;
    std::ofstream f(file, std::ios::binary);
    if (!f) throw ResourceError("cannot write '" + file.string() + "'");
    f << a.content;
    artifacts.push_back({{"name", a.name}, {"sha256", sha256_hex(a.content)}, {"bytes", a.content.size()}});
  }
  Json manifest = {{"format_version", kConfigVersion},
                   {"kind", kind},
                   {"code_version", ROUGHFLOW_VERSION},
                   {"config_hash", sha256_hex(canonical(config))},
                   {"master_seed", seed},
                   {"workers", workers},
                   {"wall_clock_seconds", wall_seconds},
                   {"resolved", output.resolved},
                   {"artifacts", artifacts}};
  std::ofstream f(fs::path(out_dir) / "manifest.json", std::ios::binary);
  if (!f) throw ResourceError("cannot write manifest");
  f << manifest.dump(2) << '\n';
  return manifest;
}

std::size_t effective_workers(const CommandLine& cmd, const Json& config) {
  if (cmd.workers && *cmd.workers > 0) return *cmd.workers;
  if (std::getenv("ROUGHFLOW_WORKERS")) {
    const std::size_t env = resolve_workers(0);
    if (env > 0) return env;
  }
  if (config.is_object() && config.contains("workers") && config["workers"].is_number_integer() &&
      config["workers"].get<std::int64_t>() > 0) {
    return config["workers"].get<std::size_t>();
  }
  return 1;
}

int execute(const CommandLine& cmd) {
  try {
    const Json config = load_config(cmd.config_path);
    std::uint64_t seed = 0;
    if (cmd.seed) {
      seed = *cmd.seed;
    } else if (config.is_object() && config.contains("seed") && config["seed"].is_number_integer() &&
               config["seed"].get<std::int64_t>() >= 0) {
      seed = config["seed"].get<std::uint64_t>();
    }
    const std::size_t workers = effective_workers(cmd, config);
    const auto start = std::chrono::steady_clock::now();
    const RunOutput output = run_experiment(cmd.kind, config, seed, workers);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string out_dir = "roughflow_out";
    if (cmd.out) {
      out_dir = *cmd.out;
    } else if (config.contains("out") && config["out"].is_string()) {
      out_dir = config["out"].get<std::string>();
    }
    const Json manifest = write_run(out_dir, cmd.kind, config, output, seed, workers, wall);
    std::cout << cmd.kind << ": wrote " << output.artifacts.size() << " artifact(s) to " << out_dir << '\n';
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace roughflow::cli
