// Scenario parsing (strict JSON) and the command pipelines behind the CLI.

#include "ck/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ck/cgo.hpp"
#include "ck/rng.hpp"

namespace ck {
namespace {

using Json = nlohmann::ordered_json;
using Cd = std::complex<double>;

constexpr double kTau = 6.283185307179586476925286766559;
constexpr double kPi = 3.1415926535897932384626433832795;

// ---------------------------------------------------------------------------
// Strict JSON access: every key is either consumed by a typed getter or
// reported as unknown.
// ---------------------------------------------------------------------------

class StrictObj {
 public:
  StrictObj(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ScenarioError(where_ + ": expected a JSON object");
  }

  const Json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const Json& require(const std::string& key) {
    const Json* p = find(key);
    if (!p) throw ScenarioError(where_ + ": missing required key \"" + key + "\"");
    return *p;
  }

  std::string str(const std::string& key, const std::string& dflt) {
    const Json* p = find(key);
    if (!p) return dflt;
    if (!p->is_string()) throw ScenarioError(where_ + "." + key + ": expected a string");
    return p->get<std::string>();
  }

  std::string str_req(const std::string& key) {
    const Json& v = require(key);
    if (!v.is_string()) throw ScenarioError(where_ + "." + key + ": expected a string");
    return v.get<std::string>();
  }

  bool boolean(const std::string& key, bool dflt) {
    const Json* p = find(key);
    if (!p) return dflt;
    if (!p->is_boolean()) throw ScenarioError(where_ + "." + key + ": expected a boolean");
    return p->get<bool>();
  }

  int integer(const std::string& key, int dflt, int lo, int hi) {
    const Json* p = find(key);
    if (!p) return dflt;
    if (!p->is_number_integer())
      throw ScenarioError(where_ + "." + key + ": expected an integer");
    long long v = p->get<long long>();
    if (v < lo || v > hi)
      throw ScenarioError(where_ + "." + key + ": value " + std::to_string(v) +
                          " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return static_cast<int>(v);
  }

  double number(const std::string& key, double dflt, double lo, double hi) {
    const Json* p = find(key);
    if (!p) return dflt;
    if (!p->is_number()) throw ScenarioError(where_ + "." + key + ": expected a number");
    double v = p->get<double>();
    if (!std::isfinite(v) || v < lo || v > hi)
      throw ScenarioError(where_ + "." + key + ": value outside [" + std::to_string(lo) +
                          ", " + std::to_string(hi) + "]");
    return v;
  }

  std::uint64_t u64(const std::string& key, std::uint64_t dflt) {
    const Json* p = find(key);
    if (!p) return dflt;
    if (!(p->is_number_unsigned() || (p->is_number_integer() && p->get<long long>() >= 0)))
      throw ScenarioError(where_ + "." + key + ": expected a non-negative integer");
    return p->get<std::uint64_t>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> dflt, size_t min_len,
                              size_t max_len) {
    const Json* p = find(key);
    if (!p) return dflt;
    if (!p->is_array()) throw ScenarioError(where_ + "." + key + ": expected an array");
    std::vector<double> out;
    for (const auto& e : *p) {
      if (!e.is_number() || !std::isfinite(e.get<double>()))
        throw ScenarioError(where_ + "." + key + ": expected finite numbers");
      out.push_back(e.get<double>());
    }
    if (out.size() < min_len || out.size() > max_len)
      throw ScenarioError(where_ + "." + key + ": expected between " + std::to_string(min_len) +
                          " and " + std::to_string(max_len) + " entries");
    return out;
  }

  const Json& object(const std::string& key) {
    const Json& v = require(key);
    if (!v.is_object()) throw ScenarioError(where_ + "." + key + ": expected an object");
    return v;
  }

  // Call last: any key not consumed above is a config error.
  void finish() {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw ScenarioError(where_ + ": unknown key \"" + it.key() + "\"");
  }

  const std::string& where() const { return where_; }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

VecN<double> to_vec(const std::vector<double>& v) {
  VecN<double> out(static_cast<int>(v.size()));
  for (int i = 0; i < out.n; ++i) out[i] = v[i];
  return out;
}

// ---------------------------------------------------------------------------
// Field / manifold construction.
// ---------------------------------------------------------------------------

SimpleManifold flat_disc() {
  SimpleManifold M;
  M.metric = ChartMetric::euclidean(2);
  M.metric.chart = Chart::box(2, -1.5, 1.5);
  M.boundary_fn = ScalarField{2, 0.5 * (1.0 - coord(0) * coord(0) - coord(1) * coord(1))};
  M.center = VecN<double>(2);
  return M;
}

SimpleManifold conformal_disc() {
  SimpleManifold M = flat_disc();
  Expr c = 1.0 + 0.3 * (coord(0) * coord(0) + 0.6 * coord(1) * coord(1));
  M.metric.set(0, 0, c);
  M.metric.set(0, 1, kr(0.0));
  M.metric.set(1, 1, c);
  return M;
}

SimpleManifold poincare_disc() {
  SimpleManifold M;
  Expr den = 1.0 - coord(0) * coord(0) - coord(1) * coord(1);
  M.metric.chart = Chart::box(2, -0.95, 0.95);
  M.metric.set(0, 0, 4.0 * pow_int(den, -2));
  M.metric.set(1, 1, 4.0 * pow_int(den, -2));
  M.metric.set(0, 1, kr(0.0));
  M.boundary_fn = ScalarField{2, 0.5 * (0.64 - coord(0) * coord(0) - coord(1) * coord(1))};
  M.center = VecN<double>(2);
  return M;
}

Chart cyl_chart(double x0, double x1, double r0, double r1) {
  Chart ch;
  ch.dim = 3;
  ch.lo[0] = x0;
  ch.hi[0] = x1;
  ch.lo[1] = r0;
  ch.hi[1] = r1;
  ch.lo[2] = 0.0;
  ch.hi[2] = kTau;
  return ch;
}

double field_eval(const ScalarField& f, const VecN<double>& x) {
  return eval_value(f.f, x).real();
}

// Uniform draw over the chart box that lands a fraction of the way inside
// the boundary function's range.
VecN<double> interior_point(const SimpleManifold& M, Rng& rng, double frac = 0.25) {
  const Chart& ch = M.metric.chart;
  double beta0 = field_eval(M.boundary_fn, M.center);
  for (int tries = 0; tries < 100000; ++tries) {
    VecN<double> x(2);
    for (int i = 0; i < 2; ++i) x[i] = rng.uniform(ch.lo[i], ch.hi[i]);
    if (field_eval(M.boundary_fn, x) >= frac * beta0) return x;
  }
  throw std::runtime_error("scenario: interior point sampling failed");
}

// ---------------------------------------------------------------------------
// Report plumbing.
// ---------------------------------------------------------------------------

struct CheckList {
  Json rows = Json::array();
  bool all_pass = true;

  void add(const std::string& name, double value, double tolerance) {
    bool ok = std::isfinite(value) && value <= tolerance;
    rows.push_back({{"name", name}, {"value", value}, {"tolerance", tolerance}, {"pass", ok}});
    all_pass = all_pass && ok;
  }
  // Value must land inside a window instead of under a bound.
  void add_window(const std::string& name, double value, double lo, double hi) {
    bool ok = std::isfinite(value) && value >= lo && value <= hi;
    rows.push_back(
        {{"name", name}, {"value", value}, {"window", {lo, hi}}, {"pass", ok}});
    all_pass = all_pass && ok;
  }
  void add_flag(const std::string& name, bool ok) {
    rows.push_back({{"name", name}, {"pass", ok}});
    all_pass = all_pass && ok;
  }
};

class CsvFile {
 public:
  CsvFile(const std::filesystem::path& path, const std::string& header) : out_(path) {
    if (!out_) throw std::runtime_error("scenario: cannot open CSV file " + path.string());
    out_ << header << "\n";
  }
  void row(std::initializer_list<double> cells) {
    bool first = true;
    char buf[40];
    for (double c : cells) {
      std::snprintf(buf, sizeof buf, "%.17g", c);
      if (!first) out_ << ",";
      out_ << buf;
      first = false;
    }
    out_ << "\n";
  }
  void row_tagged(const std::string& tag, std::initializer_list<double> cells) {
    out_ << tag;
    char buf[40];
    for (double c : cells) {
      std::snprintf(buf, sizeof buf, "%.17g", c);
      out_ << "," << buf;
    }
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

struct RunnerContext {
  const Scenario& sc;
  const RunOptions& opt;
  std::filesystem::path out_dir;
  std::vector<std::string>* csv_paths;

  double tol(double base) const { return base * opt.tolerance_scale; }
  std::filesystem::path csv_path(const std::string& name) {
    std::filesystem::path p = std::filesystem::path(name).is_absolute()
                                  ? std::filesystem::path(name)
                                  : out_dir / name;
    csv_paths->push_back(p.string());
    return p;
  }
};

Json field_json(const FieldSpec& f) {
  Json j;
  j["kind"] = f.kind;
  if (f.kind == "constant") {
    j["value"] = f.value;
    if (f.value_im != 0.0) j["value_im"] = f.value_im;
  } else {
    j["amplitude"] = f.amplitude;
    if (f.kind == "gaussian") j["width"] = f.width;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Command parameter parsing.
// ---------------------------------------------------------------------------

FieldSpec parse_field(const Json& j, const std::string& where) {
  StrictObj o(j, where);
  FieldSpec f;
  f.kind = o.str("kind", "constant");
  const auto kinds = field_kinds();
  if (std::find(kinds.begin(), kinds.end(), f.kind) == kinds.end())
    throw ScenarioError(where + ".kind: unknown field kind \"" + f.kind + "\"");
  f.value = o.number("value", 0.0, -1e6, 1e6);
  f.value_im = o.number("value_im", 0.0, -1e6, 1e6);
  f.amplitude = o.number("amplitude", 1.0, -1e6, 1e6);
  f.width = o.number("width", 1.0, 0.0, 1e4);
  o.finish();
  return f;
}

std::string parse_manifold_name(StrictObj& o) {
  std::string name = o.str("manifold", "flat-disc");
  const auto names = manifold_names();
  if (std::find(names.begin(), names.end(), name) == names.end())
    throw ScenarioError(o.where() + ".manifold: unknown manifold \"" + name + "\"");
  return name;
}

WeightSpec parse_weight(const Json& j) {
  StrictObj o(j, "parameters.weight");
  WeightSpec w;
  try {
    w.family = weight_family_from_string(o.str_req("family"));
  } catch (const std::exception& e) {
    throw ScenarioError(std::string("parameters.weight.family: ") + e.what());
  }
  w.a = o.number("a", 1.0, -100.0, 100.0);
  if (w.a == 0.0) throw ScenarioError("parameters.weight.a: must be nonzero");
  w.b = o.number("b", 0.0, -100.0, 100.0);
  std::vector<double> x0 = o.numbers("x0", {}, 2, kJetMaxVars);
  if (x0.empty()) throw ScenarioError("parameters.weight: missing required key \"x0\"");
  w.x0 = to_vec(x0);
  const size_t n = x0.size();
  std::vector<double> xi = o.numbers("xi", {}, n, n);
  if (!xi.empty()) w.xi = to_vec(xi);
  std::vector<double> o1 = o.numbers("omega1", {}, n, n);
  std::vector<double> o2 = o.numbers("omega2", {}, n, n);
  w.theta = o.number("theta", 0.0, -10.0, 10.0);
  o.finish();

  const bool needs_xi = w.family == WeightFamily::Linear || w.family == WeightFamily::InvLinear ||
                        w.family == WeightFamily::ArgSphere || w.family == WeightFamily::LogRatio;
  if (needs_xi && xi.empty())
    throw ScenarioError("parameters.weight: this family needs a direction \"xi\"");
  if (w.family == WeightFamily::ArgPlane) {
    if (o1.empty() || o2.empty())
      throw ScenarioError("parameters.weight: arg-plane needs \"omega1\" and \"omega2\"");
    // Orthonormalize the configured pair; reject only genuinely degenerate input.
    VecN<double> u = to_vec(o1), v = to_vec(o2);
    double nu = std::sqrt(dot(u, u));
    if (nu < 1e-9) throw ScenarioError("parameters.weight.omega1: vanishing vector");
    for (int i = 0; i < u.n; ++i) u[i] /= nu;
    double d = dot(u, v);
    for (int i = 0; i < v.n; ++i) v[i] -= d * u[i];
    double nv = std::sqrt(dot(v, v));
    if (nv < 1e-9)
      throw ScenarioError("parameters.weight.omega2: parallel to omega1");
    for (int i = 0; i < v.n; ++i) v[i] /= nv;
    w.omega1 = u;
    w.omega2 = v;
  }
  return w;
}

CommandParams parse_params(const std::string& command, const Json& pj) {
  if (command == "check-weight") {
    StrictObj o(pj, "parameters");
    CheckWeightParams p;
    p.weight = parse_weight(o.object("weight"));
    p.points = o.integer("points", 50, 1, 100000);
    p.directions = o.integer("directions", 16, 1, 4096);
    p.tolerance = o.number("tolerance", 1e-6, 0.0, 1.0);
    o.finish();
    return p;
  }
  if (command == "catalog-verify") {
    StrictObj o(pj, "parameters");
    CatalogVerifyParams p;
    p.draws = o.integer("draws", 20, 1, 10000);
    p.points = o.integer("points", 50, 1, 100000);
    p.directions = o.integer("directions", 16, 1, 4096);
    p.dim = o.integer("dim", 3, 2, kJetMaxVars);
    p.tolerance = o.number("tolerance", 1e-6, 0.0, 1.0);
    p.csv = o.str("csv", p.csv);
    o.finish();
    return p;
  }
  if (command == "geodesic") {
    StrictObj o(pj, "parameters");
    GeodesicParams p;
    p.manifold = parse_manifold_name(o);
    std::vector<double> start = o.numbers("start", {0.0, 0.0}, 2, 2);
    p.start[0] = start[0];
    p.start[1] = start[1];
    p.angle = o.number("angle", 0.0, -10.0, 10.0);
    p.step = o.number("step", 0.0, 0.0, 1.0);
    p.tolerance = o.number("tolerance", 1e-6, 0.0, 1.0);
    p.csv = o.str("csv", p.csv);
    o.finish();
    SimpleManifold M = make_manifold(p.manifold);
    VecN<double> x0(2);
    x0[0] = p.start[0];
    x0[1] = p.start[1];
    if (!M.metric.chart.contains(x0) || field_eval(M.boundary_fn, x0) < 0.0)
      throw ScenarioError("parameters.start: point lies outside the manifold");
    return p;
  }
  if (command == "xray-forward") {
    StrictObj o(pj, "parameters");
    XrayForwardParams p;
    p.manifold = parse_manifold_name(o);
    if (const Json* f = o.find("attenuation")) p.attenuation = parse_field(*f, "parameters.attenuation");
    if (const Json* f = o.find("integrand")) p.integrand = parse_field(*f, "parameters.integrand");
    p.fan_boundary = o.integer("fan_boundary", 32, 2, 4096);
    p.fan_angle = o.integer("fan_angle", 16, 2, 4096);
    p.step = o.number("step", 0.0, 0.0, 1.0);
    p.tolerance = o.number("tolerance", 1e-6, 0.0, 1.0);
    p.csv = o.str("csv", p.csv);
    o.finish();
    return p;
  }
  if (command == "xray-invert") {
    StrictObj o(pj, "parameters");
    XrayInvertParams p;
    if (const Json* f = o.find("attenuation")) p.attenuation = parse_field(*f, "parameters.attenuation");
    if (const Json* f = o.find("source")) p.source = parse_field(*f, "parameters.source");
    p.manifold = parse_manifold_name(o);
    p.grid_n = o.integer("grid_n", 32, 4, 256);
    p.fan_boundary = o.integer("fan_boundary", 64, 4, 4096);
    p.fan_angle = o.integer("fan_angle", 64, 4, 4096);
    p.regularization = o.number("regularization", 0.0, 0.0, 1e6);
    p.max_rel_error = o.number("max_rel_error", 0.05, 0.0, 10.0);
    p.cache = o.str("cache", "");
    p.csv = o.str("csv", p.csv);
    o.finish();
    return p;
  }
  if (command == "pestov") {
    StrictObj o(pj, "parameters");
    PestovParams p;
    p.manifold = parse_manifold_name(o);
    p.draws = o.integer("draws", 200, 1, 100000);
    p.tolerance = o.number("tolerance", 1e-5, 0.0, 1.0);
    p.richardson = o.boolean("richardson", true);
    p.min_order = o.number("min_order", 1.9, 0.0, 4.0);
    o.finish();
    return p;
  }
  if (command == "santalo") {
    StrictObj o(pj, "parameters");
    SantaloParams p;
    p.manifold = parse_manifold_name(o);
    if (const Json* f = o.find("integrand")) p.integrand = parse_field(*f, "parameters.integrand");
    p.fan_boundary = o.integer("fan_boundary", 256, 4, 8192);
    p.fan_angle = o.integer("fan_angle", 128, 4, 8192);
    p.max_rel_error = o.number("max_rel_error", 1e-3, 0.0, 1.0);
    p.check_refinement = o.boolean("check_refinement", false);
    o.finish();
    return p;
  }
  if (command == "cgo-scan") {
    StrictObj o(pj, "parameters");
    CgoScanParams p;
    p.manifold = parse_manifold_name(o);
    p.conformal = o.str("conformal", "one");
    const auto cn = conformal_names();
    if (std::find(cn.begin(), cn.end(), p.conformal) == cn.end())
      throw ScenarioError("parameters.conformal: unknown conformal factor \"" + p.conformal + "\"");
    std::vector<double> rw = o.numbers("r_window", {0.15, 0.6}, 2, 2);
    if (!(rw[0] > 0.0 && rw[1] > rw[0] && rw[1] < 10.0))
      throw ScenarioError("parameters.r_window: expected 0 < r0 < r1 < 10");
    p.r_window[0] = rw[0];
    p.r_window[1] = rw[1];
    p.h_list = o.numbers("h_list", p.h_list, 2, 64);
    for (double h : p.h_list)
      if (!(h > 0.0 && h <= 1.0)) throw ScenarioError("parameters.h_list: steps must be in (0, 1]");
    p.grid_n = o.integer("grid_n", 8, 2, 64);
    std::vector<double> sr = o.numbers("slope_range", {1.95, 2.05}, 2, 2);
    if (!(sr[0] < sr[1])) throw ScenarioError("parameters.slope_range: expected lo < hi");
    p.slope_range[0] = sr[0];
    p.slope_range[1] = sr[1];
    p.max_eikonal = o.number("max_eikonal", 1e-10, 0.0, 1.0);
    p.max_transport = o.number("max_transport", 1e-5, 0.0, 1.0);
    p.magnetic = o.boolean("magnetic", false);
    p.csv = o.str("csv", p.csv);
    o.finish();
    return p;
  }
  if (command == "boundary-recover") {
    StrictObj o(pj, "parameters");
    BoundaryRecoverParams p;
    p.sets = o.integer("sets", 5, 1, 1000);
    p.patch_h = o.number("patch_h", 0.015, 1e-4, 0.1);
    p.directions = o.integer("directions", 0, 0, 1024);
    p.max_rel_error = o.number("max_rel_error", 1e-6, 0.0, 1.0);
    p.flat_tolerance = o.number("flat_tolerance", 1e-10, 0.0, 1.0);
    p.csv = o.str("csv", p.csv);
    o.finish();
    return p;
  }
  if (command == "gauge-check") {
    StrictObj o(pj, "parameters");
    GaugeCheckParams p;
    p.draws = o.integer("draws", 100, 1, 100000);
    p.tolerance = o.number("tolerance", 1e-5, 0.0, 1.0);
    p.metric = o.str("metric", "both");
    if (p.metric != "flat" && p.metric != "curved" && p.metric != "both")
      throw ScenarioError("parameters.metric: expected \"flat\", \"curved\", or \"both\"");
    o.finish();
    return p;
  }
  throw ScenarioError("scenario.command: unknown command \"" + command + "\"");
}

// ---------------------------------------------------------------------------
// Command runners. Each returns the deterministic report body.
// ---------------------------------------------------------------------------

Json run_check_weight(const CheckWeightParams& p, RunnerContext& ctx) {
  Rng rng = Rng(ctx.sc.seed).derive("check-weight");
  EuclideanWeight w = euclidean_weight(p.weight);
  const int dim = p.weight.x0.n;
  ChartMetric m = ChartMetric::euclidean(dim);
  m.chart = Chart::box(dim, -64.0, 64.0);

  auto pts = weight_sample_points(w, dim, p.points, rng);
  Tolerance tol{ctx.tol(p.tolerance), 0.0};
  LcwReport rep = lcw_report(m, w.phi, pts, p.directions, tol);

  CheckList checks;
  checks.add("max_normalized_bracket", rep.max_bracket, ctx.tol(p.tolerance));

  Json out;
  out["family"] = to_string(p.weight.family);
  out["dim"] = dim;
  out["points"] = p.points;
  out["directions"] = p.directions;
  out["max_bracket"] = rep.max_bracket;
  out["is_lcw"] = rep.is_lcw;
  Json worst;
  worst["x"] = Json::array();
  worst["xi"] = Json::array();
  for (int i = 0; i < rep.worst_sample.x.n; ++i) worst["x"].push_back(rep.worst_sample.x[i]);
  for (int i = 0; i < rep.worst_sample.xi.n; ++i) worst["xi"].push_back(rep.worst_sample.xi[i]);
  out["worst_sample"] = worst;
  out["checks"] = checks.rows;
  out["pass"] = checks.all_pass;
  return out;
}

Json run_catalog_verify(const CatalogVerifyParams& p, RunnerContext& ctx) {
  const WeightFamily families[] = {WeightFamily::Linear,    WeightFamily::ArgPlane,
                                   WeightFamily::Log,       WeightFamily::InvLinear,
                                   WeightFamily::ArgSphere, WeightFamily::LogRatio};
  ChartMetric m = ChartMetric::euclidean(p.dim);
  m.chart = Chart::box(p.dim, -64.0, 64.0);
  Tolerance tol{ctx.tol(p.tolerance), 0.0};

  CsvFile csv(ctx.csv_path(p.csv), "family,draw,max_bracket");
  CheckList checks;
  Json fam_json = Json::array();
  Rng root(ctx.sc.seed);

  for (WeightFamily fam : families) {
    const std::string name = to_string(fam);
    Rng rng = root.derive("catalog/" + name);
    double fam_max = 0.0;
    for (int d = 0; d < p.draws; ++d) {
      WeightSpec spec = random_weight_spec(fam, p.dim, rng);
      EuclideanWeight w = euclidean_weight(spec);
      auto pts = weight_sample_points(w, p.dim, p.points, rng);
      LcwReport rep = lcw_report(m, w.phi, pts, p.directions, tol);
      fam_max = std::max(fam_max, rep.max_bracket);
      csv.row_tagged(name, {static_cast<double>(d), rep.max_bracket});
    }
    checks.add(name + " max_bracket", fam_max, ctx.tol(p.tolerance));
    fam_json.push_back({{"family", name}, {"draws", p.draws}, {"max_bracket", fam_max}});
  }

  Json out;
  out["dim"] = p.dim;
  out["draws"] = p.draws;
  out["points"] = p.points;
  out["directions"] = p.directions;
  out["families"] = fam_json;
  out["checks"] = checks.rows;
  out["pass"] = checks.all_pass;
  return out;
}

Json run_geodesic(const GeodesicParams& p, RunnerContext& ctx) {
  SimpleManifold M = make_manifold(p.manifold);
  VecN<double> x0(2), v0(2);
  x0[0] = p.start[0];
  x0[1] = p.start[1];
  v0[0] = std::cos(p.angle);
  v0[1] = std::sin(p.angle);
  MatN<double> g = metric_jets(M.metric, x0).g;
  double speed = std::sqrt(form(g, v0, v0));
  for (int i = 0; i < 2; ++i) v0[i] /= speed;

  GeodesicPath path = integrate_geodesic(M, x0, v0, p.step);

  double unit_dev = 0.0;
  for (const auto& s : path.samples) {
    MatN<double> gs = metric_jets(M.metric, s.x).g;
    unit_dev = std::max(unit_dev, std::abs(std::sqrt(form(gs, s.v, s.v)) - 1.0));
  }
  double boundary_defect = std::abs(field_eval(M.boundary_fn, path.samples.back().x));

  CsvFile csv(ctx.csv_path(p.csv), "t,x1,x2,v1,v2");
  for (const auto& s : path.samples) csv.row({s.t, s.x[0], s.x[1], s.v[0], s.v[1]});

  CheckList checks;
  checks.add("unit_speed_deviation", unit_dev, ctx.tol(p.tolerance));
  checks.add("exit_boundary_defect", boundary_defect, ctx.tol(1e-8));

  Json out;
  out["manifold"] = p.manifold;
  out["start"] = {p.start[0], p.start[1]};
  out["angle"] = p.angle;
  out["tau"] = path.tau;
  out["exit"] = {path.samples.back().x[0], path.samples.back().x[1]};
  out["samples"] = path.samples.size();
  out["entered_at_boundary"] = path.entered_at_boundary;
  out["checks"] = checks.rows;
  out["pass"] = checks.all_pass;
  return out;
}

Json run_xray_forward(const XrayForwardParams& p, RunnerContext& ctx) {
  SimpleManifold M = make_manifold(p.manifold);
  ScalarField a = make_field(p.attenuation);
  ScalarField f = make_field(p.integrand);
  auto fan = fan_rays(M, p.fan_boundary, p.fan_angle);

  FanMeasurement meas = forward(M, a, f, nullptr, fan, p.step);
  double h = default_step(M, p.step);
  FanMeasurement fine = forward(M, a, f, nullptr, fan, 0.5 * h);

  double max_abs = 0.0, dev = 0.0;
  for (size_t i = 0; i < fan.size(); ++i) {
    max_abs = std::max(max_abs, std::abs(meas.entries[i].value));
    dev = std::max(dev, std::abs(meas.entries[i].value - fine.entries[i].value));
  }

  CsvFile csv(ctx.csv_path(p.csv), "s,alpha,x1,x2,v1,v2,re,im");
  for (size_t i = 0; i < fan.size(); ++i)
    csv.row({fan[i].s, fan[i].alpha, fan[i].x[0], fan[i].x[1], fan[i].v[0], fan[i].v[1],
             meas.entries[i].value.real(), meas.entries[i].value.imag()});

  CheckList checks;
  double scale = std::max(max_abs, 1e-12);
  checks.add("step_refinement_rel_dev", dev / scale, ctx.tol(p.tolerance));

  Json out;
  out["manifold"] = p.manifold;
  out["attenuation"] = field_json(p.attenuation);
  out["integrand"] = field_json(p.integrand);
  out["rays"] = fan.size();
  out["max_abs_measurement"] = max_abs;
  out["refinement_deviation"] = dev;
  out["checks"] = checks.rows;
  out["pass"] = checks.all_pass;
  return out;
}

Json run_xray_invert(const XrayInvertParams& p, RunnerContext& ctx) {
  SimpleManifold M = make_manifold(p.manifold);
  ScalarField a = make_field(p.attenuation);
  ScalarField f = make_field(p.source);
  auto fan = fan_rays(M, p.fan_boundary, p.fan_angle);
  GridSpec grid = GridSpec::over_chart(M.metric.chart, p.grid_n, p.grid_n);

  CheckList checks;
  Json cache_json;
  TransformSystem sys;
  bool cache_hit = false;
  if (!p.cache.empty()) {
    std::filesystem::path cp = std::filesystem::path(p.cache).is_absolute()
                                   ? std::filesystem::path(p.cache)
                                   : ctx.out_dir / p.cache;
    cache_json["path"] = cp.string();
    if (std::filesystem::exists(cp)) {
      Eigen::MatrixXcd A = load_system_matrix(cp.string());
      if (A.rows() != static_cast<Eigen::Index>(fan.size()) ||
          A.cols() != static_cast<Eigen::Index>(grid.dofs()))
        throw std::runtime_error("scenario: cached system dimensions do not match the fan/grid");
      sys.grid = grid;
      sys.unknowns = Unknowns::Function;
      sys.matrix = std::move(A);
      for (Eigen::Index i = 0; i < sys.matrix.rows(); ++i)
        if (sys.matrix.row(i).cwiseAbs().maxCoeff() == 0.0)
          sys.zero_rows.push_back(static_cast<int>(i));
      cache_hit = true;
    } else {
      sys = build_system(M, a, fan, grid, Unknowns::Function);
      save_system(cp.string(), sys);
      Eigen::MatrixXcd back = load_system_matrix(cp.string());
      bool identical = back.rows() == sys.matrix.rows() && back.cols() == sys.matrix.cols() &&
                       (back - sys.matrix).cwiseAbs().maxCoeff() == 0.0;
      checks.add_flag("cache_roundtrip_identical", identical);
    }
    std::uintmax_t size = std::filesystem::file_size(cp);
    bool complex_entries = false;
    for (Eigen::Index i = 0; i < sys.matrix.rows() && !complex_entries; ++i)
      for (Eigen::Index j = 0; j < sys.matrix.cols(); ++j)
        if (sys.matrix(i, j).imag() != 0.0) {
          complex_entries = true;
          break;
        }
    std::uintmax_t expect =
        16 + static_cast<std::uintmax_t>(complex_entries ? 16 : 8) * sys.matrix.rows() * sys.matrix.cols();
    cache_json["hit"] = cache_hit;
    cache_json["file_size"] = size;
    cache_json["expected_size"] = expect;
    checks.add_flag("cache_file_size", size == expect);
  } else {
    sys = build_system(M, a, fan, grid, Unknowns::Function);
  }

  FanMeasurement meas = forward(M, a, f, nullptr, fan);
  InvertReport inv = invert(sys, meas, p.regularization > 0.0 ? p.regularization : -1.0);

  // Relative L2 error over grid nodes that sit well inside the boundary.
  double beta0 = field_eval(M.boundary_fn, M.center);
  double num = 0.0, den = 0.0;
  CsvFile csv(ctx.csv_path(p.csv), "x1,x2,recon_re,recon_im,truth_re,truth_im");
  for (int iy = 0; iy < grid.ny; ++iy)
    for (int ix = 0; ix < grid.nx; ++ix) {
      VecN<double> x(2);
      x[0] = grid.x0 + ix * (grid.x1 - grid.x0) / (grid.nx - 1);
      x[1] = grid.y0 + iy * (grid.y1 - grid.y0) / (grid.ny - 1);
      Cd truth = M.metric.chart.contains(x) ? eval_value(f.f, x) : Cd(0.0, 0.0);
      Cd recon = grid_eval(grid, inv.coeffs, x);
      csv.row({x[0], x[1], recon.real(), recon.imag(), truth.real(), truth.imag()});
      if (field_eval(M.boundary_fn, x) < 0.19 * beta0) continue;
      num += std::norm(recon - truth);
      den += std::norm(truth);
    }
  double rel = std::sqrt(num / std::max(den, 1e-300));

  checks.add("rel_l2_error", rel, ctx.tol(p.max_rel_error));
  checks.add_flag("solver_converged", inv.converged);

  Json out;
  out["manifold"] = p.manifold;
  out["attenuation"] = field_json(p.attenuation);
  out["source"] = field_json(p.source);
  out["grid"] = {grid.nx, grid.ny};
  out["fan"] = {p.fan_boundary, p.fan_angle};
  out["rays"] = fan.size();
  out["zero_rows"] = sys.zero_rows.size();
  out["iterations"] = inv.iterations;
  out["cg_residual"] = inv.residual;
  out["rel_l2_error"] = rel;
  if (!p.cache.empty()) out["cache"] = cache_json;
  out["checks"] = checks.rows;
  out["pass"] = checks.all_pass;
  return out;
}

Json run_pestov(const PestovParams& p, RunnerContext& ctx) {
  SimpleManifold M = make_manifold(p.manifold);
  Rng rng = Rng(ctx.sc.seed).derive("pestov/" + p.manifold);

  double worst = 0.0;
  for (int i = 0; i < p.draws; ++i) {
    SphereBundleFunction u = random_bundle_function(rng);
    VecN<double> x = interior_point(M, rng);
    double zeta = rng.uniform(0.0, kTau);
    double scale = 0.0;
    double r = pestov_residual(M, u, x, zeta, 0.0, &scale);
    worst = std::max(worst, r / std::max(scale, 1e-12));
  }

  CheckList checks;
  checks.add("max_rel_residual", worst, ctx.tol(p.tolerance));

  Json out;
  out["manifold"] = p.manifold;
  out["draws"] = p.draws;
  out["max_rel_residual"] = worst;

  if (p.richardson) {
    // Refinement study: second-order jets from central differences; the
    // residual must decay at second order in the step.
    const double hs[3] = {2e-2, 1e-2, 5e-3};
    double min_slope = 1e9;
    Json rich = Json::array();
    for (int rep = 0; rep < 3; ++rep) {
      SphereBundleFunction u = random_bundle_function(rng);
      VecN<double> x = interior_point(M, rng);
      double zeta = rng.uniform(0.0, kTau);
      double r[3];
      for (int k = 0; k < 3; ++k) r[k] = pestov_residual(M, u, x, zeta, hs[k]);
      // Least-squares slope of log residual against log step.
      double sx = 0, sy = 0, sxx = 0, sxy = 0;
      for (int k = 0; k < 3; ++k) {
        double lx = std::log(hs[k]), ly = std::log(std::max(r[k], 1e-300));
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
      }
      double slope = (3 * sxy - sx * sy) / (3 * sxx - sx * sx);
      min_slope = std::min(min_slope, slope);
      rich.push_back({{"residuals", {r[0], r[1], r[2]}}, {"order", slope}});
    }
    out["richardson"] = rich;
    out["min_order"] = min_slope;
    checks.add_window("refinement_order", min_slope, p.min_order, 4.0);
  }

  out["checks"] = checks.rows;
  out["pass"] = checks.all_pass;
  return out;
}

Json run_santalo(const SantaloParams& p, RunnerContext& ctx) {
  SimpleManifold M = make_manifold(p.manifold);
  ScalarField v2d = make_field(p.integrand);
  SphereBundleFunction v{v2d.f};

  SantaloReport rep = santalo_residual(M, v, p.fan_boundary, p.fan_angle, p.check_refinement);
  double scale = std::max(std::abs(rep.lhs), 1e-12);

  CheckList checks;
  checks.add("rel_gap", rep.residual / scale, ctx.tol(p.max_rel_error));
  const bool unit_flat = p.manifold == "flat-disc" && p.integrand.kind == "constant" &&
                         p.integrand.value == 1.0 && p.integrand.value_im == 0.0;
  if (unit_flat) {
    const double want = 2.0 * kPi * kPi;
    checks.add("lhs_vs_2pi2", std::abs(rep.lhs - want) / want, ctx.tol(p.max_rel_error));
    checks.add("rhs_vs_2pi2", std::abs(rep.rhs - want) / want, ctx.tol(p.max_rel_error));
  }
  if (p.check_refinement) checks.add_flag("refinement_converged", rep.converged);

  Json out;
  out["manifold"] = p.manifold;
  out["integrand"] = field_json(p.integrand);
  out["fan"] = {p.fan_boundary, p.fan_angle};
  out["lhs"] = rep.lhs;
  out["rhs"] = rep.rhs;
  out["residual"] = rep.residual;
  out["checks"] = checks.rows;
  out["pass"] = checks.all_pass;
  return out;
}

Json run_cgo_scan(const CgoScanParams& p, RunnerContext& ctx) {
  AdmissibleMetric am;
  am.c = make_conformal_factor(p.conformal);
  am.g0 = make_manifold(p.manifold);
  am.omega = VecN<double>(2);
  am.chart = cyl_chart(-1.0, 1.0, p.r_window[0], p.r_window[1]);
  if (p.manifold == "flat-disc") {
    am.polar_m = coord(1) * coord(1);
  } else if (p.manifold == "poincare-disc") {
    am.polar_m = 0.25 * pow_int(exp(coord(1)) - exp(-coord(1)), 2);
  }
  AssembledCgo G = assemble(am);

  ScalarField q{3, 0.4 + 0.25 * sin(1.3 * coord(0)) * cos(coord(2))};
  CgoAmplitude amp{a0_exp(0.9), 1.0 + 0.3 * cos(coord(2)), {}};
  ResidualScanReport rs = residual_scan(am, G, q, amp, p.h_list, p.grid_n);

  CsvFile csv(ctx.csv_path(p.csv), "h,norm");
  for (const auto& pt : rs.points) csv.row({pt.h, pt.norm});

  CheckList checks;
  checks.add_window("scan_slope", rs.slope, p.slope_range[0], p.slope_range[1]);
  checks.add("eikonal_residual", rs.eikonal, ctx.tol(p.max_eikonal));
  checks.add("transport_rel_residual", rs.transport / std::max(rs.amplitude_scale, 1e-12),
             ctx.tol(p.max_transport));

  Json out;
  out["manifold"] = p.manifold;
  out["conformal"] = p.conformal;
  out["grid_n"] = p.grid_n;
  Json pts = Json::array();
  for (const auto& pt : rs.points) pts.push_back({{"h", pt.h}, {"norm", pt.norm}});
  out["points"] = pts;
  out["slope"] = rs.slope;
  out["ratio_spread"] = rs.ratio_spread;
  out["eikonal"] = rs.eikonal;
  out["transport"] = rs.transport;
  out["amplitude_scale"] = rs.amplitude_scale;
  out["polar_fit"] = {{"m_dev", G.m_dev},
                      {"dm_dev", G.dm_dev},
                      {"cross_dev", G.cross_dev},
                      {"radial_dev", G.radial_dev}};

  if (p.magnetic) {
    OneFormField A = OneFormField::zero(3);
    double rc = 0.5 * (p.r_window[0] + p.r_window[1]);
    A.comp[0] = 0.5 * exp(-(pow_int(coord(0) - 0.1, 2) + pow_int(coord(1) - rc, 2)) / 0.04);
    A.comp[1] = 0.3 * exp(-(pow_int(coord(0) + 0.2, 2) + pow_int(coord(1) - rc + 0.05, 2)) / 0.05);
    MagneticPhase mp = magnetic_phase(am, A, 1.0, 256);
    CgoAmplitude ampm{a0_one(), kr(1.0), mp.phi};
    TransportReport trm = transport_residual(am, G, ampm, &A, 8, &mp.window);
    double rel = trm.residual / std::max(trm.scale, 1e-12);
    double bound = ctx.tol(2.0 * mp.residual) + 1e-10;
    checks.add("magnetic_transport_rel_residual", rel, bound);
    out["magnetic"] = {{"phase_residual", mp.residual},
                       {"phase_scale", mp.scale},
                       {"grid_used", mp.grid_used},
                       {"transport_rel_residual", rel}};
  }

  out["checks"] = checks.rows;
  out["pass"] = checks.all_pass;
  return out;
}

Json run_boundary_recover(const BoundaryRecoverParams& p, RunnerContext& ctx) {
  Rng rng = Rng(ctx.sc.seed).derive("boundary-recover");
  CheckList checks;
  CsvFile csv(ctx.csv_path(p.csv), "set,field,rel_error");
  Json sets = Json::array();

  if (p.flat_tolerance > 0.0) {
    // Constant-coefficient closed forms.
    TangentialBlock up = TangentialBlock::identity(2);
    const Cd q0(0.25, -0.1);
    Chart ch;
    ch.dim = 3;
    ch.lo[0] = ch.lo[1] = -1.0;
    ch.hi[0] = ch.hi[1] = 1.0;
    ch.lo[2] = 0.0;
    ch.hi[2] = 1.0;
    BoundaryCoefficients flat = BoundaryCoefficients::from_metric(
        ch, up, OneFormField::zero(3), ScalarField{3, kc(q0)});
    SymbolFunction b1 = symbol_b(flat, 1), b0 = symbol_b(flat, 0), bm1 = symbol_b(flat, -1);
    double worst = 0.0;
    for (int i = 0; i < 5; ++i) {
      VecN<double> x(3), xi(2);
      x[0] = -0.4 + 0.2 * i;
      x[1] = 0.3 - 0.15 * i;
      x[2] = 0.1 * i;
      xi[0] = std::cos(0.4 + 0.7 * i);
      xi[1] = std::sin(0.4 + 0.7 * i);
      double nrm = std::hypot(xi[0], xi[1]);
      worst = std::max(worst, std::abs(b1.eval(x, xi) + nrm));
      worst = std::max(worst, std::abs(b0.eval(x, xi)));
      worst = std::max(worst, std::abs(bm1.eval(x, xi) + q0 / (2.0 * nrm)));
    }
    checks.add("flat_closed_forms", worst, ctx.tol(p.flat_tolerance));
  }

  const char* fields[] = {"g", "dn_g", "k", "l", "A", "dn_A"};
  for (int s = 0; s < p.sets; ++s) {
    BoundaryCoefficients bc = random_normalized_coefficients(rng);
    VecN<double> xp(2);
    xp[0] = rng.uniform(-0.2, 0.2);
    xp[1] = rng.uniform(-0.2, 0.2);

    SymbolFunction b1 = symbol_b(bc, 1), b0 = symbol_b(bc, 0), bm1 = symbol_b(bc, -1);
    RecoverOptions opt;
    opt.patch_h = p.patch_h;
    opt.directions = p.directions;
    RecoveredJets got = recover(b1, b0, bm1, xp, opt);
    RecoveredJets want = direct_jets(bc, xp);

    auto rel_m = [](const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
      return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), 1e-12);
    };
    double err[6] = {
        rel_m(got.g.cast<Cd>(), want.g.cast<Cd>()),
        rel_m(got.dn_g.cast<Cd>(), want.dn_g.cast<Cd>()),
        rel_m(got.k.cast<Cd>(), want.k.cast<Cd>()),
        rel_m(got.l, want.l),
        rel_m(got.A, want.A),
        rel_m(got.dn_A, want.dn_A),
    };
    Json sj;
    sj["set"] = s;
    sj["point"] = {xp[0], xp[1]};
    double set_worst = 0.0;
    for (int k = 0; k < 6; ++k) {
      sj[fields[k]] = err[k];
      set_worst = std::max(set_worst, err[k]);
      csv.row_tagged(std::to_string(s) + "," + fields[k], {err[k]});
    }
    sets.push_back(sj);
    checks.add("set " + std::to_string(s) + " max_rel_error", set_worst,
               ctx.tol(p.max_rel_error));
  }

  Json out;
  out["sets"] = sets;
  out["patch_h"] = p.patch_h;
  out["checks"] = checks.rows;
  out["pass"] = checks.all_pass;
  return out;
}

Json run_gauge_check(const GaugeCheckParams& p, RunnerContext& ctx) {
  CheckList checks;
  Json out;
  Rng root(ctx.sc.seed);

  auto run_metric = [&](const std::string& label, const BoundaryCoefficients& bc) {
    Rng rng = root.derive("gauge-check/" + label);
    const Chart& ch = bc.chart;
    double worst = 0.0;
    for (int i = 0; i < p.draws; ++i) {
      ScalarField c = random_conformal_scale(rng);
      ScalarField psi = random_gauge_phase(rng);
      ScalarField u = random_test_function(rng);
      VecN<double> x(3);
      for (int k = 0; k < 3; ++k) {
        double margin = 0.05 * (ch.hi[k] - ch.lo[k]);
        x[k] = rng.uniform(ch.lo[k] + margin, ch.hi[k] - margin);
      }
      GaugeResiduals gr = gauge_identity_residual(bc, c, psi, u, x);
      worst = std::max(worst, std::max(gr.conformal, gr.gauge) / std::max(gr.scale, 1e-12));
    }
    checks.add(label + " max_rel_residual", worst, ctx.tol(p.tolerance));
    out[label + "_max_rel_residual"] = worst;
  };

  if (p.metric == "flat" || p.metric == "both") run_metric("flat", flat_block_coefficients());
  if (p.metric == "curved" || p.metric == "both") run_metric("curved", curved_block_coefficients());

  out["draws"] = p.draws;
  out["checks"] = checks.rows;
  out["pass"] = checks.all_pass;
  return out;
}

std::string iso8601_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Registries.
// ---------------------------------------------------------------------------

std::vector<std::string> manifold_names() { return {"flat-disc", "conformal-disc", "poincare-disc"}; }

SimpleManifold make_manifold(const std::string& name) {
  if (name == "flat-disc") return flat_disc();
  if (name == "conformal-disc") return conformal_disc();
  if (name == "poincare-disc") return poincare_disc();
  throw ScenarioError("unknown manifold \"" + name + "\"");
}

std::vector<std::string> field_kinds() { return {"constant", "gaussian", "bump"}; }

ScalarField make_field(const FieldSpec& spec) {
  Expr r2 = coord(0) * coord(0) + coord(1) * coord(1);
  if (spec.kind == "constant") return {2, kc({spec.value, spec.value_im})};
  if (spec.kind == "gaussian") return {2, spec.amplitude * exp(-spec.width * r2)};
  if (spec.kind == "bump") return {2, spec.amplitude * (kr(1.0) - r2)};
  throw ScenarioError("unknown field kind \"" + spec.kind + "\"");
}

std::vector<std::string> conformal_names() { return {"one", "wavy"}; }

ScalarField make_conformal_factor(const std::string& name) {
  if (name == "one") return {3, kr(1.0)};
  if (name == "wavy")
    return {3, 1.0 + 0.2 * sin(1.1 * coord(0) + 0.3) + 0.15 * cos(2.0 * coord(1)) +
                   0.1 * cos(coord(2))};
  throw ScenarioError("unknown conformal factor \"" + name + "\"");
}

// ---------------------------------------------------------------------------
// Seeded random constructions.
// ---------------------------------------------------------------------------

namespace {
VecN<double> random_unit(int dim, double scale, Rng& rng) {
  VecN<double> v(dim);
  double n2 = 0.0;
  do {
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
    n2 = dot(v, v);
  } while (n2 < 1e-6);
  double s = scale / std::sqrt(n2);
  for (int i = 0; i < dim; ++i) v[i] *= s;
  return v;
}
}  // namespace

WeightSpec random_weight_spec(WeightFamily family, int dim, Rng& rng) {
  WeightSpec w;
  w.family = family;
  w.a = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.5, 2.0);
  w.b = rng.uniform(-1.0, 1.0);
  w.x0 = VecN<double>(dim);
  for (int i = 0; i < dim; ++i) w.x0[i] = rng.uniform(-0.5, 0.5);
  switch (family) {
    case WeightFamily::Linear:
    case WeightFamily::InvLinear:
    case WeightFamily::LogRatio:
      w.xi = random_unit(dim, rng.uniform(0.5, 1.5), rng);
      break;
    case WeightFamily::ArgSphere:
      w.xi = random_unit(dim, rng.uniform(0.5, 1.5), rng);
      w.theta = rng.uniform(0.3, 6.0);
      break;
    case WeightFamily::ArgPlane: {
      VecN<double> u = random_unit(dim, 1.0, rng);
      VecN<double> v;
      double nv = 0.0;
      do {
        v = random_unit(dim, 1.0, rng);
        double d = dot(u, v);
        for (int i = 0; i < dim; ++i) v[i] -= d * u[i];
        nv = std::sqrt(dot(v, v));
      } while (nv < 1e-3);
      for (int i = 0; i < dim; ++i) v[i] /= nv;
      w.omega1 = u;
      w.omega2 = v;
      break;
    }
    case WeightFamily::Log:
      break;
  }
  return w;
}

std::vector<VecN<double>> weight_sample_points(const EuclideanWeight& w, int dim, int count,
                                               Rng& rng) {
  // The standoff: the domain predicate must hold on a small coordinate cross
  // around the candidate, which keeps samples a fixed distance from cut sets
  // where the bracket would be evaluated in a badly conditioned regime.
  const double standoff = 2e-3;
  std::vector<VecN<double>> pts;
  pts.reserve(count);
  long attempts = 0;
  const long cap = 20000L * count;
  while (static_cast<int>(pts.size()) < count) {
    if (++attempts > cap) throw std::runtime_error("scenario: weight domain sampling failed");
    VecN<double> p(dim);
    for (int i = 0; i < dim; ++i) p[i] = rng.uniform(-2.0, 2.0);
    if (!w.domain(p)) continue;
    bool clear = true;
    for (int i = 0; i < dim && clear; ++i) {
      VecN<double> q = p;
      q[i] = p[i] + standoff;
      if (!w.domain(q)) clear = false;
      q[i] = p[i] - standoff;
      if (!w.domain(q)) clear = false;
    }
    if (clear) pts.push_back(p);
  }
  return pts;
}

SphereBundleFunction random_bundle_function(Rng& rng) {
  auto cf = [&rng]() { return rng.uniform(-1.0, 1.0); };
  auto smooth_xy = [&]() {
    return kr(cf()) + cf() * coord(0) + cf() * coord(1) + cf() * coord(0) * coord(1) +
           cf() * pow_int(coord(0), 2) + cf() * pow_int(coord(1), 2);
  };
  Expr u = smooth_xy();
  for (int k = 1; k <= 2; ++k) {
    double phase = rng.uniform(0.0, kTau);
    u = u + (1.0 / k) * cos(static_cast<double>(k) * coord(2) + kr(phase)) * smooth_xy();
  }
  u = u + cf() * exp(0.3 * coord(0)) * sin(coord(2));
  return {u};
}

BoundaryCoefficients random_normalized_coefficients(Rng& rng) {
  auto cf = [&rng](double s) { return rng.uniform(-s, s); };
  Expr X1 = coord(0), X2 = coord(1), XN = coord(2);

  // Rotated diagonal inverse metric d_i = p_i (1 + s_i xn + s_i^2 xn^2 / 2):
  // the normal log-derivative of each eigenvalue is stationary at xn = 0, so
  // the det-trace of the set is normalized by construction. Tangential degree
  // stays <= 4, within reach of the recovery's interpolation stencils.
  auto tangential = [&](double base) {
    return kr(base + cf(0.2)) + X1 * cf(0.2) + X2 * cf(0.2) + X1 * X2 * cf(0.08) +
           pow_int(X1, 2) * cf(0.08) + pow_int(X2, 2) * cf(0.08);
  };
  Expr p1 = tangential(1.3);
  Expr p2 = tangential(0.9);
  auto slope = [&]() { return kr(cf(0.4)) + X1 * cf(0.25) + X2 * cf(0.25); };
  Expr s1 = slope(), s2 = slope();
  Expr d1 = p1 * (kr(1.0) + s1 * XN + s1 * s1 * pow_int(XN, 2) * 0.5);
  Expr d2 = p2 * (kr(1.0) + s2 * XN + s2 * s2 * pow_int(XN, 2) * 0.5);
  const double ang = rng.uniform(0.0, kPi);
  const double co = std::cos(ang), si = std::sin(ang);
  TangentialBlock up(2);
  up.set(0, 0, d1 * (co * co) + d2 * (si * si));
  up.set(0, 1, (d1 - d2) * (co * si));
  up.set(1, 1, d1 * (si * si) + d2 * (co * co));

  auto cc = [&](double s) { return kc({cf(s), cf(s)}); };
  OneFormField A;
  A.dim = 3;
  A.comp[0] = cc(0.3) + X1 * cf(0.2) + X2 * cf(0.2) + kc({0.0, cf(0.15)}) * X1 +
              XN * (cc(0.12) + X1 * cf(0.1));
  A.comp[1] = cc(0.3) + X1 * cf(0.2) + X2 * cf(0.2) + kc({0.0, cf(0.15)}) * X2 +
              XN * (cc(0.12) + X2 * cf(0.1));
  A.comp[2] = kr(0.0);
  ScalarField q{3, cc(0.4) + X1 * cf(0.15) + kc({0.0, cf(0.1)}) * X2};

  Chart ch;
  ch.dim = 3;
  ch.lo[0] = ch.lo[1] = -0.6;
  ch.hi[0] = ch.hi[1] = 0.6;
  ch.lo[2] = 0.0;
  ch.hi[2] = 0.5;
  return BoundaryCoefficients::from_inverse_metric(ch, up, A, q);
}

ScalarField random_conformal_scale(Rng& rng) {
  auto cf = [&rng](double s) { return rng.uniform(-s, s); };
  Expr X1 = coord(0), X2 = coord(1), XN = coord(2);
  Expr s = kr(cf(0.3)) + X1 * cf(0.3) + X2 * cf(0.3) + XN * cf(0.3) + X1 * X2 * cf(0.2) +
           pow_int(X1, 2) * cf(0.2) + pow_int(XN, 2) * cf(0.2);
  return {3, exp(s)};
}

ScalarField random_gauge_phase(Rng& rng) {
  auto cc = [&rng](double s) { return kc({rng.uniform(-s, s), rng.uniform(-s, s)}); };
  Expr X1 = coord(0), X2 = coord(1), XN = coord(2);
  Expr psi = cc(0.3) + cc(0.4) * X1 + cc(0.4) * X2 + cc(0.4) * XN + cc(0.25) * X1 * X2 +
             cc(0.25) * sin(X1 + kr(rng.uniform(-1.0, 1.0)));
  return {3, psi};
}

ScalarField random_test_function(Rng& rng) {
  auto cc = [&rng](double s) { return kc({rng.uniform(-s, s), rng.uniform(-s, s)}); };
  double a = rng.uniform(-0.4, 0.4);
  Expr X1 = coord(0), X2 = coord(1), XN = coord(2);
  Expr u = exp(X1 * a) * sin(X2 + XN * rng.uniform(-0.6, 0.6)) + cc(0.6) * cos(X1 * XN) +
           cc(0.5) + cc(0.4) * X2;
  return {3, u};
}

BoundaryCoefficients flat_block_coefficients() {
  Expr X1 = coord(0), X2 = coord(1), XN = coord(2);
  Chart ch;
  ch.dim = 3;
  ch.lo[0] = ch.lo[1] = -0.8;
  ch.hi[0] = ch.hi[1] = 0.8;
  ch.lo[2] = 0.0;
  ch.hi[2] = 0.8;
  TangentialBlock up = TangentialBlock::identity(2);
  OneFormField A = OneFormField::zero(3);
  A.comp[0] = X2 * 0.3 + kc({0.0, 0.2}) * XN;
  A.comp[2] = X1 * 0.25;
  return BoundaryCoefficients::from_metric(ch, up, A,
                                           ScalarField{3, kc({0.2, 0.1}) + X1 * 0.3});
}

BoundaryCoefficients curved_block_coefficients() {
  Expr X1 = coord(0), X2 = coord(1), XN = coord(2);
  Chart ch;
  ch.dim = 3;
  ch.lo[0] = ch.lo[1] = -1.0;
  ch.hi[0] = ch.hi[1] = 1.0;
  ch.lo[2] = 0.0;
  ch.hi[2] = 1.0;
  TangentialBlock up(2);
  up.set(0, 0, exp(X1 * 0.3 + XN * 0.2));
  up.set(0, 1, sin(X1 + X2) * 0.15 + XN * 0.05);
  up.set(1, 1, kr(1.0) + pow_int(X2, 2) * 0.25 + X1 * XN * 0.1);
  OneFormField A;
  A.dim = 3;
  A.comp[0] = X2 * 0.4 + kc({0.0, 0.1}) * X1 + XN * 0.05;
  A.comp[1] = X1 * (-0.2) + kc({0.0, 0.15}) * XN;
  A.comp[2] = kr(0.0);
  ScalarField q{3, kc({0.3, 0.2}) + X1 * 0.1 - X2 * XN * 0.05};
  return BoundaryCoefficients::from_inverse_metric(ch, up, A, q);
}

// ---------------------------------------------------------------------------
// Parsing entry points.
// ---------------------------------------------------------------------------

Scenario parse_scenario(const std::string& json_text) {
  Json j;
  try {
    j = Json::parse(json_text);
  } catch (const std::exception& e) {
    throw ScenarioError(std::string("scenario: invalid JSON: ") + e.what());
  }
  StrictObj o(j, "scenario");
  const Json& version = o.require("version");
  if (!version.is_number_integer() || version.get<long long>() != 1)
    throw ScenarioError("scenario.version: must be the integer 1");
  Scenario sc;
  sc.command = o.str_req("command");
  sc.seed = o.u64("seed", 0);
  const Json* params = o.find("parameters");
  static const Json empty = Json::object();
  sc.params = parse_params(sc.command, params ? *params : empty);
  o.finish();
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("scenario: cannot open file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

// ---------------------------------------------------------------------------
// Runner entry points.
// ---------------------------------------------------------------------------

RunResult run_scenario(const Scenario& sc, const RunOptions& opt) {
  RunResult result;
  auto t0 = std::chrono::steady_clock::now();
  std::filesystem::path out_dir(opt.out_dir.empty() ? "." : opt.out_dir);

  Json doc;
  Json body;
  try {
    std::filesystem::create_directories(out_dir);
    if (opt.threads > 0) Eigen::setNbThreads(opt.threads);

    RunnerContext ctx{sc, opt, out_dir, &result.csv_paths};
    Json rep = std::visit(
        [&](const auto& p) -> Json {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, CheckWeightParams>) return run_check_weight(p, ctx);
          else if constexpr (std::is_same_v<T, CatalogVerifyParams>) return run_catalog_verify(p, ctx);
          else if constexpr (std::is_same_v<T, GeodesicParams>) return run_geodesic(p, ctx);
          else if constexpr (std::is_same_v<T, XrayForwardParams>) return run_xray_forward(p, ctx);
          else if constexpr (std::is_same_v<T, XrayInvertParams>) return run_xray_invert(p, ctx);
          else if constexpr (std::is_same_v<T, PestovParams>) return run_pestov(p, ctx);
          else if constexpr (std::is_same_v<T, SantaloParams>) return run_santalo(p, ctx);
          else if constexpr (std::is_same_v<T, CgoScanParams>) return run_cgo_scan(p, ctx);
          else if constexpr (std::is_same_v<T, BoundaryRecoverParams>) return run_boundary_recover(p, ctx);
          else return run_gauge_check(p, ctx);
        },
        sc.params);

    body["version"] = 1;
    body["command"] = sc.command;
    body["seed"] = sc.seed;
    body["tolerance_scale"] = opt.tolerance_scale;
    body["threads"] = opt.threads;
    for (auto it = rep.begin(); it != rep.end(); ++it) body[it.key()] = it.value();
    result.status = body["pass"].get<bool>() ? 0 : 1;
  } catch (const std::exception& e) {
    body["version"] = 1;
    body["command"] = sc.command;
    body["seed"] = sc.seed;
    body["error"] = e.what();
    body["pass"] = false;
    result.status = 3;
    result.diagnostic = e.what();
  }

  double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  doc["timing"] = {{"generated_at", iso8601_now()}, {"elapsed_seconds", elapsed}};
  doc["report"] = body;
  result.report_json = doc.dump(2) + "\n";

  std::filesystem::path rp = out_dir / "report.json";
  std::ofstream out(rp);
  if (out) {
    out << result.report_json;
    result.report_path = rp.string();
  }
  return result;
}

RunResult run_scenario(const std::string& scenario_path, const RunOptions& opt) {
  Scenario sc;
  try {
    sc = load_scenario(scenario_path);
  } catch (const std::exception& e) {
    RunResult r;
    r.status = 2;
    r.diagnostic = e.what();
    return r;
  }
  return run_scenario(sc, opt);
}

}  // namespace ck
