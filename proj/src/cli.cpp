#include "cplab/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <climits>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "cplab/analysis.hpp"
#include "cplab/errors.hpp"
#include "cplab/estimators.hpp"
#include "cplab/forward.hpp"
#include "cplab/geometry.hpp"
#include "cplab/oracle.hpp"
#include "cplab/parallel.hpp"
#include "cplab/rng.hpp"

namespace cplab {
namespace {

using json = nlohmann::json;

// Keys that never enter the embedded config: they do not change results.
const std::set<std::string> kUnrecorded = {"workers", "config", "out"};

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json num_json(double v) {
  if (std::isfinite(v)) return v;
  return num(v);
}

json to_json(const Estimate& e) {
  return {{"mean", num_json(e.mean)},
          {"stderr", num_json(e.std_error)},
          {"n", e.n},
          {"bias_bound", num_json(e.bias_bound)},
          {"flagged_fraction", e.flagged_fraction},
          {"space_truncated_fraction", e.space_truncated_fraction}};
}

json to_json(const InequalityRow& r) {
  return {{"inequality", r.inequality}, {"lambda", r.lambda}, {"h", r.h},
          {"lhs", to_json(r.lhs)},      {"rhs", to_json(r.rhs)}, {"margin", num_json(r.margin)},
          {"sigma", num_json(r.sigma)}, {"z", num_json(r.z)},    {"verdict", to_string(r.verdict)},
          {"mode", r.mode},             {"note", r.note}};
}

json to_json(const FitReport& f) {
  json pts = json::array();
  for (const auto& p : f.points) {
    pts.push_back({{"x", p.x}, {"y", num_json(p.y)}, {"y_sigma", num_json(p.y_sigma)}, {"excluded", p.excluded},
                   {"note", p.note}});
  }
  json res = json::array();
  for (double r : f.residuals) res.push_back(num_json(r));
  return {{"quantity", f.quantity},
          {"slope", num_json(f.slope)},
          {"slope_stderr", num_json(f.slope_stderr)},
          {"intercept", num_json(f.intercept)},
          {"r_squared", num_json(f.r_squared)},
          {"window", {f.window_lo, f.window_hi}},
          {"points", pts},
          {"residuals", res},
          {"surcharge", num_json(f.surcharge)},
          {"bound", f.bound},
          {"threshold", num_json(f.threshold)},
          {"passed", f.passed},
          {"sensitivity_sigma", num_json(f.sensitivity)},
          {"verdict", f.verdict}};
}

json to_json(const CurvaturePoint& c) {
  return {{"lambda", c.lambda},
          {"stat", num_json(c.stat)},
          {"stat_short", num_json(c.stat_short)},
          {"stat_sigma", num_json(c.stat_sigma)}};
}

json to_json(const ThresholdEstimate& t) {
  json bis = json::array(), grid = json::array();
  for (const auto& c : t.bisection) bis.push_back(to_json(c));
  for (const auto& c : t.grid) grid.push_back(to_json(c));
  return {{"value", num_json(t.value)},
          {"ci", num_json(t.ci)},
          {"bootstrap_ci", num_json(t.bootstrap_ci)},
          {"horizon_shift", num_json(t.horizon_shift)},
          {"bracket", {t.bracket_lo, t.bracket_hi}},
          {"bisection", bis},
          {"grid", grid},
          {"fit", {{"slope", num_json(t.fit.slope)}, {"intercept", num_json(t.fit.intercept)}}}};
}

// Options registered with CLI11 that also know how to serialize their resolved value.
class Registry {
 public:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& name, T& var, const std::string& desc) {
    getters_.emplace_back(name, [&var] { return json(var); });
    names_.insert(name);
    return app->add_option("--" + name, var, desc)->capture_default_str();
  }
  CLI::Option* flag(CLI::App* app, const std::string& name, bool& var, const std::string& desc) {
    getters_.emplace_back(name, [&var] { return json(var); });
    names_.insert(name);
    flags_.insert(name);
    return app->add_flag("--" + name, var, desc);
  }
  bool knows(const std::string& name) const { return names_.count(name) > 0; }
  bool is_flag(const std::string& name) const { return flags_.count(name) > 0; }
  json config() const {
    json c = json::object();
    for (const auto& [name, get] : getters_) {
      if (!kUnrecorded.count(name)) c[name] = get();
    }
    return c;
  }

 private:
  std::vector<std::pair<std::string, std::function<json()>>> getters_;
  std::set<std::string> names_;
  std::set<std::string> flags_;
};

struct Common {
  std::string family = "lattice";
  int d = 1;
  int k = 3;
  int n = 2;
  double weight = 0.0;  // complete graph; 0 selects the default
  std::string edges;    // explicit graph: "from-to:weight,..."
  std::size_t ball_cap = GraphSpec::kDefaultBallCap;
  double lambda = 1.0;
  std::vector<double> lambda_grid;
  double h = 1.0;
  std::vector<double> h_grid;
  double T = 50.0;
  int L = -1;  // -1: no spatial cutoff
  std::size_t replicas = 100'000;
  std::uint64_t seed = 0;
  std::size_t budget = ClusterOptions::kDefaultBudget;
  double max_flagged = 0.01;
  int workers = 0;
  std::string out = "cplab_out";
  std::string config;

  std::vector<double> lambdas() const { return lambda_grid.empty() ? std::vector<double>{lambda} : lambda_grid; }
  std::vector<double> hs() const { return h_grid.empty() ? std::vector<double>{h} : h_grid; }
  int radius() const { return L < 0 ? INT_MAX : L; }
  EstimatorConfig estimator() const {
    EstimatorConfig c;
    c.window = T;
    c.radius = radius();
    c.replicas = replicas;
    c.seed = seed;
    c.budget = budget;
    c.workers = resolve_workers(workers);
    c.max_flagged_fraction = max_flagged;
    return c;
  }
};

GraphSpec parse_edges(int n, const std::string& text) {
  std::vector<WeightedEdge> edges;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    WeightedEdge e;
    char dash = 0, colon = 0;
    std::istringstream is(item);
    if (!(is >> e.from >> dash >> e.to) || dash != '-') throw DomainError("malformed edge '" + item + "'");
    if (is >> colon) {
      if (colon != ':' || !(is >> e.weight)) throw DomainError("malformed edge weight in '" + item + "'");
    }
    edges.push_back(e);
  }
  return GraphSpec::explicit_graph(n, std::move(edges));
}

GraphSpec make_graph(const Common& c) {
  GraphSpec g = [&] {
    if (c.family == "lattice") return GraphSpec::lattice(c.d);
    if (c.family == "tree") return GraphSpec::tree(c.k);
    if (c.family == "complete") {
      return c.weight > 0.0 ? GraphSpec::complete(c.n, c.weight) : GraphSpec::complete(c.n);
    }
    if (c.family == "path") return GraphSpec::path(c.n);
    if (c.family == "cycle") return GraphSpec::cycle(c.n);
    if (c.family == "single") return GraphSpec::single_vertex();
    if (c.family == "explicit") return parse_edges(c.n, c.edges);
    throw DomainError("unknown family '" + c.family + "'");
  }();
  g.set_ball_cap(c.ball_cap);
  return g;
}

void add_common(CLI::App* app, Common& c, Registry& r) {
  r.add(app, "family", c.family, "lattice | tree | complete | path | cycle | single | explicit");
  r.add(app, "d", c.d, "lattice dimension");
  r.add(app, "k", c.k, "tree degree");
  r.add(app, "n", c.n, "vertex count of finite families");
  r.add(app, "weight", c.weight, "complete-graph edge weight (0: default)");
  r.add(app, "edges", c.edges, "explicit graph edges 'from-to:weight,...'");
  r.add(app, "ball-cap", c.ball_cap, "largest ball that may be enumerated");
  r.add(app, "lambda", c.lambda, "infection rate");
  r.add(app, "lambda-grid", c.lambda_grid, "comma-separated lambda values")->delimiter(',');
  r.add(app, "h", c.h, "spontaneous infection rate");
  r.add(app, "h-grid", c.h_grid, "comma-separated h values")->delimiter(',');
  r.add(app, "T", c.T, "time window");
  r.add(app, "L", c.L, "ball radius (-1: none)");
  r.add(app, "replicas", c.replicas, "Monte Carlo replicas");
  r.add(app, "seed", c.seed, "random seed");
  r.add(app, "budget", c.budget, "segment budget per exploration");
  r.add(app, "max-flagged", c.max_flagged, "largest tolerated budget-flagged fraction");
  r.add(app, "workers", c.workers, std::string("worker threads (default $") + kWorkersEnv + " or 1)");
  r.add(app, "out", c.out, "output path prefix");
  r.add(app, "config", c.config, "key = value file; command-line flags take precedence");
}

struct Output {
  json results = json::object();
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  bool violation = false;
  bool started() const { return !rows.empty() || !results.empty(); }
};

void write_outputs(const std::string& prefix, const std::string& command, const json& config, std::uint64_t seed,
                   const Output& out, const std::string& status, const std::string& failure) {
  json doc = {{"command", command}, {"config", config},    {"seed", seed},
              {"version", kVersion}, {"results", out.results}, {"status", status}};
  if (!failure.empty()) doc["failure"] = failure;
  std::ofstream js(prefix + ".json");
  if (!js) throw ResourceError("cannot write " + prefix + ".json");
  js << doc.dump(2) << "\n";
  std::ofstream csv(prefix + ".csv");
  if (!csv) throw ResourceError("cannot write " + prefix + ".csv");
  for (std::size_t i = 0; i < out.header.size(); ++i) csv << (i ? "," : "") << out.header[i];
  csv << "\n";
  for (const auto& row : out.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) csv << (i ? "," : "") << row[i];
    csv << "\n";
  }
}

// ---------------------------------------------------------------------------------------------
// Subcommands. Each fills `out` incrementally so that a failure leaves partial results.

struct EstimateArgs {
  std::vector<std::string> quantities = {"theta", "theta_indicator", "chi", "dtheta_dlambda", "prob_one_green"};
  double step = 0.0;
};

void cmd_estimate(const Common& c, const EstimateArgs& a, Output& out) {
  const GraphSpec g = make_graph(c);
  const EstimatorConfig cfg = c.estimator();
  out.header = {"lambda", "h", "quantity", "mean", "stderr", "n", "bias_bound", "flagged_fraction"};
  out.results["points"] = json::array();
  const std::optional<double> step = a.step > 0.0 ? std::optional<double>(a.step) : std::nullopt;
  for (double l : c.lambdas()) {
    for (double h : c.hs()) {
      json q = json::object();
      json pt = {{"lambda", l}, {"h", h}};
      for (const auto& name : a.quantities) {
        Estimate e;
        if (name == "theta") {
          e = theta(g, l, h, cfg);
        } else if (name == "theta_indicator") {
          e = theta_indicator(g, l, h, cfg);
        } else if (name == "chi") {
          e = chi(g, l, h, cfg);
        } else if (name == "dtheta_dh") {
          if (h == 0.0) continue;
          e = dtheta_dh(g, l, h, cfg);
        } else if (name == "dtheta_dlambda") {
          if (h == 0.0) continue;
          e = dtheta_dlambda(g, l, h, step, cfg);
        } else if (name == "prob_one_green") {
          e = prob_one_green(g, l, h, cfg);
        } else if (name == "theta_max") {
          e = theta_max(g, l, h, cfg).max;
        } else if (name == "theta_surrogate_max") {
          e = theta_surrogate_max(g, l, h, cfg);
        } else {
          throw DomainError("unknown quantity '" + name + "'");
        }
        q[name] = to_json(e);
        out.rows.push_back({num(l), num(h), name, num(e.mean), num(e.std_error), std::to_string(e.n),
                            num(e.bias_bound), num(e.flagged_fraction)});
      }
      pt["quantities"] = q;
      out.results["points"].push_back(pt);
    }
  }
}

struct OracleArgs {
  std::vector<double> times;
  double step = 1e-4;
};

void cmd_oracle(const Common& c, const OracleArgs& a, Output& out) {
  const GraphSpec g = make_graph(c);
  out.header = {"lambda", "h", "theta", "theta_max", "dtheta_dlambda", "dtheta_dh"};
  for (double t : a.times) out.header.push_back("transient_T" + num(t));
  out.results["points"] = json::array();
  for (double l : c.lambdas()) {
    for (double h : c.hs()) {
      const GeneratorMatrix gen = build_generator(g, l, h);
      const StationaryDistribution st = stationary(gen);
      const ExactPoint p = exact_point(g, l, h, a.step);
      json trans = json::array();
      std::vector<std::string> row = {num(l), num(h), num(p.theta), num(p.theta_max), num(p.dtheta_dlambda),
                                      num(p.dtheta_dh)};
      for (double t : a.times) {
        const auto th = transient_theta_all(gen, t);
        trans.push_back({{"T", t}, {"theta", th[0]}, {"per_vertex", th}});
        row.push_back(num(th[0]));
      }
      out.results["points"].push_back({{"lambda", l},
                                       {"h", h},
                                       {"theta", p.theta},
                                       {"theta_max", p.theta_max},
                                       {"argmax", p.argmax.code},
                                       {"per_vertex", st.theta},
                                       {"residual", st.residual},
                                       {"dtheta_dlambda", p.dtheta_dlambda},
                                       {"dtheta_dh", p.dtheta_dh},
                                       {"derivative_error", p.derivative_error},
                                       {"transient", trans}});
      out.rows.push_back(std::move(row));
    }
  }
}

void append_inequalities(const InequalityReport& rep, Output& out) {
  if (out.header.empty()) {
    out.header = {"inequality", "lambda", "h", "lhs", "rhs", "margin", "sigma", "z", "verdict", "mode"};
  }
  if (!out.results.contains("rows")) out.results["rows"] = json::array();
  for (const auto& r : rep.rows) {
    out.results["rows"].push_back(to_json(r));
    out.rows.push_back({r.inequality, num(r.lambda), num(r.h), num(r.lhs.mean), num(r.rhs.mean), num(r.margin),
                        num(r.sigma), num(r.z), to_string(r.verdict), r.mode});
  }
  out.violation = out.violation || rep.any_violated();
}

struct PdiArgs {
  bool exact = false;
  bool surrogate = false;
  double step = 0.0;
  std::size_t replicas_per_site = 0;
  std::size_t site_cap = 400;
};

void cmd_pdi(const Common& c, const PdiArgs& a, Output& out) {
  const GraphSpec g = make_graph(c);
  if (a.exact) {
    append_inequalities(pdi_check_exact(g, c.lambdas(), c.hs(), a.step > 0.0 ? a.step : 1e-4), out);
    return;
  }
  PdiOptions po;
  if (a.step > 0.0) po.lambda_step = a.step;
  po.force_surrogate = a.surrogate;
  po.replicas_per_site = a.replicas_per_site;
  po.site_cap = a.site_cap;
  EstimatorConfig cfg = c.estimator();
  // One point at a time so a resource failure keeps the finished points.
  std::uint64_t point = 0;
  for (double l : c.lambdas()) {
    for (double h : c.hs()) {
      EstimatorConfig pc = cfg;
      pc.seed = hash_key({cfg.seed, point++});
      append_inequalities(pdi_check(g, {l}, {h}, pc, po), out);
    }
  }
}

struct ChiArgs {
  double step = 0.0;
  double lambda_t = 0.0;
  double lambda_t_ci = 0.0;
};

void cmd_chi(const Common& c, const ChiArgs& a, Output& out) {
  const GraphSpec g = make_graph(c);
  const EstimatorConfig cfg = c.estimator();
  append_inequalities(chi_ineq_check(g, c.lambdas(), cfg, a.step > 0.0 ? std::optional<double>(a.step) : std::nullopt),
                      out);
  if (a.lambda_t > 0.0) {
    std::vector<double> below;
    for (double l : c.lambdas()) {
      if (l < a.lambda_t) below.push_back(l);
    }
    append_inequalities(chi_integrated_check(g, below, a.lambda_t, a.lambda_t_ci, cfg), out);
  }
}

void cmd_critical(const Common& c, CriticalOptions opt, Output& out) {
  const GraphSpec g = make_graph(c);
  opt.seed = c.seed;
  opt.workers = resolve_workers(c.workers);
  const CriticalResult r = estimate_lambda_c(g, opt);
  out.header = {"pipeline", "phase", "lambda", "stat", "stat_short", "stat_sigma"};
  out.results = {{"transition", r.transition}, {"note", r.note}};
  if (!r.transition) return;
  out.results["lambda_T"] = to_json(r.lambda_t);
  out.results["lambda_H"] = to_json(r.lambda_h);
  out.results["difference"] = r.difference;
  out.results["combined_ci"] = num_json(r.combined_ci);
  out.results["consistent"] = r.consistent;
  for (const auto& [name, est] : {std::pair{"susceptibility", &r.lambda_t}, std::pair{"survival", &r.lambda_h}}) {
    for (const auto& p : est->bisection) {
      out.rows.push_back({name, "bisection", num(p.lambda), num(p.stat), num(p.stat_short), num(p.stat_sigma)});
    }
    for (const auto& p : est->grid) {
      out.rows.push_back({name, "grid", num(p.lambda), num(p.stat), num(p.stat_short), num(p.stat_sigma)});
    }
  }
  out.violation = !r.consistent;
}

struct ExponentArgs {
  std::string which = "delta";
  double lambda_c = 0.0;
  double lambda_c_ci = 0.0;
  double window_factor = 10.0;
  std::string estimator = "indicator";
  std::vector<double> offsets = {0.1, 0.2, 0.4, 0.8};
  double t_max = 400.0;
  bool no_doubling = false;
};

void cmd_exponents(const Common& c, const ExponentArgs& a, Output& out) {
  const GraphSpec g = make_graph(c);
  FitReport rep;
  if (a.which == "delta" || a.which == "control") {
    DeltaFitOptions o;
    o.hs = c.hs();
    o.window_factor = a.window_factor;
    o.radius = c.radius();
    o.replicas = c.replicas;
    o.estimator = a.estimator == "exp-mass" ? ThetaEstimator::ExpMass : ThetaEstimator::Indicator;
    o.lambda_c_ci = a.which == "delta" ? a.lambda_c_ci : 0.0;
    o.doubling_check = !a.no_doubling;
    o.seed = c.seed;
    o.workers = resolve_workers(c.workers);
    o.budget = c.budget;
    const double l = a.which == "delta" ? a.lambda_c : c.lambda;
    rep = fit_delta(g, l, o, a.which == "control");
  } else if (a.which == "beta") {
    BetaFitOptions o;
    o.offsets = a.offsets;
    o.t_max = a.t_max;
    o.replicas = c.replicas;
    o.lambda_c_ci = a.lambda_c_ci;
    o.seed = c.seed;
    o.workers = resolve_workers(c.workers);
    o.budget = c.budget;
    rep = fit_beta(g, a.lambda_c, o);
  } else {
    throw DomainError("--which must be delta, control or beta");
  }
  out.results["fit"] = to_json(rep);
  out.header = {"x", "y", "y_sigma", "excluded"};
  for (const auto& p : rep.points) out.rows.push_back({num(p.x), num(p.y), num(p.y_sigma), p.excluded ? "1" : "0"});
  out.violation = !rep.passed;
}

struct DecayArgs {
  std::vector<double> t_grid = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  double fit_lo = 2.0;
  double fit_hi = 12.0;
  std::vector<int> r_grid = {1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<double> sub_grid = {0.5, 1.0, 2.0, 4.0};
  double t_max = 50.0;
  std::vector<double> eta_grid;
  double lambda_c = 0.0;
  double lambda_c_ci = 0.0;
  double eta_lo = 20.0;
  double eta_hi = 40.0;
  std::size_t eta_replicas = 20'000;
};

void cmd_decay(const Common& c, const DecayArgs& a, Output& out) {
  const GraphSpec g = make_graph(c);
  DecayOptions o;
  o.t_grid = a.t_grid;
  o.fit_lo = a.fit_lo;
  o.fit_hi = a.fit_hi;
  o.r_grid = a.r_grid;
  o.sub_grid = a.sub_grid;
  o.t_max = a.t_max;
  o.replicas = c.replicas;
  o.radius = c.radius();
  o.seed = c.seed;
  o.workers = resolve_workers(c.workers);
  out.header = {"series", "x", "y", "y_sigma", "excluded"};
  const DecayResult d = decay_fit(g, c.lambda, o);
  out.results["eta"] = to_json(d.tau);
  out.results["tau"] = num_json(d.tau_hat);
  out.results["mu"] = to_json(d.mu);
  for (const auto& p : d.tau.points) {
    out.rows.push_back({"mean_size", num(p.x), num(p.y), num(p.y_sigma), p.excluded ? "1" : "0"});
  }
  for (const auto& p : d.mu.points) {
    out.rows.push_back({"reach", num(p.x), num(p.y), num(p.y_sigma), p.excluded ? "1" : "0"});
  }
  json sub = json::array();
  for (const auto& r : d.subadditivity.rows) sub.push_back(to_json(r));
  out.results["subadditivity"] = sub;
  out.violation = d.subadditivity.any_violated();
  if (!a.eta_grid.empty()) {
    const EtaScanResult s = eta_sign_scan(g, a.eta_grid, a.lambda_c, a.lambda_c_ci, a.eta_lo, a.eta_hi,
                                          a.eta_replicas, c.seed, resolve_workers(c.workers));
    json rows = json::array();
    for (const auto& r : s.rows) {
      rows.push_back({{"lambda", r.lambda}, {"eta", num_json(r.eta)}, {"sigma", num_json(r.sigma)}});
      out.rows.push_back({"eta", num(r.lambda), num(r.eta), num(r.sigma), "0"});
    }
    out.results["eta_scan"] = {{"rows", rows},
                               {"bracket", {num_json(s.bracket_lo), num_json(s.bracket_hi)}},
                               {"monotone", s.monotone},
                               {"brackets_lambda_c", s.brackets},
                               {"sign_ok", s.sign_ok},
                               {"note", s.note}};
    out.violation = out.violation || !s.brackets || !s.sign_ok;
  }
}

struct ForwardArgs {
  std::vector<double> t_grid = {1, 2, 5, 10};
  std::string initial = "origin";
};

void cmd_forward(const Common& c, const ForwardArgs& a, Output& out) {
  const GraphSpec g = make_graph(c);
  ForwardOptions o;
  o.lambda = c.lambda;
  o.h = c.h;
  o.grid = a.t_grid;
  o.radius = c.radius();
  std::vector<VertexId> initial;
  if (a.initial == "origin") {
    initial = {g.origin()};
  } else if (a.initial == "ball") {
    initial = g.ball(c.radius());
  } else if (a.initial != "empty") {
    throw DomainError("--initial must be origin, empty or ball");
  }
  const auto runs = sample_forward(g, initial, o, c.replicas, c.seed, resolve_workers(c.workers));
  const ForwardStatistics st = summarize_forward(o.grid, runs);
  out.header = {"t", "mean_size", "mean_size_stderr", "survival", "survival_stderr", "origin", "origin_stderr"};
  json pts = json::array();
  for (std::size_t k = 0; k < o.grid.size(); ++k) {
    pts.push_back({{"t", o.grid[k]},
                   {"mean_size", to_json(st.mean_size[k])},
                   {"survival", to_json(st.survival[k])},
                   {"origin", to_json(st.origin[k])}});
    out.rows.push_back({num(o.grid[k]), num(st.mean_size[k].mean), num(st.mean_size[k].std_error),
                        num(st.survival[k].mean), num(st.survival[k].std_error), num(st.origin[k].mean),
                        num(st.origin[k].std_error)});
  }
  out.results["points"] = pts;
  out.results["suppressed_fraction"] = st.suppressed_fraction;
}

// ---------------------------------------------------------------------------------------------
// Config files: "key = value" lines, '#' comments. Keys are long option names.

struct ConfigEntry {
  std::string key;
  std::string value;
  int line;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<ConfigEntry> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open config file '" + path + "'");
  std::vector<ConfigEntry> entries;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw.substr(0, raw.find('#')));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw DomainError(path + ":" + std::to_string(line) + ": expected 'key = value', got '" + s + "'");
    }
    ConfigEntry e{trim(s.substr(0, eq)), trim(s.substr(eq + 1)), line};
    if (e.key.empty()) throw DomainError(path + ":" + std::to_string(line) + ": empty key");
    entries.push_back(e);
  }
  return entries;
}

std::string config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return "";
}

bool given(const std::vector<std::string>& args, const std::string& key) {
  const std::string flag = "--" + key;
  for (const auto& a : args) {
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

}  // namespace

int run_cli(const std::vector<std::string>& args_in) {
  CLI::App app{"Contact process with spontaneous infection: estimators, oracles and inequality checks"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "print this help and exit");
  app.set_version_flag("--version", kVersion);

  Common common;
  EstimateArgs est_args;
  OracleArgs oracle_args;
  PdiArgs pdi_args;
  ChiArgs chi_args;
  CriticalOptions crit;
  ExponentArgs exp_args;
  DecayArgs decay_args;
  ForwardArgs fwd_args;

  std::map<std::string, Registry> registries;
  std::map<std::string, std::function<void(Output&)>> actions;
  auto sub = [&](const std::string& name, const std::string& desc) {
    CLI::App* s = app.add_subcommand(name, desc);
    s->set_help_flag("--help", "print this help and exit");  // -h would clash with --h
    add_common(s, common, registries[name]);
    return s;
  };

  {
    auto* s = sub("estimate", "theta, chi and derivative estimates on a (lambda, h) grid");
    auto& r = registries["estimate"];
    r.add(s, "quantities", est_args.quantities, "comma-separated estimator names")->delimiter(',');
    r.add(s, "step", est_args.step, "lambda step for dtheta_dlambda (0: default)");
    actions["estimate"] = [&](Output& o) { cmd_estimate(common, est_args, o); };
  }
  {
    auto* s = sub("oracle", "exact stationary and transient values on a finite graph");
    auto& r = registries["oracle"];
    r.add(s, "times", oracle_args.times, "comma-separated transient times")->delimiter(',');
    r.add(s, "step", oracle_args.step, "differencing step");
    actions["oracle"] = [&](Output& o) { cmd_oracle(common, oracle_args, o); };
  }
  {
    auto* s = sub("pdi-check", "finite-volume differential inequalities PDI1b and PDI2b");
    auto& r = registries["pdi-check"];
    r.flag(s, "exact", pdi_args.exact, "use oracle values (finite graphs)");
    r.flag(s, "surrogate", pdi_args.surrogate, "use theta_{T,2L}(o) in place of theta_max");
    r.add(s, "step", pdi_args.step, "lambda step (0: default)");
    r.add(s, "replicas-per-site", pdi_args.replicas_per_site, "replicas per site for theta_max (0: --replicas)");
    r.add(s, "site-cap", pdi_args.site_cap, "largest ball enumerated for theta_max");
    actions["pdi-check"] = [&](Output& o) { cmd_pdi(common, pdi_args, o); };
  }
  {
    auto* s = sub("chi-check", "d chi / d lambda <= |J| chi^2 at h = 0 and the integrated bound");
    auto& r = registries["chi-check"];
    r.add(s, "step", chi_args.step, "lambda step (0: default)");
    r.add(s, "lambda-t", chi_args.lambda_t, "estimated lambda_T for the integrated bound (0: skip)");
    r.add(s, "lambda-t-ci", chi_args.lambda_t_ci, "uncertainty of lambda_T");
    actions["chi-check"] = [&](Output& o) { cmd_chi(common, chi_args, o); };
  }
  {
    auto* s = sub("critical-scan", "lambda_T and lambda_H from two independent pipelines");
    auto& r = registries["critical-scan"];
    r.add(s, "lo", crit.lo, "lower end of the search interval");
    r.add(s, "hi", crit.hi, "upper end of the search interval");
    r.add(s, "survival-t0", crit.survival_t0, "survival horizon t0");
    r.add(s, "survival-replicas", crit.survival_replicas, "forward replicas per fine-grid point");
    r.add(s, "chi-t0", crit.chi_t0, "susceptibility horizon T0");
    r.add(s, "chi-replicas", crit.chi_replicas, "cluster replicas per fine-grid point");
    r.add(s, "bisection-steps", crit.bisection_steps, "coarse bisection steps");
    r.add(s, "coarse-replicas", crit.coarse_replicas, "replicas per bisection point");
    r.add(s, "fine-points", crit.fine_points, "fine-grid points");
    r.add(s, "fine-halfwidth", crit.fine_halfwidth, "fine-grid half width");
    r.add(s, "bootstrap", crit.bootstrap, "bootstrap replicates");
    r.add(s, "confidence", crit.confidence, "confidence level of the CIs");
    actions["critical-scan"] = [&](Output& o) {
      CriticalOptions opt = crit;
      opt.budget = common.budget;
      cmd_critical(common, opt, o);
    };
  }
  {
    auto* s = sub("exponents", "one-sided exponent bounds: delta fit, its subcritical control, beta fit");
    auto& r = registries["exponents"];
    r.add(s, "which", exp_args.which, "delta | control | beta");
    r.add(s, "lambda-c", exp_args.lambda_c, "estimated critical point");
    r.add(s, "lambda-c-ci", exp_args.lambda_c_ci, "its CI half-width");
    r.add(s, "window-factor", exp_args.window_factor, "T = factor / h in the delta fit");
    r.add(s, "estimator", exp_args.estimator, "indicator | exp-mass");
    r.add(s, "offsets", exp_args.offsets, "lambda - lambda_c values for beta")->delimiter(',');
    r.add(s, "t-max", exp_args.t_max, "survival horizon for beta");
    r.flag(s, "no-doubling", exp_args.no_doubling, "skip the T-doubling rerun");
    actions["exponents"] = [&](Output& o) { cmd_exponents(common, exp_args, o); };
  }
  {
    auto* s = sub("decay", "subcritical decay fits, subadditivity and the eta sign scan");
    auto& r = registries["decay"];
    r.add(s, "t-grid", decay_args.t_grid, "times for E|A_t|")->delimiter(',');
    r.add(s, "fit-lo", decay_args.fit_lo, "fit window start");
    r.add(s, "fit-hi", decay_args.fit_hi, "fit window end");
    r.add(s, "r-grid", decay_args.r_grid, "reach distances")->delimiter(',');
    r.add(s, "sub-grid", decay_args.sub_grid, "t and s values for subadditivity")->delimiter(',');
    r.add(s, "t-max", decay_args.t_max, "run length for the reach statistic");
    r.add(s, "eta-grid", decay_args.eta_grid, "lambda values for the eta scan")->delimiter(',');
    r.add(s, "lambda-c", decay_args.lambda_c, "estimated critical point for the eta scan");
    r.add(s, "lambda-c-ci", decay_args.lambda_c_ci, "its CI half-width");
    r.add(s, "eta-lo", decay_args.eta_lo, "eta window start");
    r.add(s, "eta-hi", decay_args.eta_hi, "eta window end");
    r.add(s, "eta-replicas", decay_args.eta_replicas, "replicas per eta point");
    actions["decay"] = [&](Output& o) { cmd_decay(common, decay_args, o); };
  }
  {
    auto* s = sub("forward-sim", "forward trajectories: E|A_t|, survival, occupancy of o");
    auto& r = registries["forward-sim"];
    r.add(s, "t-grid", fwd_args.t_grid, "recording times")->delimiter(',');
    r.add(s, "initial", fwd_args.initial, "origin | empty | ball");
    actions["forward-sim"] = [&](Output& o) { cmd_forward(common, fwd_args, o); };
  }

  // Splice config-file values in front of the command line so explicit flags win.
  std::vector<std::string> args = args_in;
  std::map<std::string, int> config_lines;
  const std::string cfg_path = config_path(args);
  if (!cfg_path.empty() && args.size() >= 2 && registries.count(args[1])) {
    try {
      const auto& reg = registries[args[1]];
      std::vector<std::string> extra;
      for (const auto& e : read_config(cfg_path)) {
        if (!reg.knows(e.key) || e.key == "config") {
          throw DomainError(cfg_path + ":" + std::to_string(e.line) + ": unknown key '" + e.key + "' for " + args[1]);
        }
        if (given(args, e.key)) continue;
        config_lines[e.key] = e.line;
        if (reg.is_flag(e.key)) {
          if (e.value == "true" || e.value == "1") extra.push_back("--" + e.key);
          else if (e.value != "false" && e.value != "0") {
            throw DomainError(cfg_path + ":" + std::to_string(e.line) + ": '" + e.key + "' expects true or false");
          }
        } else {
          extra.push_back("--" + e.key + "=" + e.value);
        }
      }
      args.insert(args.begin() + 2, extra.begin(), extra.end());
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitError;
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
  try {
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    app.exit(e);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (const auto& [key, line] : config_lines) {
      if (msg.find("--" + key) != std::string::npos) {
        msg += " (from " + cfg_path + ":" + std::to_string(line) + ")";
        break;
      }
    }
    std::cerr << "usage error: " << msg << "\n" << "run with --help for usage\n";
    return kExitError;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  const json config = registries[command].config();
  Output out;
  try {
    actions[command](out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (out.started()) {
      try {
        write_outputs(common.out, command, config, common.seed, out, "failed", e.what());
      } catch (const std::exception& w) {
        std::cerr << "error: " << w.what() << "\n";
      }
    }
    return kExitError;
  }
  try {
    write_outputs(common.out, command, config, common.seed, out, out.violation ? "violation" : "ok", "");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  if (out.violation) {
    std::cerr << "model claim violated; see " << common.out << ".json\n";
    return kExitViolation;
  }
  return kExitOk;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run_cli(args);
}

}  // namespace cplab
