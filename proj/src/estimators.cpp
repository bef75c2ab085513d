#include "cplab/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cplab/errors.hpp"
#include "cplab/rng.hpp"

namespace cplab {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct ReplicaValue {
  double value = 0.0;
  bool budget = false;
  bool space = false;
};

void check_common(double lambda, double h, const EstimatorConfig& cfg) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("lambda must be finite and nonnegative");
  if (!(h >= 0.0) || !std::isfinite(h)) throw DomainError("h must be finite and nonnegative");
  if (!(cfg.window >= 0.0)) throw DomainError("window T must be nonnegative");
  if (cfg.radius < 0) throw DomainError("radius L must be nonnegative");
  if (cfg.replicas < 1) throw DomainError("at least one replica is required");
}

FieldParams field_params(double lambda_max, double h, const EstimatorConfig& cfg, std::uint64_t seed) {
  FieldParams p;
  p.seed = seed;
  p.window = cfg.window;
  p.lambda_max = lambda_max;
  p.h = h;
  return p;
}

ClusterOptions cluster_options(double level, const EstimatorConfig& cfg) {
  ClusterOptions co;
  co.level = level;
  co.radius = cfg.radius;
  co.budget = cfg.budget;
  return co;
}

// Mean over replicas; budget-flagged replicas are kept (include_flagged) or dropped.
Estimate summarize(const std::vector<ReplicaValue>& reps, bool include_flagged, const EstimatorConfig& cfg,
                   const char* what) {
  std::vector<double> values;
  values.reserve(reps.size());
  std::size_t budget = 0;
  std::size_t space = 0;
  for (const auto& r : reps) {
    budget += r.budget ? 1 : 0;
    space += r.space ? 1 : 0;
    if (include_flagged || !r.budget) values.push_back(r.value);
  }
  const double n = static_cast<double>(reps.size());
  const double flagged = static_cast<double>(budget) / n;
  if (flagged > cfg.max_flagged_fraction) {
    throw QualityError(std::string(what) + ": " + std::to_string(budget) + " of " + std::to_string(reps.size()) +
                       " replicas exhausted the segment budget");
  }
  Estimate e = mean_estimate(values);
  e.flagged_fraction = flagged;
  e.space_truncated_fraction = static_cast<double>(space) / n;
  return e;
}

double theta_bias(double h, const EstimatorConfig& cfg, const Estimate& e) {
  return std::exp(-h * cfg.window) + e.space_truncated_fraction + e.flagged_fraction;
}

// sup_{m >= T} m exp(-h m): the largest change a cluster reaching -T can make to m exp(-h m).
double chi_tail(double h, double window) {
  if (h <= 0.0) return kInf;
  return h * window >= 1.0 ? window * std::exp(-h * window) : 1.0 / (std::exp(1.0) * h);
}

template <class Kernel>
std::vector<ReplicaValue> run(const GraphSpec& graph, double lambda_max, double h, const EstimatorConfig& cfg,
                              std::uint64_t seed, Kernel kernel) {
  return map_fields(graph, field_params(lambda_max, h, cfg, seed), cfg.replicas, cfg.workers,
                    [&](EventField& field, ClusterExplorer& explorer, std::size_t) { return kernel(field, explorer); });
}

Estimate zero_estimate(const EstimatorConfig& cfg) {
  Estimate e;
  e.n = cfg.replicas;
  return e;
}

}  // namespace

Estimate theta(const GraphSpec& graph, double lambda, double h, const EstimatorConfig& cfg) {
  check_common(lambda, h, cfg);
  if (cfg.window == 0.0) {
    Estimate e = zero_estimate(cfg);
    e.bias_bound = 1.0;
    return e;
  }
  const auto co = cluster_options(lambda, cfg);
  auto reps = run(graph, lambda, h, cfg, cfg.seed, [&](EventField& field, ClusterExplorer& explorer) {
    const auto r = explorer.explore(field, co);
    return ReplicaValue{-std::expm1(-h * r.mass), r.budget_exhausted, r.hit_space_boundary};
  });
  Estimate e = summarize(reps, true, cfg, "theta");
  e.bias_bound = theta_bias(h, cfg, e);
  return e;
}

Estimate theta_indicator(const GraphSpec& graph, double lambda, double h, const EstimatorConfig& cfg) {
  check_common(lambda, h, cfg);
  if (cfg.window == 0.0 || h == 0.0) {
    Estimate e = zero_estimate(cfg);
    e.bias_bound = cfg.window == 0.0 ? 1.0 : 0.0;
    return e;
  }
  auto co = cluster_options(lambda, cfg);
  co.stop = StopRule::FirstGreen;
  auto reps = run(graph, lambda, h, cfg, cfg.seed, [&](EventField& field, ClusterExplorer& explorer) {
    const auto r = explorer.explore(field, co);
    return ReplicaValue{r.green_hits > 0 ? 1.0 : 0.0, r.budget_exhausted, r.hit_space_boundary};
  });
  Estimate e = summarize(reps, true, cfg, "theta_indicator");
  e.bias_bound = theta_bias(h, cfg, e);
  return e;
}

Estimate chi(const GraphSpec& graph, double lambda, double h, const EstimatorConfig& cfg) {
  check_common(lambda, h, cfg);
  if (!(cfg.window > 0.0)) throw DomainError("chi needs a positive window");
  const auto co = cluster_options(lambda, cfg);
  auto reps = run(graph, lambda, h, cfg, cfg.seed, [&](EventField& field, ClusterExplorer& explorer) {
    const auto r = explorer.explore(field, co);
    return ReplicaValue{r.mass * std::exp(-h * r.mass), r.budget_exhausted, r.hit_space_boundary};
  });
  Estimate e = summarize(reps, false, cfg, "chi");
  e.bias_bound = h > 0.0 ? chi_tail(h, cfg.window) + e.space_truncated_fraction / (std::exp(1.0) * h) : kInf;
  return e;
}

Estimate dtheta_dh(const GraphSpec& graph, double lambda, double h, const EstimatorConfig& cfg) {
  if (!(h > 0.0)) throw DomainError("dtheta_dh needs h > 0");
  return chi(graph, lambda, h, cfg);
}

double default_lambda_step(double lambda) { return std::max(0.05, 0.1 * lambda); }

Estimate dtheta_dlambda(const GraphSpec& graph, double lambda, double h, std::optional<double> step,
                        const EstimatorConfig& cfg) {
  check_common(lambda, h, cfg);
  const double s = step.value_or(default_lambda_step(lambda));
  if (!(s > 0.0)) throw DomainError("lambda step must be positive");
  if (!(h > 0.0)) throw DomainError("dtheta_dlambda needs h > 0");
  const bool one_sided = lambda < s;
  const double up = lambda + s;
  const double down = one_sided ? lambda : lambda - s;
  auto co_up = cluster_options(up, cfg);
  auto co_down = cluster_options(down, cfg);
  auto reps = run(graph, up, h, cfg, cfg.seed, [&](EventField& field, ClusterExplorer& explorer) {
    const auto a = explorer.explore(field, co_up);
    const auto b = explorer.explore(field, co_down);
    const double q = (std::expm1(-h * b.mass) - std::expm1(-h * a.mass)) / (up - down);
    return ReplicaValue{q, a.budget_exhausted || b.budget_exhausted, a.hit_space_boundary || b.hit_space_boundary};
  });
  Estimate e = summarize(reps, false, cfg, "dtheta_dlambda");
  e.bias_bound = 0.0;
  return e;
}

Estimate prob_one_green(const GraphSpec& graph, double lambda, double h, const EstimatorConfig& cfg) {
  check_common(lambda, h, cfg);
  if (h == 0.0 || cfg.window == 0.0) return zero_estimate(cfg);
  const auto co = cluster_options(lambda, cfg);
  auto reps = run(graph, lambda, h, cfg, cfg.seed, [&](EventField& field, ClusterExplorer& explorer) {
    const auto r = explorer.explore(field, co);
    return ReplicaValue{r.green_hits == 1 ? 1.0 : 0.0, r.budget_exhausted, r.hit_space_boundary};
  });
  Estimate e = summarize(reps, false, cfg, "prob_one_green");
  e.bias_bound = h * chi_tail(h, cfg.window) + e.space_truncated_fraction / std::exp(1.0);
  return e;
}

Estimate theta_surrogate_max(const GraphSpec& graph, double lambda, double h, const EstimatorConfig& cfg) {
  EstimatorConfig wide = cfg;
  wide.radius = cfg.radius > std::numeric_limits<int>::max() / 2 ? std::numeric_limits<int>::max() : 2 * cfg.radius;
  return theta(graph, lambda, h, wide);
}

ThetaMaxResult theta_max(const GraphSpec& graph, double lambda, double h, const EstimatorConfig& cfg,
                         std::size_t site_cap) {
  check_common(lambda, h, cfg);
  if (graph.ball_size(cfg.radius) > site_cap) {
    throw ResourceError("theta_max: ball has more than " + std::to_string(site_cap) +
                        " sites; use the theta_{T,2L} surrogate");
  }
  ThetaMaxResult out;
  out.sites = graph.ball(cfg.radius);
  auto co = cluster_options(lambda, cfg);
  co.stop = StopRule::FirstGreen;
  std::size_t best = 0;
  for (std::size_t rank = 0; rank < out.sites.size(); ++rank) {
    co.root = out.sites[rank];
    Estimate e;
    if (cfg.window == 0.0 || h == 0.0) {
      e = zero_estimate(cfg);
    } else {
      const std::uint64_t seed = hash_key({cfg.seed, 0x5e1ec7ULL, rank});
      auto reps = run(graph, lambda, h, cfg, seed, [&](EventField& field, ClusterExplorer& explorer) {
        const auto r = explorer.explore(field, co);
        return ReplicaValue{r.green_hits > 0 ? 1.0 : 0.0, r.budget_exhausted, r.hit_space_boundary};
      });
      e = summarize(reps, true, cfg, "theta_max");
      e.bias_bound = theta_bias(h, cfg, e);
    }
    if (rank == 0 || e.mean > out.per_site[best].mean) best = rank;
    out.per_site.push_back(e);
  }
  out.argmax = out.sites[best];
  out.max = out.per_site[best];
  out.max.std_error *= union_bound_factor(out.sites.size());
  out.surrogate = theta_surrogate_max(graph, lambda, h, cfg);
  return out;
}

JointSample sample_joint(const GraphSpec& graph, double lambda, double h, std::optional<double> step,
                         const EstimatorConfig& cfg, bool with_double_radius) {
  check_common(lambda, h, cfg);
  if (!(cfg.window > 0.0)) throw DomainError("sample_joint needs a positive window");
  JointSample js;
  js.lambda = lambda;
  js.h = h;
  js.step = step.value_or(default_lambda_step(lambda));
  if (!(js.step > 0.0)) throw DomainError("lambda step must be positive");
  js.one_sided = lambda < js.step;
  const double up = lambda + js.step;
  const double down = js.one_sided ? lambda : lambda - js.step;
  const int wide_radius =
      cfg.radius > std::numeric_limits<int>::max() / 2 ? std::numeric_limits<int>::max() : 2 * cfg.radius;

  struct Row {
    double theta, dh, dl, theta_2l, mass, dmass;
    bool budget, space;
  };
  const auto co = cluster_options(lambda, cfg);
  const auto co_up = cluster_options(up, cfg);
  const auto co_down = cluster_options(down, cfg);
  auto co_wide = co;
  co_wide.radius = wide_radius;

  auto rows = map_fields(graph, field_params(up, h, cfg, cfg.seed), cfg.replicas, cfg.workers,
                         [&](EventField& field, ClusterExplorer& explorer, std::size_t) {
                           Row row{};
                           ClusterResult mid;
                           bool budget = false;
                           if (with_double_radius) {
                             const auto wide = explorer.explore(field, co_wide);
                             row.theta_2l = -std::expm1(-h * wide.mass);
                             budget = wide.budget_exhausted;
                             // The wide exploration never left V_L: it is the V_L cluster.
                             mid = wide.max_depth <= cfg.radius && !wide.budget_exhausted
                                       ? wide
                                       : explorer.explore(field, co);
                           } else {
                             mid = explorer.explore(field, co);
                           }
                           const auto a = explorer.explore(field, co_up);
                           const auto b = js.one_sided ? mid : explorer.explore(field, co_down);
                           row.theta = -std::expm1(-h * mid.mass);
                           row.dh = mid.mass * std::exp(-h * mid.mass);
                           row.dl = (std::expm1(-h * b.mass) - std::expm1(-h * a.mass)) / (up - down);
                           row.mass = mid.mass;
                           row.dmass = (a.mass - b.mass) / (up - down);
                           row.budget = budget || mid.budget_exhausted || a.budget_exhausted || b.budget_exhausted;
                           row.space = mid.hit_space_boundary || a.hit_space_boundary || b.hit_space_boundary;
                           return row;
                         });
  std::size_t budget = 0;
  std::size_t space = 0;
  for (const auto& r : rows) {
    budget += r.budget ? 1 : 0;
    space += r.space ? 1 : 0;
  }
  const double n = static_cast<double>(rows.size());
  js.flagged_fraction = static_cast<double>(budget) / n;
  js.space_truncated_fraction = static_cast<double>(space) / n;
  if (js.flagged_fraction > cfg.max_flagged_fraction) {
    throw QualityError("sample_joint: " + std::to_string(budget) + " replicas exhausted the segment budget");
  }
  for (const auto& r : rows) {
    if (r.budget) continue;
    js.theta.push_back(r.theta);
    js.dtheta_dh.push_back(r.dh);
    js.dtheta_dl.push_back(r.dl);
    if (with_double_radius) js.theta_2l.push_back(r.theta_2l);
    js.mass.push_back(r.mass);
    js.dmass_dl.push_back(r.dmass);
  }
  return js;
}

}  // namespace cplab
