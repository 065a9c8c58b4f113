#pragma once

// Desk-scale limit-theorem experiments: WLLN, SLLN, cluster sets, LIL,
// necessity and empirical bound dominance. Every runner is deterministic in
// (config, seed) and independent of the worker count.

#include "caplim/bounds.hpp"
#include "caplim/dependence.hpp"
#include "caplim/error.hpp"
#include "caplim/measures.hpp"
#include "caplim/parallel.hpp"
#include "caplim/rng.hpp"
#include "caplim/sublinear.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace caplim {

using Json = nlohmann::ordered_json;

enum class ExperimentMode { wlln, slln, cluster, lil, necessity, bound_check };
enum class BlockScheme { power_k, geometric };
enum class BlockPolicy { alternate, cycle };
enum class MeasureSelection { all, extremes };

inline const char* to_string(ExperimentMode m) {
  switch (m) {
    case ExperimentMode::wlln: return "wlln";
    case ExperimentMode::slln: return "slln";
    case ExperimentMode::cluster: return "cluster";
    case ExperimentMode::lil: return "lil";
    case ExperimentMode::necessity: return "necessity";
    case ExperimentMode::bound_check: return "bound-check";
  }
  return "?";
}

inline const char* to_string(BlockScheme s) { return s == BlockScheme::power_k ? "power_k" : "geometric"; }
inline const char* to_string(BlockPolicy p) { return p == BlockPolicy::alternate ? "alternate" : "cycle"; }
inline const char* to_string(MeasureSelection s) { return s == MeasureSelection::all ? "all" : "extremes"; }

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::slln;
  std::size_t trajectories = 100;
  /// N
  std::size_t horizon = 100000;
  /// n0, the first index entering running extrema.
  std::size_t burn_in = 1000;
  /// WLLN n values.
  std::vector<std::size_t> schedule{100, 1000, 10000};
  double epsilon = 0.05;
  double epsilon_lil = 0.15;
  /// Required fraction of passing trajectories; defaults depend on the mode.
  std::optional<double> pass_fraction;
  /// WLLN: required lower-capacity estimate at the last schedule point.
  double wlln_target = 0.99;
  BlockScheme block_scheme = BlockScheme::power_k;
  double theta = 8.0;
  /// Exponent of the LIL block schedule n_k = floor(e^{k^{1-alpha}}).
  double alpha = 0.5;
  BlockPolicy policy = BlockPolicy::alternate;
  std::size_t cycle_points = 11;
  double grid_step = 0.1;
  double coverage_radius = 0.1;
  double coverage_target = 0.95;
  MeasureSelection measures = MeasureSelection::all;
  double checkpoint_start = 1000.0;
  double checkpoint_ratio = 1.05;
  double divergence_threshold = 10.0;
  double divergence_target = 0.9;
  /// bound_check parameters.
  double bound_p = 3.0;
  double bound_delta = 1.0;
  double bound_r = 2.0;
  std::size_t x_points = 20;
  std::uint64_t seed = 1;
  std::size_t workers = 1;

  double effective_pass_fraction() const {
    if (pass_fraction) return *pass_fraction;
    return mode == ExperimentMode::lil ? 0.95 : 1.0;
  }

  void validate() const {
    require(trajectories >= 1, "ExperimentConfig: trajectories m must be >= 1");
    require(horizon >= 1, "ExperimentConfig: horizon must be >= 1");
    require(theta > 1.0, "ExperimentConfig: theta must be > 1");
    require(alpha > 0.0 && alpha < 1.0, "ExperimentConfig: alpha must lie in (0, 1)");
    require(epsilon > 0.0, "ExperimentConfig: epsilon must be > 0");
    require(epsilon_lil > 0.0, "ExperimentConfig: epsilon_lil must be > 0");
    require(checkpoint_ratio > 1.0, "ExperimentConfig: checkpoint_ratio must be > 1");
    require(checkpoint_start >= 1.0, "ExperimentConfig: checkpoint_start must be >= 1");
    require(grid_step > 0.0 && coverage_radius >= 0.0, "ExperimentConfig: grid_step must be > 0");
    require(cycle_points >= 2, "ExperimentConfig: cycle_points must be >= 2");
    require(!pass_fraction || (*pass_fraction >= 0.0 && *pass_fraction <= 1.0),
            "ExperimentConfig: pass_fraction must lie in [0, 1]");
    require(bound_p >= 2.0, "ExperimentConfig: bound_p must be >= 2");
    require(bound_delta > 0.0 && bound_delta <= 1.0, "ExperimentConfig: bound_delta must lie in (0, 1]");
    require(bound_r > 0.0, "ExperimentConfig: bound_r must be > 0");
    require(x_points >= 2, "ExperimentConfig: x_points must be >= 2");
    if (mode == ExperimentMode::wlln) {
      require(!schedule.empty(), "ExperimentConfig: wlln needs a non-empty schedule");
      for (auto n : schedule) require(n >= 1, "ExperimentConfig: schedule entries must be >= 1");
    }
  }
};

struct ExperimentModel {
  MeasureFamily family;
  DependenceSpec dependence;
};

struct CsvRow {
  std::size_t checkpoint = 0;
  std::size_t trajectory = 0;
  std::size_t measure = 0;
  std::string statistic;
  double value = 0.0;
};

inline std::string format_value(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

struct ExperimentResult {
  std::string mode;
  bool pass = false;
  std::string verdict;
  std::uint64_t seed = 0;
  std::string config_hash;
  Json summary = Json::object();
  std::vector<std::string> assumptions;
  std::vector<CsvRow> rows;

  Json to_json() const {
    Json j;
    j["mode"] = mode;
    j["pass"] = pass;
    j["verdict"] = verdict;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    j["summary"] = summary;
    j["assumptions"] = assumptions;
    j["rows"] = rows.size();
    return j;
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "checkpoint,trajectory,measure,statistic,value\n";
    for (const auto& r : rows) {
      os << r.checkpoint << ',' << r.trajectory << ',' << r.measure << ',' << r.statistic << ','
         << format_value(r.value) << '\n';
    }
    return os.str();
  }
};

/// Mean and variance proxies of X_1 over the family grid.
struct SequenceMoments {
  double upper_mean = 0.0;
  double lower_mean = 0.0;
  /// sup_P E_P[(X_1 - lower_mean)^2]
  double sigma1_sq = 0.0;
  /// sup_P E_P[(X_1 - upper_mean)^2]
  double sigma2_sq = 0.0;
  std::size_t argmax = 0;
  std::size_t argmin = 0;
};

inline SequenceMoments sequence_moments(const ExperimentModel& model) {
  SequenceMoments mm;
  if (model.dependence.mode == DependenceMode::discrete_joint) {
    std::vector<Marginal> first;
    for (const auto& t : model.dependence.tables) first.push_back(t.marginal(0));
    mm.upper_mean = -kInf;
    mm.lower_mean = kInf;
    for (std::size_t i = 0; i < first.size(); ++i) {
      const double mu = first[i].mean();
      if (mu > mm.upper_mean) mm.upper_mean = mu, mm.argmax = i;
      if (mu < mm.lower_mean) mm.lower_mean = mu, mm.argmin = i;
    }
    for (const auto& m : first) {
      const double v = m.variance();
      mm.sigma1_sq = std::max(mm.sigma1_sq, v + std::pow(m.mean() - mm.lower_mean, 2));
      mm.sigma2_sq = std::max(mm.sigma2_sq, v + std::pow(m.mean() - mm.upper_mean, 2));
    }
    return mm;
  }
  const auto& members = model.family.members();
  mm.upper_mean = -kInf;
  mm.lower_mean = kInf;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const double mu = members[i].measure.marginal(0).mean();
    if (mu > mm.upper_mean) mm.upper_mean = mu, mm.argmax = i;
    if (mu < mm.lower_mean) mm.lower_mean = mu, mm.argmin = i;
  }
  for (const auto& member : members) {
    const auto& m = member.measure.marginal(0);
    const double v = m.variance();
    mm.sigma1_sq = std::max(mm.sigma1_sq, v + std::pow(m.mean() - mm.lower_mean, 2));
    mm.sigma2_sq = std::max(mm.sigma2_sq, v + std::pow(m.mean() - mm.upper_mean, 2));
  }
  return mm;
}

/// log x = ln(max(x, e)).
inline double lil_log(double x) { return std::log(std::max(x, std::numbers::e)); }

/// a_n = sqrt(2 n log log n).
inline double lil_normalizer(double n) { return std::sqrt(2.0 * n * lil_log(lil_log(n))); }

/// Geometric checkpoints start, start*ratio, ... (rounded up, distinct), capped by and including N.
inline std::vector<std::size_t> geometric_checkpoints(double start, double ratio, std::size_t N) {
  std::vector<std::size_t> out;
  for (double c = start; c < static_cast<double>(N); c *= ratio) {
    const auto k = static_cast<std::size_t>(std::ceil(c));
    if (k >= 1 && k < N && (out.empty() || k > out.back())) out.push_back(k);
  }
  out.push_back(N);
  return out;
}

/// Block ends n_1 < n_2 < ... capped at the horizon (the last entry equals the horizon).
inline std::vector<std::size_t> block_schedule(BlockScheme scheme, double theta, std::size_t horizon) {
  std::vector<std::size_t> ends;
  auto push = [&](double v) {
    const std::size_t k = v >= static_cast<double>(horizon) ? horizon : static_cast<std::size_t>(std::floor(v));
    if (k >= 1 && (ends.empty() || k > ends.back())) ends.push_back(k);
    return k >= horizon;
  };
  // k^k needs at least five complete blocks inside the horizon; fall back to theta^k otherwise.
  if (scheme == BlockScheme::power_k && horizon >= 3125) {
    for (int k = 1;; ++k) {
      if (push(std::pow(static_cast<double>(k), k))) break;
    }
  } else {
    for (int k = 1;; ++k) {
      if (push(std::pow(theta, k))) break;
    }
  }
  return ends;
}

/// n_k = floor(e^{k^{1-alpha}}) up to the horizon.
inline std::vector<std::size_t> lil_block_schedule(double alpha, std::size_t horizon) {
  std::vector<std::size_t> out;
  for (int k = 1;; ++k) {
    const double v = std::exp(std::pow(static_cast<double>(k), 1.0 - alpha));
    if (v > static_cast<double>(horizon)) break;
    const auto n = static_cast<std::size_t>(std::floor(v));
    if (out.empty() || n > out.back()) out.push_back(n);
  }
  return out;
}

/// Splits x into the truncated part f_c(x) and the remainder x - f_c(x).
struct TruncatedSums {
  double truncated = 0.0;
  double remainder = 0.0;
  double total = 0.0;
};

inline TruncatedSums truncated_sums(std::span<const double> x, double c) {
  TruncatedSums s;
  for (double v : x) {
    const auto [t, rest] = truncate(v, c);
    s.truncated += t;
    s.remainder += rest;
    s.total += v;
  }
  return s;
}

namespace detail {

inline double binomial_se(double p, std::size_t m) {
  return std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(m));
}

inline std::vector<std::size_t> selected_measures(const ExperimentModel& model, MeasureSelection sel,
                                                  const SequenceMoments& mm, std::size_t count) {
  if (sel == MeasureSelection::all || count == 1) {
    std::vector<std::size_t> all(count);
    for (std::size_t i = 0; i < count; ++i) all[i] = i;
    return all;
  }
  (void)model;
  if (mm.argmax == mm.argmin) return {mm.argmax};
  return {mm.argmin, mm.argmax};
}

inline Json lambda_json(const ExperimentModel& model, std::size_t measure) {
  if (model.dependence.mode == DependenceMode::discrete_joint) return Json(measure);
  return Json(model.family.members().at(measure).lambda);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// WLLN

inline ExperimentResult run_wlln(const ExperimentModel& model, const ExperimentConfig& config) {
  config.validate();
  auto schedule = config.schedule;
  std::sort(schedule.begin(), schedule.end());
  schedule.erase(std::unique(schedule.begin(), schedule.end()), schedule.end());
  const std::size_t N = schedule.back();
  const SequenceSampler sampler(model.dependence, model.family, N);
  const auto mm = sequence_moments(model);
  const std::size_t measures = sampler.measure_count();
  const std::size_t m = config.trajectories;
  const double eps = config.epsilon;

  // Per (measure, trajectory): averages at each schedule point.
  const auto averages = parallel_map<std::vector<double>>(measures * m, config.workers, [&](std::size_t w) {
    const std::size_t measure = w / m;
    const std::size_t traj = w % m;
    auto s = sampler.stream(measure, config.seed, traj);
    std::vector<double> out;
    out.reserve(schedule.size());
    double sum = 0.0;
    std::size_t next = 0;
    for (std::size_t k = 1; k <= N; ++k) {
      sum += s.next();
      if (k == schedule[next]) {
        out.push_back(sum / static_cast<double>(k));
        ++next;
      }
    }
    return out;
  });

  ExperimentResult r;
  r.mode = to_string(ExperimentMode::wlln);
  r.seed = config.seed;
  Json points = Json::array();
  double last_lower = 0.0;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    double worst_out = 0.0;
    double best_near_upper = 0.0;
    double best_near_lower = 0.0;
    for (std::size_t measure = 0; measure < measures; ++measure) {
      std::size_t outside = 0, near_upper = 0, near_lower = 0;
      for (std::size_t t = 0; t < m; ++t) {
        const double a = averages[measure * m + t][i];
        if (a < mm.lower_mean - eps || a > mm.upper_mean + eps) ++outside;
        if (std::abs(a - mm.upper_mean) <= eps) ++near_upper;
        if (std::abs(a - mm.lower_mean) <= eps) ++near_lower;
      }
      const double md = static_cast<double>(m);
      worst_out = std::max(worst_out, outside / md);
      best_near_upper = std::max(best_near_upper, near_upper / md);
      best_near_lower = std::max(best_near_lower, near_lower / md);
    }
    const double lower_cap = 1.0 - worst_out;
    Json p;
    p["n"] = schedule[i];
    p["lower_capacity_inside"] = lower_cap;
    p["lower_capacity_se"] = detail::binomial_se(worst_out, m);
    p["upper_capacity_near_upper_mean"] = best_near_upper;
    p["upper_capacity_near_upper_mean_se"] = detail::binomial_se(best_near_upper, m);
    p["upper_capacity_near_lower_mean"] = best_near_lower;
    p["upper_capacity_near_lower_mean_se"] = detail::binomial_se(best_near_lower, m);
    points.push_back(p);
    for (const char* stat : {"lower_capacity_inside", "upper_capacity_near_upper_mean", "upper_capacity_near_lower_mean"}) {
      r.rows.push_back({schedule[i], 0, 0, stat, p[stat].get<double>()});
    }
    last_lower = lower_cap;
  }
  r.summary["upper_mean"] = mm.upper_mean;
  r.summary["lower_mean"] = mm.lower_mean;
  r.summary["epsilon"] = eps;
  r.summary["measures"] = measures;
  r.summary["trajectories_per_measure"] = m;
  r.summary["extended_independent_statistics"] =
      model.dependence.mode == DependenceMode::per_measure_independent;
  r.summary["schedule"] = points;
  r.pass = last_lower >= config.wlln_target;
  std::ostringstream os;
  os << "lower capacity of [" << format_value(mm.lower_mean - eps) << ", " << format_value(mm.upper_mean + eps)
     << "] at n = " << N << " is " << format_value(last_lower) << " (target " << format_value(config.wlln_target)
     << ")";
  r.verdict = os.str();
  return r;
}

// ---------------------------------------------------------------------------
// SLLN

namespace detail {

struct RunningExtrema {
  double max = -kInf;
  double min = kInf;
  std::vector<double> checkpoints;
};

template <class Draw>
RunningExtrema running_average_extrema(Draw&& draw, std::size_t n0, std::size_t N,
                                       const std::vector<std::size_t>& checkpoints) {
  RunningExtrema e;
  e.checkpoints.reserve(checkpoints.size());
  double sum = 0.0;
  std::size_t next = 0;
  for (std::size_t k = 1; k <= N; ++k) {
    sum += draw(k);
    const double a = sum / static_cast<double>(k);
    if (k >= n0) {
      e.max = std::max(e.max, a);
      e.min = std::min(e.min, a);
    }
    if (next < checkpoints.size() && k == checkpoints[next]) {
      e.checkpoints.push_back(a);
      ++next;
    }
  }
  return e;
}

}  // namespace detail

/// Extra offset added to every draw; run_slln(model, config, shift) tests shift equivariance.
inline ExperimentResult run_slln(const ExperimentModel& model, const ExperimentConfig& config, double shift = 0.0) {
  config.validate();
  const std::size_t N = config.horizon;
  const std::size_t n0 = std::min(config.burn_in, N);
  const SequenceSampler sampler(model.dependence, model.family, N);
  auto mm = sequence_moments(model);
  mm.upper_mean += shift;
  mm.lower_mean += shift;
  const auto chosen = detail::selected_measures(model, config.measures, mm, sampler.measure_count());
  const std::size_t m = config.trajectories;
  const auto checkpoints = geometric_checkpoints(std::max<double>(n0, 1.0), config.checkpoint_ratio, N);

  const auto extrema = parallel_map<detail::RunningExtrema>(chosen.size() * m, config.workers, [&](std::size_t w) {
    auto s = sampler.stream(chosen[w / m], config.seed, w % m);
    return detail::running_average_extrema([&](std::size_t) { return s.next() + shift; }, n0, N, checkpoints);
  });

  const double hi = mm.upper_mean + config.epsilon;
  const double lo = mm.lower_mean - config.epsilon;
  std::size_t violations = 0;
  double worst_max = -kInf, worst_min = kInf;
  ExperimentResult r;
  r.mode = to_string(ExperimentMode::slln);
  r.seed = config.seed;
  Json per_measure = Json::array();
  for (std::size_t c = 0; c < chosen.size(); ++c) {
    std::size_t v = 0;
    double mx = -kInf, mn = kInf;
    for (std::size_t t = 0; t < m; ++t) {
      const auto& e = extrema[c * m + t];
      if (e.max > hi || e.min < lo) ++v;
      mx = std::max(mx, e.max);
      mn = std::min(mn, e.min);
      for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        r.rows.push_back({checkpoints[i], t, chosen[c], "S_n/n", e.checkpoints[i]});
      }
      r.rows.push_back({N, t, chosen[c], "running_max", e.max});
      r.rows.push_back({N, t, chosen[c], "running_min", e.min});
    }
    Json pm;
    pm["measure"] = chosen[c];
    pm["lambda"] = detail::lambda_json(model, chosen[c]);
    pm["violations"] = v;
    pm["max_running_average"] = mx;
    pm["min_running_average"] = mn;
    per_measure.push_back(pm);
    violations += v;
    worst_max = std::max(worst_max, mx);
    worst_min = std::min(worst_min, mn);
  }
  const double total = static_cast<double>(chosen.size() * m);
  const double within = (total - static_cast<double>(violations)) / total;
  r.summary["upper_mean"] = mm.upper_mean;
  r.summary["lower_mean"] = mm.lower_mean;
  r.summary["epsilon"] = config.epsilon;
  r.summary["upper_limit"] = hi;
  r.summary["lower_limit"] = lo;
  r.summary["horizon"] = N;
  r.summary["burn_in"] = n0;
  r.summary["trajectories"] = chosen.size() * m;
  r.summary["violations"] = violations;
  r.summary["fraction_within"] = within;
  r.summary["max_running_average"] = worst_max;
  r.summary["min_running_average"] = worst_min;
  r.summary["measures"] = per_measure;
  r.pass = within >= config.effective_pass_fraction();
  r.verdict = std::to_string(violations) + " of " + std::to_string(chosen.size() * m) +
              " trajectories leave [" + format_value(lo) + ", " + format_value(hi) + "] after n0 = " +
              std::to_string(n0);
  return r;
}

// ---------------------------------------------------------------------------
// Cluster set

inline ExperimentResult run_cluster(const ExperimentModel& model, const ExperimentConfig& config) {
  config.validate();
  require(model.dependence.mode == DependenceMode::per_measure_independent,
          "run_cluster: the block-switching sampler needs a per-measure-independent family");
  const std::size_t N = config.horizon;
  const auto mm = sequence_moments(model);
  const auto& family = model.family;
  const auto blocks = block_schedule(config.block_scheme, config.theta, N);

  // Measures used by the blocks.
  std::vector<ProductMeasure> pool;
  std::vector<double> pool_means;
  if (config.policy == BlockPolicy::alternate || family.dimension() != 1) {
    pool.push_back(family.members()[mm.argmax].measure);
    pool.push_back(family.members()[mm.argmin].measure);
  } else {
    const auto& axis = family.axes()[0];
    for (std::size_t i = 0; i < config.cycle_points; ++i) {
      const double lam = i + 1 == config.cycle_points
                             ? axis.hi
                             : axis.lo + (axis.hi - axis.lo) * static_cast<double>(i) /
                                             static_cast<double>(config.cycle_points - 1);
      const std::vector<double> l{lam};
      pool.push_back(family.build(l));
    }
  }
  for (const auto& p : pool) pool_means.push_back(p.marginal(0).mean());

  const double lo = mm.lower_mean, hi = mm.upper_mean;
  const std::size_t grid_n = hi > lo ? static_cast<std::size_t>(std::floor((hi - lo) / config.grid_step + 1e-9)) + 1 : 1;
  auto grid_point = [&](std::size_t g) { return g + 1 == grid_n && grid_n > 1 ? hi : lo + config.grid_step * g; };
  const std::size_t start = blocks.size() > 2 ? blocks[1] : 1;
  const auto checkpoints = geometric_checkpoints(1.0, 1.01, N);
  const std::size_t m = config.trajectories;

  struct Trace {
    std::vector<char> visited;
    std::vector<double> block_ends;
    std::vector<double> checkpoints;
  };
  const auto traces = parallel_map<Trace>(m, config.workers, [&](std::size_t t) {
    Trace tr;
    tr.visited.assign(grid_n, 0);
    CounterRng rng(config.seed, stream_id(stream_tag::kTrajectory, t));
    double sum = 0.0;
    std::size_t block = 0, next_cp = 0;
    for (std::size_t k = 1; k <= N; ++k) {
      while (k > blocks[block]) ++block;
      const auto& measure = pool[block % pool.size()];
      sum += measure.marginal(k - 1).sample(rng);
      const double a = sum / static_cast<double>(k);
      if (k >= start) {
        // Mark grid points within the coverage radius of the current average.
        const double gl = std::ceil((a - config.coverage_radius - lo) / config.grid_step - 1e-9);
        const double gh = std::floor((a + config.coverage_radius - lo) / config.grid_step + 1e-9);
        for (double g = std::max(gl, 0.0); g <= gh && g < static_cast<double>(grid_n); g += 1.0) {
          const auto gi = static_cast<std::size_t>(g);
          if (std::abs(grid_point(gi) - a) <= config.coverage_radius + 1e-12) tr.visited[gi] = 1;
        }
      }
      if (k == blocks[block]) tr.block_ends.push_back(a);
      if (next_cp < checkpoints.size() && k == checkpoints[next_cp]) {
        tr.checkpoints.push_back(a);
        ++next_cp;
      }
    }
    return tr;
  });

  ExperimentResult r;
  r.mode = to_string(ExperimentMode::cluster);
  r.seed = config.seed;
  std::vector<std::size_t> histogram(grid_n, 0);
  double worst_coverage = 1.0;
  Json per_traj = Json::array();
  for (std::size_t t = 0; t < m; ++t) {
    const auto& tr = traces[t];
    std::size_t covered = 0;
    for (std::size_t g = 0; g < grid_n; ++g) {
      covered += tr.visited[g];
      histogram[g] += tr.visited[g];
    }
    const double coverage = static_cast<double>(covered) / static_cast<double>(grid_n);
    worst_coverage = std::min(worst_coverage, coverage);
    Json jt;
    jt["trajectory"] = t;
    jt["coverage"] = coverage;
    jt["block_end_averages"] = tr.block_ends;
    per_traj.push_back(jt);
    for (std::size_t i = 0; i < tr.checkpoints.size(); ++i) r.rows.push_back({checkpoints[i], t, 0, "S_n/n", tr.checkpoints[i]});
    for (std::size_t b = 0; b < tr.block_ends.size(); ++b) r.rows.push_back({blocks[b], t, b % pool.size(), "S_nk/nk", tr.block_ends[b]});
  }
  Json hist = Json::array();
  for (std::size_t g = 0; g < grid_n; ++g) {
    Json h;
    h["point"] = grid_point(g);
    h["trajectories_visiting"] = histogram[g];
    hist.push_back(h);
  }
  r.summary["lower_mean"] = lo;
  r.summary["upper_mean"] = hi;
  r.summary["block_scheme"] = blocks.size() > 1 && config.block_scheme == BlockScheme::power_k && N >= 3125
                                  ? "power_k"
                                  : "geometric";
  r.summary["block_ends"] = blocks;
  r.summary["policy"] = to_string(config.policy);
  r.summary["block_means"] = pool_means;
  r.summary["coverage_start"] = start;
  r.summary["grid_points"] = grid_n;
  r.summary["coverage"] = worst_coverage;
  r.summary["histogram"] = hist;
  r.summary["trajectories"] = per_traj;
  r.pass = worst_coverage >= config.coverage_target;
  r.verdict = "minimum coverage " + format_value(worst_coverage) + " of the " + format_value(config.grid_step) +
              "-grid over [" + format_value(lo) + ", " + format_value(hi) + "] (target " +
              format_value(config.coverage_target) + ")";
  r.assumptions.push_back("finite-horizon coverage is a consistency check; the cluster-set identity is asymptotic");
  return r;
}

// ---------------------------------------------------------------------------
// LIL

inline ExperimentResult run_lil(const ExperimentModel& model, const ExperimentConfig& config) {
  config.validate();
  const std::size_t N = config.horizon;
  const SequenceSampler sampler(model.dependence, model.family, N);
  const auto mm = sequence_moments(model);
  const auto chosen = detail::selected_measures(model, config.measures, mm, sampler.measure_count());
  const std::size_t m = config.trajectories;
  const auto checkpoints = geometric_checkpoints(config.checkpoint_start, config.checkpoint_ratio, N);
  const double s1 = std::sqrt(mm.sigma1_sq), s2 = std::sqrt(mm.sigma2_sq);

  struct Stats {
    double upper = -kInf;
    double lower = kInf;
    std::vector<double> values;
  };
  const auto stats = parallel_map<Stats>(chosen.size() * m, config.workers, [&](std::size_t w) {
    auto s = sampler.stream(chosen[w / m], config.seed, w % m);
    Stats st;
    st.values.reserve(checkpoints.size());
    double sum = 0.0;
    std::size_t next = 0;
    for (std::size_t k = 1; k <= N; ++k) {
      sum += s.next();
      if (next < checkpoints.size() && k == checkpoints[next]) {
        const double n = static_cast<double>(k);
        const double a = lil_normalizer(n);
        const double up = (sum - n * mm.upper_mean) / a;
        st.upper = std::max(st.upper, up);
        st.lower = std::min(st.lower, (sum - n * mm.lower_mean) / a);
        st.values.push_back(up);
        ++next;
      }
    }
    return st;
  });

  const double up_limit = s2 * (1.0 + config.epsilon_lil);
  const double lo_limit = -s1 * (1.0 + config.epsilon_lil);
  std::size_t up_ok = 0, lo_ok = 0;
  ExperimentResult r;
  r.mode = to_string(ExperimentMode::lil);
  r.seed = config.seed;
  std::vector<double> uppers, lowers;
  for (std::size_t w = 0; w < stats.size(); ++w) {
    const auto& st = stats[w];
    if (st.upper <= up_limit) ++up_ok;
    if (st.lower >= lo_limit) ++lo_ok;
    uppers.push_back(st.upper);
    lowers.push_back(st.lower);
    for (std::size_t i = 0; i < st.values.size(); ++i) {
      r.rows.push_back({checkpoints[i], w % m, chosen[w / m], "(S_n-n*upper_mean)/a_n", st.values[i]});
    }
    r.rows.push_back({N, w % m, chosen[w / m], "R_N", st.upper});
    r.rows.push_back({N, w % m, chosen[w / m], "L_N", st.lower});
  }
  const double total = static_cast<double>(stats.size());
  const double frac_up = up_ok / total;
  r.summary["upper_mean"] = mm.upper_mean;
  r.summary["lower_mean"] = mm.lower_mean;
  r.summary["sigma1"] = s1;
  r.summary["sigma2"] = s2;
  r.summary["epsilon_lil"] = config.epsilon_lil;
  r.summary["horizon"] = N;
  r.summary["checkpoints"] = checkpoints.size();
  r.summary["first_checkpoint"] = checkpoints.front();
  r.summary["block_schedule"] = lil_block_schedule(config.alpha, N);
  r.summary["upper_limit"] = up_limit;
  r.summary["fraction_upper_within"] = frac_up;
  r.summary["lower_limit"] = lo_limit;
  r.summary["fraction_lower_within"] = lo_ok / total;
  r.summary["R_N"] = uppers;
  r.summary["L_N"] = lowers;
  r.pass = frac_up >= config.effective_pass_fraction();
  r.verdict = format_value(frac_up) + " of trajectories have R_N <= " + format_value(up_limit) + " (required " +
              format_value(config.effective_pass_fraction()) + ")";
  r.assumptions.push_back("bounded-excursion surrogate at a finite horizon; the iterated-logarithm limit is asymptotic");
  return r;
}

// ---------------------------------------------------------------------------
// Necessity

inline ExperimentResult run_necessity(const ExperimentModel& model, const ExperimentConfig& config) {
  config.validate();
  const std::size_t N = config.horizon;
  const SequenceSampler sampler(model.dependence, model.family, N);
  const auto& members = model.family.members();
  require(model.dependence.mode != DependenceMode::discrete_joint, "run_necessity: needs a sequence model");

  // Choquet integral of |X_1| under the upper capacity.
  SublinearEngine engine(model.family);
  ChoquetTarget target;
  target.transform = Transform::absolute;
  const auto choquet = engine.choquet(target);
  const bool divergent = choquet.infinite;

  const auto mm = sequence_moments(model);
  const auto chosen = detail::selected_measures(model, config.measures, mm, sampler.measure_count());
  const std::size_t m = config.trajectories;
  const auto maxima = parallel_map<double>(chosen.size() * m, config.workers, [&](std::size_t w) {
    auto s = sampler.stream(chosen[w / m], config.seed, w % m);
    double sum = 0.0, best = 0.0;
    for (std::size_t k = 1; k <= N; ++k) {
      sum += s.next();
      best = std::max(best, std::abs(sum) / static_cast<double>(k));
    }
    return best;
  });

  ExperimentResult r;
  r.mode = to_string(ExperimentMode::necessity);
  r.seed = config.seed;
  std::size_t exceed = 0;
  for (std::size_t w = 0; w < maxima.size(); ++w) {
    if (maxima[w] > config.divergence_threshold) ++exceed;
    r.rows.push_back({N, w % m, chosen[w / m], "max|S_k|/k", maxima[w]});
  }
  const double frac = static_cast<double>(exceed) / static_cast<double>(maxima.size());
  r.summary["choquet_abs_x1"] = choquet.infinite ? Json("inf") : Json(choquet.value);
  r.summary["choquet_infinite"] = divergent;
  r.summary["threshold"] = config.divergence_threshold;
  r.summary["horizon"] = N;
  r.summary["fraction_exceeding"] = frac;
  r.summary["max_abs_average"] = maxima;
  r.summary["measures"] = members.size();
  if (divergent) {
    r.pass = frac >= config.divergence_target;
    r.verdict = "divergent case: " + format_value(frac) + " of trajectories exceed " +
                format_value(config.divergence_threshold) + " (required " + format_value(config.divergence_target) + ")";
  } else {
    r.pass = exceed == 0;
    r.verdict = "finite-Choquet control: " + format_value(frac) + " of trajectories exceed " +
                format_value(config.divergence_threshold);
  }
  r.assumptions.push_back("qualitative demonstration");
  r.assumptions.push_back("continuity of the upper capacity is assumed, not certified, for this family");
  return r;
}

// ---------------------------------------------------------------------------
// Bound check

struct BoundComparison {
  double x = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
  std::string calculator;
  double bound = 0.0;
  bool violated = false;
};

namespace detail {

/// Per-coordinate upper statistics after centering by the upper mean.
struct CenteredMoments {
  double B = 0.0;
  double M_pp = 0.0;
  double M_p = 0.0;
  double lower_M_pp = 0.0;
};

inline std::vector<BoundComparison> compare_bounds(std::size_t n, double K, const CenteredMoments& cm,
                                                   const ExperimentConfig& config, const std::vector<double>& xs,
                                                   const std::vector<double>& upper, const std::vector<double>& upper_se,
                                                   const std::vector<double>& lower, const std::vector<double>& lower_se,
                                                   const std::function<double(double)>& max_capacity) {
  std::vector<BoundComparison> out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    BoundInputs in;
    in.x = xs[i];
    in.n = n;
    in.B = cm.B;
    in.M_pp = cm.M_pp;
    in.M_p = cm.M_p;
    in.K = K;
    in.p = config.bound_p;
    in.delta = config.bound_delta;
    in.r = config.bound_r;
    auto add = [&](const std::string& name, double bound, double est, double se) {
      bound = clip_capacity(bound);
      out.push_back({xs[i], est, se, name, bound, est > bound + 3.0 * se});
    };
    double exp_bound = kInf;
    for (double f : {0.125, 0.25, 0.5, 1.0}) {
      in.y = f * xs[i];
      exp_bound = std::min(exp_bound, kolmogorov_exp_bound(in) + max_capacity(in.y));
    }
    add("exponential", exp_bound, upper[i], upper_se[i]);
    in.y = 0.25 * xs[i];
    add("chernoff", chernoff_truncated_bound(in) + max_capacity(in.y), upper[i], upper_se[i]);
    add("split", split_moment_bound(in), upper[i], upper_se[i]);
    add("power", power_tail_bound(in) + max_capacity(xs[i] / config.bound_r), upper[i], upper_se[i]);
    add("chebyshev", chebyshev_bound(in), upper[i], upper_se[i]);
    in.y = 0.25 * xs[i];
    const auto conj = conjugate_bounds(in);
    add("conjugate_exponential", conj.exp_term + max_capacity(in.y), lower[i], lower_se[i]);
    add("conjugate_split", conj.split, lower[i], lower_se[i]);
    add("conjugate_chebyshev", conj.chebyshev, lower[i], lower_se[i]);
  }
  return out;
}

}  // namespace detail

inline ExperimentResult run_bound_check(const ExperimentModel& model, const ExperimentConfig& config) {
  config.validate();
  require(model.dependence.mode == DependenceMode::per_measure_independent,
          "run_bound_check: needs a per-measure-independent family");
  const std::size_t n = config.horizon;
  const auto& members = model.family.members();
  const std::size_t P = members.size();
  const double K = model.family.K();
  const double p = config.bound_p;

  // Centering by the upper mean of every coordinate.
  std::vector<double> centers(n, -kInf);
  for (std::size_t k = 0; k < n; ++k) {
    for (const auto& mem : members) centers[k] = std::max(centers[k], mem.measure.marginal(k).mean());
  }
  detail::CenteredMoments cm;
  for (std::size_t k = 0; k < n; ++k) {
    double b = 0.0, mpp = 0.0, mp = 0.0;
    for (const auto& mem : members) {
      const auto& mk = mem.measure.marginal(k);
      const double d = mk.mean() - centers[k];
      b = std::max(b, mk.variance() + d * d);
      const auto shifted = mk.kind() == MarginalKind::normal ? Marginal::normal(d, mk.normal_variance()) : mk;
      if (mk.kind() == MarginalKind::normal) {
        mpp = std::max(mpp, positive_part_moment(shifted, p));
        mp = std::max(mp, absolute_moment(shifted, p));
      } else {
        const double c = centers[k];
        mpp = std::max(mpp, mk.expect([&](double x) { return std::pow(std::max(x - c, 0.0), p); }));
        mp = std::max(mp, mk.expect([&](double x) { return std::pow(std::abs(x - c), p); }));
      }
    }
    cm.B += b;
    cm.M_pp += mpp;
    cm.M_p += mp;
  }
  const bool exact = [&] {
    for (const auto& mem : members) {
      if (!mem.measure.all_discrete(n) || outcome_count(mem.measure, n, 1u << 20) > (1u << 20)) return false;
    }
    return true;
  }();

  const auto xs = dominance_x_grid(cm.B, config.x_points);
  const std::size_t m = config.trajectories;
  std::vector<double> upper(xs.size(), 0.0), upper_se(xs.size(), 0.0);
  std::vector<double> lower(xs.size(), 1.0), lower_se(xs.size(), 0.0);

  if (exact) {
    for (const auto& mem : members) {
      std::map<double, double> law_map;
      for_each_outcome(mem.measure, n, [&](std::span<const double> x, double prob) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += x[k] - centers[k];
        law_map[s] += prob;
      });
      std::vector<Atom> law;
      for (const auto& [v, pr] : law_map) law.push_back({v, pr});
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const double t = law_survival_ge(law, xs[i]);
        upper[i] = std::max(upper[i], t);
        lower[i] = std::min(lower[i], t);
      }
    }
  } else {
    const SequenceSampler sampler(model.dependence, model.family, n);
    // Column per (measure, trajectory): centered S_n.
    const auto sums = parallel_map<double>(P * m, config.workers, [&](std::size_t w) {
      auto s = sampler.stream(w / m, config.seed, w % m);
      double total = 0.0;
      for (std::size_t k = 0; k < n; ++k) total += s.next() - centers[k];
      return total;
    });
    std::fill(upper.begin(), upper.end(), -1.0);
    std::fill(lower.begin(), lower.end(), 2.0);
    for (std::size_t mi = 0; mi < P; ++mi) {
      for (std::size_t i = 0; i < xs.size(); ++i) {
        std::size_t hits = 0;
        for (std::size_t t = 0; t < m; ++t) hits += sums[mi * m + t] >= xs[i];
        const double f = static_cast<double>(hits) / static_cast<double>(m);
        if (f > upper[i]) upper[i] = f, upper_se[i] = detail::binomial_se(f, m);
        if (f < lower[i]) lower[i] = f, lower_se[i] = detail::binomial_se(f, m);
      }
    }
  }

  // Upper capacity of {max_k (X_k - c_k) >= y}, exact under per-measure independence.
  auto max_capacity = [&](double y) {
    double best = 0.0;
    for (const auto& mem : members) {
      double none = 1.0;
      for (std::size_t k = 0; k < n; ++k) none *= 1.0 - mem.measure.marginal(k).survival_ge(y + centers[k]);
      best = std::max(best, 1.0 - none);
    }
    return best;
  };

  const auto comparisons = detail::compare_bounds(n, K, cm, config, xs, upper, upper_se, lower, lower_se, max_capacity);
  std::size_t violations = 0;
  Json table = Json::array();
  ExperimentResult r;
  r.mode = to_string(ExperimentMode::bound_check);
  r.seed = config.seed;
  for (std::size_t c = 0; c < comparisons.size(); ++c) {
    const auto& cmp = comparisons[c];
    violations += cmp.violated;
    Json row;
    row["x"] = cmp.x;
    row["calculator"] = cmp.calculator;
    row["estimate"] = cmp.estimate;
    row["std_error"] = cmp.std_error;
    row["bound"] = cmp.bound;
    row["violated"] = cmp.violated;
    table.push_back(row);
    r.rows.push_back({c / 8, 0, 0, cmp.calculator + ":bound", cmp.bound});
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    r.rows.push_back({i, 0, 0, "upper_capacity", upper[i]});
    r.rows.push_back({i, 0, 0, "lower_capacity", lower[i]});
  }
  r.summary["n"] = n;
  r.summary["path"] = exact ? "enumeration" : "monte_carlo";
  r.summary["measures"] = P;
  r.summary["trajectories_per_measure"] = exact ? 0 : m;
  r.summary["B"] = cm.B;
  r.summary["M_pp"] = cm.M_pp;
  r.summary["M_p"] = cm.M_p;
  r.summary["K"] = K;
  r.summary["x_grid"] = xs;
  r.summary["violations"] = violations;
  r.summary["comparisons"] = table;
  r.pass = violations == 0;
  r.verdict = std::to_string(violations) + " flagged violations over " + std::to_string(comparisons.size()) +
              " (x, calculator) pairs";
  return r;
}

// ---------------------------------------------------------------------------
// Borel-Cantelli diagnostic

struct BorelCantelliReport {
  std::vector<std::size_t> checkpoints;
  std::vector<double> partial_sums;
  bool summable = true;
  double late_frequency = 0.0;
  bool consistent = true;

  std::string summary() const {
    std::ostringstream os;
    os << "partial sum " << format_value(partial_sums.empty() ? 0.0 : partial_sums.back())
       << (summable ? " (converging)" : " (diverging)") << ", late-event frequency " << format_value(late_frequency)
       << (consistent ? "" : ", INCONSISTENT");
    return os.str();
  }
};

/// capacities[n] estimates V(A_{n+1}); occurrences[t][n] says whether A_{n+1} happened on trajectory t.
/// The series counts as summable when its second half adds less than `tolerance` times the total
/// (with an absolute floor of `tolerance`). Late events are those in the second half of the schedule.
inline BorelCantelliReport borel_cantelli_diag(const std::vector<double>& capacities,
                                               const std::vector<std::vector<char>>& occurrences,
                                               double tolerance = 0.01, double late_limit = 0.05) {
  BorelCantelliReport rep;
  const std::size_t N = capacities.size();
  double sum = 0.0, half = 0.0;
  std::size_t next = 1;
  for (std::size_t n = 0; n < N; ++n) {
    require(capacities[n] >= 0.0 && capacities[n] <= 1.0 + 1e-12, "borel_cantelli_diag: capacities must lie in [0, 1]");
    sum += capacities[n];
    if (n + 1 == N / 2) half = sum;
    if (n + 1 == next || n + 1 == N) {
      rep.checkpoints.push_back(n + 1);
      rep.partial_sums.push_back(sum);
      next *= 2;
    }
  }
  rep.summable = sum - half <= tolerance * std::max(1.0, sum);
  std::size_t late = 0;
  for (const auto& traj : occurrences) {
    bool any = false;
    for (std::size_t n = N / 2; n < std::min(N, traj.size()); ++n) any = any || traj[n];
    late += any;
  }
  rep.late_frequency = occurrences.empty() ? 0.0 : static_cast<double>(late) / static_cast<double>(occurrences.size());
  rep.consistent = !rep.summable || rep.late_frequency <= late_limit;
  return rep;
}

}  // namespace caplim
