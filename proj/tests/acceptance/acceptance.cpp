// Acceptance runner: `acceptance --criterion N` (or no flag for all) prints one
// PASS/FAIL line per criterion and exits nonzero if any fails.

#include "commands.hpp"

#include "caplim/axioms.hpp"
#include "caplim/bounds.hpp"
#include "caplim/limits.hpp"
#include "caplim/sublinear.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

using namespace caplim;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 271828;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

MeasureFamily sigma_family() {
  return MeasureFamily({{"sigma", 0.5, 2.0}}, [](std::span<const double> l) {
    const double s = l[0];
    return ProductMeasure({Marginal::normal(0.0, s * s), Marginal::normal(0.0, 1.0 / (s * s))});
  });
}

MeasureFamily normal_location(double lo, double hi) {
  return MeasureFamily({{"mu", lo, hi}},
                       [](std::span<const double> l) { return ProductMeasure::iid(Marginal::normal(l[0], 1.0)); });
}

ExperimentModel singleton(Marginal m, DependenceSpec dep = {}) {
  return {MeasureFamily::singleton(ProductMeasure::iid(std::move(m))), dep};
}

TestFunction squares(bool first, bool second) {
  Term t;
  if (first) t.factors.emplace_back(0, UnaryFunction::power(2));
  if (second) t.factors.emplace_back(1, UnaryFunction::power(2));
  return TestFunction::separable(2, {t});
}

Outcome ac1() {
  const SublinearEngine exact(sigma_family());
  const double prod = exact.upper_exp(squares(true, true)).value;
  const double a = exact.upper_exp(squares(true, false)).value;
  const double b = exact.upper_exp(squares(false, true)).value;
  EngineOptions eo;
  eo.path = EvaluationPath::monte_carlo;
  eo.mc_replications = 100000;
  eo.seed = kSeed;
  const SublinearEngine mc(sigma_family(), eo);
  const double mprod = mc.upper_exp(squares(true, true)).value;
  const double ma = mc.upper_exp(squares(true, false)).value;
  const double mb = mc.upper_exp(squares(false, true)).value;
  Outcome o;
  o.pass = std::abs(prod - 1.0) <= 1e-12 && std::abs(a * b - 16.0) <= 1e-12 && std::abs(mprod - 1.0) <= 0.02 &&
           std::abs(ma * mb - 16.0) <= 0.04 * 16.0;
  o.detail = fmt("closed form %.15g and %.15g; Monte Carlo %.6f and %.6f", prod, a * b, mprod, ma * mb);
  return o;
}

Outcome ac2() {
  AxiomOptions opts;
  opts.cases = 112;
  opts.seed = kSeed;
  const auto rep = run_axiom_suite(opts);
  Outcome o;
  o.pass = rep.pass && rep.cases >= 100;
  o.detail = fmt("%zu cases (%zu Monte Carlo), %zu checks, %zu failures", rep.cases, rep.monte_carlo_cases,
                 rep.checks.size(), rep.failures);
  if (!rep.pass) o.detail += "\n" + rep.summary();
  return o;
}

Outcome ac3() {
  DominanceOptions opts;
  opts.cases_per_kind = 64;
  opts.seed = kSeed;
  opts.x_points = 20;
  const auto rep = exhaustive_dominance(opts);
  Outcome o;
  o.pass = rep.models >= 200 && rep.violations == 0 && rep.comparisons > 0;
  o.detail = fmt("%zu models (%zu upper, %zu lower), %zu comparisons, %zu violations, worst exact/bound %.4f (%s)",
                 rep.models, rep.upper_models, rep.lower_models, rep.comparisons, rep.violations, rep.worst_ratio,
                 rep.worst_bound.c_str());
  for (const auto& v : rep.first_violations) {
    o.detail += fmt("\n  %s %s x=%.4g exact=%.6g bound=%.6g", v.model.c_str(), v.bound.c_str(), v.x, v.exact, v.value);
  }
  return o;
}

Outcome ac4() {
  ExperimentConfig c;
  c.mode = ExperimentMode::bound_check;
  c.horizon = 1000;
  c.trajectories = 10000;
  c.seed = kSeed;
  c.x_points = 20;
  const auto r = run_bound_check({normal_location(-1.0, 0.0), DependenceSpec{}}, c);
  Outcome o;
  const auto violations = r.summary["violations"].get<std::size_t>();
  o.pass = violations == 0 && r.summary["path"] == "monte_carlo";
  o.detail = fmt("%zu flagged violations over %zu (x, calculator) pairs", violations, r.summary["comparisons"].size());
  return o;
}

Outcome ac5() {
  const std::vector<std::pair<std::string, Marginal>> laws = {
      {"rademacher", Marginal::discrete({{-1.0, 0.5}, {1.0, 0.5}})},
      {"skew(-1:3/4, 3:1/4)", Marginal::discrete({{-1.0, 0.75}, {3.0, 0.25}})},
      {"skew(-2:1/5, 1/2:4/5)", Marginal::discrete({{-2.0, 0.2}, {0.5, 0.8}})},
  };
  Outcome o;
  double worst = 0.0;
  std::size_t cases = 0;
  for (const auto& [name, law] : laws) {
    for (std::size_t n : {4u, 8u}) {
      for (double p : {3.0, 4.0}) {
        const double exact = exact_max_partial_sum_moment(law, n, p);
        const auto b = moricz_max_bound(p, n, positive_part_moment(law, p), moment(law, 2).raw);
        const bool ok = exact <= b.dyadic && exact <= b.one_block;
        worst = std::max(worst, exact / std::min(b.dyadic, b.one_block));
        ++cases;
        if (!ok) {
          o.pass = false;
          o.detail += fmt("  %s n=%zu p=%g exact %.6g exceeds %.6g\n", name.c_str(), n, p, exact, b.dyadic);
        }
      }
    }
  }
  std::size_t steps = 0;
  for (int p : {3, 4, 5}) {
    const double M = moricz_constant(p);
    if (!(M > 1.0 && 1.0 + std::pow(M, -1.0 / p) <= std::pow(2.0, (p - 2.0) / (2.0 * p)))) {
      o.pass = false;
      o.detail += fmt("  M for p=%d fails its defining inequality\n", p);
    }
    for (double k1 : {0.05, 1.0, 20.0}) {
      for (double k2 : {0.05, 1.0, 20.0}) {
        for (const auto& s : moricz_induction_check(p, k1, k2, 20)) {
          ++steps;
          if (!s.pass) {
            o.pass = false;
            o.detail += fmt("  induction p=%d I=%d: %.6g > %.6g\n", p, s.I, s.combined, s.next_bound);
          }
        }
      }
    }
  }
  o.detail = fmt("%zu moment cases, worst exact/bound %.3g; %zu induction steps", cases, worst, steps) +
             (o.detail.empty() ? "" : "\n" + o.detail);
  return o;
}

Outcome ac6() {
  ExperimentConfig c;
  c.mode = ExperimentMode::slln;
  c.trajectories = 100;
  c.horizon = 100000;
  c.burn_in = 1000;
  c.epsilon = 0.05;
  c.measures = MeasureSelection::extremes;
  c.seed = kSeed;
  const auto r = run_slln({normal_location(-1.0, 1.0), DependenceSpec{}}, c);
  Outcome o;
  const auto v = r.summary["violations"].get<std::size_t>();
  o.pass = v == 0 && r.summary["trajectories"].get<std::size_t>() == 200;
  o.detail = fmt("%zu of %zu trajectories leave [-1.05, 1.05]; running average range [%.5f, %.5f]", v,
                 r.summary["trajectories"].get<std::size_t>(), r.summary["min_running_average"].get<double>(),
                 r.summary["max_running_average"].get<double>());
  return o;
}

Outcome ac7() {
  ExperimentConfig c;
  c.mode = ExperimentMode::cluster;
  c.trajectories = 4;
  c.horizon = 16777216;
  c.block_scheme = BlockScheme::power_k;
  c.policy = BlockPolicy::alternate;
  c.grid_step = 0.1;
  c.coverage_radius = 0.1;
  c.coverage_target = 0.95;
  c.seed = kSeed;
  const auto r = run_cluster({normal_location(-1.0, 1.0), DependenceSpec{}}, c);
  Outcome o;
  const double cov = r.summary["coverage"].get<double>();
  o.pass = cov >= 0.95;
  o.detail = fmt("minimum coverage %.4f of %zu grid points over %zu trajectories (horizon %zu, %s blocks)", cov,
                 r.summary["grid_points"].get<std::size_t>(), c.trajectories, c.horizon,
                 r.summary["block_scheme"].get<std::string>().c_str());
  return o;
}

Outcome ac8() {
  ExperimentConfig c;
  c.mode = ExperimentMode::lil;
  c.trajectories = 50;
  c.horizon = 1000000;
  c.epsilon_lil = 0.15;
  c.checkpoint_start = 1000;
  c.checkpoint_ratio = 1.05;
  c.pass_fraction = 0.95;
  c.seed = kSeed;
  const auto iid = run_lil(singleton(Marginal::normal(0.0, 1.0)), c);
  DependenceSpec dep;
  dep.mode = DependenceMode::copula_end;
  dep.copula.lag_correlation = -0.5;
  const auto end = run_lil(singleton(Marginal::normal(0.0, 1.0), dep), c);
  Outcome o;
  const double fi = iid.summary["fraction_upper_within"].get<double>();
  const double fe = end.summary["fraction_upper_within"].get<double>();
  o.pass = fi >= 0.95 && fe >= 0.95;
  o.detail = fmt("fraction with R_N <= 1.15: iid %.2f, copula(-0.5) %.2f (required 0.95)", fi, fe);
  return o;
}

Outcome ac9() {
  ExperimentConfig c;
  c.mode = ExperimentMode::necessity;
  c.trajectories = 50;
  c.horizon = 1000000;
  c.divergence_threshold = 10.0;
  c.divergence_target = 0.9;
  c.seed = kSeed;
  const auto pareto = run_necessity(singleton(Marginal::pareto(1.0, 1.0)), c);
  const auto normal = run_necessity(singleton(Marginal::normal(0.0, 1.0)), c);
  const double fp = pareto.summary["fraction_exceeding"].get<double>();
  const double fn = normal.summary["fraction_exceeding"].get<double>();

  const SublinearEngine pareto_engine(MeasureFamily::singleton(ProductMeasure::iid(Marginal::pareto(1.0, 1.0))));
  const bool pareto_inf = pareto_engine.choquet({0, Transform::absolute, 1.0}).infinite;

  // Bernoulli cases with closed forms: upper and lower Choquet integrals of X and X^2 = X.
  const MeasureFamily bern({{"p", 0.2, 0.6}},
                           [](std::span<const double> l) { return ProductMeasure::iid(Marginal::bernoulli(l[0])); });
  const SublinearEngine be(bern);
  ChoquetOptions lower;
  lower.capacity = CapacityKind::lower;
  const SublinearEngine single(MeasureFamily::singleton(ProductMeasure::iid(Marginal::bernoulli(0.35))));
  struct Case {
    double value, expected;
    bool infinite;
  };
  std::vector<Case> cases;
  for (const auto& [v, e] : std::vector<std::pair<ChoquetResult, double>>{
           {be.choquet({0, Transform::identity, 1.0}), 0.6},
           {be.choquet({0, Transform::identity, 2.0}), 0.6},
           {be.choquet({0, Transform::absolute, 1.0}, lower), 0.2},
           {single.choquet({0, Transform::identity, 1.0}), 0.35}}) {
    cases.push_back({v.value, e, v.infinite});
  }
  bool bern_ok = true;
  std::string bern_detail;
  for (const auto& cs : cases) {
    bern_ok = bern_ok && !cs.infinite && std::abs(cs.value - cs.expected) <= 0.01 * cs.expected;
    bern_detail += fmt(" %.6g/%.6g", cs.value, cs.expected);
  }
  Outcome o;
  o.pass = fp >= 0.9 && fn == 0.0 && pareto_inf && bern_ok;
  o.detail = fmt("pareto exceeding %.2f, normal control %.2f, pareto Choquet %s; bernoulli", fp, fn,
                 pareto_inf ? "+inf" : "finite") +
             bern_detail;
  return o;
}

Outcome ac10() {
  const auto dir = fs::temp_directory_path() / "caplim_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string family =
      "family:\n  parameters:\n    - {name: mu, lo: -1, hi: 1}\n  marginals:\n    - {kind: normal, mean: mu, variance: 1}\n";
  const std::vector<std::pair<std::string, std::string>> experiments = {
      {"wlln", family + "experiment:\n  mode: wlln\n  trajectories: 200\n  schedule: [100, 1000, 10000]\n"},
      {"slln", family + "experiment:\n  mode: slln\n  trajectories: 20\n  horizon: 100000\n  measures: extremes\n"},
      {"cluster", family + "experiment:\n  mode: cluster\n  trajectories: 3\n  horizon: 1000000\n"},
      {"lil", family + "experiment:\n  mode: lil\n  trajectories: 10\n  horizon: 200000\n"},
      {"necessity", "family:\n  marginals:\n    - {kind: pareto, shape: 1, scale: 1}\n"
                    "experiment:\n  mode: necessity\n  trajectories: 10\n  horizon: 100000\n"},
      {"bound-check", "family:\n  parameters:\n    - {name: mu, lo: -1, hi: 0}\n  marginals:\n"
                      "    - {kind: normal, mean: mu, variance: 1}\n"
                      "experiment:\n  mode: bound-check\n  trajectories: 1000\n  horizon: 200\n"},
      {"lil", "family:\n  marginals:\n    - {kind: normal, mean: 0, variance: 1}\n"
              "dependence:\n  mode: copula_end\n  copula: {lag_correlation: -0.5}\n"
              "experiment:\n  mode: lil\n  trajectories: 10\n  horizon: 100000\n"},
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
  };
  Outcome o;
  std::size_t compared = 0;
  for (std::size_t i = 0; i < experiments.size(); ++i) {
    const auto& [mode, text] = experiments[i];
    const auto cfg = dir / ("config_" + std::to_string(i) + ".yaml");
    std::ofstream(cfg) << "seed: " << kSeed << "\n" << text;
    std::vector<std::string> results, csvs;
    for (std::size_t workers : {1u, 2u, 4u}) {
      app::CommandRequest req;
      req.command = {"experiment", mode};
      req.config = cfg.string();
      req.workers = workers;
      const auto out = dir / (std::to_string(i) + "_w" + std::to_string(workers));
      req.out = out.string();
      std::ostringstream sink, err;
      const int code = app::run_command(req, sink, err);
      if (code == app::kError) {
        o.pass = false;
        o.detail += "\n  " + mode + ": " + err.str();
      }
      results.push_back(slurp(out / "result.json"));
      csvs.push_back(slurp(out / "data.csv"));
    }
    for (std::size_t w = 1; w < results.size(); ++w) {
      ++compared;
      if (results[w] != results[0] || csvs[w] != csvs[0] || results[0].empty()) {
        o.pass = false;
        o.detail += "\n  " + mode + ": output differs between worker counts";
      }
    }
  }
  o.detail = fmt("%zu experiments, %zu worker-count comparisons of result.json and data.csv", experiments.size(),
                 compared) +
             o.detail;
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "sigma-family example", 10, ac1},
      {2, "axiom suite", 120, ac2},
      {3, "exhaustive bound dominance", 300, ac3},
      {4, "Monte Carlo bound dominance", 300, ac4},
      {5, "maximal moment inequality", 60, ac5},
      {6, "SLLN desk scale", 120, ac6},
      {7, "cluster-set surrogate", 120, ac7},
      {8, "LIL desk scale", 300, ac8},
      {9, "necessity demo", 300, ac9},
      {10, "determinism across worker counts", 600, ac10},
  };
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) {
      only = std::stoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: acceptance [--criterion N]\n");
      return 1;
    }
  }
  bool all_pass = true;
  bool ran = false;
  for (const auto& c : criteria) {
    if (only != 0 && c.id != only) continue;
    ran = true;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_seconds;
    const bool pass = o.pass && in_time;
    all_pass = all_pass && pass;
    std::printf("AC%-2d %s  %s: %s [%.1f s of %.0f s]\n", c.id, pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs,
                c.budget_seconds);
    std::fflush(stdout);
  }
  if (!ran) {
    std::fprintf(stderr, "no criterion %d\n", only);
    return 1;
  }
  return all_pass ? 0 : 1;
}
