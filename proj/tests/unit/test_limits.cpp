#include "caplim/limits.hpp"

#include <catch_amalgamated.hpp>

using namespace caplim;
using Catch::Approx;

namespace {

ExperimentModel singleton(Marginal m) {
  return {MeasureFamily::singleton(ProductMeasure::iid(std::move(m))), DependenceSpec{}};
}

ExperimentModel location(double lo, double hi) {
  return {MeasureFamily({{"mu", lo, hi}},
                        [](std::span<const double> l) { return ProductMeasure::iid(Marginal::normal(l[0], 1.0)); }),
          DependenceSpec{}};
}

ExperimentConfig config(ExperimentMode mode, std::size_t trajectories, std::size_t horizon, std::uint64_t seed = 1) {
  ExperimentConfig c;
  c.mode = mode;
  c.trajectories = trajectories;
  c.horizon = horizon;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("normalizer and schedules", "[limits]") {
  CHECK(lil_log(1.0) == 1.0);
  CHECK(lil_normalizer(10.0) == Approx(std::sqrt(20.0)));
  CHECK(lil_normalizer(1e6) == Approx(std::sqrt(2e6 * std::log(std::log(1e6)))));

  const auto cps = geometric_checkpoints(1000.0, 1.05, 1000000);
  CHECK(cps.front() == 1000);
  CHECK(cps.back() == 1000000);
  for (std::size_t i = 1; i < cps.size(); ++i) {
    CHECK(cps[i] > cps[i - 1]);
    if (i + 1 < cps.size()) CHECK(static_cast<double>(cps[i]) / cps[i - 1] == Approx(1.05).margin(0.002));
  }

  CHECK(block_schedule(BlockScheme::power_k, 8.0, 1000000) ==
        std::vector<std::size_t>{1, 4, 27, 256, 3125, 46656, 823543, 1000000});
  CHECK(block_schedule(BlockScheme::power_k, 8.0, 1000) == std::vector<std::size_t>{8, 64, 512, 1000});
  CHECK(block_schedule(BlockScheme::geometric, 3.0, 100) == std::vector<std::size_t>{3, 9, 27, 81, 100});
  const auto lil = lil_block_schedule(0.5, 1000);
  REQUIRE(lil.size() >= 3);
  CHECK(lil[0] == 2);  // floor(e)
  CHECK(lil[3] == 7);  // floor(e^2)
  CHECK(lil.back() <= 1000);
}

TEST_CASE("truncation preserves sums", "[limits][property]") {
  CounterRng rng(3, 0);
  std::vector<double> x(100000);
  const auto law = Marginal::pareto(1.2, 1.0);
  for (auto& v : x) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * law.sample(rng);
  for (double c : {0.5, 2.0, 50.0}) {
    const auto s = truncated_sums(x, c);
    CHECK(s.truncated + s.remainder == Approx(s.total).epsilon(1e-12));
  }
}

TEST_CASE("wlln on a standard normal", "[wlln]") {
  auto c = config(ExperimentMode::wlln, 1000, 10000);
  c.epsilon = 0.1;
  c.schedule = {100, 1000, 10000};
  const auto r = run_wlln(singleton(Marginal::normal(0.0, 1.0)), c);
  const auto& last = r.summary["schedule"].back();
  CHECK(last["lower_capacity_inside"].get<double>() >= 0.999);
  CHECK(last["upper_capacity_near_upper_mean"].get<double>() >= 0.999);
  CHECK(r.pass);
}

TEST_CASE("wlln on a point mass is exact", "[wlln]") {
  auto c = config(ExperimentMode::wlln, 20, 1000);
  c.schedule = {1, 10, 1000};
  const auto r = run_wlln(singleton(Marginal::point_mass(0.0)), c);
  for (const auto& p : r.summary["schedule"]) CHECK(p["lower_capacity_inside"].get<double>() == 1.0);
}

TEST_CASE("wlln on a location family", "[wlln]") {
  auto c = config(ExperimentMode::wlln, 200, 10000);
  c.epsilon = 0.1;
  c.schedule = {10000};
  const auto r = run_wlln(location(-1.0, 1.0), c);
  CHECK(r.summary["schedule"].back()["lower_capacity_inside"].get<double>() >= 0.99);
  CHECK(r.summary["measures"].get<std::size_t>() == 5);
}

TEST_CASE("slln on a point mass", "[slln]") {
  auto c = config(ExperimentMode::slln, 3, 5000);
  const auto r = run_slln(singleton(Marginal::point_mass(0.25)), c);
  CHECK(r.summary["max_running_average"].get<double>() == 0.25);
  CHECK(r.summary["min_running_average"].get<double>() == 0.25);
  CHECK(r.pass);
}

TEST_CASE("slln rademacher rate", "[slln]") {
  auto c = config(ExperimentMode::slln, 100, 100000, 11);
  c.epsilon = 0.15;
  c.pass_fraction = 0.99;
  const auto r = run_slln(singleton(Marginal::discrete({{-1.0, 0.5}, {1.0, 0.5}})), c);
  CHECK(r.summary["fraction_within"].get<double>() >= 0.99);
  CHECK(r.pass);
}

TEST_CASE("slln is shift equivariant", "[slln][property]") {
  auto c = config(ExperimentMode::slln, 10, 20000, 4);
  c.measures = MeasureSelection::extremes;
  const auto model = location(-0.5, 0.5);
  const auto base = run_slln(model, c);
  const auto centered = run_slln(model, c, -0.5);
  CHECK(centered.summary["upper_mean"].get<double>() == Approx(0.0).margin(1e-15));
  CHECK(centered.summary["max_running_average"].get<double>() ==
        Approx(base.summary["max_running_average"].get<double>() - 0.5).margin(1e-9));
  CHECK(centered.summary["violations"] == base.summary["violations"]);
  // Upper limit <= mean + eps on X carries over to <= eps on X - mean.
  if (base.summary["max_running_average"].get<double>() <= 0.5 + c.epsilon) {
    CHECK(centered.summary["max_running_average"].get<double>() <= c.epsilon + 1e-9);
  }
}

TEST_CASE("statistics do not depend on the worker count", "[determinism]") {
  auto c = config(ExperimentMode::slln, 8, 5000, 9);
  const auto model = location(-1.0, 1.0);
  const auto one = run_slln(model, c);
  c.workers = 3;
  const auto three = run_slln(model, c);
  CHECK(one.to_json().dump() == three.to_json().dump());
  CHECK(one.to_csv() == three.to_csv());

  auto l = config(ExperimentMode::lil, 6, 20000, 9);
  const auto a = run_lil(singleton(Marginal::normal(0.0, 1.0)), l);
  l.workers = 4;
  CHECK(a.to_json().dump() == run_lil(singleton(Marginal::normal(0.0, 1.0)), l).to_json().dump());

  auto w = config(ExperimentMode::wlln, 30, 1000, 9);
  w.schedule = {10, 1000};
  const auto wa = run_wlln(model, w);
  w.workers = 2;
  CHECK(wa.to_csv() == run_wlln(model, w).to_csv());
}

TEST_CASE("cluster blocks alternate between the extremes", "[cluster]") {
  auto c = config(ExperimentMode::cluster, 1, 16777216, 2);
  const auto r = run_cluster(location(-1.0, 1.0), c);
  const auto ends = r.summary["trajectories"][0]["block_end_averages"].get<std::vector<double>>();
  REQUIRE(ends.size() == 8);
  // Block k uses the upper-mean measure for even k and the lower one for odd k.
  for (std::size_t k = 4; k < ends.size(); ++k) CHECK((k % 2 == 0 ? ends[k] > 0.5 : ends[k] < -0.5));
  CHECK(ends.back() == Approx(-1.0).margin(0.1));
  CHECK(r.summary["coverage"].get<double>() >= 0.95);
}

TEST_CASE("cluster set of a singleton is a point", "[cluster]") {
  auto c = config(ExperimentMode::cluster, 2, 100000, 2);
  const auto r = run_cluster(singleton(Marginal::normal(0.3, 1.0)), c);
  CHECK(r.summary["grid_points"].get<std::size_t>() == 1);
  for (double m : r.summary["block_means"].get<std::vector<double>>()) CHECK(m == 0.3);
  CHECK(r.summary["trajectories"][0]["block_end_averages"].back().get<double>() == Approx(0.3).margin(0.02));
}

TEST_CASE("lil on a point mass is identically zero", "[lil]") {
  auto c = config(ExperimentMode::lil, 3, 10000);
  const auto r = run_lil(singleton(Marginal::point_mass(0.0)), c);
  for (double v : r.summary["R_N"].get<std::vector<double>>()) CHECK(v == 0.0);
  CHECK(r.pass);
}

TEST_CASE("lil statistic is of order sigma on a short horizon", "[lil]") {
  auto c = config(ExperimentMode::lil, 20, 100000, 6);
  const auto r = run_lil(singleton(Marginal::normal(0.0, 4.0)), c);
  CHECK(r.summary["sigma2"].get<double>() == Approx(2.0));
  auto rn = r.summary["R_N"].get<std::vector<double>>();
  std::sort(rn.begin(), rn.end());
  CHECK(rn[rn.size() / 2] < 2.0 * 1.5);
  CHECK(rn[rn.size() / 2] > 0.0);
}

TEST_CASE("necessity on a point mass", "[necessity]") {
  auto c = config(ExperimentMode::necessity, 2, 1000);
  const auto r = run_necessity(singleton(Marginal::point_mass(1.0)), c);
  for (double v : r.summary["max_abs_average"].get<std::vector<double>>()) CHECK(v == 1.0);
  CHECK_FALSE(r.summary["choquet_infinite"].get<bool>());
  CHECK(r.pass);
}

TEST_CASE("necessity divergence and control", "[necessity]") {
  auto c = config(ExperimentMode::necessity, 20, 200000, 3);
  const auto pareto = run_necessity(singleton(Marginal::pareto(1.0, 1.0)), c);
  CHECK(pareto.summary["choquet_infinite"].get<bool>());
  CHECK(pareto.summary["fraction_exceeding"].get<double>() >= 0.5);
  const auto normal = run_necessity(singleton(Marginal::normal(0.0, 1.0)), c);
  CHECK(normal.summary["fraction_exceeding"].get<double>() == 0.0);
  CHECK(normal.pass);
  CHECK_FALSE(normal.assumptions.empty());
}

TEST_CASE("bound check on an exactly enumerable family", "[bound-check]") {
  ExperimentModel model{MeasureFamily({{"p", 0.2, 0.5}},
                                      [](std::span<const double> l) { return ProductMeasure::iid(Marginal::bernoulli(l[0])); }),
                        DependenceSpec{}};
  auto c = config(ExperimentMode::bound_check, 1, 10);
  const auto r = run_bound_check(model, c);
  CHECK(r.summary["path"] == "enumeration");
  CHECK(r.summary["violations"].get<std::size_t>() == 0);
  // At the smallest x the Chebyshev bound clips to one.
  for (const auto& row : r.summary["comparisons"]) {
    if (row["calculator"] == "chebyshev" && row["x"].get<double>() == r.summary["x_grid"][0].get<double>()) {
      CHECK(row["bound"].get<double>() == 1.0);
    }
  }
}

TEST_CASE("bound check on a Monte Carlo path", "[bound-check][mc]") {
  auto c = config(ExperimentMode::bound_check, 2000, 100, 12);
  const auto r = run_bound_check(location(-1.0, 0.0), c);
  CHECK(r.summary["path"] == "monte_carlo");
  CHECK(r.summary["violations"].get<std::size_t>() == 0);
  CHECK(r.summary["B"].get<double>() == Approx(200.0));
}

TEST_CASE("borel cantelli diagnostic", "[borel-cantelli]") {
  const std::size_t N = 400, T = 200;
  std::vector<double> caps_big(N), caps_one(N, std::erfc(1.0 / std::numbers::sqrt2));
  for (std::size_t n = 0; n < N; ++n) caps_big[n] = std::erfc(static_cast<double>(n + 1) / std::numbers::sqrt2);
  std::vector<std::vector<char>> occ_big(T, std::vector<char>(N)), occ_one(T, std::vector<char>(N));
  for (std::size_t t = 0; t < T; ++t) {
    CounterRng rng(1, t);
    for (std::size_t n = 0; n < N; ++n) {
      const double z = std::abs(rng.normal());
      occ_big[t][n] = z > static_cast<double>(n + 1);
      occ_one[t][n] = z > 1.0;
    }
  }
  const auto summable = borel_cantelli_diag(caps_big, occ_big);
  CHECK(summable.summable);
  CHECK(summable.late_frequency == 0.0);
  CHECK(summable.consistent);
  CHECK(summable.partial_sums.back() == Approx(0.36557448558507886).epsilon(1e-12));

  const auto divergent = borel_cantelli_diag(caps_one, occ_one);
  CHECK_FALSE(divergent.summable);
  CHECK(divergent.late_frequency == 1.0);

  const auto empty = borel_cantelli_diag(std::vector<double>(N, 0.0), std::vector<std::vector<char>>(T, std::vector<char>(N, 0)));
  CHECK(empty.summable);
  CHECK(empty.late_frequency == 0.0);
  for (double s : empty.partial_sums) CHECK(s == 0.0);
}

TEST_CASE("experiment config validation", "[limits]") {
  auto c = config(ExperimentMode::cluster, 1, 100);
  c.theta = 1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.theta = 8.0;
  c.alpha = 1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.alpha = 0.5;
  c.trajectories = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}
