#include "caplim/dependence.hpp"

#include <catch_amalgamated.hpp>

using namespace caplim;
using Catch::Approx;

namespace {

MeasureFamily sigma_family() {
  return MeasureFamily({{"sigma", 0.5, 2.0}}, [](std::span<const double> l) {
    const double s = l[0];
    return ProductMeasure({Marginal::normal(0.0, s * s), Marginal::normal(0.0, 1.0 / (s * s))});
  });
}

MeasureFamily standard_normal() { return MeasureFamily::singleton(ProductMeasure::iid(Marginal::normal(0.0, 1.0))); }

UnaryFunction clamp01() {
  return UnaryFunction::general([](double x) { return std::clamp(x, 0.0, 1.0); });
}

DependenceSpec joint(JointTable t) {
  DependenceSpec spec;
  spec.mode = DependenceMode::discrete_joint;
  spec.tables = {std::move(t)};
  return spec;
}

}  // namespace

TEST_CASE("per-measure independent singleton sampler is iid", "[sampler]") {
  const SequenceSampler sampler(DependenceSpec{}, standard_normal(), 1000);
  const auto path = sampler.path(0, 5, 0);
  REQUIRE(path.size() == 1000);
  // Lag-1 sample correlation of an iid normal path is O(1/sqrt(n)).
  double mean = 0.0;
  for (double v : path) mean += v;
  mean /= 1000.0;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) num += (path[i] - mean) * (path[i + 1] - mean);
  for (double v : path) den += (v - mean) * (v - mean);
  CHECK(std::abs(num / den) < 4.0 / std::sqrt(1000.0));
  CHECK(sampler.path(0, 5, 0) == path);
}

TEST_CASE("lag-1 copula hits the requested correlation", "[sampler][copula]") {
  DependenceSpec spec;
  spec.mode = DependenceMode::copula_end;
  spec.copula.lag_correlation = -0.5;
  CHECK(spec.copula.lag_coefficient() == Approx(-1.0));
  spec.copula.lag_correlation = -0.3;
  const double c = spec.copula.lag_coefficient();
  CHECK(c / (1.0 + c * c) == Approx(-0.3));

  const SequenceSampler sampler(spec, standard_normal(), 200000);
  const auto path = sampler.path(0, 9, 0);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) num += path[i] * path[i + 1];
  for (double v : path) den += v * v;
  CHECK(num / den == Approx(-0.3).margin(0.01));
}

TEST_CASE("copula mode rejects positive correlation and non-singleton families", "[copula]") {
  DependenceSpec spec;
  spec.mode = DependenceMode::copula_end;
  spec.copula.lag_correlation = 0.2;
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
  spec.copula.lag_correlation = -0.2;
  CHECK_THROWS_AS(SequenceSampler(spec, sigma_family(), 2), InvalidArgument);
}

TEST_CASE("product table is extended independent with equality", "[extindep]") {
  const auto coin = ProductMeasure::iid(Marginal::discrete({{-1.0, 0.3}, {2.0, 0.7}}));
  VerifyOptions opts;
  opts.corpus_size = 8;
  const auto rep = verify_extended_independence(joint(product_table(coin, 3)), standard_normal(), 3,
                                                {{UnaryFunction::power(2)}, {clamp01(), UnaryFunction::abs_power(1.0)}}, opts);
  CHECK(rep.pass);
  CHECK(rep.exact);
  for (const auto& c : rep.cases) CHECK(c.margin == Approx(0.0).margin(1e-12));

  const auto end = verify_end(joint(product_table(coin, 3)), standard_normal(), 3, EndDirection::upper, {}, 1.0, opts);
  CHECK(end.pass);
  CHECK(end.worst_margin == Approx(0.0).margin(1e-12));
}

TEST_CASE("perfect negative dependence has margin one quarter", "[end]") {
  JointTable t;
  t.dimension = 2;
  t.outcomes = {{0.0, 1.0}, {1.0, 0.0}};
  t.probabilities = {0.5, 0.5};
  VerifyOptions opts;
  opts.corpus_size = 0;
  const auto rep = verify_end(joint(t), standard_normal(), 2, EndDirection::upper, {{clamp01()}}, 1.0, opts);
  REQUIRE(rep.cases.size() == 1);
  CHECK(rep.cases[0].lhs == 0.0);
  CHECK(rep.cases[0].rhs == Approx(0.25));
  CHECK(rep.cases[0].margin == Approx(0.25));
  CHECK(rep.pass);
}

TEST_CASE("gaussian copula with negative correlation is END", "[end][copula][mc]") {
  DependenceSpec spec;
  spec.mode = DependenceMode::copula_end;
  spec.copula.lag_correlation = -0.5;
  VerifyOptions opts;
  opts.corpus_size = 4;
  opts.mc_replications = 200000;
  opts.seed = 21;
  std::vector<FunctionTuple> shifts;
  for (double s : {-0.5, 0.0, 0.5}) {
    shifts.push_back({UnaryFunction::general([s](double x) { return smooth_indicator(x - s, 0.5); })});
  }
  const auto rep = verify_end(spec, standard_normal(), 2, EndDirection::upper, shifts, 1.0, opts);
  CHECK_FALSE(rep.exact);
  CHECK(rep.pass);
  // Negative dependence gives a strictly positive margin for the user shifts.
  for (std::size_t i = 0; i < shifts.size(); ++i) CHECK(rep.cases[i].margin > 3.0 * rep.cases[i].std_error);
}

TEST_CASE("sigma family is not extended independent", "[extindep]") {
  VerifyOptions opts;
  opts.corpus_size = 0;
  const auto rep = verify_extended_independence(DependenceSpec{}, sigma_family(), 2,
                                                {{UnaryFunction::power(2), UnaryFunction::power(2)}}, opts);
  REQUIRE(rep.cases.size() == 1);
  CHECK_FALSE(rep.pass);
  CHECK(rep.cases[0].lhs == Approx(1.0));
  CHECK(rep.cases[0].rhs == Approx(16.0));
  CHECK(rep.cases[0].margin == Approx(15.0));
}

TEST_CASE("independent Monte Carlo sequence is extended independent within 3 SE", "[extindep][mc]") {
  DependenceSpec spec;
  spec.mode = DependenceMode::copula_end;
  spec.copula.lag_correlation = 0.0;
  VerifyOptions opts;
  opts.corpus_size = 6;
  opts.mc_replications = 100000;
  opts.seed = 8;
  const auto rep = verify_extended_independence(spec, standard_normal(), 3, {}, opts);
  CHECK(rep.pass);
}

TEST_CASE("per-measure independent products are sub-multiplicative", "[end][property]") {
  // The upper expectation of a product never exceeds the product of upper expectations.
  const std::vector<MeasureFamily> families = {
      sigma_family(),
      MeasureFamily({{"mu", -1.0, 1.0}}, [](std::span<const double> l) { return ProductMeasure::iid(Marginal::normal(l[0], 1.0)); }),
      MeasureFamily({{"p", 0.1, 0.9}}, [](std::span<const double> l) { return ProductMeasure::iid(Marginal::bernoulli(l[0])); }),
  };
  VerifyOptions opts;
  opts.corpus_size = 24;
  for (const auto& fam : families) {
    const auto rep = verify_extended_independence(DependenceSpec{}, fam, 2, {}, opts);
    for (const auto& c : rep.cases) CHECK(c.margin >= -1e-12);
    const auto end = verify_end(DependenceSpec{}, fam, 2, EndDirection::lower, {}, 1.0, opts);
    CHECK(end.pass);
  }
}

TEST_CASE("discrete joint sampler matches enumeration", "[sampler]") {
  JointTable t;
  t.dimension = 3;
  t.outcomes = {{0.0, 1.0, 2.0}, {1.0, 0.0, 2.0}, {1.0, 1.0, 0.0}, {2.0, 2.0, 1.0}};
  t.probabilities = {0.1, 0.4, 0.3, 0.2};
  const auto g = [](std::span<const double> x) { return (1.0 + x[0]) * (2.0 - 0.5 * x[1]) + x[2]; };
  double exact = 0.0;
  t.for_each([&](std::span<const double> x, double p) { exact += p * g(x); });
  const SequenceSampler sampler(joint(t), standard_normal(), 3);
  const std::size_t m = 50000;
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const auto x = sampler.path(0, 4, j);
    const double v = g(x);
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / m;
  const double se = std::sqrt((sum2 / m - mean * mean) / m);
  CHECK(std::abs(mean - exact) <= 4.0 * se);
}

TEST_CASE("non-monotone functions fail the END audit", "[end]") {
  VerifyOptions opts;
  opts.corpus_size = 0;
  const auto bump = UnaryFunction::general([](double x) { return std::exp(-x * x); });
  CHECK_THROWS_AS(verify_end(DependenceSpec{}, standard_normal(), 2, EndDirection::upper, {{bump}}, 1.0, opts),
                  AuditFailure);
}
