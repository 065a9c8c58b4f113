#include "caplim/axioms.hpp"
#include "caplim/sublinear.hpp"

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

MeasureFamily location_family(double lo, double hi) {
  return MeasureFamily({{"mu", lo, hi}},
                       [](std::span<const double> l) { return ProductMeasure::iid(Marginal::normal(l[0], 1.0)); });
}

MeasureFamily bernoulli_family() {
  return MeasureFamily({{"p", 0.2, 0.6}},
                       [](std::span<const double> l) { return ProductMeasure::iid(Marginal::bernoulli(l[0])); });
}

TestFunction square_product() {
  Term t;
  t.factors = {{0, UnaryFunction::power(2)}, {1, UnaryFunction::power(2)}};
  return TestFunction::separable(2, {t});
}

}  // namespace

TEST_CASE("sigma family closed form", "[upper_exp]") {
  const SublinearEngine engine(sigma_family());
  CHECK(engine.upper_exp(square_product()).value == Approx(1.0).epsilon(1e-12));
  const double a = engine.upper_exp(TestFunction::unary(0, UnaryFunction::power(2))).value;
  const double b = engine.upper_exp(TestFunction::unary(1, UnaryFunction::power(2))).value;
  CHECK(a == Approx(4.0).epsilon(1e-12));
  CHECK(b == Approx(4.0).epsilon(1e-12));
  CHECK(a * b == Approx(16.0).epsilon(1e-12));
}

TEST_CASE("sigma family Monte Carlo path", "[upper_exp][mc]") {
  EngineOptions eo;
  eo.path = EvaluationPath::monte_carlo;
  eo.mc_replications = 100000;
  eo.seed = 17;
  const SublinearEngine engine(sigma_family(), eo);
  const auto prod = engine.upper_exp(square_product());
  CHECK(std::abs(prod.value - 1.0) <= 0.02);
  CHECK(prod.std_error > 0.0);
  const double a = engine.upper_exp(TestFunction::unary(0, UnaryFunction::power(2))).value;
  const double b = engine.upper_exp(TestFunction::unary(1, UnaryFunction::power(2))).value;
  CHECK(std::abs(a * b - 16.0) <= 0.04 * 16.0);
}

TEST_CASE("constants are preserved", "[upper_exp]") {
  const SublinearEngine engine(location_family(-1.0, 1.0));
  CHECK(engine.upper_exp(TestFunction::constant(2.5)).value == 2.5);
  CHECK(engine.lower_exp(TestFunction::constant(-1.25)).value == -1.25);
}

TEST_CASE("lower expectation", "[lower_exp]") {
  const SublinearEngine loc(location_family(-1.0, 1.0));
  const auto x = TestFunction::unary(0, UnaryFunction::identity());
  CHECK(loc.lower_exp(x).value == Approx(-1.0).epsilon(1e-9));
  CHECK(loc.upper_exp(x).value == Approx(1.0).epsilon(1e-9));

  const SublinearEngine single(MeasureFamily::singleton(ProductMeasure::iid(Marginal::normal(0.3, 2.0))));
  const auto sq = TestFunction::unary(0, UnaryFunction::power(2));
  CHECK(single.lower_exp(sq).value == Approx(single.upper_exp(sq).value));
}

TEST_CASE("capacities of a bernoulli family", "[capacity]") {
  const auto one = Event::half_line(0, Interval::at_least(1.0));
  const SublinearEngine fam(bernoulli_family());
  CHECK(fam.upper_capacity(one).value() == Approx(0.6).epsilon(1e-9));
  CHECK(fam.lower_capacity(one).value() == Approx(0.2).epsilon(1e-9));
  CHECK(fam.upper_capacity(Event::omega()).value() == 1.0);
  CHECK(fam.lower_capacity(Event::empty()).value() == 0.0);

  const SublinearEngine single(MeasureFamily::singleton(ProductMeasure::iid(Marginal::bernoulli(0.35))));
  CHECK(single.upper_capacity(one).value() == Approx(0.35));
  CHECK(single.lower_capacity(one).value() == Approx(0.35));
}

TEST_CASE("choquet integrals", "[choquet]") {
  const SublinearEngine fam(bernoulli_family());
  const auto bern = fam.choquet({0, Transform::identity, 1.0});
  REQUIRE_FALSE(bern.infinite);
  CHECK(bern.value == Approx(0.6).epsilon(0.01));
  ChoquetOptions lower;
  lower.capacity = CapacityKind::lower;
  CHECK(fam.choquet({0, Transform::identity, 1.0}, lower).value == Approx(0.2).epsilon(0.01));

  const SublinearEngine normal(MeasureFamily::singleton(ProductMeasure::iid(Marginal::normal(0.0, 1.0))));
  CHECK(normal.choquet({0, Transform::absolute, 1.0}).value == Approx(std::sqrt(2.0 / std::numbers::pi)).epsilon(1e-6));
  CHECK(normal.choquet({0, Transform::absolute, 2.0}).value == Approx(1.0).epsilon(1e-6));

  const SublinearEngine pareto(MeasureFamily::singleton(ProductMeasure::iid(Marginal::pareto(1.0, 1.0))));
  CHECK(pareto.choquet({0, Transform::absolute, 1.0}).infinite);
  const SublinearEngine pareto3(MeasureFamily::singleton(ProductMeasure::iid(Marginal::pareto(3.0, 1.0))));
  CHECK(pareto3.choquet({0, Transform::absolute, 1.0}).value == Approx(1.5).epsilon(1e-6));
}

TEST_CASE("truncation", "[truncate]") {
  CHECK(truncate(0.5, 1.0) == std::pair{0.5, 0.0});
  CHECK(truncate(3.0, 1.0) == std::pair{1.0, 2.0});
  CHECK(truncate(-3.0, 1.0) == std::pair{-1.0, -2.0});
}

TEST_CASE("smooth indicator", "[smooth_indicator]") {
  CHECK(smooth_indicator(1.0, 0.5) == 1.0);
  CHECK(smooth_indicator(0.5, 0.5) == 0.0);
  const double mid = smooth_indicator(0.75, 0.5);
  CHECK(mid > 0.0);
  CHECK(mid < 1.0);
  // psi(s) + psi(1 - s) = 1 by construction.
  for (double s : {0.1, 0.3, 0.45}) {
    CHECK(smooth_indicator(0.5 + 0.5 * s, 0.5) + smooth_indicator(0.5 + 0.5 * (1.0 - s), 0.5) == Approx(1.0));
  }
  double prev = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double v = smooth_indicator(0.5 + 0.005 * i, 0.5);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("truncated square series is bounded by four Choquet moments", "[truncation]") {
  const SublinearEngine engine(location_family(-0.5, 0.5));
  const auto s = truncated_square_series(engine, {10, 100, 1000});
  REQUIRE(s.partial_sums.size() == 3);
  CHECK(s.partial_sums[0] <= s.partial_sums[1]);
  CHECK(s.partial_sums[1] <= s.partial_sums[2]);
  CHECK(s.partial_sums[2] <= s.bound());
}

TEST_CASE("axiom suite on a small corpus", "[axioms]") {
  AxiomOptions opts;
  opts.cases = 24;
  const auto report = run_axiom_suite(opts);
  INFO(report.summary());
  CHECK(report.pass);
  CHECK(report.cases == 24);
  CHECK(report.monte_carlo_cases == 6);
}

TEST_CASE("axiom suite on the sigma family", "[axioms]") {
  AxiomOptions opts;
  opts.cases = 8;
  opts.family = sigma_family();
  const auto report = run_axiom_suite(opts);
  INFO(report.summary());
  CHECK(report.pass);
}

TEST_CASE("invalid engine options", "[engine]") {
  EngineOptions eo;
  eo.mc_replications = 0;
  CHECK_THROWS_AS(SublinearEngine(location_family(0.0, 1.0), eo), InvalidArgument);
  CHECK_THROWS_AS(smooth_indicator(0.0, 1.5), InvalidArgument);
}
