#include "caplim/measures.hpp"
#include "caplim/rng.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace caplim;
using Catch::Approx;

TEST_CASE("philox4x32-10 known answers", "[rng]") {
  using A4 = std::array<std::uint32_t, 4>;
  using A2 = std::array<std::uint32_t, 2>;
  CHECK(philox4x32(A4{0, 0, 0, 0}, A2{0, 0}) == A4{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(philox4x32(A4{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, A2{0xffffffffu, 0xffffffffu}) ==
        A4{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(philox4x32(A4{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, A2{0xa4093822u, 0x299f31d0u}) ==
        A4{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("streams are reproducible and distinct", "[rng]") {
  CounterRng a(42, stream_id(stream_tag::kSample, 3));
  CounterRng b(42, stream_id(stream_tag::kSample, 3));
  CounterRng c(42, stream_id(stream_tag::kSample, 4));
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a();
    REQUIRE(x == b());
    differs = differs || x != c();
  }
  CHECK(differs);
}

TEST_CASE("degenerate bernoulli samples are all one", "[sample]") {
  const auto block = sample(ProductMeasure::iid(Marginal::bernoulli(1.0)), 3, 2, 99);
  REQUIRE(block.values.size() == 6);
  for (double v : block.values) CHECK(v == 1.0);
}

TEST_CASE("normal sample mean agrees with an independent generator", "[sample]") {
  const std::size_t n = 1000000;
  const auto block = sample(ProductMeasure::iid(Marginal::normal(0.0, 1.0)), n, 1, 12345);
  double mean = 0.0;
  for (double v : block.values) mean += v;
  mean /= static_cast<double>(n);
  CHECK(std::abs(mean) <= 4.0 / std::sqrt(static_cast<double>(n)));

  std::mt19937_64 gen(12345);
  std::normal_distribution<double> dist;
  double ref = 0.0;
  for (std::size_t i = 0; i < n; ++i) ref += dist(gen);
  ref /= static_cast<double>(n);
  CHECK(std::abs(ref) <= 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(mean - ref) <= 8.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("rademacher samples stay on the support", "[sample]") {
  const auto law = Marginal::discrete({{-1.0, 0.5}, {1.0, 0.5}});
  const auto block = sample(ProductMeasure::iid(law), 4, 16, 7);
  for (double v : block.values) CHECK((v == -1.0 || v == 1.0));
}

TEST_CASE("sample blocks do not depend on the worker count", "[sample]") {
  const auto m = ProductMeasure::iid(Marginal::normal(0.5, 2.0));
  SamplingOptions one, four;
  four.workers = 4;
  CHECK(sample(m, 10, 50, 3, one).values == sample(m, 10, 50, 3, four).values);
}

TEST_CASE("moments", "[moments]") {
  CHECK(moment(Marginal::normal(0.0, 2.25), 2).raw == Approx(2.25));
  const auto pareto = moment(Marginal::pareto(1.0, 1.0), 1);
  CHECK_FALSE(pareto.finite);
  CHECK(std::isinf(pareto.raw));
  CHECK(moment(Marginal::discrete({{-1.0, 0.5}, {1.0, 0.5}}), 4).raw == Approx(1.0));
  // E[Z^4] = 3 and E[(mu + Z)^2] = mu^2 + 1.
  CHECK(moment(Marginal::normal(0.0, 1.0), 4).raw == Approx(3.0));
  CHECK(moment(Marginal::normal(0.7, 1.0), 2).raw == Approx(1.49));
  CHECK(moment(Marginal::uniform(0.0, 1.0), 3).raw == Approx(0.25));
  CHECK(absolute_moment(Marginal::normal(0.0, 1.0), 1.0) == Approx(std::sqrt(2.0 / std::numbers::pi)));
}

TEST_CASE("family grids", "[family]") {
  const MeasureFamily sigma({{"sigma", 0.5, 2.0}},
                            [](std::span<const double> l) { return ProductMeasure::iid(Marginal::normal(0.0, l[0] * l[0])); },
                            4);
  REQUIRE(sigma.size() == 4);
  const double expected[] = {0.5, 1.0, 1.5, 2.0};
  for (std::size_t i = 0; i < 4; ++i) CHECK(sigma.members()[i].lambda[0] == Approx(expected[i]));

  CHECK(MeasureFamily::singleton(ProductMeasure::iid(Marginal::normal(0.0, 1.0))).size() == 1);

  const MeasureFamily two({{"mu", -1.0, 1.0}, {"s", 1.0, 2.0}},
                          [](std::span<const double> l) { return ProductMeasure::iid(Marginal::normal(l[0], l[1])); }, 3);
  REQUIRE(two.size() == 9);
  CHECK(two.members()[1].lambda == std::vector<double>{-1.0, 1.5});
  CHECK(two.members()[3].lambda == std::vector<double>{0.0, 1.0});
}

TEST_CASE("invalid parameters are rejected", "[measures]") {
  CHECK_THROWS_AS(Marginal::normal(0.0, -1.0), InvalidArgument);
  CHECK_THROWS_AS(Marginal::bernoulli(1.5), InvalidArgument);
  CHECK_THROWS_AS(Marginal::discrete({{0.0, 0.3}, {1.0, 0.3}}), InvalidArgument);
  CHECK_THROWS_AS(MeasureFamily::singleton(ProductMeasure::iid(Marginal::normal(0.0, 1.0)), 0.5), InvalidArgument);
}
