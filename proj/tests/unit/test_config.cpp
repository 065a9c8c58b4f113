#include "config.hpp"

#include <catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

using namespace caplim;
using namespace caplim::app;
using Catch::Approx;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

const std::string kDir = CAPLIM_CONFIG_DIR;

}  // namespace

TEST_CASE("minimal singleton normal config gets defaults", "[config]") {
  const auto b = parse_config_text("family:\n  marginals:\n    - {kind: normal, mean: 0, variance: 1}\n");
  CHECK(b.seed == 1);
  CHECK(b.family.K == 1.0);
  CHECK(b.family.parameters.empty());
  CHECK(b.dependence.mode == DependenceMode::per_measure_independent);
  CHECK(b.engine.mc_replications == EngineOptions{}.mc_replications);
  CHECK_FALSE(b.experiment.has_value());
  const auto fam = b.build_family();
  CHECK(fam.is_singleton());
  CHECK(fam.members()[0].measure.marginal(0).normal_variance() == 1.0);
}

TEST_CASE("dominating constant below one is rejected with its line", "[config]") {
  const std::string text =
      "name: bad\n"
      "family:\n"
      "  K: 0.5\n"
      "  marginals:\n"
      "    - {kind: normal, mean: 0, variance: 1}\n";
  try {
    parse_config_text(text);
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("K >= 1") != std::string::npos);
    CHECK(e.line() == 3);
  }
}

TEST_CASE("unknown keys are rejected with their line", "[config]") {
  const std::string text =
      "family:\n"
      "  marginals:\n"
      "    - {kind: normal, mean: 0, variance: 1}\n"
      "experiment:\n"
      "  mode: slln\n"
      "  horizn: 10\n";
  try {
    parse_config_text(text);
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "experiment.horizn");
    CHECK(e.reason() == "unknown key");
    CHECK(e.line() == 6);
  }
  CHECK_THROWS_AS(parse_config_text("familly: {}\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("family:\n  marginals:\n    - {kind: normal, mean: 0, varianc: 1}\n"), ConfigError);
}

TEST_CASE("schema violations name the field", "[config]") {
  CHECK_THROWS_WITH(parse_config_text("seed: -3\nfamily:\n  marginals:\n    - {kind: point_mass, value: 1}\n"),
                    Catch::Matchers::ContainsSubstring("seed"));
  CHECK_THROWS_WITH(parse_config_text("family:\n  marginals:\n    - {kind: cauchy}\n"),
                    Catch::Matchers::ContainsSubstring("kind"));
  CHECK_THROWS_WITH(parse_config_text("family:\n  marginals:\n    - {kind: normal, mean: 0, variance: 1}\n"
                                      "experiment:\n  mode: cluster\n  theta: 0.5\n"),
                    Catch::Matchers::ContainsSubstring("theta"));
  CHECK_THROWS_AS(parse_config_text("family: [\n"), ConfigError);
}

TEST_CASE("sigma family example round-trips against the golden file", "[config]") {
  const auto b = parse_config(kDir + "/sigma_family.yaml");
  const auto text = serialize_config(b);
  CHECK(serialize_config(parse_config_text(text)) == text);
  CHECK(text == slurp(std::string(CAPLIM_CONFIG_DIR) + "/../tests/golden/sigma_family.canonical.yaml"));
  const auto fam = b.build_family();
  CHECK(fam.size() == 5);
  CHECK(fam.members().back().measure.marginal(1).normal_variance() == Approx(0.25));
}

TEST_CASE("every shipped example parses and round-trips", "[config]") {
  for (const char* name : {"singleton_normal", "slln_normal_location", "wlln_normal_location", "cluster_alternate",
                           "cluster_cycle", "lil_normal", "lil_copula", "necessity_pareto", "necessity_normal",
                           "bound_check_normal", "end_copula", "bernoulli_family", "discrete_joint_nd"}) {
    INFO(name);
    const auto b = parse_config(kDir + "/" + name + ".yaml");
    const auto text = serialize_config(b);
    CHECK(serialize_config(parse_config_text(text)) == text);
    CHECK_NOTHROW(b.model());
  }
}

TEST_CASE("parameter expressions", "[config]") {
  const std::vector<std::string> names{"sigma", "mu"};
  const std::vector<double> values{2.0, -0.5};
  CHECK(Expression("1/sigma^2", names).evaluate(names, values) == Approx(0.25));
  CHECK(Expression("-(mu + 1) * 3", names).evaluate(names, values) == Approx(-1.5));
  CHECK(Expression("2^3^2", names).evaluate(names, values) == Approx(512.0));
  CHECK(Expression("1.5e1", names).is_constant());
  CHECK_FALSE(Expression("sigma", names).is_constant());
  CHECK_THROWS_AS(Expression("tau + 1", names), InvalidArgument);
  CHECK_THROWS_AS(Expression("(sigma", names), InvalidArgument);
}

TEST_CASE("unary function names", "[config]") {
  CHECK(unary_from_name("square")(3.0) == 9.0);
  CHECK(unary_from_name("abs")(-2.0) == 2.0);
  CHECK(unary_from_name("positive_part")(-2.0) == 0.0);
  CHECK(unary_from_name("power(3)")(-2.0) == -8.0);
  CHECK(unary_from_name("clamp(0, 1)")(3.0) == 1.0);
  CHECK(unary_from_name("decreasing_clamp(0, 1)")(0.25) == Approx(0.75));
  CHECK(unary_from_name("smooth_step(0, 0.5)")(1.0) == 1.0);
  CHECK_THROWS(unary_from_name("cube"));
}
