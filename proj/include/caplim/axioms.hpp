#pragma once

// Randomized property suite for the sub-linear expectation engine: the four
// axioms, conjugacy, capacity relations and the Choquet moment inequality.

#include "caplim/error.hpp"
#include "caplim/measures.hpp"
#include "caplim/parallel.hpp"
#include "caplim/rng.hpp"
#include "caplim/sublinear.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace caplim {

struct AxiomCheck {
  std::size_t case_index = 0;
  std::string family;
  std::string property;
  EvaluationPath path = EvaluationPath::closed_form;
  /// The property asserts lhs <= rhs (or lhs == rhs for equalities) within tolerance.
  double lhs = 0.0;
  double rhs = 0.0;
  double tolerance = 0.0;
  bool equality = false;
  bool pass = true;
};

struct AxiomReport {
  std::size_t cases = 0;
  std::size_t monte_carlo_cases = 0;
  std::vector<AxiomCheck> checks;
  std::size_t failures = 0;
  bool pass = true;

  std::string summary() const {
    std::ostringstream os;
    os.precision(10);
    os << cases << " cases (" << monte_carlo_cases << " Monte Carlo), " << checks.size() << " checks, " << failures
       << " failures\n";
    for (const auto& c : checks) {
      if (c.pass) continue;
      os << "  FAIL case " << c.case_index << " [" << c.family << "] " << c.property << ": " << c.lhs
         << (c.equality ? " == " : " <= ") << c.rhs << " (tol " << c.tolerance << ", " << to_string(c.path) << ")\n";
    }
    return os.str();
  }
};

struct AxiomOptions {
  std::size_t cases = 112;
  std::uint64_t seed = 20240611;
  std::size_t workers = 1;
  /// Every `monte_carlo_every`-th case runs on the forced Monte Carlo path.
  std::size_t monte_carlo_every = 4;
  std::size_t mc_replications = 20000;
  double relative_tolerance = 1e-9;
  double se_multiplier = 3.0;
  /// Restrict the corpus to one family; used by `verify axioms --config`.
  std::optional<MeasureFamily> family;
};

namespace detail {

struct AxiomFamily {
  std::string label;
  MeasureFamily family;
  bool discrete = false;
};

inline double uniform_in(CounterRng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

inline AxiomFamily random_axiom_family(std::size_t index, CounterRng& rng) {
  switch (index % 7) {
    case 0: {
      const double a = uniform_in(rng, -1.5, 0.5);
      const double b = a + uniform_in(rng, 0.1, 1.5);
      return {"normal location", MeasureFamily({{"mu", a, b}}, [](std::span<const double> l) {
                return ProductMeasure({Marginal::normal(l[0], 1.0)});
              })};
    }
    case 1: {
      const double a = uniform_in(rng, 0.3, 1.0);
      const double b = a + uniform_in(rng, 0.1, 1.5);
      return {"normal scale", MeasureFamily({{"sigma", a, b}}, [](std::span<const double> l) {
                return ProductMeasure({Marginal::normal(0.0, l[0] * l[0])});
              })};
    }
    case 2: {
      const double a = uniform_in(rng, -1.0, 0.0);
      const double c = uniform_in(rng, 0.5, 1.0);
      return {"normal location-scale",
              MeasureFamily({{"mu", a, a + 1.0}, {"sigma", c, c + 1.0}}, [](std::span<const double> l) {
                return ProductMeasure({Marginal::normal(l[0], l[1] * l[1])});
              }, 4)};
    }
    case 3: {
      const double a = uniform_in(rng, 0.4, 0.8);
      const double b = uniform_in(rng, 1.2, 2.5);
      return {"reciprocal scale pair", MeasureFamily({{"sigma", a, b}}, [](std::span<const double> l) {
                return ProductMeasure({Marginal::normal(0.0, l[0] * l[0]), Marginal::normal(0.0, 1.0 / (l[0] * l[0]))});
              })};
    }
    case 4: {
      const double w = uniform_in(rng, 0.5, 2.0);
      return {"uniform shift", MeasureFamily({{"shift", 0.0, uniform_in(rng, 0.2, 1.0)}}, [w](std::span<const double> l) {
                return ProductMeasure({Marginal::uniform(-w + l[0], w + l[0])});
              })};
    }
    case 5: {
      const double a = uniform_in(rng, 0.05, 0.5);
      const double b = a + uniform_in(rng, 0.05, 0.45);
      return {"bernoulli", MeasureFamily({{"p", a, b}}, [](std::span<const double> l) {
                return ProductMeasure({Marginal::bernoulli(l[0])});
              }), true};
    }
    default: {
      const double v0 = uniform_in(rng, -2.0, -0.5);
      const double v2 = uniform_in(rng, 0.5, 3.0);
      return {"three-point",
              MeasureFamily({{"t", 0.1, 0.6}}, [v0, v2](std::span<const double> l) {
                const double t = l[0];
                return ProductMeasure({Marginal::discrete({{v0, 0.5 * (1.0 - t)}, {0.0, 0.5}, {v2, 0.5 * t}})});
              }), true};
    }
  }
}

inline UnaryFunction random_unary(CounterRng& rng, std::size_t& kind_out) {
  kind_out = static_cast<std::size_t>(rng.uniform() * 5.0);
  switch (kind_out) {
    case 0: return UnaryFunction::identity();
    case 1: return UnaryFunction::power(2);
    case 2: return UnaryFunction::abs_power(1.5);
    case 3: return UnaryFunction::positive_power(1.0);
    default: return UnaryFunction::power(3);
  }
}

/// Random separable function of two coordinates with bounded growth.
inline TestFunction random_separable(CounterRng& rng) {
  std::vector<Term> terms;
  const std::size_t count = 1 + static_cast<std::size_t>(rng.uniform() * 3.0);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t kind = 0;
    Term t;
    t.coefficient = uniform_in(rng, -2.0, 2.0);
    t.factors.emplace_back(static_cast<std::size_t>(rng.uniform() * 2.0), random_unary(rng, kind));
    terms.push_back(std::move(t));
  }
  if (rng.uniform() < 0.5) {
    std::size_t kind = 0;
    Term t;
    t.coefficient = uniform_in(rng, -1.0, 1.0);
    t.factors.emplace_back(0, random_unary(rng, kind));
    t.factors.emplace_back(1, UnaryFunction::identity());
    terms.push_back(std::move(t));
  }
  return TestFunction::separable(2, std::move(terms), uniform_in(rng, -1.0, 1.0));
}

/// Random nonnegative separable function: sum of nonnegative coefficients times even or positive-part factors.
inline TestFunction random_nonnegative(CounterRng& rng) {
  std::vector<Term> terms;
  const std::size_t count = 1 + static_cast<std::size_t>(rng.uniform() * 2.0);
  for (std::size_t i = 0; i < count; ++i) {
    Term t;
    t.coefficient = uniform_in(rng, 0.1, 1.5);
    const auto c = static_cast<std::size_t>(rng.uniform() * 2.0);
    t.factors.emplace_back(c, rng.uniform() < 0.5 ? UnaryFunction::abs_power(uniform_in(rng, 0.5, 2.0))
                                                  : UnaryFunction::positive_power(1.0));
    terms.push_back(std::move(t));
  }
  FunctionBounds b;
  b.nonnegative = true;
  return TestFunction::separable(2, std::move(terms), uniform_in(rng, 0.0, 0.5), b);
}

/// Non-separable function evaluated by enumeration on discrete families.
inline TestFunction random_general(CounterRng& rng) {
  const double a = uniform_in(rng, -1.5, 1.5);
  const double b = uniform_in(rng, -1.0, 1.0);
  return TestFunction::general(2, [a, b](std::span<const double> x) {
    return a * std::max(x[0], x[1]) + b * x[0] * x[1] + std::min(x[0], 0.5);
  }, FunctionBounds{std::nullopt, 1.0, std::nullopt, Monotone::none, false});
}

inline Event random_event(CounterRng& rng, bool predicate) {
  const double t1 = uniform_in(rng, -1.0, 1.0);
  const double t2 = uniform_in(rng, -1.0, 1.0);
  const auto coord = static_cast<std::size_t>(rng.uniform() * 2.0);
  const bool upper_side = rng.uniform() < 0.5;
  if (predicate) {
    return Event::predicate(2, [t1, t2, coord, upper_side](std::span<const double> x) {
      return upper_side ? x[coord] >= t1 : x[coord] + 0.5 * x[1 - coord] <= t2;
    });
  }
  return Event::half_line(coord, upper_side ? Interval::at_least(t1) : Interval::at_most(t2));
}

}  // namespace detail

inline AxiomReport run_axiom_suite(const AxiomOptions& options = {}) {
  require(options.cases >= 1, "run_axiom_suite: at least one case is required");
  require(options.monte_carlo_every >= 1, "run_axiom_suite: monte_carlo_every must be >= 1");

  auto per_case = parallel_map<std::vector<AxiomCheck>>(options.cases, options.workers, [&](std::size_t i) {
    CounterRng rng(options.seed, stream_id(stream_tag::kAudit, i));
    auto fam = options.family ? detail::AxiomFamily{"configured", *options.family, false}
                              : detail::random_axiom_family(i, rng);
    if (options.family) {
      fam.discrete = true;
      for (const auto& m : fam.family.members()) fam.discrete = fam.discrete && m.measure.all_discrete(2);
    }
    const bool mc = (i + 1) % options.monte_carlo_every == 0;
    EngineOptions eo;
    eo.seed = options.seed + i;
    eo.mc_replications = options.mc_replications;
    eo.path = mc ? EvaluationPath::monte_carlo : EvaluationPath::automatic;
    // Per-measure Monte Carlo estimates share draws, so grid search suffices.
    if (mc) eo.refinement = Refinement::grid_only;
    const SublinearEngine engine(fam.family, eo);

    TestFunction f = fam.discrete && rng.uniform() < 0.5 ? detail::random_general(rng) : detail::random_separable(rng);
    const TestFunction g2 = detail::random_separable(rng);
    const TestFunction h = detail::random_nonnegative(rng);
    const double c = detail::uniform_in(rng, -3.0, 3.0);
    const double lambda = detail::uniform_in(rng, 0.0, 4.0);

    std::vector<AxiomCheck> out;
    auto tol_of = [&](std::initializer_list<Estimate> es) {
      double scale = 1.0, se2 = 0.0;
      for (const auto& e : es) {
        scale = std::max(scale, std::abs(e.value));
        se2 += e.std_error * e.std_error;
      }
      return options.relative_tolerance * scale + options.se_multiplier * std::sqrt(se2);
    };
    auto record = [&](const std::string& prop, double lhs, double rhs, double tol, bool eq, EvaluationPath path) {
      AxiomCheck ch{i, fam.label, prop, path, lhs, rhs, tol, eq, true};
      const bool finite = std::isfinite(lhs) && std::isfinite(rhs);
      ch.pass = finite && (eq ? std::abs(lhs - rhs) <= tol : lhs <= rhs + tol);
      out.push_back(ch);
    };

    const auto Ef = engine.upper_exp(f);
    const auto Efh = engine.upper_exp(f + h);
    record("monotonicity", Ef.value, Efh.value, tol_of({Ef, Efh}), false, Ef.path);

    const auto Ec = engine.upper_exp(TestFunction::constant(c));
    record("constant preserving", Ec.value, c, tol_of({Ec}), true, Ec.path);

    const auto Eg = engine.upper_exp(g2);
    const auto Efg = engine.upper_exp(f + g2);
    record("sub-additivity", Efg.value, Ef.value + Eg.value, tol_of({Efg, Ef, Eg}), false, Efg.path);

    const auto Elf = engine.upper_exp(f.scaled(lambda));
    record("positive homogeneity", Elf.value, lambda * Ef.value, tol_of({Elf, Ef}) * std::max(1.0, lambda), true,
           Elf.path);

    const auto Lf = engine.lower_exp(f);
    record("conjugacy lower <= upper", Lf.value, Ef.value, tol_of({Lf, Ef}), false, Lf.path);

    const auto Efc = engine.upper_exp(f.shifted(c));
    record("translation", Efc.value, Ef.value + c, tol_of({Efc, Ef}), true, Efc.path);

    const auto Lfg = engine.lower_exp(f + g2);
    record("lower sub-additivity against upper", Lfg.value, Lf.value + Eg.value, tol_of({Lfg, Lf, Eg}), false,
           Lfg.path);

    // Capacity relations.
    const Event A = detail::random_event(rng, mc);
    const Event B = detail::random_event(rng, mc);
    const auto VA = engine.upper_capacity(A).estimate;
    const auto VB = engine.upper_capacity(B).estimate;
    const auto VAB = engine.upper_capacity(A.unite(B)).estimate;
    record("upper capacity sub-additivity", VAB.value, VA.value + VB.value, tol_of({VAB, VA, VB}), false, VAB.path);
    const auto LA = engine.lower_capacity(A).estimate;
    const auto LAB = engine.lower_capacity(A.unite(B)).estimate;
    record("lower capacity of union", LAB.value, LA.value + VB.value, tol_of({LAB, LA, VB}), false, LAB.path);
    record("lower capacity <= upper capacity", LA.value, VA.value, tol_of({LA, VA}), false, LA.path);

    // Choquet moment inequality for |X_1|.
    ChoquetTarget target;
    target.transform = Transform::absolute;
    const auto ch = engine.choquet(target);
    for (double alpha : {0.5, 1.0}) {
      const auto Em = engine.upper_exp(TestFunction::unary(0, UnaryFunction::abs_power(1.0 + alpha)));
      const double rhs = 1.0 + Em.value / alpha;
      record(std::string(alpha == 0.5 ? "choquet moment (alpha=0.5)" : "choquet moment (alpha=1)"), ch.value, rhs,
             tol_of({Em}) / alpha + ch.error + options.relative_tolerance, false, Em.path);
    }
    return out;
  });

  AxiomReport report;
  report.cases = options.cases;
  for (std::size_t i = 0; i < options.cases; ++i) {
    if ((i + 1) % options.monte_carlo_every == 0) ++report.monte_carlo_cases;
    for (auto& c : per_case[i]) {
      if (!c.pass) ++report.failures;
      report.checks.push_back(std::move(c));
    }
  }
  report.pass = report.failures == 0;
  return report;
}

}  // namespace caplim
