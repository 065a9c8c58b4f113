#pragma once

// Upper and lower expectations as suprema and infima over a measure family,
// the capacity pair, Choquet integrals, and the truncation / smoothing helpers.

#include "caplim/discrete.hpp"
#include "caplim/error.hpp"
#include "caplim/measures.hpp"
#include "caplim/parallel.hpp"
#include "caplim/quadrature.hpp"
#include "caplim/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace caplim {

enum class Monotone { none, nondecreasing, nonincreasing };

inline const char* to_string(Monotone m) {
  switch (m) {
    case Monotone::none: return "none";
    case Monotone::nondecreasing: return "nondecreasing";
    case Monotone::nonincreasing: return "nonincreasing";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Helper functions

/// (f_c(x), x - f_c(x)) with f_c(x) = max(-c, min(x, c)).
inline std::pair<double, double> truncate(double x, double c) {
  require(c > 0.0, "truncate: requires c > 0");
  const double fc = std::max(-c, std::min(x, c));
  return {fc, x - fc};
}

namespace detail {
inline double bump_tail(double s) { return s > 0.0 ? std::exp(-1.0 / s) : 0.0; }
}  // namespace detail

/// Smooth nondecreasing step: 0 on (-inf, 1-eps], 1 on [1, inf).
/// Built from psi(s) = h(s) / (h(s) + h(1-s)) with h(s) = exp(-1/s).
inline double smooth_indicator(double x, double eps) {
  require(eps > 0.0 && eps < 1.0, "smooth_indicator: requires 0 < eps < 1");
  const double s = (x - (1.0 - eps)) / eps;
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  const double a = detail::bump_tail(s);
  const double b = detail::bump_tail(1.0 - s);
  return a / (a + b);
}

// ---------------------------------------------------------------------------
// Test functions

/// A scalar function of one coordinate with a known expectation rule.
class UnaryFunction {
 public:
  enum class Kind { constant, power, abs_power, positive_power, general };

  struct Value {
    double value = 0.0;
    bool finite = true;
  };

  static UnaryFunction constant(double c) {
    UnaryFunction u(Kind::constant);
    u.param_ = c;
    return u;
  }
  static UnaryFunction identity() { return power(1); }
  /// x^k for an integer k >= 1.
  static UnaryFunction power(int k) {
    require(k >= 1, "UnaryFunction::power: k must be >= 1");
    UnaryFunction u(Kind::power);
    u.param_ = k;
    return u;
  }
  /// |x|^q, q > 0.
  static UnaryFunction abs_power(double q) {
    require(q > 0.0, "UnaryFunction::abs_power: q must be > 0");
    UnaryFunction u(Kind::abs_power);
    u.param_ = q;
    return u;
  }
  /// (x^+)^q, q > 0.
  static UnaryFunction positive_power(double q) {
    require(q > 0.0, "UnaryFunction::positive_power: q must be > 0");
    UnaryFunction u(Kind::positive_power);
    u.param_ = q;
    return u;
  }
  /// Arbitrary function with |fn(x)| = O(1 + |x|^growth).
  static UnaryFunction general(std::function<double(double)> fn, double growth = 0.0) {
    require(static_cast<bool>(fn), "UnaryFunction::general: function is required");
    UnaryFunction u(Kind::general);
    u.fn_ = std::make_shared<const std::function<double(double)>>(std::move(fn));
    u.param_ = growth;
    return u;
  }

  Kind kind() const noexcept { return kind_; }
  double parameter() const noexcept { return param_; }

  double growth() const noexcept {
    switch (kind_) {
      case Kind::constant: return 0.0;
      default: return param_;
    }
  }

  double operator()(double x) const {
    switch (kind_) {
      case Kind::constant: return param_;
      case Kind::power: return std::pow(x, static_cast<int>(param_));
      case Kind::abs_power: return std::pow(std::abs(x), param_);
      case Kind::positive_power: return x > 0.0 ? std::pow(x, param_) : 0.0;
      case Kind::general: return (*fn_)(x);
    }
    return 0.0;
  }

  /// E[u(X)] by closed form or quadrature; `finite` is false when not integrable.
  Value expect(const Marginal& m) const {
    switch (kind_) {
      case Kind::constant: return {param_, true};
      case Kind::power: {
        const auto mom = moment(m, static_cast<int>(param_));
        return {mom.raw, mom.finite};
      }
      case Kind::abs_power: {
        const double v = absolute_moment(m, param_);
        return {v, std::isfinite(v)};
      }
      case Kind::positive_power: {
        const double v = positive_part_moment(m, param_);
        return {v, std::isfinite(v)};
      }
      case Kind::general: {
        if (param_ > 0.0 && param_ >= m.moment_limit()) return {kInf, false};
        const auto& fn = *fn_;
        return {m.expect(fn), true};
      }
    }
    return {};
  }

 private:
  explicit UnaryFunction(Kind kind) : kind_(kind) {}

  Kind kind_;
  double param_ = 0.0;
  std::shared_ptr<const std::function<double(double)>> fn_;
};

/// c * prod_i u_i(x_{coordinate_i}), coordinates distinct.
struct Term {
  double coefficient = 1.0;
  std::vector<std::pair<std::size_t, UnaryFunction>> factors;
};

/// Declared regularity of a test function. Unset optionals are not audited.
struct FunctionBounds {
  /// C in |f(x) - f(y)| <= C (1 + |x|^m + |y|^m) |x - y|.
  std::optional<double> lipschitz;
  /// m in the local Lipschitz condition.
  double growth = 0.0;
  std::optional<double> sup_bound;
  Monotone monotone = Monotone::none;
  bool nonnegative = false;
};

/// A scalar function of k coordinates. Separable functions (sums of products
/// of unary factors) get exact per-measure expectations; general ones are
/// handled by enumeration or Monte Carlo.
class TestFunction {
 public:
  using General = std::function<double(std::span<const double>)>;

  static TestFunction constant(double c) {
    TestFunction f;
    f.arity_ = 0;
    f.offset_ = c;
    f.bounds_.lipschitz = 0.0;
    f.bounds_.sup_bound = std::abs(c);
    f.bounds_.nonnegative = c >= 0.0;
    f.is_constant_ = true;
    return f;
  }

  static TestFunction unary(std::size_t coordinate, UnaryFunction u, FunctionBounds bounds = {}) {
    Term t;
    t.factors.emplace_back(coordinate, std::move(u));
    return separable(coordinate + 1, {std::move(t)}, 0.0, bounds);
  }

  static TestFunction separable(std::size_t arity, std::vector<Term> terms, double offset = 0.0,
                                FunctionBounds bounds = {}) {
    for (const auto& t : terms) {
      std::vector<std::size_t> seen;
      for (const auto& [c, u] : t.factors) {
        require(c < arity, "TestFunction::separable: factor coordinate exceeds arity");
        require(std::find(seen.begin(), seen.end(), c) == seen.end(),
                "TestFunction::separable: coordinates within a term must be distinct");
        seen.push_back(c);
      }
    }
    TestFunction f;
    f.arity_ = arity;
    f.terms_ = std::move(terms);
    f.offset_ = offset;
    f.bounds_ = bounds;
    return f;
  }

  static TestFunction general(std::size_t arity, General fn, FunctionBounds bounds = {}) {
    require(static_cast<bool>(fn), "TestFunction::general: function is required");
    TestFunction f;
    f.arity_ = arity;
    f.general_ = std::make_shared<const General>(std::move(fn));
    f.bounds_ = bounds;
    return f;
  }

  std::size_t arity() const noexcept { return arity_; }
  bool is_separable() const noexcept { return !general_; }
  bool is_constant() const noexcept { return is_constant_; }
  const std::vector<Term>& terms() const noexcept { return terms_; }
  double offset() const noexcept { return offset_; }
  const FunctionBounds& bounds() const noexcept { return bounds_; }

  TestFunction with_bounds(FunctionBounds b) const {
    TestFunction f = *this;
    f.bounds_ = b;
    return f;
  }

  double operator()(std::span<const double> x) const {
    if (general_) return (*general_)(x);
    double s = offset_;
    for (const auto& t : terms_) {
      double prod = t.coefficient;
      for (const auto& [c, u] : t.factors) prod *= u(x[c]);
      s += prod;
    }
    return s;
  }

  /// Growth order of the whole function (largest total degree of a term).
  double growth_order() const {
    if (general_) return bounds_.growth + 1.0;
    double g = 0.0;
    for (const auto& t : terms_) {
      double d = 0.0;
      for (const auto& [c, u] : t.factors) d += u.growth();
      g = std::max(g, d);
    }
    return g;
  }

  TestFunction scaled(double lambda) const {
    TestFunction f = *this;
    if (general_) {
      auto inner = general_;
      f.general_ = std::make_shared<const General>(
          [inner, lambda](std::span<const double> x) { return lambda * (*inner)(x); });
    } else {
      for (auto& t : f.terms_) t.coefficient *= lambda;
      f.offset_ *= lambda;
    }
    auto& b = f.bounds_;
    if (b.lipschitz) *b.lipschitz *= std::abs(lambda);
    if (b.sup_bound) *b.sup_bound *= std::abs(lambda);
    if (lambda < 0.0) {
      b.monotone = b.monotone == Monotone::nondecreasing   ? Monotone::nonincreasing
                   : b.monotone == Monotone::nonincreasing ? Monotone::nondecreasing
                                                           : Monotone::none;
    }
    b.nonnegative = lambda == 0.0 || (lambda > 0.0 && b.nonnegative);
    return f;
  }

  TestFunction negated() const { return scaled(-1.0); }

  TestFunction shifted(double c) const {
    TestFunction f = *this;
    if (general_) {
      auto inner = general_;
      f.general_ = std::make_shared<const General>(
          [inner, c](std::span<const double> x) { return (*inner)(x) + c; });
    } else {
      f.offset_ += c;
    }
    if (f.bounds_.sup_bound) *f.bounds_.sup_bound += std::abs(c);
    f.bounds_.nonnegative = f.bounds_.nonnegative && c >= 0.0;
    return f;
  }

  friend TestFunction operator+(const TestFunction& a, const TestFunction& b) {
    if (a.is_constant_) return b.shifted(a.offset_);
    if (b.is_constant_) return a.shifted(b.offset_);
    TestFunction f;
    f.arity_ = std::max(a.arity_, b.arity_);
    if (!a.general_ && !b.general_) {
      f.terms_ = a.terms_;
      f.terms_.insert(f.terms_.end(), b.terms_.begin(), b.terms_.end());
      f.offset_ = a.offset_ + b.offset_;
    } else {
      f.general_ = std::make_shared<const General>(
          [a, b](std::span<const double> x) { return a(x) + b(x); });
    }
    auto& r = f.bounds_;
    const auto& ba = a.bounds_;
    const auto& bb = b.bounds_;
    if (ba.lipschitz && bb.lipschitz) r.lipschitz = *ba.lipschitz + *bb.lipschitz;
    r.growth = std::max(ba.growth, bb.growth);
    if (ba.sup_bound && bb.sup_bound) r.sup_bound = *ba.sup_bound + *bb.sup_bound;
    r.monotone = ba.monotone == bb.monotone ? ba.monotone : Monotone::none;
    r.nonnegative = ba.nonnegative && bb.nonnegative;
    return f;
  }

 private:
  std::size_t arity_ = 0;
  std::vector<Term> terms_;
  double offset_ = 0.0;
  std::shared_ptr<const General> general_;
  FunctionBounds bounds_;
  bool is_constant_ = false;
};

struct AuditOptions {
  std::size_t points = 256;
  double radius = 10.0;
  std::uint64_t seed = 0;
};

/// Spot-checks the declared bounds of f on a randomized grid; throws
/// AuditFailure on the first violation.
inline void audit(const TestFunction& f, const AuditOptions& options = {}) {
  const std::size_t k = std::max<std::size_t>(f.arity(), 1);
  const auto& b = f.bounds();
  CounterRng rng(options.seed, stream_id(stream_tag::kAudit, k));
  std::vector<std::vector<double>> pts(options.points, std::vector<double>(k));
  for (std::size_t i = 0; i < options.points; ++i) {
    // Half the points near the origin, half spread over the full radius.
    const double r = i % 2 == 0 ? 1.0 : options.radius;
    for (auto& v : pts[i]) v = r * (2.0 * rng.uniform() - 1.0);
  }
  auto norm = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
  };
  const double slack = 1e-9;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double fx = f(pts[i]);
    if (!std::isfinite(fx)) throw AuditFailure("audit: function is not finite on the audit grid");
    if (b.sup_bound && std::abs(fx) > *b.sup_bound * (1.0 + slack) + slack) {
      throw AuditFailure("audit: |f| exceeds the declared sup bound");
    }
    if (b.nonnegative && fx < -slack) throw AuditFailure("audit: f is negative but declared nonnegative");
    if (b.lipschitz) {
      const auto& y = pts[(i + 1) % pts.size()];
      std::vector<double> z = pts[i];
      for (auto& v : z) v += 1e-3 * (2.0 * rng.uniform() - 1.0);
      for (const std::vector<double>* other : {&y, static_cast<const std::vector<double>*>(&z)}) {
        double dist = 0.0;
        for (std::size_t c = 0; c < k; ++c) dist += (pts[i][c] - (*other)[c]) * (pts[i][c] - (*other)[c]);
        dist = std::sqrt(dist);
        const double allowed = *b.lipschitz *
                               (1.0 + std::pow(norm(pts[i]), b.growth) + std::pow(norm(*other), b.growth)) *
                               dist;
        if (std::abs(fx - f(*other)) > allowed * (1.0 + slack) + slack) {
          throw AuditFailure("audit: declared Lipschitz bound violated");
        }
      }
    }
    if (b.monotone != Monotone::none) {
      for (std::size_t c = 0; c < f.arity(); ++c) {
        std::vector<double> z = pts[i];
        z[c] += rng.uniform();
        const double diff = f(z) - fx;
        const bool ok = b.monotone == Monotone::nondecreasing ? diff >= -slack * (1.0 + std::abs(fx))
                                                              : diff <= slack * (1.0 + std::abs(fx));
        if (!ok) throw AuditFailure("audit: declared monotonicity violated");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Events

/// A real interval with open or closed ends.
struct Interval {
  double lo = -kInf;
  double hi = kInf;
  bool lo_closed = true;
  bool hi_closed = true;

  static Interval at_least(double t) { return {t, kInf, true, true}; }
  static Interval greater_than(double t) { return {t, kInf, false, true}; }
  static Interval at_most(double t) { return {-kInf, t, true, true}; }
  static Interval less_than(double t) { return {-kInf, t, true, false}; }
  static Interval closed(double a, double b) { return {a, b, true, true}; }

  bool contains(double x) const {
    const bool above = lo_closed ? x >= lo : x > lo;
    const bool below = hi_closed ? x <= hi : x < hi;
    return above && below;
  }

  bool empty() const { return lo > hi || (lo == hi && !(lo_closed && hi_closed)); }

  Interval intersect(const Interval& o) const {
    Interval r = *this;
    if (o.lo > r.lo || (o.lo == r.lo && !o.lo_closed)) {
      r.lo = o.lo;
      r.lo_closed = o.lo_closed;
    }
    if (o.hi < r.hi || (o.hi == r.hi && !o.hi_closed)) {
      r.hi = o.hi;
      r.hi_closed = o.hi_closed;
    }
    return r;
  }

  double probability(const Marginal& m) const {
    if (empty()) return 0.0;
    const double upper = hi == kInf ? 1.0 : (hi_closed ? m.cdf(hi) : m.cdf_left(hi));
    const double lower = lo == -kInf ? 0.0 : (lo_closed ? m.cdf_left(lo) : m.cdf(lo));
    if (hi == kInf && lo != -kInf) return lo_closed ? m.survival_ge(lo) : m.survival_gt(lo);
    return std::max(0.0, upper - lower);
  }
};

/// Coordinatewise product of intervals; unconstrained coordinates range over R.
struct Box {
  std::map<std::size_t, Interval> sides;

  bool contains(std::span<const double> x) const {
    for (const auto& [c, iv] : sides) {
      if (!iv.contains(x[c])) return false;
    }
    return true;
  }

  Box intersect(const Box& o) const {
    Box r = *this;
    for (const auto& [c, iv] : o.sides) {
      auto it = r.sides.find(c);
      if (it == r.sides.end()) {
        r.sides.emplace(c, iv);
      } else {
        it->second = it->second.intersect(iv);
      }
    }
    return r;
  }

  double probability(const ProductMeasure& m) const {
    double p = 1.0;
    for (const auto& [c, iv] : sides) p *= iv.probability(m.marginal(c));
    return p;
  }
};

/// An event on R^n: a finite union of boxes (exact probabilities) possibly
/// complemented, or an arbitrary predicate. Optionally carries a smooth
/// sandwich f <= 1_A <= g.
class Event {
 public:
  using Predicate = std::function<bool(std::span<const double>)>;

  static Event empty() { return Event{}; }
  static Event omega() { return Event{}.complement(); }

  static Event box(Box b) {
    Event e;
    e.arity_ = b.sides.empty() ? 0 : b.sides.rbegin()->first + 1;
    e.boxes_.push_back(std::move(b));
    return e;
  }
  static Event half_line(std::size_t coordinate, Interval iv) {
    Box b;
    b.sides.emplace(coordinate, iv);
    return box(std::move(b));
  }
  static Event predicate(std::size_t arity, Predicate pred) {
    Event e;
    e.arity_ = arity;
    e.predicate_ = std::make_shared<const Predicate>(std::move(pred));
    return e;
  }

  std::size_t arity() const noexcept { return arity_; }
  bool is_exact() const noexcept { return !predicate_; }

  bool contains(std::span<const double> x) const {
    bool in;
    if (predicate_) {
      in = (*predicate_)(x);
    } else {
      in = std::any_of(boxes_.begin(), boxes_.end(), [&](const Box& b) { return b.contains(x); });
    }
    return in != complemented_;
  }

  Event complement() const {
    Event e = *this;
    e.complemented_ = !e.complemented_;
    e.sandwich_.reset();
    return e;
  }

  Event unite(const Event& o) const {
    Event e;
    e.arity_ = std::max(arity_, o.arity_);
    if (is_exact() && o.is_exact() && !complemented_ && !o.complemented_) {
      e.boxes_ = boxes_;
      e.boxes_.insert(e.boxes_.end(), o.boxes_.begin(), o.boxes_.end());
      return e;
    }
    Event a = *this;
    Event b = o;
    e.predicate_ = std::make_shared<const Predicate>(
        [a, b](std::span<const double> x) { return a.contains(x) || b.contains(x); });
    return e;
  }

  Event with_sandwich(TestFunction lower, TestFunction upper) const {
    Event e = *this;
    e.sandwich_ = std::make_shared<const std::pair<TestFunction, TestFunction>>(std::move(lower),
                                                                               std::move(upper));
    return e;
  }
  const std::pair<TestFunction, TestFunction>* sandwich() const { return sandwich_.get(); }

  /// Exact probability under one product measure (box events only).
  double probability(const ProductMeasure& m) const {
    require(is_exact(), "Event::probability: predicate events need enumeration or sampling");
    require(boxes_.size() <= 20, "Event::probability: at most 20 boxes");
    // Inclusion-exclusion over nonempty subsets of boxes.
    double p = 0.0;
    const std::size_t nb = boxes_.size();
    for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << nb); ++mask) {
      Box inter;
      bool first = true;
      int bits = 0;
      for (std::size_t i = 0; i < nb; ++i) {
        if (mask >> i & 1u) {
          inter = first ? boxes_[i] : inter.intersect(boxes_[i]);
          first = false;
          ++bits;
        }
      }
      const double q = inter.probability(m);
      p += bits % 2 == 1 ? q : -q;
    }
    p = std::clamp(p, 0.0, 1.0);
    return complemented_ ? 1.0 - p : p;
  }

 private:
  std::vector<Box> boxes_;
  bool complemented_ = false;
  std::size_t arity_ = 0;
  std::shared_ptr<const Predicate> predicate_;
  std::shared_ptr<const std::pair<TestFunction, TestFunction>> sandwich_;
};

// ---------------------------------------------------------------------------
// Engine

enum class Refinement { grid_only, grid_plus_golden_section };
enum class EvaluationPath { automatic, closed_form, enumeration, monte_carlo };

inline const char* to_string(EvaluationPath p) {
  switch (p) {
    case EvaluationPath::automatic: return "automatic";
    case EvaluationPath::closed_form: return "closed_form";
    case EvaluationPath::enumeration: return "enumeration";
    case EvaluationPath::monte_carlo: return "monte_carlo";
  }
  return "?";
}

struct EngineOptions {
  std::size_t mc_replications = 10000;
  Refinement refinement = Refinement::grid_plus_golden_section;
  /// Relative width at which golden-section refinement stops.
  double tolerance = 1e-10;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::size_t enumeration_limit = std::size_t{1} << 20;
  /// Also report the plug-in sup over independently sampled per-measure estimates.
  bool independent_sup = false;
  EvaluationPath path = EvaluationPath::automatic;
  bool audit = true;
};

/// Per-measure expectation estimate.
struct PointEstimate {
  double value = 0.0;
  double std_error = 0.0;
  bool infinite = false;
  EvaluationPath path = EvaluationPath::closed_form;
};

/// Result of a sup (or inf) over the family.
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  bool infinite = false;
  std::vector<double> argmax;
  EvaluationPath path = EvaluationPath::closed_form;
  std::optional<double> independent_sup;
  std::optional<double> independent_sup_error;
  std::size_t evaluations = 0;
};

struct CapacityEstimate {
  Estimate estimate;
  /// [upper_exp(f), upper_exp(g)] for a supplied sandwich f <= 1_A <= g.
  std::optional<std::pair<double, double>> bracket;
  double value() const { return estimate.value; }
};

enum class Transform { identity, absolute, positive_part };
enum class CapacityKind { upper, lower };

/// Y = T(X_coordinate)^power; for the identity transform the sign is kept.
struct ChoquetTarget {
  std::size_t coordinate = 0;
  Transform transform = Transform::identity;
  double power = 1.0;
};

struct ChoquetOptions {
  CapacityKind capacity = CapacityKind::upper;
  double tolerance = 1e-8;
  /// Tail level that sets the truncation quantile.
  double tail_tolerance = 1e-10;
  double tolerance_exponent = 0.05;
  double horizon_floor = 1e6;
};

struct ChoquetResult {
  double value = 0.0;
  double error = 0.0;
  bool infinite = false;
  double upper_limit = 0.0;
  double lower_limit = 0.0;
  std::size_t evaluations = 0;
};

namespace detail {

struct Welford {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double std_error() const {
    return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
  }
};

inline double signed_root(double t, double q) {
  return t >= 0.0 ? std::pow(t, 1.0 / q) : -std::pow(-t, 1.0 / q);
}

/// P(Y >= t) for Y = T(X)^q.
inline double transformed_ge(const Marginal& m, const ChoquetTarget& target, double t) {
  switch (target.transform) {
    case Transform::identity: return m.survival_ge(signed_root(t, target.power));
    case Transform::positive_part:
      return t <= 0.0 ? 1.0 : m.survival_ge(std::pow(t, 1.0 / target.power));
    case Transform::absolute: {
      if (t <= 0.0) return 1.0;
      const double s = std::pow(t, 1.0 / target.power);
      return std::min(1.0, m.survival_ge(s) + m.cdf(-s));
    }
  }
  return 0.0;
}

/// P(Y < -u) for u > 0.
inline double transformed_lt_neg(const Marginal& m, const ChoquetTarget& target, double u) {
  if (target.transform != Transform::identity) return 0.0;
  return m.cdf_left(-std::pow(u, 1.0 / target.power));
}

inline double transform_value(const ChoquetTarget& target, double x) {
  switch (target.transform) {
    case Transform::identity: return x >= 0.0 ? std::pow(x, target.power) : -std::pow(-x, target.power);
    case Transform::absolute: return std::pow(std::abs(x), target.power);
    case Transform::positive_part: return x > 0.0 ? std::pow(x, target.power) : 0.0;
  }
  return 0.0;
}

}  // namespace detail

/// Integral over [0, limit] of a nonincreasing tail function with a +inf flag for
/// slowly decaying tails. Shared by every Choquet computation.
template <class Tail>
ChoquetResult integrate_tail(const Tail& tail, std::vector<double> atoms, double limit,
                             const ChoquetOptions& options) {
  ChoquetResult out;
  out.upper_limit = limit;
  const double v_end = tail(limit);
  ++out.evaluations;
  double exponent = kInf;
  if (v_end > 0.0) {
    const double v_mid = tail(limit / 100.0);
    ++out.evaluations;
    exponent = v_mid > 0.0 ? std::log10(v_mid / v_end) / 2.0 : kInf;
    if (exponent <= 1.0 + options.tolerance_exponent) {
      out.infinite = true;
      out.value = kInf;
      return out;
    }
  }
  std::vector<double> breaks{0.0, limit};
  for (int k = -6; std::pow(10.0, k) < limit; ++k) breaks.push_back(std::pow(10.0, k));
  for (double a : atoms) {
    if (a > 0.0 && a < limit) breaks.push_back(a);
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double a = breaks[i];
    const double b = breaks[i + 1];
    const double piece[2] = {a, b};
    const auto r = quadrature::adaptive_simpson(tail, std::span<const double>(piece, 2),
                                                options.tolerance / static_cast<double>(breaks.size() - 1));
    out.value += r.value;
    out.error += r.error;
    out.evaluations += r.evaluations;
    // Stop once the remaining mass is provably below the tolerance.
    const double vb = tail(std::nextafter(b, limit));
    ++out.evaluations;
    if (vb == 0.0) break;
    if (vb * (limit - b) < 1e-3 * options.tolerance) {
      out.error += vb * (limit - b);
      break;
    }
  }
  if (v_end > 0.0 && std::isfinite(exponent)) {
    const double remainder = v_end * limit / (exponent - 1.0);
    out.value += remainder;
    out.error += remainder;
  }
  return out;
}

/// Sub-linear expectation over a measure family.
class SublinearEngine {
 public:
  using Evaluator = std::function<PointEstimate(const ProductMeasure&, std::uint64_t stream_base)>;

  explicit SublinearEngine(MeasureFamily family, EngineOptions options = {})
      : family_(std::move(family)), options_(options) {
    require(options_.tolerance > 0.0, "SublinearEngine: tolerance must be > 0");
    require(options_.mc_replications >= 1, "SublinearEngine: mc_replications must be >= 1");
  }

  const MeasureFamily& family() const noexcept { return family_; }
  const EngineOptions& options() const noexcept { return options_; }

  /// Per-measure expectation of f.
  PointEstimate expectation(const TestFunction& f, const ProductMeasure& m,
                            std::uint64_t stream_base = stream_tag::kEngine) const {
    const auto path = options_.path;
    if (f.is_separable() && (path == EvaluationPath::automatic || path == EvaluationPath::closed_form)) {
      PointEstimate out;
      out.path = EvaluationPath::closed_form;
      out.value = f.offset();
      for (const auto& t : f.terms()) {
        if (t.coefficient == 0.0) continue;
        double prod = t.coefficient;
        for (const auto& [c, u] : t.factors) {
          const auto v = u.expect(m.marginal(c));
          if (!v.finite) {
            out.infinite = true;
            out.value = kInf;
            return out;
          }
          prod *= v.value;
        }
        out.value += prod;
      }
      return out;
    }
    require(path != EvaluationPath::closed_form,
            "upper_exp: closed-form path requested for a non-separable function");
    const std::size_t k = f.arity();
    const bool can_enumerate = m.all_discrete(k) && outcome_count(m, k) <= options_.enumeration_limit;
    if (can_enumerate && (path == EvaluationPath::automatic || path == EvaluationPath::enumeration)) {
      PointEstimate out;
      out.path = EvaluationPath::enumeration;
      double s = 0.0;
      for_each_outcome(m, k, [&](std::span<const double> x, double p) { s += p * f(x); });
      out.value = s;
      return out;
    }
    require(path != EvaluationPath::enumeration, "upper_exp: outcome space too large to enumerate");
    if (f.growth_order() > 0.0) {
      for (std::size_t c = 0; c < k; ++c) {
        if (m.marginal(c).moment_limit() <= f.growth_order()) {
          return {kInf, 0.0, true, EvaluationPath::monte_carlo};
        }
      }
    }
    return monte_carlo(m, k, stream_base, [&](std::span<const double> x) { return f(x); });
  }

  Estimate upper_exp(const TestFunction& f, std::size_t horizon = 0) const {
    if (horizon == 0) horizon = std::max<std::size_t>(f.arity(), 1);
    require(f.arity() <= horizon, "upper_exp: function arity exceeds the horizon");
    if (options_.audit) audit(f, {256, 10.0, options_.seed});
    const bool stochastic = !f.is_separable() || options_.path == EvaluationPath::monte_carlo;
    return sup([&](const ProductMeasure& m, std::uint64_t base) { return expectation(f, m, base); },
               stochastic);
  }

  Estimate lower_exp(const TestFunction& f, std::size_t horizon = 0) const {
    Estimate e = upper_exp(f.negated(), horizon);
    e.value = -e.value;
    if (e.independent_sup) e.independent_sup = -*e.independent_sup;
    return e;
  }

  /// Probability of an event under one product measure.
  PointEstimate probability(const Event& event, const ProductMeasure& m,
                            std::uint64_t stream_base = stream_tag::kEngine) const {
    if (event.is_exact()) return {event.probability(m), 0.0, false, EvaluationPath::closed_form};
    const std::size_t k = event.arity();
    if (m.all_discrete(k) && outcome_count(m, k) <= options_.enumeration_limit &&
        options_.path != EvaluationPath::monte_carlo) {
      double s = 0.0;
      for_each_outcome(m, k, [&](std::span<const double> x, double p) {
        if (event.contains(x)) s += p;
      });
      return {std::clamp(s, 0.0, 1.0), 0.0, false, EvaluationPath::enumeration};
    }
    return monte_carlo(m, k, stream_base,
                       [&](std::span<const double> x) { return event.contains(x) ? 1.0 : 0.0; });
  }

  CapacityEstimate upper_capacity(const Event& event) const {
    CapacityEstimate out;
    out.estimate = sup([&](const ProductMeasure& m, std::uint64_t base) { return probability(event, m, base); },
                       !event.is_exact());
    out.estimate.value = std::clamp(out.estimate.value, 0.0, 1.0);
    if (const auto* s = event.sandwich()) {
      out.bracket = std::make_pair(upper_exp(s->first).value, upper_exp(s->second).value);
    }
    return out;
  }

  CapacityEstimate lower_capacity(const Event& event) const {
    CapacityEstimate out = upper_capacity(event.complement());
    out.estimate.value = 1.0 - out.estimate.value;
    if (const auto* s = event.sandwich()) {
      out.bracket = std::make_pair(lower_exp(s->first).value, lower_exp(s->second).value);
    }
    return out;
  }

  /// Choquet integral of Y = T(X_i)^q with respect to the upper or lower capacity.
  /// The tail capacity is the sup (or inf) over the family grid.
  ChoquetResult choquet(const ChoquetTarget& target, const ChoquetOptions& options = {}) const {
    require(target.power > 0.0, "choquet: power must be > 0");
    const auto& members = family_.members();
    const bool upper = options.capacity == CapacityKind::upper;
    std::vector<Marginal> margins;
    for (const auto& mem : members) margins.push_back(mem.measure.marginal(target.coordinate));

    auto fold = [&](auto&& per) {
      double best = upper ? 0.0 : 1.0;
      for (const auto& m : margins) {
        const double v = per(m);
        best = upper ? std::max(best, v) : std::min(best, v);
      }
      return best;
    };
    auto tail_pos = [&](double t) {
      return fold([&](const Marginal& m) { return detail::transformed_ge(m, target, t); });
    };
    // 1 - V(Y >= -u) = inf (or sup) of P(Y < -u).
    auto tail_neg = [&](double u) {
      double best = upper ? 1.0 : 0.0;
      for (const auto& m : margins) {
        const double v = detail::transformed_lt_neg(m, target, u);
        best = upper ? std::min(best, v) : std::max(best, v);
      }
      return best;
    };

    std::vector<double> pos_atoms;
    std::vector<double> neg_atoms;
    double hi = 0.0;
    double lo = 0.0;
    const double tol = options.tail_tolerance;
    for (const auto& m : margins) {
      if (m.is_discrete()) {
        for (const auto& atom : m.atoms()) {
          const double y = detail::transform_value(target, atom.value);
          (y >= 0.0 ? pos_atoms : neg_atoms).push_back(std::abs(y));
        }
      }
      const double qu = m.quantile(1.0 - tol);
      const double ql = m.quantile(tol);
      hi = std::max(hi, std::max(std::abs(detail::transform_value(target, qu)),
                                 std::abs(detail::transform_value(target, ql))));
      if (target.transform == Transform::identity) lo = std::max(lo, -detail::transform_value(target, ql));
    }
    const double upper_limit = std::max(hi, options.horizon_floor);
    auto pos = integrate_tail(tail_pos, pos_atoms, upper_limit, options);
    if (target.transform != Transform::identity) return pos;
    const double lower_limit = std::max(lo, options.horizon_floor);
    auto neg = integrate_tail(tail_neg, neg_atoms, lower_limit, options);
    ChoquetResult out;
    out.upper_limit = upper_limit;
    out.lower_limit = lower_limit;
    out.evaluations = pos.evaluations + neg.evaluations;
    if (pos.infinite && neg.infinite) {
      out.infinite = true;
      out.value = std::numeric_limits<double>::quiet_NaN();
    } else if (pos.infinite) {
      out.infinite = true;
      out.value = kInf;
    } else if (neg.infinite) {
      out.infinite = true;
      out.value = -kInf;
    } else {
      out.value = pos.value - neg.value;
      out.error = pos.error + neg.error;
    }
    return out;
  }

  /// Generic sup over the family of a per-measure evaluator: grid search, then
  /// golden-section refinement around the best grid point. The fold is in index
  /// order, so results do not depend on the worker count.
  Estimate sup(const Evaluator& eval, bool stochastic) const {
    const auto& members = family_.members();
    auto grid = parallel_map<PointEstimate>(members.size(), options_.workers, [&](std::size_t i) {
      return eval(members[i].measure, stream_tag::kEngine);
    });
    Estimate out;
    out.evaluations = grid.size();
    std::size_t best = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid[i].infinite) {
        out.infinite = true;
        out.value = kInf;
        out.argmax = members[i].lambda;
        out.path = grid[i].path;
        return out;
      }
      if (grid[i].value > grid[best].value) best = i;
    }
    out.value = grid[best].value;
    out.std_error = grid[best].std_error;
    out.path = grid[best].path;
    out.argmax = members[best].lambda;

    if (options_.refinement == Refinement::grid_plus_golden_section && family_.dimension() > 0) {
      refine(eval, out);
    }
    if (stochastic && options_.independent_sup) {
      auto indep = parallel_map<PointEstimate>(members.size(), options_.workers, [&](std::size_t i) {
        return eval(members[i].measure, stream_id(stream_tag::kIndependentSup, i));
      });
      std::size_t b = 0;
      for (std::size_t i = 0; i < indep.size(); ++i) {
        if (indep[i].value > indep[b].value) b = i;
      }
      out.independent_sup = indep[b].value;
      out.independent_sup_error = indep[b].std_error;
    }
    return out;
  }

 private:
  template <class F>
  PointEstimate monte_carlo(const ProductMeasure& m, std::size_t k, std::uint64_t stream_base,
                            F&& f) const {
    detail::Welford acc;
    std::vector<double> x(std::max<std::size_t>(k, 1));
    for (std::size_t j = 0; j < options_.mc_replications; ++j) {
      CounterRng rng(options_.seed, stream_id(stream_base, j));
      for (std::size_t c = 0; c < k; ++c) x[c] = m.marginal(c).sample(rng);
      acc.add(f(std::span<const double>(x.data(), k)));
    }
    return {acc.mean, acc.std_error(), false, EvaluationPath::monte_carlo};
  }

  void refine(const Evaluator& eval, Estimate& out) const {
    constexpr double kGolden = 0.6180339887498949;
    std::vector<double> lambda = out.argmax;
    for (std::size_t axis = 0; axis < family_.dimension(); ++axis) {
      const auto& a = family_.axes()[axis];
      if (a.lo == a.hi) continue;
      const double h = family_.spacing(axis);
      double lo = std::max(a.lo, lambda[axis] - h);
      double hi = std::min(a.hi, lambda[axis] + h);
      auto value_at = [&](double t) {
        std::vector<double> l = lambda;
        l[axis] = t;
        const auto pe = eval(family_.build(l), stream_tag::kEngine);
        ++out.evaluations;
        if (pe.infinite || pe.value > out.value) {
          out.value = pe.infinite ? kInf : pe.value;
          out.infinite = pe.infinite;
          out.std_error = pe.std_error;
          out.path = pe.path;
          out.argmax = l;
        }
        return pe.infinite ? kInf : pe.value;
      };
      double c = hi - kGolden * (hi - lo);
      double d = lo + kGolden * (hi - lo);
      double fc = value_at(c);
      double fd = value_at(d);
      const double stop = options_.tolerance * (a.hi - a.lo);
      for (int iter = 0; iter < 200 && (hi - lo) > stop; ++iter) {
        if (out.infinite) return;
        if (fc > fd) {
          hi = d;
          d = c;
          fd = fc;
          c = hi - kGolden * (hi - lo);
          fc = value_at(c);
        } else {
          lo = c;
          c = d;
          fc = fd;
          d = lo + kGolden * (hi - lo);
          fd = value_at(d);
        }
      }
      lambda = out.argmax;
    }
  }

  MeasureFamily family_;
  EngineOptions options_;
};

/// Partial sums of sum_{j <= J} upper_exp[(|X_i| ^ j)^2] / j^2 at each requested J,
/// together with the bound 4 * choquet(|X_i|).
struct TruncatedSquareSeries {
  std::vector<std::size_t> horizons;
  std::vector<double> partial_sums;
  double choquet_abs = 0.0;
  bool choquet_infinite = false;
  double bound() const { return 4.0 * choquet_abs; }
};

inline TruncatedSquareSeries truncated_square_series(const SublinearEngine& engine,
                                                     std::vector<std::size_t> horizons,
                                                     std::size_t coordinate = 0) {
  std::sort(horizons.begin(), horizons.end());
  TruncatedSquareSeries out;
  out.horizons = horizons;
  const auto ch = engine.choquet({coordinate, Transform::absolute, 1.0});
  out.choquet_abs = ch.value;
  out.choquet_infinite = ch.infinite;
  const auto& members = engine.family().members();
  const std::size_t jmax = horizons.empty() ? 0 : horizons.back();
  double sum = 0.0;
  std::size_t next = 0;
  std::vector<double> second(members.size());
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto mom = moment(members[i].measure.marginal(coordinate), 2);
    second[i] = mom.finite ? mom.raw : kInf;
  }
  for (std::size_t j = 1; j <= jmax; ++j) {
    const double c = static_cast<double>(j);
    double best = 0.0;
    for (std::size_t i = 0; i < members.size(); ++i) {
      const auto& m = members[i].measure.marginal(coordinate);
      double v;
      if (m.survival_gt(c) == 0.0 && m.cdf_left(-c) == 0.0 && std::isfinite(second[i])) {
        v = second[i];
      } else if (m.is_discrete()) {
        v = 0.0;
        for (const auto& atom : m.atoms()) v += atom.probability * std::pow(std::min(std::abs(atom.value), c), 2);
      } else {
        v = m.expect([c](double x) {
          const double y = std::min(std::abs(x), c);
          return y * y;
        });
      }
      best = std::max(best, v);
    }
    sum += best / (c * c);
    while (next < horizons.size() && horizons[next] == j) {
      out.partial_sums.push_back(sum);
      ++next;
    }
  }
  return out;
}

}  // namespace caplim
