#pragma once

// Closed-form capacity tail bounds for sums of extended negatively dependent
// variables, the explicit constants they need, and exhaustive dominance checks
// against exact capacities on small discrete models.

#include "caplim/discrete.hpp"
#include "caplim/error.hpp"
#include "caplim/measures.hpp"
#include "caplim/parallel.hpp"
#include "caplim/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace caplim {

/// Aggregate statistics consumed by the bound calculators.
struct BoundInputs {
  double x = 1.0;
  double y = 1.0;
  std::size_t n = 1;
  /// sum_k E[X_k^2]
  double B = 1.0;
  /// sum_k E[(X_k^+)^p]
  double M_pp = 0.0;
  /// sum_k E[|X_k|^p]
  double M_p = 0.0;
  double K = 1.0;
  double p = 2.0;
  double delta = 1.0;
  double r = 1.0;

  void validate() const {
    require(x > 0.0 && std::isfinite(x), "BoundInputs: x must be > 0");
    require(y > 0.0, "BoundInputs: y must be > 0");
    require(B > 0.0 && std::isfinite(B), "BoundInputs: B_n must be > 0");
    require(M_pp >= 0.0 && M_p >= 0.0, "BoundInputs: moment sums must be >= 0");
    require(K >= 1.0, "BoundInputs: K must be >= 1");
    require(p >= 2.0, "BoundInputs: p must be >= 2");
    require(delta > 0.0 && delta <= 1.0, "BoundInputs: delta must lie in (0, 1]");
    require(r > 0.0, "BoundInputs: r must be > 0");
  }
};

inline double clip_capacity(double v) { return std::clamp(v, 0.0, 1.0); }

struct TraceStep {
  std::string label;
  std::string formula;
  double value = 0.0;
};

/// Explicit constants with the steps that produce them.
struct DerivedConstants {
  double p = 2.0;
  double K = 1.0;
  /// Constant of the split bound at the un-substituted threshold (1 + 2 delta) x.
  double C_p_split = 1.0;
  /// Constant valid for the bound as stated for every 0 < delta <= 1.
  double C_p_split_post = 1.0;
  /// delta solving (1 + delta)(1 + 2 delta)^2 - 1 = 1.
  double delta_star = 0.0;
  /// Constant of the Choquet moment bound (K included).
  double C_p_moment = 1.0;
  /// Smallest M > 1 with 1 + M^{-1/p} <= 2^{(p-2)/(2p)}; 0 when p <= 2.
  double M_moricz = 0.0;
  std::vector<TraceStep> trace;

  std::string report() const {
    std::ostringstream os;
    os.precision(12);
    os << "constants for p = " << p << ", K = " << K << "\n";
    for (const auto& s : trace) os << "  " << s.label << ": " << s.formula << " = " << s.value << "\n";
    return os.str();
  }
};

namespace detail {

/// Root of a continuous increasing function on [lo, hi] by bisection.
template <class F>
double bisect_increasing(F&& f, double lo, double hi, double target) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (f(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double delta_prime(double delta) { return (1.0 + delta) * (1.0 + 2.0 * delta) * (1.0 + 2.0 * delta) - 1.0; }

/// delta with delta_prime(delta) = target.
inline double delta_from_prime(double target) {
  return bisect_increasing([](double d) { return delta_prime(d); }, 0.0, 1.0, target);
}

}  // namespace detail

/// Smallest representable M with 1 + M^{-1/p} <= 2^{(p-2)/(2p)}.
inline double moricz_constant(double p) {
  require(p > 2.0, "moricz_constant: requires p > 2");
  const double cap = std::pow(2.0, (p - 2.0) / (2.0 * p));
  double M = std::pow(cap - 1.0, -p);
  while (1.0 + std::pow(M, -1.0 / p) > cap) M = std::nextafter(M, kInf);
  while (1.0 + std::pow(std::nextafter(M, 0.0), -1.0 / p) <= cap) M = std::nextafter(M, 0.0);
  return M;
}

inline DerivedConstants derive_constants(double p, double K = 1.0) {
  require(p >= 2.0, "derive_constants: p must be >= 2");
  require(K >= 1.0, "derive_constants: K must be >= 1");
  DerivedConstants c;
  c.p = p;
  c.K = K;
  const double e = std::numbers::e;
  const double sup_t_log = std::pow(2.0 * p / e, 2.0 * p);
  c.trace.push_back({"sup_{0<t<1} t (log 1/t)^{2p}", "(2p/e)^(2p)", sup_t_log});
  const double shift_factor = std::pow(4.0, 2.0 * p);
  c.trace.push_back({"(2 (1 + delta))^{2p} on 0 < delta <= 1", "4^(2p)", shift_factor});
  const double prefactor = e * e * std::pow(2.0, 2.0 * p - 2.0);
  c.trace.push_back({"exponential-moment prefactor with the remaining terms absorbed", "e^2 2^(2p-2)", prefactor});
  c.C_p_split = prefactor * shift_factor * sup_t_log;
  c.trace.push_back({"C_p (split, threshold (1+2 delta) x)", "e^2 2^(2p-2) 4^(2p) (2p/e)^(2p)", c.C_p_split});
  const double tight = 2.0 + e * e / 4.0 * shift_factor * sup_t_log;
  c.trace.push_back({"tighter traced value (for comparison only)", "2 + (e^2/4) 4^(2p) (2p/e)^(2p)", tight});

  c.delta_star = detail::delta_from_prime(1.0);
  c.trace.push_back({"delta* with (1+delta)(1+2 delta)^2 - 1 = 1", "bisection", c.delta_star});
  const double ratio = 5.0 + 8.0 * c.delta_star + 4.0 * c.delta_star * c.delta_star;
  c.C_p_split_post = c.C_p_split * std::pow(ratio, 2.0 * p) * std::pow(1.0 + 2.0 * c.delta_star, p);
  c.trace.push_back({"C_p (split, stated threshold)", "C_p (delta'/delta)^(2p) (1 + 2 delta)^p at delta*",
                     c.C_p_split_post});

  c.C_p_moment = K * std::pow(p, 1.0 + p / 2.0) * std::exp(p) * std::beta(p / 2.0, p / 2.0) / 2.0;
  c.trace.push_back({"C_p (Choquet moment)", "K p^(1+p/2) e^p B(p/2, p/2) / 2", c.C_p_moment});

  if (p > 2.0) {
    c.M_moricz = moricz_constant(p);
    c.trace.push_back({"M (maximal inequality)", "min M with 1 + M^(-1/p) <= 2^((p-2)/(2p))", c.M_moricz});
  }
  return c;
}

// ---------------------------------------------------------------------------
// Calculators

/// K exp{-x^2 / (2(xy + B)) (1 + (2/3) ln(1 + xy/B))}. Add the capacity of
/// {max_k X_k >= y} for the full bound.
inline double kolmogorov_exp_bound(const BoundInputs& in) {
  in.validate();
  const double u = in.x * in.y / in.B;
  const double expo = in.x * in.x / (2.0 * (in.x * in.y + in.B)) * (1.0 + 2.0 / 3.0 * std::log1p(u));
  return in.K * std::exp(-expo);
}

/// Chernoff bound on the truncated sum. With t unset the minimizing
/// t = ln(1 + xy/B) / y is used.
inline double chernoff_truncated_bound(const BoundInputs& in, std::optional<double> t = std::nullopt) {
  in.validate();
  const double x = in.x;
  const double y = in.y;
  const double B = in.B;
  if (!t) {
    const double u = x * y / B;
    return in.K * std::exp(x / y - (x / y) * (B / (x * y) + 1.0) * std::log1p(u));
  }
  require(*t >= 0.0, "chernoff_truncated_bound: t must be >= 0");
  const double ty = *t * y;
  // (e^{ty} - 1 - ty) / y^2 without cancellation for small ty.
  const double g = (std::expm1(ty) - ty) / (y * y);
  return in.K * std::exp(-*t * x + g * B);
}

enum class SplitForm { stated, pre_substitution, exact_substitution };

/// C_p delta^{-2p} K M_{n,p,+} / x^p + K exp{-x^2 / (2 B (1 + delta))}.
inline double split_moment_bound(const BoundInputs& in, SplitForm form = SplitForm::stated,
                                 bool absolute_moments = false) {
  in.validate();
  const auto c = derive_constants(in.p, in.K);
  const double moments = absolute_moments ? in.M_p : in.M_pp;
  const double gauss = in.K * std::exp(-in.x * in.x / (2.0 * in.B * (1.0 + in.delta)));
  switch (form) {
    case SplitForm::stated:
      return c.C_p_split_post * std::pow(in.delta, -2.0 * in.p) * in.K * moments / std::pow(in.x, in.p) + gauss;
    case SplitForm::pre_substitution:
      return c.C_p_split * std::pow(in.delta, -2.0 * in.p) * in.K * moments / std::pow(in.x, in.p) + gauss;
    case SplitForm::exact_substitution: {
      // in.delta plays the role of delta'; the threshold is z = x.
      const double d = detail::delta_from_prime(in.delta);
      return c.C_p_split * std::pow(d, -2.0 * in.p) * std::pow(1.0 + 2.0 * d, in.p) * in.K * moments /
                 std::pow(in.x, in.p) +
             gauss;
    }
  }
  return kInf;
}

/// K e^r (r B / (r B + x^2))^r. Add the capacity of {max_k X_k^+ >= x/r} for the full bound.
inline double power_tail_bound(const BoundInputs& in) {
  in.validate();
  const double rb = in.r * in.B;
  return in.K * std::exp(in.r) * std::pow(rb / (rb + in.x * in.x), in.r);
}

/// (1 + K e) B / x^2.
inline double chebyshev_bound(const BoundInputs& in) {
  in.validate();
  return (1.0 + in.K * std::numbers::e) * in.B / (in.x * in.x);
}

struct ChoquetMomentBound {
  double max_form = 0.0;
  double sum_form = 0.0;
  double constant = 0.0;
  bool consistent = true;
};

/// Both lines of the Choquet moment bound for C[(S_n^+)^p]:
/// p^p C[(max X_k^+)^p] + C_p B^{p/2} and p^p sum_k C[(X_k^+)^p] + C_p B^{p/2}.
inline ChoquetMomentBound choquet_moment_bound(const BoundInputs& in, const std::vector<double>& per_k_choquet,
                                               double max_term_choquet) {
  require(in.p >= 2.0 && in.B > 0.0 && in.K >= 1.0, "choquet_moment_bound: invalid inputs");
  const auto c = derive_constants(in.p, in.K);
  ChoquetMomentBound out;
  out.constant = c.C_p_moment;
  const double gauss = c.C_p_moment * std::pow(in.B, in.p / 2.0);
  double sum = 0.0;
  for (double v : per_k_choquet) sum += v;
  const double pp = std::pow(in.p, in.p);
  out.max_form = pp * max_term_choquet + gauss;
  out.sum_form = pp * sum + gauss;
  out.consistent = out.max_form <= out.sum_form * (1.0 + 1e-12);
  return out;
}

struct MoriczBound {
  std::size_t n = 0;
  std::size_t m = 0;
  double p = 0.0;
  double M = 0.0;
  double C_p = 0.0;
  double K1 = 0.0;
  double K2 = 0.0;
  /// M m (K1 (log2 m + 1) + K2 m^{(p-2)/(2p)})^p.
  double dyadic = 0.0;
  /// M m (K1 log2 m + K2 m^{(p-2)/(2p)})^p.
  double dyadic_unshifted = 0.0;
  /// C n (log2 n)^p maxC + C n^{p/2} (max E X^2)^{p/2}; the single-block bound at n = 1.
  double one_block = 0.0;
  double one_block_constant = 0.0;
};

/// Single-block moment bound: m (K1 + K2 m^{(p-2)/(2p)})^p.
inline double moricz_block_bound(double m, double p, double K1, double K2) {
  return m * std::pow(K1 + K2 * std::pow(m, (p - 2.0) / (2.0 * p)), p);
}

/// Maximal moment bound for E[max_{m<=n} (S_m^+)^p]. `max_choquet` is
/// max_k C[(X_k^+)^p] and `max_second` is max_k E[X_k^2].
inline MoriczBound moricz_max_bound(double p, std::size_t n, double max_choquet, double max_second,
                                    double K = 1.0) {
  require(p > 2.0 && std::floor(p) == p, "moricz_max_bound: p must be an integer > 2");
  require(n >= 1, "moricz_max_bound: n must be >= 1");
  require(max_choquet >= 0.0 && max_second >= 0.0, "moricz_max_bound: moments must be >= 0");
  const auto c = derive_constants(p, K);
  MoriczBound out;
  out.n = n;
  out.p = p;
  out.M = c.M_moricz;
  out.C_p = std::max(std::pow(p, p), c.C_p_moment);
  out.K1 = std::pow(out.C_p * max_choquet, 1.0 / p);
  out.K2 = std::pow(out.C_p, 1.0 / p) * std::sqrt(max_second);
  std::size_t m = 1;
  while (m < n) m <<= 1;
  out.m = m;
  const double md = static_cast<double>(m);
  const double lg = std::log2(md);
  const double growth = std::pow(md, (p - 2.0) / (2.0 * p));
  out.dyadic = out.M * md * std::pow(out.K1 * (lg + 1.0) + out.K2 * growth, p);
  out.dyadic_unshifted = out.M * md * std::pow(out.K1 * lg + out.K2 * growth, p);
  const double nd = static_cast<double>(n);
  if (n == 1) {
    out.one_block_constant = out.C_p;
    out.one_block = out.C_p * max_choquet + out.C_p * std::pow(max_second, p / 2.0);
  } else {
    out.one_block_constant = out.M * std::pow(2.0, p - 1.0) * out.C_p * std::max(2.0 * std::pow(3.0, p), std::pow(2.0, p / 2.0));
    out.one_block = out.one_block_constant *
                    (nd * std::pow(std::log2(nd), p) * max_choquet + std::pow(nd, p / 2.0) * std::pow(max_second, p / 2.0));
  }
  return out;
}

struct InductionStep {
  int I = 0;
  double combined = 0.0;
  double next_bound = 0.0;
  bool pass = true;
};

/// The doubling step of the maximal inequality: the combined right-hand side at
/// m = 2^I must not exceed M 2^{I+1} (K1 (I+1) + K2 2^{c (I+1)})^p.
inline std::vector<InductionStep> moricz_induction_check(int p, double K1, double K2, int I_max = 20) {
  require(p > 2, "moricz_induction_check: p must be > 2");
  const double M = moricz_constant(p);
  const double c = (p - 2.0) / (2.0 * p);
  const double mp = std::pow(M, 1.0 / p);
  std::vector<InductionStep> out;
  for (int I = 1; I <= I_max; ++I) {
    const double two_i = std::ldexp(1.0, I);
    const double a = K1 * I + K2 * std::pow(2.0, c * I);
    const double b = K1 + K2 * std::pow(2.0, c * I);
    double cross = 0.0;
    for (int j = 0; j <= p - 1; ++j) {
      double binom = 1.0;
      for (int k = 1; k <= j; ++k) binom = binom * (p - j + k) / k;
      cross += binom * std::pow(b, j) * std::pow(mp * a, p - j);
    }
    InductionStep s;
    s.I = I;
    s.combined = M * two_i * std::pow(a, p) + two_i * cross;
    s.next_bound = M * 2.0 * two_i * std::pow(K1 * (I + 1) + K2 * std::pow(2.0, c * (I + 1)), p);
    s.pass = s.combined <= s.next_bound * (1.0 + 1e-12);
    out.push_back(s);
  }
  return out;
}

struct ConjugateBounds {
  double exp_term = 0.0;
  double split = 0.0;
  double chebyshev = 0.0;
};

/// Bounds for the lower capacity of {S_n >= x}: same closed forms, with the
/// absolute moment sum in the split bound.
inline ConjugateBounds conjugate_bounds(const BoundInputs& in, SplitForm form = SplitForm::stated) {
  ConjugateBounds out;
  out.exp_term = kolmogorov_exp_bound(in);
  out.split = split_moment_bound(in, form, true);
  out.chebyshev = chebyshev_bound(in);
  return out;
}

// ---------------------------------------------------------------------------
// Exact quantities on discrete models

/// E[max_{m<=n} (S_m^+)^p] for i.i.d. coordinates by enumerating every path.
inline double exact_max_partial_sum_moment(const Marginal& law, std::size_t n, double p) {
  const auto measure = ProductMeasure::iid(law);
  double total = 0.0;
  for_each_outcome(measure, n, [&](std::span<const double> x, double prob) {
    double s = 0.0;
    double best = 0.0;
    for (double v : x) {
      s += v;
      best = std::max(best, s);
    }
    total += prob * std::pow(best, p);
  });
  return total;
}

/// E[(S_n^+)^p] for i.i.d. coordinates by enumeration.
inline double exact_positive_sum_moment(const Marginal& law, std::size_t n, double p) {
  const auto measure = ProductMeasure::iid(law);
  double total = 0.0;
  for_each_outcome(measure, n, [&](std::span<const double> x, double prob) {
    double s = 0.0;
    for (double v : x) s += v;
    if (s > 0.0) total += prob * std::pow(s, p);
  });
  return total;
}

/// A finite model: each table is one measure of the family.
struct DiscreteModel {
  std::vector<JointTable> tables;
  std::size_t n = 0;
  std::string label;
};

struct ModelMoments {
  double B = 0.0;
  double M_pp_2 = 0.0;
  std::vector<double> upper_means;
  std::vector<double> lower_means;
  std::vector<double> max_atom;
};

namespace detail {

inline double table_expect(const JointTable& t, const std::function<double(std::span<const double>)>& f) {
  double s = 0.0;
  t.for_each([&](std::span<const double> x, double p) { s += p * f(x); });
  return s;
}

/// sup over tables of sum_k E[phi(X_k)] computed per coordinate (upper expectation of each X_k).
inline double upper_moment_sum(const DiscreteModel& m, const std::function<double(double)>& phi) {
  double total = 0.0;
  for (std::size_t k = 0; k < m.n; ++k) {
    double best = -kInf;
    for (const auto& t : m.tables) {
      best = std::max(best, table_expect(t, [&](std::span<const double> x) { return phi(x[k]); }));
    }
    total += best;
  }
  return total;
}

inline std::vector<Atom> sum_law(const JointTable& t, std::size_t n) {
  return statistic_law([&](auto&& fn) { t.for_each(fn); },
                       [n](std::span<const double> x) {
                         double s = 0.0;
                         for (std::size_t i = 0; i < n; ++i) s += x[i];
                         return s;
                       });
}

}  // namespace detail

/// Exact capacity of {S_n >= x}: max (upper) or min (lower) over the family.
inline double exact_sum_capacity(const std::vector<std::vector<Atom>>& laws, double x, bool upper) {
  double best = upper ? 0.0 : 1.0;
  for (const auto& law : laws) {
    const double v = law_survival_ge(law, x);
    best = upper ? std::max(best, v) : std::min(best, v);
  }
  return best;
}

/// Exact upper capacity of {max_k X_k >= y}.
inline double exact_max_capacity(const DiscreteModel& m, double y) {
  double best = 0.0;
  for (const auto& t : m.tables) {
    double p = 0.0;
    t.for_each([&](std::span<const double> x, double prob) {
      for (std::size_t k = 0; k < m.n; ++k) {
        if (x[k] >= y) {
          p += prob;
          break;
        }
      }
    });
    best = std::max(best, p);
  }
  return std::min(best, 1.0);
}

/// Exact Choquet integral of (S_n^+)^p with respect to the upper capacity.
inline double exact_sum_choquet(const std::vector<std::vector<Atom>>& laws, double p) {
  std::vector<double> levels;
  for (const auto& law : laws) {
    for (const auto& a : law) {
      if (a.value > 0.0) levels.push_back(a.value);
    }
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  double total = 0.0;
  double prev = 0.0;
  for (double t : levels) {
    // On (prev, t^p] the tail capacity is sup_P P(S^+ >= t).
    const double lv = std::pow(t, p);
    total += (lv - prev) * exact_sum_capacity(laws, t, true);
    prev = lv;
  }
  return total;
}

/// Exact Choquet integral of (max_k X_k^+)^p with respect to the upper capacity.
inline double exact_max_choquet(const DiscreteModel& m, double p) {
  std::vector<double> levels;
  for (const auto& t : m.tables) {
    for (const auto& row : t.outcomes) {
      for (std::size_t k = 0; k < m.n; ++k) {
        if (row[k] > 0.0) levels.push_back(row[k]);
      }
    }
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  double total = 0.0;
  double prev = 0.0;
  for (double y : levels) {
    const double lv = std::pow(y, p);
    total += (lv - prev) * exact_max_capacity(m, y);
    prev = lv;
  }
  return total;
}

/// Exact Choquet integral of (X_k^+)^p with respect to the upper capacity.
inline double exact_coordinate_choquet(const DiscreteModel& m, std::size_t k, double p) {
  std::vector<double> levels;
  for (const auto& t : m.tables) {
    for (const auto& row : t.outcomes) {
      if (row[k] > 0.0) levels.push_back(row[k]);
    }
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  double total = 0.0;
  double prev = 0.0;
  for (double y : levels) {
    const double lv = std::pow(y, p);
    double best = 0.0;
    for (const auto& t : m.tables) {
      best = std::max(best, detail::table_expect(t, [&](std::span<const double> x) { return x[k] >= y ? 1.0 : 0.0; }));
    }
    total += (lv - prev) * best;
    prev = lv;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Randomized exhaustive dominance

enum class CorpusKind { product_family, location_family, permutation };

struct DominanceOptions {
  std::size_t cases_per_kind = 200;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::size_t x_points = 20;
};

struct DominanceViolation {
  std::string model;
  std::string bound;
  double x = 0.0;
  double exact = 0.0;
  double value = 0.0;
};

struct DominanceReport {
  std::size_t models = 0;
  std::size_t upper_models = 0;
  std::size_t lower_models = 0;
  std::size_t comparisons = 0;
  std::size_t violations = 0;
  /// Largest exact / bound ratio seen over all comparisons.
  double worst_ratio = 0.0;
  std::string worst_bound;
  std::vector<DominanceViolation> first_violations;
};

namespace detail {

inline std::vector<Atom> random_law(CounterRng& rng, std::size_t max_atoms) {
  const std::size_t k = 2 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(max_atoms - 1));
  std::vector<Atom> atoms;
  double total = 0.0;
  for (std::size_t i = 0; i < std::min(k, max_atoms); ++i) {
    const double v = std::round((6.0 * rng.uniform() - 3.0) * 8.0) / 8.0;
    const double w = 0.1 + rng.uniform();
    atoms.push_back({v, w});
    total += w;
  }
  for (auto& a : atoms) a.probability /= total;
  return atoms;
}

inline double law_mean(const std::vector<Atom>& atoms) {
  double s = 0.0;
  for (const auto& a : atoms) s += a.value * a.probability;
  return s;
}

inline JointTable shifted_product_table(const std::vector<std::vector<Atom>>& laws, const std::vector<double>& shift) {
  std::vector<Marginal> ms;
  for (std::size_t k = 0; k < laws.size(); ++k) {
    auto atoms = laws[k];
    for (auto& a : atoms) a.value -= shift[k];
    ms.push_back(Marginal::discrete(atoms));
  }
  return product_table(ProductMeasure(ms), laws.size());
}

/// Random model of the requested kind. The upper-centered version has
/// sup_P E_P[X_k] = 0; the lower-centered version has inf_P E_P[X_k] = 0.
inline DiscreteModel random_model(CorpusKind kind, std::size_t index, std::uint64_t seed, bool lower_centered) {
  CounterRng rng(seed, stream_id(stream_tag::kCorpus, static_cast<std::uint64_t>(kind) + 0xB0, index));
  DiscreteModel model;
  const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 5.0);  // 2..6
  model.n = n;
  switch (kind) {
    case CorpusKind::product_family: {
      const std::size_t members = 1 + static_cast<std::size_t>(rng.uniform() * 3.0);
      std::vector<std::vector<std::vector<Atom>>> laws(members);
      for (auto& member : laws) {
        for (std::size_t k = 0; k < n; ++k) member.push_back(random_law(rng, n >= 5 ? 3 : 4));
      }
      std::vector<double> shift(n, -kInf);
      for (std::size_t k = 0; k < n; ++k) {
        for (const auto& member : laws) shift[k] = std::max(shift[k], law_mean(member[k]));
      }
      for (const auto& member : laws) model.tables.push_back(shifted_product_table(member, shift));
      model.label = "product family #" + std::to_string(index);
      break;
    }
    case CorpusKind::location_family: {
      const std::size_t members = 2 + static_cast<std::size_t>(rng.uniform() * 2.0);
      std::vector<std::vector<Atom>> base;
      for (std::size_t k = 0; k < n; ++k) base.push_back(random_law(rng, n >= 5 ? 3 : 4));
      std::vector<double> offsets{0.0};
      for (std::size_t j = 1; j < members; ++j) offsets.push_back(std::round(rng.uniform() * 8.0) / 8.0);
      std::vector<double> shift(n);
      for (std::size_t k = 0; k < n; ++k) {
        const double mean = law_mean(base[k]);
        const double hi = *std::max_element(offsets.begin(), offsets.end());
        const double lo = *std::min_element(offsets.begin(), offsets.end());
        shift[k] = mean + (lower_centered ? lo : hi);
      }
      for (double off : offsets) {
        std::vector<double> s = shift;
        for (auto& v : s) v -= off;
        model.tables.push_back(shifted_product_table(base, s));
      }
      model.label = "location family #" + std::to_string(index);
      break;
    }
    case CorpusKind::permutation: {
      // Draws without replacement of n out of pool values: negatively associated, K = 1.
      const std::size_t small = 2 + static_cast<std::size_t>(rng.uniform() * 3.0);  // 2..4
      model.n = small;
      const std::size_t pool = small + 1 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(5 - small));
      std::vector<double> values(pool);
      for (auto& v : values) v = std::round((6.0 * rng.uniform() - 3.0) * 8.0) / 8.0;
      double mean = 0.0;
      for (double v : values) mean += v / static_cast<double>(pool);
      for (auto& v : values) v -= mean;
      std::vector<std::size_t> perm(pool);
      for (std::size_t i = 0; i < pool; ++i) perm[i] = i;
      JointTable t;
      t.dimension = small;
      std::size_t count = 0;
      do {
        std::vector<double> row(small);
        for (std::size_t i = 0; i < small; ++i) row[i] = values[perm[i]];
        t.outcomes.push_back(row);
        ++count;
      } while (std::next_permutation(perm.begin(), perm.end()));
      t.probabilities.assign(count, 1.0 / static_cast<double>(count));
      model.tables.push_back(std::move(t));
      model.label = "permutation #" + std::to_string(index);
      break;
    }
  }
  return model;
}

}  // namespace detail

/// Log-spaced grid on [0.1 sqrt(B), 6 sqrt(B)].
inline std::vector<double> dominance_x_grid(double B, std::size_t points = 20) {
  std::vector<double> xs(points);
  const double lo = std::log(0.1 * std::sqrt(B));
  const double hi = std::log(6.0 * std::sqrt(B));
  for (std::size_t i = 0; i < points; ++i) {
    xs[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1));
  }
  return xs;
}

namespace detail {

struct CaseTally {
  std::size_t comparisons = 0;
  double worst_ratio = 0.0;
  std::string worst_bound;
  std::vector<DominanceViolation> violations;

  void compare(const DiscreteModel& m, const std::string& name, double x, double exact, double bound) {
    ++comparisons;
    const double ratio = bound > 0.0 ? exact / bound : (exact > 0.0 ? kInf : 0.0);
    if (ratio > worst_ratio) {
      worst_ratio = ratio;
      worst_bound = name;
    }
    if (exact > bound * (1.0 + 1e-12) + 1e-15) violations.push_back({m.label, name, x, exact, bound});
  }
};

/// Every upper-capacity bound at every grid point for one model.
inline CaseTally check_upper_model(const DiscreteModel& m, std::size_t x_points) {
  CaseTally tally;
  std::vector<std::vector<Atom>> laws;
  for (const auto& t : m.tables) laws.push_back(sum_law(t, m.n));
  const double B = upper_moment_sum(m, [](double v) { return v * v; });
  if (!(B > 0.0)) return tally;
  double max_atom = 0.0;
  for (const auto& t : m.tables) {
    for (const auto& row : t.outcomes) {
      for (std::size_t k = 0; k < m.n; ++k) max_atom = std::max(max_atom, row[k]);
    }
  }
  const double ps[] = {2.0, 3.0, 4.0};
  double mpp[3];
  for (int i = 0; i < 3; ++i) {
    const double p = ps[i];
    mpp[i] = upper_moment_sum(m, [p](double v) { return v > 0.0 ? std::pow(v, p) : 0.0; });
  }
  for (double x : dominance_x_grid(B, x_points)) {
    const double exact = exact_sum_capacity(laws, x, true);
    BoundInputs in;
    in.x = x;
    in.n = m.n;
    in.B = B;
    in.K = 1.0;
    std::vector<double> ys{x / 4.0, x / 2.0, x, 2.0 * x};
    if (max_atom > 0.0) ys.push_back(max_atom);
    for (double y : ys) {
      in.y = y;
      const double max_cap = exact_max_capacity(m, y);
      tally.compare(m, "exp", x, exact, clip_capacity(max_cap + kolmogorov_exp_bound(in)));
      tally.compare(m, "chernoff", x, exact, clip_capacity(max_cap + chernoff_truncated_bound(in)));
    }
    in.y = 1.0;
    for (int i = 0; i < 3; ++i) {
      in.p = ps[i];
      in.M_pp = mpp[i];
      for (double delta : {0.25, 0.5, 1.0}) {
        in.delta = delta;
        tally.compare(m, "split", x, exact, clip_capacity(split_moment_bound(in, SplitForm::stated)));
        tally.compare(m, "split-exact", x, exact, clip_capacity(split_moment_bound(in, SplitForm::exact_substitution)));
      }
    }
    in.p = 2.0;
    in.delta = 1.0;
    for (double r : {1.0, 2.0, 4.0}) {
      in.r = r;
      const double max_cap = exact_max_capacity(m, x / r);
      tally.compare(m, "power", x, exact, clip_capacity(max_cap + power_tail_bound(in)));
    }
    tally.compare(m, "chebyshev", x, exact, clip_capacity(chebyshev_bound(in)));
  }
  // Choquet moment bound on (S_n^+)^p.
  for (int i = 0; i < 3; ++i) {
    const double p = ps[i];
    std::vector<double> per_k;
    for (std::size_t k = 0; k < m.n; ++k) per_k.push_back(exact_coordinate_choquet(m, k, p));
    BoundInputs in;
    in.B = B;
    in.p = p;
    const auto cm = choquet_moment_bound(in, per_k, exact_max_choquet(m, p));
    const double exact = exact_sum_choquet(laws, p);
    tally.compare(m, "choquet-moment", p, exact, cm.max_form);
    tally.compare(m, "choquet-moment-sum", p, exact, cm.sum_form);
    tally.compare(m, "choquet-moment-order", p, cm.max_form, cm.sum_form);
  }
  return tally;
}

/// Lower-capacity bounds for a model that is END under the lower expectation.
inline CaseTally check_lower_model(const DiscreteModel& m, std::size_t x_points) {
  CaseTally tally;
  std::vector<std::vector<Atom>> laws;
  for (const auto& t : m.tables) laws.push_back(sum_law(t, m.n));
  const double B = upper_moment_sum(m, [](double v) { return v * v; });
  if (!(B > 0.0)) return tally;
  const double ps[] = {2.0, 3.0, 4.0};
  double mp[3];
  for (int i = 0; i < 3; ++i) {
    const double p = ps[i];
    mp[i] = upper_moment_sum(m, [p](double v) { return std::pow(std::abs(v), p); });
  }
  for (double x : dominance_x_grid(B, x_points)) {
    const double exact = exact_sum_capacity(laws, x, false);
    BoundInputs in;
    in.x = x;
    in.n = m.n;
    in.B = B;
    for (double y : {x / 4.0, x / 2.0, x, 2.0 * x}) {
      in.y = y;
      const double max_cap = exact_max_capacity(m, y);
      tally.compare(m, "conjugate-exp", x, exact, clip_capacity(max_cap + conjugate_bounds(in).exp_term));
    }
    for (int i = 0; i < 3; ++i) {
      in.p = ps[i];
      in.M_p = mp[i];
      for (double delta : {0.25, 0.5, 1.0}) {
        in.delta = delta;
        tally.compare(m, "conjugate-split", x, exact, clip_capacity(conjugate_bounds(in).split));
      }
    }
    tally.compare(m, "conjugate-chebyshev", x, exact, clip_capacity(conjugate_bounds(in).chebyshev));
  }
  return tally;
}

}  // namespace detail

/// Randomized exhaustive dominance sweep over product families, location
/// families and permutation models.
inline DominanceReport exhaustive_dominance(const DominanceOptions& options = {}) {
  struct Job {
    CorpusKind kind;
    std::size_t index;
    bool lower;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < options.cases_per_kind; ++i) {
    jobs.push_back({CorpusKind::product_family, i, false});
    jobs.push_back({CorpusKind::location_family, i, false});
    jobs.push_back({CorpusKind::location_family, i, true});
    jobs.push_back({CorpusKind::permutation, i, false});
  }
  auto tallies = parallel_map<detail::CaseTally>(jobs.size(), options.workers, [&](std::size_t j) {
    const auto& job = jobs[j];
    const auto model = detail::random_model(job.kind, job.index, options.seed, job.lower);
    return job.lower ? detail::check_lower_model(model, options.x_points)
                     : detail::check_upper_model(model, options.x_points);
  });
  DominanceReport report;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const auto& t = tallies[j];
    ++report.models;
    (jobs[j].lower ? report.lower_models : report.upper_models) += 1;
    report.comparisons += t.comparisons;
    report.violations += t.violations.size();
    if (t.worst_ratio > report.worst_ratio) {
      report.worst_ratio = t.worst_ratio;
      report.worst_bound = t.worst_bound;
    }
    for (const auto& v : t.violations) {
      if (report.first_violations.size() < 20) report.first_violations.push_back(v);
    }
  }
  return report;
}

}  // namespace caplim
