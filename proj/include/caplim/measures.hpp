#pragma once

// One-dimensional marginals, product measures and parametrized measure families.

#include "caplim/error.hpp"
#include "caplim/parallel.hpp"
#include "caplim/quadrature.hpp"
#include "caplim/rng.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/hypergeometric_1F1.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace caplim {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class MarginalKind { normal, uniform, bernoulli, discrete, pareto };

inline const char* to_string(MarginalKind kind) {
  switch (kind) {
    case MarginalKind::normal: return "normal";
    case MarginalKind::uniform: return "uniform";
    case MarginalKind::bernoulli: return "bernoulli";
    case MarginalKind::discrete: return "discrete";
    case MarginalKind::pareto: return "pareto";
  }
  return "?";
}

struct Atom {
  double value = 0.0;
  double probability = 0.0;
};

/// Exact k-th moments. `finite` is false (and both values +inf) when the moment
/// does not exist.
struct Moment {
  double raw = 0.0;
  double absolute = 0.0;
  bool finite = true;
};

/// A named one-dimensional law. Immutable after construction.
class Marginal {
 public:
  static Marginal normal(double mean, double variance) {
    require(std::isfinite(mean) && std::isfinite(variance), "normal: parameters must be finite");
    require(variance >= 0.0, "normal: variance must be >= 0");
    Marginal m(MarginalKind::normal);
    m.a_ = mean;
    m.b_ = variance;
    m.sd_ = std::sqrt(variance);
    return m;
  }

  static Marginal uniform(double lo, double hi) {
    require(std::isfinite(lo) && std::isfinite(hi), "uniform: bounds must be finite");
    require(hi > lo, "uniform: requires hi > lo");
    Marginal m(MarginalKind::uniform);
    m.a_ = lo;
    m.b_ = hi;
    return m;
  }

  static Marginal bernoulli(double p) {
    require(p >= 0.0 && p <= 1.0, "bernoulli: requires 0 <= p <= 1");
    Marginal m(MarginalKind::bernoulli);
    m.a_ = p;
    m.atoms_ = {{0.0, 1.0 - p}, {1.0, p}};
    m.finish_atoms();
    return m;
  }

  static Marginal discrete(std::vector<Atom> atoms) {
    require(!atoms.empty(), "discrete: needs at least one atom");
    double total = 0.0;
    for (const auto& atom : atoms) {
      require(std::isfinite(atom.value), "discrete: atom values must be finite");
      require(atom.probability >= 0.0, "discrete: probabilities must be nonnegative");
      total += atom.probability;
    }
    require(std::abs(total - 1.0) <= 1e-12, "discrete: probabilities must sum to 1 within 1e-12");
    std::sort(atoms.begin(), atoms.end(),
              [](const Atom& x, const Atom& y) { return x.value < y.value; });
    std::vector<Atom> merged;
    for (const auto& atom : atoms) {
      if (!merged.empty() && merged.back().value == atom.value) {
        merged.back().probability += atom.probability;
      } else {
        merged.push_back(atom);
      }
    }
    Marginal m(MarginalKind::discrete);
    m.atoms_ = std::move(merged);
    m.finish_atoms();
    return m;
  }

  static Marginal point_mass(double value) { return discrete({{value, 1.0}}); }

  static Marginal pareto(double shape, double scale) {
    require(std::isfinite(shape) && shape > 0.0, "pareto: shape must be > 0");
    require(std::isfinite(scale) && scale > 0.0, "pareto: scale must be > 0");
    Marginal m(MarginalKind::pareto);
    m.a_ = shape;
    m.b_ = scale;
    return m;
  }

  MarginalKind kind() const noexcept { return kind_; }
  bool is_discrete() const noexcept {
    return kind_ == MarginalKind::discrete || kind_ == MarginalKind::bernoulli ||
           (kind_ == MarginalKind::normal && sd_ == 0.0);
  }

  // Raw parameters; interpretation depends on kind.
  double normal_mean() const noexcept { return a_; }
  double normal_variance() const noexcept { return b_; }
  double uniform_lo() const noexcept { return a_; }
  double uniform_hi() const noexcept { return b_; }
  double bernoulli_p() const noexcept { return a_; }
  double pareto_shape() const noexcept { return a_; }
  double pareto_scale() const noexcept { return b_; }

  /// Support atoms for discrete kinds (including a zero-variance normal).
  std::vector<Atom> atoms() const {
    if (kind_ == MarginalKind::normal && sd_ == 0.0) return {{a_, 1.0}};
    return atoms_;
  }

  double mean() const {
    switch (kind_) {
      case MarginalKind::normal: return a_;
      case MarginalKind::uniform: return 0.5 * (a_ + b_);
      case MarginalKind::bernoulli: return a_;
      case MarginalKind::discrete: {
        double s = 0.0;
        for (const auto& atom : atoms_) s += atom.value * atom.probability;
        return s;
      }
      case MarginalKind::pareto: return a_ > 1.0 ? a_ * b_ / (a_ - 1.0) : kInf;
    }
    return 0.0;
  }

  double variance() const {
    switch (kind_) {
      case MarginalKind::normal: return b_;
      case MarginalKind::uniform: return (b_ - a_) * (b_ - a_) / 12.0;
      case MarginalKind::bernoulli: return a_ * (1.0 - a_);
      case MarginalKind::discrete: {
        const double mu = mean();
        double s = 0.0;
        for (const auto& atom : atoms_) s += (atom.value - mu) * (atom.value - mu) * atom.probability;
        return s;
      }
      case MarginalKind::pareto:
        return a_ > 2.0 ? b_ * b_ * a_ / ((a_ - 1.0) * (a_ - 1.0) * (a_ - 2.0)) : kInf;
    }
    return 0.0;
  }

  /// P(X <= x).
  double cdf(double x) const {
    switch (kind_) {
      case MarginalKind::normal:
        if (sd_ == 0.0) return x >= a_ ? 1.0 : 0.0;
        return 0.5 * std::erfc(-(x - a_) / (sd_ * std::numbers::sqrt2));
      case MarginalKind::uniform:
        return std::clamp((x - a_) / (b_ - a_), 0.0, 1.0);
      case MarginalKind::bernoulli:
      case MarginalKind::discrete: {
        const auto it = std::upper_bound(atoms_.begin(), atoms_.end(), x,
                                         [](double v, const Atom& atom) { return v < atom.value; });
        const auto idx = static_cast<std::size_t>(it - atoms_.begin());
        return idx == 0 ? 0.0 : cumulative_[idx - 1];
      }
      case MarginalKind::pareto:
        return x <= b_ ? 0.0 : 1.0 - std::pow(b_ / x, a_);
    }
    return 0.0;
  }

  /// P(X < x).
  double cdf_left(double x) const {
    switch (kind_) {
      case MarginalKind::normal:
        if (sd_ == 0.0) return x > a_ ? 1.0 : 0.0;
        return cdf(x);
      case MarginalKind::bernoulli:
      case MarginalKind::discrete: {
        const auto it = std::lower_bound(atoms_.begin(), atoms_.end(), x,
                                         [](const Atom& atom, double v) { return atom.value < v; });
        const auto idx = static_cast<std::size_t>(it - atoms_.begin());
        return idx == 0 ? 0.0 : cumulative_[idx - 1];
      }
      default:
        return cdf(x);
    }
  }

  /// P(X >= t), computed without cancellation in the upper tail.
  double survival_ge(double t) const {
    switch (kind_) {
      case MarginalKind::normal:
        if (sd_ == 0.0) return t <= a_ ? 1.0 : 0.0;
        return 0.5 * std::erfc((t - a_) / (sd_ * std::numbers::sqrt2));
      case MarginalKind::pareto:
        return t <= b_ ? 1.0 : std::pow(b_ / t, a_);
      case MarginalKind::uniform:
        return std::clamp((b_ - t) / (b_ - a_), 0.0, 1.0);
      default:
        return tail_sum(t, true);
    }
  }

  /// P(X > t).
  double survival_gt(double t) const {
    switch (kind_) {
      case MarginalKind::normal:
        if (sd_ == 0.0) return t < a_ ? 1.0 : 0.0;
        return survival_ge(t);
      case MarginalKind::bernoulli:
      case MarginalKind::discrete:
        return tail_sum(t, false);
      default:
        return survival_ge(t);
    }
  }

  /// Generalized inverse of the cdf: inf{x : F(x) >= u}, u in (0, 1).
  double quantile(double u) const {
    switch (kind_) {
      case MarginalKind::normal:
        if (sd_ == 0.0) return a_;
        return a_ - sd_ * std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
      case MarginalKind::uniform:
        return a_ + u * (b_ - a_);
      case MarginalKind::bernoulli:
      case MarginalKind::discrete: {
        const auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), u);
        const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()),
                                               atoms_.size() - 1);
        return atoms_[idx].value;
      }
      case MarginalKind::pareto:
        return b_ * std::pow(1.0 - u, -1.0 / a_);
    }
    return 0.0;
  }

  /// One draw. Every kind consumes a fixed number of variates from `rng`, so
  /// measures of the same kind driven by the same stream are coupled
  /// (common random numbers).
  double sample(CounterRng& rng) const {
    switch (kind_) {
      case MarginalKind::normal: return a_ + sd_ * rng.normal();
      case MarginalKind::pareto: return b_ * std::pow(rng.uniform(), -1.0 / a_);
      default: return quantile(rng.uniform());
    }
  }

  /// Expectation of a general function by exact summation or quadrature. The
  /// caller is responsible for integrability.
  double expect(const std::function<double(double)>& f) const {
    switch (kind_) {
      case MarginalKind::normal: {
        if (sd_ == 0.0) return f(a_);
        const double mu = a_;
        const double sd = sd_;
        auto g = [&](double z) {
          return f(mu + sd * z) * std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
        };
        return quadrature::integrate(g, -40.0, -8.0) + quadrature::integrate(g, -8.0, 0.0) +
               quadrature::integrate(g, 0.0, 8.0) + quadrature::integrate(g, 8.0, 40.0);
      }
      case MarginalKind::uniform: {
        const double mid = 0.5 * (a_ + b_);
        return (quadrature::integrate(f, a_, mid) + quadrature::integrate(f, mid, b_)) / (b_ - a_);
      }
      case MarginalKind::bernoulli:
      case MarginalKind::discrete: {
        double s = 0.0;
        for (const auto& atom : atoms_) {
          if (atom.probability > 0.0) s += atom.probability * f(atom.value);
        }
        return s;
      }
      case MarginalKind::pareto: {
        const double shape = a_;
        const double scale = b_;
        // X = scale * v^{-1/shape} with v uniform on (0, 1).
        return quadrature::integrate_unit(
            [&](double v) { return f(scale * std::pow(v, -1.0 / shape)); });
      }
    }
    return 0.0;
  }

  /// Largest q for which E|X|^q is finite (+inf when all moments exist).
  double moment_limit() const noexcept { return kind_ == MarginalKind::pareto ? a_ : kInf; }

  std::string describe() const {
    std::ostringstream os;
    os.precision(12);
    switch (kind_) {
      case MarginalKind::normal: os << "normal(" << a_ << ", " << b_ << ")"; break;
      case MarginalKind::uniform: os << "uniform(" << a_ << ", " << b_ << ")"; break;
      case MarginalKind::bernoulli: os << "bernoulli(" << a_ << ")"; break;
      case MarginalKind::pareto: os << "pareto(" << a_ << ", " << b_ << ")"; break;
      case MarginalKind::discrete: {
        os << "discrete{";
        for (std::size_t i = 0; i < atoms_.size(); ++i) {
          os << (i ? ", " : "") << "(" << atoms_[i].value << ", " << atoms_[i].probability << ")";
        }
        os << "}";
        break;
      }
    }
    return os.str();
  }

 private:
  explicit Marginal(MarginalKind kind) : kind_(kind) {}

  void finish_atoms() {
    cumulative_.resize(atoms_.size());
    double running = 0.0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      running += atoms_[i].probability;
      cumulative_[i] = running;
    }
    if (!cumulative_.empty()) cumulative_.back() = 1.0;
  }

  double tail_sum(double t, bool inclusive) const {
    double s = 0.0;
    for (auto it = atoms_.rbegin(); it != atoms_.rend(); ++it) {
      if (inclusive ? it->value >= t : it->value > t) {
        s += it->probability;
      } else {
        break;
      }
    }
    return std::min(s, 1.0);
  }

  MarginalKind kind_;
  double a_ = 0.0;
  double b_ = 0.0;
  double sd_ = 0.0;
  std::vector<Atom> atoms_;
  std::vector<double> cumulative_;
};

namespace detail {

inline double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline double double_factorial_odd(int j) {  // (j-1)!! for even j, i.e. E[Z^j]
  double r = 1.0;
  for (int i = j - 1; i > 1; i -= 2) r *= i;
  return r;
}

}  // namespace detail

/// k-th raw and absolute moments, closed form for every kind.
inline Moment moment(const Marginal& m, int k) {
  require(k >= 1, "moment: order must be >= 1");
  switch (m.kind()) {
    case MarginalKind::normal: {
      const double mu = m.normal_mean();
      const double var = m.normal_variance();
      const double sd = std::sqrt(var);
      double raw = 0.0;
      for (int j = 0; j <= k; j += 2) {
        raw += detail::binomial(k, j) * std::pow(mu, k - j) * std::pow(sd, j) *
               detail::double_factorial_odd(j);
      }
      double absolute = raw;
      if (k % 2 == 1) {
        if (sd == 0.0) {
          absolute = std::pow(std::abs(mu), k);
        } else {
          const double half = 0.5 * k;
          absolute = std::pow(sd, k) * std::pow(2.0, half) * boost::math::tgamma(half + 0.5) /
                     std::sqrt(std::numbers::pi) *
                     boost::math::hypergeometric_1F1(-half, 0.5, -mu * mu / (2.0 * var));
        }
      }
      return {raw, absolute, true};
    }
    case MarginalKind::uniform: {
      const double lo = m.uniform_lo();
      const double hi = m.uniform_hi();
      const double width = hi - lo;
      const double raw = (std::pow(hi, k + 1) - std::pow(lo, k + 1)) / ((k + 1) * width);
      double absolute;
      if (lo >= 0.0) {
        absolute = raw;
      } else if (hi <= 0.0) {
        absolute = (std::pow(-lo, k + 1) - std::pow(-hi, k + 1)) / ((k + 1) * width);
      } else {
        absolute = (std::pow(-lo, k + 1) + std::pow(hi, k + 1)) / ((k + 1) * width);
      }
      return {raw, absolute, true};
    }
    case MarginalKind::bernoulli:
    case MarginalKind::discrete: {
      Moment out{0.0, 0.0, true};
      for (const auto& atom : m.atoms()) {
        out.raw += atom.probability * std::pow(atom.value, k);
        out.absolute += atom.probability * std::pow(std::abs(atom.value), k);
      }
      return out;
    }
    case MarginalKind::pareto: {
      const double shape = m.pareto_shape();
      if (k >= shape) return {kInf, kInf, false};
      const double v = shape * std::pow(m.pareto_scale(), k) / (shape - k);
      return {v, v, true};
    }
  }
  return {};
}

inline double positive_part_moment(const Marginal& m, double q);

/// E[|X|^q] for real q > 0.
inline double absolute_moment(const Marginal& m, double q) {
  require(q > 0.0, "absolute_moment: order must be > 0");
  if (q >= m.moment_limit()) return kInf;
  const double rounded = std::round(q);
  if (rounded == q && rounded <= 64) return moment(m, static_cast<int>(rounded)).absolute;
  if (m.kind() == MarginalKind::pareto) {
    const double shape = m.pareto_shape();
    return shape * std::pow(m.pareto_scale(), q) / (shape - q);
  }
  if (m.kind() == MarginalKind::normal && m.normal_mean() == 0.0) {
    const double sd = std::sqrt(m.normal_variance());
    return std::pow(sd, q) * std::pow(2.0, 0.5 * q) * boost::math::tgamma(0.5 * q + 0.5) /
           std::sqrt(std::numbers::pi);
  }
  if (m.kind() == MarginalKind::normal) {
    return positive_part_moment(m, q) + positive_part_moment(Marginal::normal(-m.normal_mean(), m.normal_variance()), q);
  }
  return m.expect([q](double x) { return std::pow(std::abs(x), q); });
}

/// E[(X^+)^q] for real q > 0.
inline double positive_part_moment(const Marginal& m, double q) {
  require(q > 0.0, "positive_part_moment: order must be > 0");
  switch (m.kind()) {
    case MarginalKind::pareto: return absolute_moment(m, q);
    case MarginalKind::bernoulli: return m.bernoulli_p();
    case MarginalKind::discrete: {
      double s = 0.0;
      for (const auto& atom : m.atoms()) {
        if (atom.value > 0.0) s += atom.probability * std::pow(atom.value, q);
      }
      return s;
    }
    case MarginalKind::uniform: {
      const double lo = m.uniform_lo();
      const double hi = m.uniform_hi();
      if (hi <= 0.0) return 0.0;
      const double from = std::max(lo, 0.0);
      return (std::pow(hi, q + 1) - std::pow(from, q + 1)) / ((q + 1) * (hi - lo));
    }
    case MarginalKind::normal: {
      const double mu = m.normal_mean();
      const double sd = std::sqrt(m.normal_variance());
      if (sd == 0.0) return mu > 0.0 ? std::pow(mu, q) : 0.0;
      const double z0 = -mu / sd;
      auto g = [&](double z) {
        return std::pow(mu + sd * z, q) * std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
      };
      if (z0 >= 40.0) return 0.0;
      if (z0 <= -40.0) return quadrature::integrate(g, -40.0, 0.0) + quadrature::integrate(g, 0.0, 8.0) +
                              quadrature::integrate(g, 8.0, 40.0);
      // The integrand behaves like (z - z0)^q at the kink.
      const double near = std::min(z0 + 1.0, 40.0);
      const double mid = std::max(near, 8.0);
      return quadrature::integrate_endpoint(g, z0, near) + quadrature::integrate(g, near, mid) +
             quadrature::integrate(g, mid, 40.0);
    }
  }
  return 0.0;
}

/// Independent coordinates under one measure. Coordinates past the declared list
/// repeat the last marginal (index-stationary extension).
class ProductMeasure {
 public:
  explicit ProductMeasure(std::vector<Marginal> marginals) : marginals_(std::move(marginals)) {
    require(!marginals_.empty(), "ProductMeasure: needs at least one marginal");
  }

  static ProductMeasure iid(Marginal m) { return ProductMeasure({std::move(m)}); }

  const Marginal& marginal(std::size_t i) const {
    return marginals_[std::min(i, marginals_.size() - 1)];
  }
  std::size_t declared_size() const noexcept { return marginals_.size(); }
  const std::vector<Marginal>& marginals() const noexcept { return marginals_; }

  bool all_discrete(std::size_t n) const {
    for (std::size_t i = 0; i < std::min(n, marginals_.size()); ++i) {
      if (!marginals_[i].is_discrete()) return false;
    }
    return true;
  }

 private:
  std::vector<Marginal> marginals_;
};

struct ParameterAxis {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
};

struct FamilyMember {
  std::vector<double> lambda;
  ProductMeasure measure;
};

/// {P_lambda : lambda in a closed box of dimension <= 2} with a dominating constant K.
class MeasureFamily {
 public:
  using Builder = std::function<ProductMeasure(std::span<const double>)>;

  MeasureFamily(std::vector<ParameterAxis> axes, Builder builder, int grid_resolution = 5,
                double dominating_constant = 1.0)
      : axes_(std::move(axes)),
        builder_(std::move(builder)),
        resolution_(grid_resolution),
        K_(dominating_constant) {
    require(axes_.size() <= 2, "MeasureFamily: parameter dimension must be <= 2");
    require(resolution_ >= 2, "MeasureFamily: grid_resolution must be >= 2");
    require(K_ >= 1.0, "MeasureFamily: K must be >= 1");
    require(static_cast<bool>(builder_), "MeasureFamily: builder is required");
    for (const auto& axis : axes_) {
      require(std::isfinite(axis.lo) && std::isfinite(axis.hi) && axis.lo <= axis.hi,
              "MeasureFamily: axis '" + axis.name + "' needs finite lo <= hi");
    }
    members_ = build_grid();
  }

  static MeasureFamily singleton(ProductMeasure measure, double dominating_constant = 1.0) {
    return MeasureFamily(
        {}, [measure](std::span<const double>) { return measure; }, 2, dominating_constant);
  }

  std::size_t dimension() const noexcept { return axes_.size(); }
  const std::vector<ParameterAxis>& axes() const noexcept { return axes_; }
  int grid_resolution() const noexcept { return resolution_; }
  double K() const noexcept { return K_; }

  /// Grid points along one axis (a single point for a degenerate axis).
  std::vector<double> axis_points(std::size_t axis) const {
    const auto& a = axes_.at(axis);
    if (a.lo == a.hi) return {a.lo};
    std::vector<double> pts(static_cast<std::size_t>(resolution_));
    for (int i = 0; i < resolution_; ++i) {
      pts[static_cast<std::size_t>(i)] =
          i == resolution_ - 1 ? a.hi : a.lo + (a.hi - a.lo) * i / (resolution_ - 1);
    }
    return pts;
  }

  /// Grid spacing along an axis (0 for a degenerate axis).
  double spacing(std::size_t axis) const {
    const auto& a = axes_.at(axis);
    return (a.hi - a.lo) / (resolution_ - 1);
  }

  ProductMeasure build(std::span<const double> lambda) const {
    require(lambda.size() == axes_.size(), "MeasureFamily::build: parameter dimension mismatch");
    for (std::size_t i = 0; i < lambda.size(); ++i) {
      require(lambda[i] >= axes_[i].lo && lambda[i] <= axes_[i].hi,
              "MeasureFamily::build: parameter outside its domain");
    }
    return builder_(lambda);
  }

  const std::vector<FamilyMember>& members() const noexcept { return members_; }
  std::size_t size() const noexcept { return members_.size(); }
  bool is_singleton() const noexcept { return members_.size() == 1; }

 private:
  std::vector<FamilyMember> build_grid() const {
    std::vector<FamilyMember> out;
    if (axes_.empty()) {
      out.push_back({{}, builder_({})});
      return out;
    }
    const auto first = axis_points(0);
    if (axes_.size() == 1) {
      for (double x : first) {
        const std::vector<double> lam{x};
        out.push_back({lam, builder_(lam)});
      }
      return out;
    }
    const auto second = axis_points(1);
    for (double x : first) {
      for (double y : second) {
        const std::vector<double> lam{x, y};
        out.push_back({lam, builder_(lam)});
      }
    }
    return out;
  }

  std::vector<ParameterAxis> axes_;
  Builder builder_;
  int resolution_;
  double K_;
  std::vector<FamilyMember> members_;
};

/// Deterministic row-major grid over the parameter domain.
inline std::vector<FamilyMember> enumerate_family(const MeasureFamily& family) {
  return family.members();
}

/// n x m draws; column j is replication j. Stored column-major.
struct SampleBlock {
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<double> values;
  std::uint64_t seed = 0;
  std::vector<double> measure_parameter;

  double at(std::size_t i, std::size_t j) const { return values[j * n + i]; }
  std::span<const double> column(std::size_t j) const {
    return std::span<const double>(values).subspan(j * n, n);
  }
};

struct SamplingOptions {
  /// Maximum number of stored values (n * m).
  std::size_t memory_budget = std::size_t{1} << 27;
  std::size_t workers = 1;
  std::vector<double> measure_parameter;
};

/// Column j draws from the stream (seed, stream_id(sample, j)), so blocks are
/// reproducible bit-for-bit and independent of the worker count.
inline SampleBlock sample(const ProductMeasure& measure, std::size_t n, std::size_t m,
                          std::uint64_t seed, const SamplingOptions& options = {}) {
  require(n >= 1 && m >= 1, "sample: requires n >= 1 and m >= 1");
  require(n <= options.memory_budget / m, "sample: n*m exceeds the configured memory budget");
  SampleBlock block;
  block.n = n;
  block.m = m;
  block.seed = seed;
  block.measure_parameter = options.measure_parameter;
  block.values.resize(n * m);
  parallel_for(m, options.workers, [&](std::size_t j) {
    CounterRng rng(seed, stream_id(stream_tag::kSample, j));
    double* col = block.values.data() + j * n;
    for (std::size_t i = 0; i < n; ++i) col[i] = measure.marginal(i).sample(rng);
  });
  return block;
}

}  // namespace caplim
