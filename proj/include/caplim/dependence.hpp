#pragma once

// Dependent sequences under a sub-linear expectation: per-measure independent
// products, a Gaussian-copula construction with nonpositive correlations, and
// explicit joint tables. Verification of the extended negative dependence and
// extended independence product relations.

#include "caplim/discrete.hpp"
#include "caplim/error.hpp"
#include "caplim/measures.hpp"
#include "caplim/parallel.hpp"
#include "caplim/rng.hpp"
#include "caplim/sublinear.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace caplim {

enum class DependenceMode { per_measure_independent, copula_end, discrete_joint };

inline const char* to_string(DependenceMode m) {
  switch (m) {
    case DependenceMode::per_measure_independent: return "per_measure_independent";
    case DependenceMode::copula_end: return "copula_end";
    case DependenceMode::discrete_joint: return "discrete_joint";
  }
  return "?";
}

/// Gaussian copula. Either an explicit correlation matrix over the first
/// coordinates, or the stationary lag-1 construction
/// Z_k = (W_k + c W_{k-1}) / sqrt(1 + c^2), which has corr(Z_k, Z_{k+1}) = lag_correlation.
struct CopulaSpec {
  std::optional<Eigen::MatrixXd> correlation;
  double lag_correlation = 0.0;

  /// c with c / (1 + c^2) = rho and |c| <= 1.
  double lag_coefficient() const {
    const double rho = lag_correlation;
    if (rho == 0.0) return 0.0;
    return (1.0 - std::sqrt(std::max(0.0, 1.0 - 4.0 * rho * rho))) / (2.0 * rho);
  }
};

struct DependenceSpec {
  DependenceMode mode = DependenceMode::per_measure_independent;
  double K = 1.0;
  CopulaSpec copula;
  /// One table per measure in discrete_joint mode.
  std::vector<JointTable> tables;

  void validate() const {
    require(K >= 1.0, "DependenceSpec: K must be >= 1");
    if (mode == DependenceMode::copula_end) {
      if (copula.correlation) {
        const auto& c = *copula.correlation;
        require(c.rows() == c.cols() && c.rows() >= 1, "copula: correlation matrix must be square");
        for (Eigen::Index i = 0; i < c.rows(); ++i) {
          require(std::abs(c(i, i) - 1.0) <= 1e-12, "copula: correlation diagonal must be 1");
          for (Eigen::Index j = 0; j < c.cols(); ++j) {
            require(std::abs(c(i, j) - c(j, i)) <= 1e-12, "copula: correlation matrix must be symmetric");
            if (i != j) require(c(i, j) <= 0.0, "copula: off-diagonal correlations must be nonpositive");
          }
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
        require(es.eigenvalues().minCoeff() >= -1e-12,
                "copula: correlation matrix must be positive semidefinite");
      } else {
        require(copula.lag_correlation <= 0.0 && copula.lag_correlation >= -0.5,
                "copula: lag correlation must lie in [-0.5, 0]");
      }
    }
    if (mode == DependenceMode::discrete_joint) {
      require(!tables.empty(), "discrete_joint: at least one table is required");
      for (const auto& t : tables) {
        t.validate();
        require(t.dimension == tables.front().dimension,
                "discrete_joint: all tables must have the same dimension");
      }
    }
  }
};

namespace detail {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Maps a standard normal variate to the marginal through its quantile function.
inline double from_gaussian(const Marginal& m, double z) {
  if (m.kind() == MarginalKind::normal) return m.normal_mean() + std::sqrt(m.normal_variance()) * z;
  const double u = z < 0.0 ? normal_cdf(z) : 1.0 - 0.5 * std::erfc(z / std::numbers::sqrt2);
  return m.quantile(std::clamp(u, 1e-300, 1.0 - 1e-16));
}

}  // namespace detail

/// Seeded generator of (X_1, ..., X_n) for each measure of a dependence model.
/// Trajectory t of every measure uses the same underlying stream (common random numbers).
class SequenceSampler {
 public:
  SequenceSampler(DependenceSpec spec, MeasureFamily family, std::size_t horizon)
      : spec_(std::move(spec)), family_(std::move(family)), horizon_(horizon) {
    spec_.validate();
    require(horizon_ >= 1, "SequenceSampler: horizon must be >= 1");
    if (spec_.mode == DependenceMode::copula_end) {
      require(family_.is_singleton(),
              "copula mode requires a singleton family; multi-measure semantics are undefined");
      if (spec_.copula.correlation) {
        require(static_cast<std::size_t>(spec_.copula.correlation->rows()) >= horizon_,
                "copula: correlation matrix is smaller than the horizon");
        // Symmetric square root handles semidefinite matrices.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(*spec_.copula.correlation);
        Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        root_ = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
      }
    }
    if (spec_.mode == DependenceMode::discrete_joint) {
      require(horizon_ <= spec_.tables.front().dimension, "discrete_joint: horizon exceeds table dimension");
    }
  }

  const DependenceSpec& spec() const noexcept { return spec_; }
  const MeasureFamily& family() const noexcept { return family_; }
  std::size_t horizon() const noexcept { return horizon_; }

  std::size_t measure_count() const noexcept {
    return spec_.mode == DependenceMode::discrete_joint ? spec_.tables.size() : family_.size();
  }

  /// Sequential draws for one (measure, trajectory).
  class Stream {
   public:
    double next() {
      const std::size_t k = index_++;
      switch (owner_->spec_.mode) {
        case DependenceMode::per_measure_independent:
          return measure_->marginal(k).sample(rng_);
        case DependenceMode::copula_end: {
          if (owner_->spec_.copula.correlation) return block_value(k);
          const double c = owner_->spec_.copula.lag_coefficient();
          const double w = rng_.normal();
          const double z = (w + c * previous_) / std::sqrt(1.0 + c * c);
          previous_ = w;
          return detail::from_gaussian(measure_->marginal(k), z);
        }
        case DependenceMode::discrete_joint: return block_value(k);
      }
      return 0.0;
    }

   private:
    friend class SequenceSampler;
    Stream(const SequenceSampler* owner, std::size_t measure, std::uint64_t seed, std::uint64_t trajectory)
        : owner_(owner), rng_(seed, stream_id(stream_tag::kTrajectory, trajectory)) {
      if (owner_->spec_.mode != DependenceMode::discrete_joint) {
        measure_ = &owner_->family_.members().at(measure).measure;
      } else {
        table_ = &owner_->spec_.tables.at(measure);
      }
      if (owner_->spec_.mode == DependenceMode::copula_end && !owner_->spec_.copula.correlation) {
        previous_ = rng_.normal();
      }
    }

    double block_value(std::size_t k) {
      require(k < owner_->horizon_, "SequenceSampler: horizon exceeded for a finite-dimensional model");
      if (block_.empty()) fill_block();
      return block_[k];
    }

    void fill_block() {
      const std::size_t n = owner_->horizon_;
      block_.resize(n);
      if (table_) {
        const double u = rng_.uniform();
        double acc = 0.0;
        std::size_t row = table_->probabilities.size() - 1;
        for (std::size_t r = 0; r < table_->probabilities.size(); ++r) {
          acc += table_->probabilities[r];
          if (u < acc) {
            row = r;
            break;
          }
        }
        for (std::size_t i = 0; i < n; ++i) block_[i] = table_->outcomes[row][i];
        return;
      }
      const auto& root = owner_->root_;
      Eigen::VectorXd w(root.rows());
      for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng_.normal();
      const Eigen::VectorXd z = root * w;
      for (std::size_t i = 0; i < n; ++i) block_[i] = detail::from_gaussian(measure_->marginal(i), z[i]);
    }

    const SequenceSampler* owner_;
    CounterRng rng_;
    const ProductMeasure* measure_ = nullptr;
    const JointTable* table_ = nullptr;
    std::size_t index_ = 0;
    double previous_ = 0.0;
    std::vector<double> block_;
  };

  Stream stream(std::size_t measure, std::uint64_t seed, std::uint64_t trajectory) const {
    require(measure < measure_count(), "SequenceSampler: measure index out of range");
    return Stream(this, measure, seed, trajectory);
  }

  std::vector<double> path(std::size_t measure, std::uint64_t seed, std::uint64_t trajectory,
                           std::size_t n = 0) const {
    if (n == 0) n = horizon_;
    auto s = stream(measure, seed, trajectory);
    std::vector<double> out(n);
    for (auto& v : out) v = s.next();
    return out;
  }

 private:
  DependenceSpec spec_;
  MeasureFamily family_;
  std::size_t horizon_;
  Eigen::MatrixXd root_;
};

inline SequenceSampler build_sequence_sampler(const DependenceSpec& spec, const MeasureFamily& family,
                                              std::size_t horizon) {
  return SequenceSampler(spec, family, horizon);
}

// ---------------------------------------------------------------------------
// Verification

enum class EndDirection { upper, lower };

struct VerifyOptions {
  /// Number of randomized function tuples added to the user list.
  std::size_t corpus_size = 32;
  std::size_t mc_replications = 100000;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  /// Which expectation the relation is evaluated under.
  CapacityKind expectation = CapacityKind::upper;
  double se_multiplier = 3.0;
  /// Relative tolerance for the exact paths.
  double exact_tolerance = 1e-9;
};

struct MarginCase {
  std::string label;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;
  double std_error = 0.0;
  bool pass = true;
};

struct MarginReport {
  std::vector<MarginCase> cases;
  double worst_margin = kInf;
  double worst_std_error = 0.0;
  bool pass = true;
  bool exact = true;
  std::string relation;

  std::string summary() const {
    std::ostringstream os;
    os.precision(10);
    os << relation << ": " << (pass ? "PASS" : "FAIL") << " (" << cases.size() << " cases, "
       << (exact ? "exact" : "monte carlo") << ", worst margin " << worst_margin;
    if (!exact) os << ", se " << worst_std_error;
    os << ")";
    return os.str();
  }
};

using FunctionTuple = std::vector<UnaryFunction>;

namespace detail {

/// Randomized bounded monotone nonnegative functions: clamped affine maps and
/// smooth steps, oriented by `direction`.
inline std::vector<FunctionTuple> monotone_corpus(std::size_t count, std::size_t n, EndDirection direction,
                                                  double lo, double hi, std::uint64_t seed) {
  std::vector<FunctionTuple> out;
  const double sign = direction == EndDirection::upper ? 1.0 : -1.0;
  for (std::size_t c = 0; c < count; ++c) {
    CounterRng rng(seed, stream_id(stream_tag::kCorpus, 0xE1D, c));
    FunctionTuple tuple;
    for (std::size_t i = 0; i < n; ++i) {
      const double center = lo + (hi - lo) * rng.uniform();
      const double width = 0.05 * (hi - lo) + (hi - lo) * rng.uniform();
      const double height = 0.25 + 1.75 * rng.uniform();
      if (rng.uniform() < 0.5) {
        tuple.push_back(UnaryFunction::general([=](double x) {
          return height * std::clamp(0.5 + sign * (x - center) / width, 0.0, 1.0);
        }));
      } else {
        const double eps = 0.1 + 0.8 * rng.uniform();
        tuple.push_back(UnaryFunction::general([=](double x) {
          return height * smooth_indicator(1.0 + sign * (x - center) / width, eps);
        }));
      }
    }
    out.push_back(std::move(tuple));
  }
  return out;
}

/// Randomized nonnegative bounded functions without a monotonicity constraint.
inline std::vector<FunctionTuple> nonnegative_corpus(std::size_t count, std::size_t n, double lo, double hi,
                                                     std::uint64_t seed) {
  std::vector<FunctionTuple> out;
  for (std::size_t c = 0; c < count; ++c) {
    CounterRng rng(seed, stream_id(stream_tag::kCorpus, 0xE1E, c));
    FunctionTuple tuple;
    for (std::size_t i = 0; i < n; ++i) {
      const double center = lo + (hi - lo) * rng.uniform();
      const double width = 0.1 * (hi - lo) + (hi - lo) * rng.uniform();
      const double floor = 0.1 * rng.uniform();
      tuple.push_back(UnaryFunction::general([=](double x) {
        const double s = (x - center) / width;
        return floor + std::exp(-s * s);
      }));
    }
    out.push_back(std::move(tuple));
  }
  return out;
}

/// Range covering the bulk of every coordinate law in the model.
inline std::pair<double, double> model_range(const SequenceSampler& sampler) {
  double lo = kInf;
  double hi = -kInf;
  const auto& spec = sampler.spec();
  if (spec.mode == DependenceMode::discrete_joint) {
    for (const auto& t : spec.tables) {
      for (const auto& row : t.outcomes) {
        for (std::size_t i = 0; i < sampler.horizon(); ++i) {
          lo = std::min(lo, row[i]);
          hi = std::max(hi, row[i]);
        }
      }
    }
  } else {
    for (const auto& mem : sampler.family().members()) {
      for (std::size_t i = 0; i < sampler.horizon(); ++i) {
        const auto& m = mem.measure.marginal(i);
        lo = std::min(lo, m.quantile(1e-3));
        hi = std::max(hi, m.quantile(1.0 - 1e-3));
      }
    }
  }
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  return {lo, hi};
}

inline void audit_monotone(const FunctionTuple& tuple, EndDirection direction, double lo, double hi) {
  const double pad = 0.25 * (hi - lo) + 1.0;
  for (const auto& g : tuple) {
    double prev = 0.0;
    for (int k = 0; k < 256; ++k) {
      const double x = (lo - pad) + (hi - lo + 2.0 * pad) * k / 255.0;
      const double v = g(x);
      if (!std::isfinite(v) || v < -1e-12) throw AuditFailure("verify_end: g must be finite and nonnegative");
      if (k > 0) {
        const bool ok = direction == EndDirection::upper ? v >= prev - 1e-12 : v <= prev + 1e-12;
        if (!ok) {
          throw AuditFailure(std::string("verify_end: g is not ") +
                             (direction == EndDirection::upper ? "nondecreasing" : "nonincreasing") +
                             " on the audit grid");
        }
      }
      prev = v;
    }
  }
}

struct Sides {
  double lhs = 0.0;
  double rhs = 0.0;
  double se = 0.0;
};

/// E[prod g_i(X_i)] and K * prod E[g_i(X_i)] under the chosen expectation.
inline Sides product_sides(const SequenceSampler& sampler, const FunctionTuple& g, double K,
                           const VerifyOptions& options) {
  const auto& spec = sampler.spec();
  const std::size_t n = sampler.horizon();
  const bool upper = options.expectation == CapacityKind::upper;
  auto fold = [upper](double acc, double v) { return upper ? std::max(acc, v) : std::min(acc, v); };
  const double init = upper ? -kInf : kInf;
  auto gi = [&](std::size_t i) -> const UnaryFunction& { return g[std::min(i, g.size() - 1)]; };

  if (spec.mode == DependenceMode::copula_end) {
    // Monte Carlo on both sides from the same draws; delta-method error for the margin.
    const std::size_t m = options.mc_replications;
    const std::size_t d = n + 1;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd row(d);
    for (std::size_t j = 0; j < m; ++j) {
      auto s = sampler.stream(0, options.seed, j);
      double prod = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        row[i] = gi(i)(s.next());
        prod *= row[i];
      }
      row[n] = prod;
      const Eigen::VectorXd delta = row - mean;
      mean += delta / static_cast<double>(j + 1);
      m2 += delta * (row - mean).transpose();
    }
    const Eigen::MatrixXd cov = m2 / static_cast<double>(m > 1 ? m - 1 : 1);
    double prod_means = 1.0;
    for (std::size_t i = 0; i < n; ++i) prod_means *= mean[i];
    Eigen::VectorXd grad(d);
    for (std::size_t i = 0; i < n; ++i) {
      double others = K;
      for (std::size_t k = 0; k < n; ++k) {
        if (k != i) others *= mean[k];
      }
      grad[i] = others;
    }
    grad[n] = -1.0;
    const double var = grad.dot(cov * grad) / static_cast<double>(m);
    return {mean[n], K * prod_means, std::sqrt(std::max(var, 0.0))};
  }

  double lhs = init;
  std::vector<double> factor(n, init);
  if (spec.mode == DependenceMode::discrete_joint) {
    for (const auto& table : spec.tables) {
      double joint = 0.0;
      std::vector<double> marg(n, 0.0);
      table.for_each([&](std::span<const double> x, double p) {
        double prod = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double v = gi(i)(x[i]);
          marg[i] += p * v;
          prod *= v;
        }
        joint += p * prod;
      });
      lhs = fold(lhs, joint);
      for (std::size_t i = 0; i < n; ++i) factor[i] = fold(factor[i], marg[i]);
    }
  } else {
    for (const auto& mem : sampler.family().members()) {
      double joint = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto v = gi(i).expect(mem.measure.marginal(i));
        require(v.finite, "product relation: every factor expectation must be finite");
        joint *= v.value;
        factor[i] = fold(factor[i], v.value);
      }
      lhs = fold(lhs, joint);
    }
  }
  double rhs = K;
  for (double f : factor) rhs *= f;
  return {lhs, rhs, 0.0};
}

inline void finish(MarginReport& report) {
  report.pass = true;
  report.worst_margin = kInf;
  for (const auto& c : report.cases) {
    report.pass = report.pass && c.pass;
    if (c.margin < report.worst_margin) {
      report.worst_margin = c.margin;
      report.worst_std_error = c.std_error;
    }
  }
}

}  // namespace detail

/// Checks E[prod g_i(X_i)] <= K prod E[g_i(X_i)] for the supplied tuples plus a
/// randomized monotone corpus. PASS iff every margin K*prod - E[prod] is at
/// least minus the statistical tolerance.
inline MarginReport verify_end(const DependenceSpec& spec, const MeasureFamily& family, std::size_t n,
                               EndDirection direction, const std::vector<FunctionTuple>& g_list, double K,
                               const VerifyOptions& options = {}) {
  require(K >= 1.0, "verify_end: K must be >= 1");
  const SequenceSampler sampler(spec, family, n);
  const auto [lo, hi] = detail::model_range(sampler);
  std::vector<FunctionTuple> tuples = g_list;
  const auto corpus = detail::monotone_corpus(options.corpus_size, n, direction, lo, hi, options.seed);
  tuples.insert(tuples.end(), corpus.begin(), corpus.end());
  for (const auto& t : tuples) {
    require(!t.empty(), "verify_end: empty function tuple");
    detail::audit_monotone(t, direction, lo, hi);
  }
  MarginReport report;
  report.relation = std::string(direction == EndDirection::upper ? "upper" : "lower") + " END";
  report.exact = spec.mode != DependenceMode::copula_end;
  report.cases = parallel_map<MarginCase>(tuples.size(), options.workers, [&](std::size_t i) {
    const auto s = detail::product_sides(sampler, tuples[i], K, options);
    MarginCase c;
    c.label = i < g_list.size() ? "user " + std::to_string(i) : "corpus " + std::to_string(i - g_list.size());
    c.lhs = s.lhs;
    c.rhs = s.rhs;
    c.margin = s.rhs - s.lhs;
    c.std_error = s.se;
    const double tol = report.exact ? options.exact_tolerance * (1.0 + std::abs(s.lhs) + std::abs(s.rhs))
                                    : options.se_multiplier * s.se;
    c.pass = c.margin >= -tol;
    return c;
  });
  detail::finish(report);
  return report;
}

/// Checks E[prod psi_i(X_i)] = prod E[psi_i(X_i)] within tolerance. The margin
/// reported is rhs - lhs.
inline MarginReport verify_extended_independence(const DependenceSpec& spec, const MeasureFamily& family,
                                                 std::size_t n, const std::vector<FunctionTuple>& psi_list,
                                                 const VerifyOptions& options = {}) {
  const SequenceSampler sampler(spec, family, n);
  const auto [lo, hi] = detail::model_range(sampler);
  std::vector<FunctionTuple> tuples = psi_list;
  const auto corpus = detail::nonnegative_corpus(options.corpus_size, n, lo, hi, options.seed);
  tuples.insert(tuples.end(), corpus.begin(), corpus.end());
  MarginReport report;
  report.relation = "extended independence";
  report.exact = spec.mode != DependenceMode::copula_end;
  report.cases = parallel_map<MarginCase>(tuples.size(), options.workers, [&](std::size_t i) {
    require(!tuples[i].empty(), "verify_extended_independence: empty function tuple");
    const auto s = detail::product_sides(sampler, tuples[i], 1.0, options);
    MarginCase c;
    c.label = i < psi_list.size() ? "user " + std::to_string(i) : "corpus " + std::to_string(i - psi_list.size());
    c.lhs = s.lhs;
    c.rhs = s.rhs;
    c.margin = s.rhs - s.lhs;
    c.std_error = s.se;
    const double tol = report.exact ? options.exact_tolerance * (1.0 + std::abs(s.lhs) + std::abs(s.rhs))
                                    : options.se_multiplier * s.se;
    c.pass = std::abs(c.margin) <= tol;
    return c;
  });
  detail::finish(report);
  // For equality the worst case is the largest absolute gap.
  for (const auto& c : report.cases) {
    if (std::abs(c.margin) > std::abs(report.worst_margin) || report.worst_margin == kInf) {
      report.worst_margin = c.margin;
      report.worst_std_error = c.std_error;
    }
  }
  return report;
}

}  // namespace caplim
