#pragma once

// Exhaustive enumeration over finite outcome spaces: product measures with
// discrete marginals and explicit joint tables.

#include "caplim/error.hpp"
#include "caplim/measures.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <vector>

namespace caplim {

/// Number of joint outcomes of the first n coordinates, saturating at `cap + 1`.
inline std::size_t outcome_count(const ProductMeasure& measure, std::size_t n,
                                 std::size_t cap = std::size_t{1} << 40) {
  std::size_t count = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = measure.marginal(i).atoms().size();
    if (count > cap / std::max<std::size_t>(k, 1)) return cap + 1;
    count *= k;
  }
  return count;
}

/// Calls fn(x, probability) for every joint outcome of the first n coordinates.
template <class Fn>
void for_each_outcome(const ProductMeasure& measure, std::size_t n, Fn&& fn) {
  require(measure.all_discrete(n) || n == 0, "for_each_outcome: all marginals must be discrete");
  std::vector<std::vector<Atom>> atoms(n);
  for (std::size_t i = 0; i < n; ++i) atoms[i] = measure.marginal(i).atoms();
  std::vector<std::size_t> idx(n, 0);
  std::vector<double> x(n);
  while (true) {
    double prob = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = atoms[i][idx[i]].value;
      prob *= atoms[i][idx[i]].probability;
    }
    if (prob > 0.0) fn(std::span<const double>(x), prob);
    std::size_t i = 0;
    while (i < n && ++idx[i] == atoms[i].size()) idx[i++] = 0;
    if (i == n) break;
  }
}

/// An explicit probability table over a small number of coordinates.
struct JointTable {
  std::size_t dimension = 0;
  std::vector<std::vector<double>> outcomes;
  std::vector<double> probabilities;

  static constexpr std::size_t kMaxCoordinates = 6;
  static constexpr std::size_t kMaxAtoms = 5;

  void validate() const {
    require(dimension >= 1 && dimension <= kMaxCoordinates,
            "JointTable: dimension must be in [1, 6]");
    require(!outcomes.empty() && outcomes.size() == probabilities.size(),
            "JointTable: outcomes and probabilities must have equal nonzero length");
    double total = 0.0;
    for (std::size_t r = 0; r < outcomes.size(); ++r) {
      require(outcomes[r].size() == dimension, "JointTable: outcome has the wrong dimension");
      require(probabilities[r] >= 0.0, "JointTable: probabilities must be nonnegative");
      for (double v : outcomes[r]) require(std::isfinite(v), "JointTable: values must be finite");
      total += probabilities[r];
    }
    require(std::abs(total - 1.0) <= 1e-12, "JointTable: probabilities must sum to 1 within 1e-12");
    for (std::size_t i = 0; i < dimension; ++i) {
      require(coordinate_atoms(i).size() <= kMaxAtoms,
              "JointTable: at most 5 distinct atoms per coordinate");
    }
  }

  /// Distinct values taken by coordinate i.
  std::vector<double> coordinate_atoms(std::size_t i) const {
    std::vector<double> v;
    for (const auto& row : outcomes) v.push_back(row[i]);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  }

  Marginal marginal(std::size_t i) const {
    std::vector<Atom> atoms;
    for (std::size_t r = 0; r < outcomes.size(); ++r) atoms.push_back({outcomes[r][i], probabilities[r]});
    double total = 0.0;
    for (const auto& atom : atoms) total += atom.probability;
    for (auto& atom : atoms) atom.probability /= total;
    return Marginal::discrete(std::move(atoms));
  }

  template <class Fn>
  void for_each(Fn&& fn) const {
    for (std::size_t r = 0; r < outcomes.size(); ++r) {
      if (probabilities[r] > 0.0) fn(std::span<const double>(outcomes[r]), probabilities[r]);
    }
  }
};

/// Joint table of the first n coordinates of a discrete product measure.
inline JointTable product_table(const ProductMeasure& measure, std::size_t n) {
  JointTable table;
  table.dimension = n;
  for_each_outcome(measure, n, [&](std::span<const double> x, double p) {
    table.outcomes.emplace_back(x.begin(), x.end());
    table.probabilities.push_back(p);
  });
  double total = 0.0;
  for (double p : table.probabilities) total += p;
  for (double& p : table.probabilities) p /= total;
  return table;
}

/// Law of a statistic of a joint outcome as sorted (value, probability) atoms.
template <class Outcomes, class Stat>
std::vector<Atom> statistic_law(const Outcomes& outcomes, Stat&& stat) {
  std::map<double, double> law;
  outcomes([&](std::span<const double> x, double p) { law[stat(x)] += p; });
  std::vector<Atom> out;
  out.reserve(law.size());
  for (const auto& [v, p] : law) out.push_back({v, p});
  return out;
}

/// P(value >= t) for a sorted atom list.
inline double law_survival_ge(const std::vector<Atom>& law, double t) {
  double s = 0.0;
  for (auto it = law.rbegin(); it != law.rend() && it->value >= t; ++it) s += it->probability;
  return std::min(s, 1.0);
}

}  // namespace caplim
