#pragma once

// YAML configuration bundles: family, dependence, engine, experiment, bounds,
// verification and Choquet sections.

#include "caplim/bounds.hpp"
#include "caplim/dependence.hpp"
#include "caplim/limits.hpp"
#include "caplim/measures.hpp"
#include "caplim/sublinear.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace caplim::app {

/// Arithmetic over family parameter names: numbers, names, + - * / ^ and parentheses.
class Expression {
 public:
  Expression() = default;
  /// Throws InvalidArgument on a syntax error or an unknown name.
  Expression(std::string text, const std::vector<std::string>& names);

  const std::string& text() const noexcept { return text_; }
  double evaluate(const std::vector<std::string>& names, std::span<const double> values) const;
  bool is_constant() const noexcept { return constant_; }

 private:
  std::string text_;
  bool constant_ = true;
};

struct MarginalSpec {
  std::string kind;
  /// Field name to parameter expression (mean, variance, lo, hi, p, value, shape, scale).
  std::map<std::string, Expression> fields;
  /// (value, probability) expressions for discrete marginals.
  std::vector<std::pair<Expression, Expression>> atoms;
};

struct FamilySpec {
  std::vector<ParameterAxis> parameters;
  /// Coordinate marginals; the last one repeats beyond the list.
  std::vector<MarginalSpec> marginals;
  int grid_resolution = 5;
  double K = 1.0;

  MeasureFamily build() const;
};

struct VerifySection {
  std::size_t n = 2;
  EndDirection direction = EndDirection::upper;
  std::size_t corpus_size = 32;
  std::size_t mc_replications = 100000;
  CapacityKind expectation = CapacityKind::upper;
  /// Function tuples checked in addition to the randomized corpus; each tuple lists unary functions by name.
  std::vector<std::vector<std::string>> functions;
  std::size_t axiom_cases = 112;
};

struct ChoquetSection {
  std::size_t coordinate = 0;
  Transform transform = Transform::absolute;
  double power = 1.0;
  CapacityKind capacity = CapacityKind::upper;
};

struct BoundsSection {
  BoundInputs inputs;
  SplitForm form = SplitForm::stated;
};

struct ConfigBundle {
  std::string name;
  std::uint64_t seed = 1;
  FamilySpec family;
  DependenceSpec dependence;
  EngineOptions engine;
  std::optional<ExperimentConfig> experiment;
  std::optional<BoundsSection> bounds;
  VerifySection verify;
  ChoquetSection choquet;

  MeasureFamily build_family() const { return family.build(); }
  ExperimentModel model() const;
};

ConfigBundle parse_config_text(const std::string& text);
ConfigBundle parse_config(const std::string& path);
/// Canonical YAML with defaults filled; parse(serialize(b)) serializes identically.
std::string serialize_config(const ConfigBundle& bundle);

UnaryFunction unary_from_name(const std::string& name);

}  // namespace caplim::app
