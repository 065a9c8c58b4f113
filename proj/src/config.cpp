#include "config.hpp"

#include "caplim/error.hpp"

#include <yaml-cpp/yaml.h>

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace caplim::app {

// ---------------------------------------------------------------------------
// Expressions

namespace {

class ExprParser {
 public:
  ExprParser(const std::string& text, const std::vector<std::string>& names, std::span<const double> values)
      : s_(text), names_(names), values_(values) {}

  double parse() {
    const double v = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return v;
  }

  bool used_names() const noexcept { return used_; }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw InvalidArgument("expression '" + s_ + "': " + why);
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  double expr() {
    double v = term();
    while (true) {
      if (eat('+')) v += term();
      else if (eat('-')) v -= term();
      else return v;
    }
  }
  double term() {
    double v = factor();
    while (true) {
      if (eat('*')) v *= factor();
      else if (eat('/')) v /= factor();
      else return v;
    }
  }
  double factor() {
    const double base = unary();
    if (eat('^')) return std::pow(base, factor());
    return base;
  }
  double unary() {
    if (eat('-')) return -unary();
    if (eat('+')) return unary();
    return primary();
  }
  double primary() {
    skip();
    if (eat('(')) {
      const double v = expr();
      if (!eat(')')) fail("missing ')'");
      return v;
    }
    if (pos_ >= s_.size()) fail("unexpected end");
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
      if (ec != std::errc()) fail("bad number");
      pos_ = static_cast<std::size_t>(ptr - s_.data());
      return v;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
      const std::string name = s_.substr(start, pos_ - start);
      if (name == "inf") return kInf;
      for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) {
          used_ = true;
          return values_[i];
        }
      }
      fail("unknown parameter '" + name + "'");
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  const std::string& s_;
  const std::vector<std::string>& names_;
  std::span<const double> values_;
  std::size_t pos_ = 0;
  bool used_ = false;
};

}  // namespace

Expression::Expression(std::string text, const std::vector<std::string>& names) : text_(std::move(text)) {
  std::vector<double> ones(names.size(), 1.0);
  ExprParser p(text_, names, ones);
  p.parse();
  constant_ = !p.used_names();
}

double Expression::evaluate(const std::vector<std::string>& names, std::span<const double> values) const {
  ExprParser p(text_, names, values);
  return p.parse();
}

// ---------------------------------------------------------------------------
// Families

namespace {

Marginal build_marginal(const MarginalSpec& spec, const std::vector<std::string>& names,
                        std::span<const double> lambda) {
  auto f = [&](const char* key) { return spec.fields.at(key).evaluate(names, lambda); };
  if (spec.kind == "normal") {
    const double var = spec.fields.count("sd") ? std::pow(f("sd"), 2) : f("variance");
    return Marginal::normal(f("mean"), var);
  }
  if (spec.kind == "uniform") return Marginal::uniform(f("lo"), f("hi"));
  if (spec.kind == "bernoulli") return Marginal::bernoulli(f("p"));
  if (spec.kind == "point_mass") return Marginal::point_mass(f("value"));
  if (spec.kind == "pareto") return Marginal::pareto(f("shape"), f("scale"));
  std::vector<Atom> atoms;
  for (const auto& [v, p] : spec.atoms) atoms.push_back({v.evaluate(names, lambda), p.evaluate(names, lambda)});
  return Marginal::discrete(std::move(atoms));
}

}  // namespace

MeasureFamily FamilySpec::build() const {
  std::vector<std::string> names;
  for (const auto& a : parameters) names.push_back(a.name);
  auto marginals_copy = marginals;
  return MeasureFamily(
      parameters,
      [names, marginals_copy](std::span<const double> lambda) {
        std::vector<Marginal> ms;
        for (const auto& m : marginals_copy) ms.push_back(build_marginal(m, names, lambda));
        return ProductMeasure(std::move(ms));
      },
      grid_resolution, K);
}

ExperimentModel ConfigBundle::model() const {
  return ExperimentModel{build_family(), dependence};
}

UnaryFunction unary_from_name(const std::string& raw) {
  std::string name = raw;
  std::vector<double> args;
  if (const auto open = raw.find('('); open != std::string::npos) {
    require(raw.back() == ')', "function '" + raw + "': missing ')'");
    name = raw.substr(0, open);
    std::stringstream ss(raw.substr(open + 1, raw.size() - open - 2));
    std::string item;
    while (std::getline(ss, item, ',')) {
      double v = 0.0;
      std::size_t start = item.find_first_not_of(' ');
      require(start != std::string::npos, "function '" + raw + "': empty argument");
      const auto [ptr, ec] = std::from_chars(item.data() + start, item.data() + item.size(), v);
      require(ec == std::errc(), "function '" + raw + "': bad argument '" + item + "'");
      (void)ptr;
      args.push_back(v);
    }
  }
  auto want = [&](std::size_t k) {
    require(args.size() == k, "function '" + raw + "': expects " + std::to_string(k) + " argument(s)");
  };
  if (name == "identity") return want(0), UnaryFunction::identity();
  if (name == "square") return want(0), UnaryFunction::power(2);
  if (name == "abs") return want(0), UnaryFunction::abs_power(1.0);
  if (name == "positive_part") return want(0), UnaryFunction::positive_power(1.0);
  if (name == "power") {
    want(1);
    require(args[0] >= 1.0 && args[0] == std::floor(args[0]), "function '" + raw + "': integer power >= 1");
    return UnaryFunction::power(static_cast<int>(args[0]));
  }
  if (name == "abs_power") return want(1), UnaryFunction::abs_power(args[0]);
  if (name == "positive_power") return want(1), UnaryFunction::positive_power(args[0]);
  if (name == "clamp" || name == "decreasing_clamp") {
    want(2);
    const double lo = args[0], hi = args[1];
    require(hi > lo, "function '" + raw + "': needs lo < hi");
    const bool up = name == "clamp";
    return UnaryFunction::general([lo, hi, up](double x) {
      const double v = std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
      return up ? v : 1.0 - v;
    });
  }
  if (name == "smooth_step") {
    want(2);
    const double t = args[0], eps = args[1];
    require(eps > 0.0, "function '" + raw + "': eps must be > 0");
    return UnaryFunction::general([t, eps](double x) { return smooth_indicator(x - t + 1.0, eps); });
  }
  throw InvalidArgument("unknown function '" + raw + "'");
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::size_t line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? static_cast<std::size_t>(n.Mark().line) + 1 : 0; }

class Reader {
 public:
  Reader(const YAML::Node& node, std::string path, std::set<std::string> allowed)
      : node_(node), path_(std::move(path)) {
    if (!node_.IsMap()) throw ConfigError(path_, "expected a mapping", line_of(node_));
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) throw ConfigError(field(key), "unknown key", line_of(kv.first));
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return static_cast<bool>(node_[key]); }
  YAML::Node node(const std::string& key) const { return node_[key]; }
  std::size_t line(const std::string& key) const { return has(key) ? line_of(node_[key]) : line_of(node_); }

  template <class T>
  T get(const std::string& key, T fallback) const {
    if (!has(key)) return fallback;
    return as<T>(node_[key], field(key));
  }

  template <class T>
  static T as(const YAML::Node& n, const std::string& field) {
    if (!n.IsScalar()) throw ConfigError(field, "expected a scalar", line_of(n));
    try {
      if constexpr (std::is_same_v<T, bool>) {
        const auto s = n.Scalar();
        if (s == "true") return true;
        if (s == "false") return false;
        throw ConfigError(field, "expected true or false", line_of(n));
      } else if constexpr (std::is_same_v<T, std::string>) {
        return n.Scalar();
      } else if constexpr (std::is_floating_point_v<T>) {
        const auto s = n.Scalar();
        if (s == "inf" || s == ".inf") return kInf;
        return n.as<T>();
      } else {
        const auto s = n.Scalar();
        if (!s.empty() && s[0] == '-') throw ConfigError(field, "expected a nonnegative integer", line_of(n));
        return n.as<T>();
      }
    } catch (const YAML::Exception&) {
      throw ConfigError(field, "cannot convert '" + n.Scalar() + "'", line_of(n));
    }
  }

  void check(bool ok, const std::string& key, const std::string& reason) const {
    if (!ok) throw ConfigError(field(key), reason, line(key));
  }

 private:
  YAML::Node node_;
  std::string path_;
};

template <class E>
E parse_enum(const Reader& r, const std::string& key, E fallback,
             const std::vector<std::pair<std::string, E>>& options) {
  if (!r.has(key)) return fallback;
  const auto s = r.get<std::string>(key, "");
  for (const auto& [name, v] : options) {
    if (name == s) return v;
  }
  std::string all;
  for (const auto& [name, v] : options) all += (all.empty() ? "" : ", ") + name;
  throw ConfigError(r.field(key), "expected one of " + all + ", got '" + s + "'", r.line(key));
}

const std::vector<std::pair<std::string, DependenceMode>> kModes{
    {"per_measure_independent", DependenceMode::per_measure_independent},
    {"copula_end", DependenceMode::copula_end},
    {"discrete_joint", DependenceMode::discrete_joint}};
const std::vector<std::pair<std::string, Refinement>> kRefinements{
    {"grid_only", Refinement::grid_only}, {"grid_plus_golden_section", Refinement::grid_plus_golden_section}};
const std::vector<std::pair<std::string, EvaluationPath>> kPaths{{"automatic", EvaluationPath::automatic},
                                                                 {"closed_form", EvaluationPath::closed_form},
                                                                 {"enumeration", EvaluationPath::enumeration},
                                                                 {"monte_carlo", EvaluationPath::monte_carlo}};
const std::vector<std::pair<std::string, ExperimentMode>> kExperimentModes{
    {"wlln", ExperimentMode::wlln},       {"slln", ExperimentMode::slln},
    {"cluster", ExperimentMode::cluster}, {"lil", ExperimentMode::lil},
    {"necessity", ExperimentMode::necessity}, {"bound-check", ExperimentMode::bound_check}};
const std::vector<std::pair<std::string, BlockScheme>> kSchemes{{"power_k", BlockScheme::power_k},
                                                                {"geometric", BlockScheme::geometric}};
const std::vector<std::pair<std::string, BlockPolicy>> kPolicies{{"alternate", BlockPolicy::alternate},
                                                                 {"cycle", BlockPolicy::cycle}};
const std::vector<std::pair<std::string, MeasureSelection>> kSelections{{"all", MeasureSelection::all},
                                                                        {"extremes", MeasureSelection::extremes}};
const std::vector<std::pair<std::string, EndDirection>> kDirections{{"upper", EndDirection::upper},
                                                                    {"lower", EndDirection::lower}};
const std::vector<std::pair<std::string, CapacityKind>> kCapacities{{"upper", CapacityKind::upper},
                                                                    {"lower", CapacityKind::lower}};
const std::vector<std::pair<std::string, Transform>> kTransforms{{"identity", Transform::identity},
                                                                 {"absolute", Transform::absolute},
                                                                 {"positive_part", Transform::positive_part}};
const std::vector<std::pair<std::string, SplitForm>> kForms{{"stated", SplitForm::stated},
                                                            {"pre_substitution", SplitForm::pre_substitution},
                                                            {"exact_substitution", SplitForm::exact_substitution}};

template <class E>
std::string enum_name(E v, const std::vector<std::pair<std::string, E>>& options) {
  for (const auto& [name, e] : options) {
    if (e == v) return name;
  }
  return "?";
}

Expression parse_expression(const YAML::Node& n, const std::string& field, const std::vector<std::string>& names) {
  if (!n.IsScalar()) throw ConfigError(field, "expected a number or parameter expression", line_of(n));
  try {
    return Expression(n.Scalar(), names);
  } catch (const InvalidArgument& e) {
    throw ConfigError(field, e.what(), line_of(n));
  }
}

MarginalSpec parse_marginal(const YAML::Node& n, const std::string& path, const std::vector<std::string>& names) {
  const Reader probe(n, path, {"kind", "mean", "variance", "sd", "lo", "hi", "p", "value", "shape", "scale", "atoms"});
  MarginalSpec m;
  probe.check(probe.has("kind"), "kind", "is required");
  m.kind = probe.get<std::string>("kind", "");
  const std::map<std::string, std::vector<std::string>> required{
      {"normal", {"mean"}},       {"uniform", {"lo", "hi"}},       {"bernoulli", {"p"}},
      {"point_mass", {"value"}}, {"pareto", {"shape", "scale"}}, {"discrete", {}}};
  const auto it = required.find(m.kind);
  if (it == required.end()) {
    throw ConfigError(probe.field("kind"), "expected one of normal, uniform, bernoulli, discrete, point_mass, pareto",
                      probe.line("kind"));
  }
  std::set<std::string> allowed(it->second.begin(), it->second.end());
  allowed.insert("kind");
  if (m.kind == "normal") allowed.insert({"variance", "sd"});
  if (m.kind == "discrete") allowed.insert("atoms");
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ConfigError(probe.field(key), "not a field of a " + m.kind + " marginal", line_of(kv.first));
  }
  for (const auto& key : it->second) probe.check(probe.has(key), key, "is required for a " + m.kind + " marginal");
  if (m.kind == "normal") {
    probe.check(probe.has("variance") != probe.has("sd"), "variance", "give exactly one of variance and sd");
  }
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (key == "kind" || key == "atoms") continue;
    m.fields.emplace(key, parse_expression(kv.second, probe.field(key), names));
  }
  if (m.kind == "discrete") {
    probe.check(probe.has("atoms") && probe.node("atoms").IsSequence() && probe.node("atoms").size() > 0, "atoms",
                "expected a nonempty list of [value, probability] pairs");
    std::size_t i = 0;
    for (const auto& a : probe.node("atoms")) {
      const std::string f = probe.field("atoms") + "[" + std::to_string(i++) + "]";
      if (!a.IsSequence() || a.size() != 2) throw ConfigError(f, "expected [value, probability]", line_of(a));
      m.atoms.emplace_back(parse_expression(a[0], f, names), parse_expression(a[1], f, names));
    }
  }
  return m;
}

FamilySpec parse_family(const YAML::Node& n) {
  const Reader r(n, "family", {"parameters", "marginals", "grid_resolution", "K"});
  FamilySpec fam;
  std::vector<std::string> names;
  if (r.has("parameters")) {
    r.check(r.node("parameters").IsSequence(), "parameters", "expected a list");
    std::size_t i = 0;
    for (const auto& p : r.node("parameters")) {
      const Reader pr(p, r.field("parameters") + "[" + std::to_string(i++) + "]", {"name", "lo", "hi"});
      pr.check(pr.has("name") && pr.has("lo") && pr.has("hi"), "name", "each parameter needs name, lo and hi");
      ParameterAxis axis{pr.get<std::string>("name", ""), pr.get<double>("lo", 0.0), pr.get<double>("hi", 0.0)};
      pr.check(!axis.name.empty() && (std::isalpha(static_cast<unsigned char>(axis.name[0])) || axis.name[0] == '_'),
               "name", "must be an identifier");
      pr.check(std::find(names.begin(), names.end(), axis.name) == names.end(), "name", "duplicate parameter");
      pr.check(std::isfinite(axis.lo) && std::isfinite(axis.hi) && axis.lo <= axis.hi, "hi",
               "parameter box needs finite lo <= hi");
      names.push_back(axis.name);
      fam.parameters.push_back(axis);
    }
    r.check(fam.parameters.size() <= 2, "parameters", "parameter dimension must be <= 2");
  }
  r.check(r.has("marginals") && r.node("marginals").IsSequence() && r.node("marginals").size() > 0, "marginals",
          "expected a nonempty list");
  std::size_t i = 0;
  for (const auto& m : r.node("marginals")) {
    fam.marginals.push_back(parse_marginal(m, r.field("marginals") + "[" + std::to_string(i++) + "]", names));
  }
  fam.grid_resolution = r.get<int>("grid_resolution", 5);
  r.check(fam.grid_resolution >= 2, "grid_resolution", "must be >= 2");
  fam.K = r.get<double>("K", 1.0);
  r.check(fam.K >= 1.0, "K", "invariant violated: K >= 1 (dominating constant)");
  try {
    fam.build();
  } catch (const InvalidArgument& e) {
    throw ConfigError("family", std::string("invariant violated: ") + e.what(), line_of(n));
  }
  return fam;
}

DependenceSpec parse_dependence(const YAML::Node& n) {
  const Reader r(n, "dependence", {"mode", "K", "copula", "tables"});
  DependenceSpec d;
  d.mode = parse_enum(r, "mode", DependenceMode::per_measure_independent, kModes);
  d.K = r.get<double>("K", 1.0);
  r.check(d.K >= 1.0, "K", "invariant violated: K >= 1 (dominating constant)");
  if (r.has("copula")) {
    const Reader c(r.node("copula"), "dependence.copula", {"lag_correlation", "correlation"});
    d.copula.lag_correlation = c.get<double>("lag_correlation", 0.0);
    if (c.has("correlation")) {
      const auto rows = c.node("correlation");
      c.check(rows.IsSequence() && rows.size() > 0, "correlation", "expected a square list of lists");
      const auto k = static_cast<Eigen::Index>(rows.size());
      Eigen::MatrixXd m(k, k);
      for (Eigen::Index i = 0; i < k; ++i) {
        const auto row = rows[static_cast<std::size_t>(i)];
        c.check(row.IsSequence() && static_cast<Eigen::Index>(row.size()) == k, "correlation", "matrix must be square");
        for (Eigen::Index j = 0; j < k; ++j) {
          m(i, j) = Reader::as<double>(row[static_cast<std::size_t>(j)], c.field("correlation"));
        }
      }
      d.copula.correlation = m;
    }
  }
  if (r.has("tables")) {
    r.check(r.node("tables").IsSequence(), "tables", "expected a list");
    std::size_t i = 0;
    for (const auto& t : r.node("tables")) {
      const Reader tr(t, "dependence.tables[" + std::to_string(i++) + "]", {"outcomes", "probabilities"});
      JointTable table;
      tr.check(tr.has("outcomes") && tr.node("outcomes").IsSequence(), "outcomes", "expected a list of rows");
      tr.check(tr.has("probabilities") && tr.node("probabilities").IsSequence(), "probabilities", "expected a list");
      for (const auto& row : tr.node("outcomes")) {
        tr.check(row.IsSequence(), "outcomes", "each outcome is a list");
        std::vector<double> v;
        for (const auto& x : row) v.push_back(Reader::as<double>(x, tr.field("outcomes")));
        table.outcomes.push_back(std::move(v));
      }
      for (const auto& p : tr.node("probabilities")) table.probabilities.push_back(Reader::as<double>(p, tr.field("probabilities")));
      table.dimension = table.outcomes.empty() ? 0 : table.outcomes.front().size();
      try {
        table.validate();
      } catch (const InvalidArgument& e) {
        throw ConfigError(tr.field("outcomes"), std::string("invariant violated: ") + e.what(), tr.line("outcomes"));
      }
      d.tables.push_back(std::move(table));
    }
  }
  try {
    d.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("dependence", std::string("invariant violated: ") + e.what(), line_of(n));
  }
  return d;
}

EngineOptions parse_engine(const YAML::Node& n) {
  const Reader r(n, "engine", {"mc_replications", "refinement", "tolerance", "path", "enumeration_limit",
                               "independent_sup", "audit"});
  EngineOptions e;
  e.mc_replications = r.get<std::size_t>("mc_replications", e.mc_replications);
  r.check(e.mc_replications >= 1, "mc_replications", "must be >= 1");
  e.refinement = parse_enum(r, "refinement", e.refinement, kRefinements);
  e.tolerance = r.get<double>("tolerance", e.tolerance);
  r.check(e.tolerance > 0.0, "tolerance", "must be > 0");
  e.path = parse_enum(r, "path", e.path, kPaths);
  e.enumeration_limit = r.get<std::size_t>("enumeration_limit", e.enumeration_limit);
  e.independent_sup = r.get<bool>("independent_sup", e.independent_sup);
  e.audit = r.get<bool>("audit", e.audit);
  return e;
}

const std::set<std::string> kExperimentKeys{
    "mode",  "trajectories", "horizon",      "burn_in",        "schedule",           "epsilon",
    "epsilon_lil", "pass_fraction", "wlln_target", "block_scheme", "theta", "alpha", "policy",
    "cycle_points", "grid_step", "coverage_radius", "coverage_target", "measures", "checkpoint_start",
    "checkpoint_ratio", "divergence_threshold", "divergence_target", "bound_p", "bound_delta", "bound_r",
    "x_points"};

ExperimentConfig parse_experiment(const YAML::Node& n) {
  const Reader r(n, "experiment", kExperimentKeys);
  ExperimentConfig c;
  r.check(r.has("mode"), "mode", "is required");
  c.mode = parse_enum(r, "mode", c.mode, kExperimentModes);
  c.trajectories = r.get<std::size_t>("trajectories", c.trajectories);
  c.horizon = r.get<std::size_t>("horizon", c.horizon);
  c.burn_in = r.get<std::size_t>("burn_in", c.burn_in);
  if (r.has("schedule")) {
    r.check(r.node("schedule").IsSequence(), "schedule", "expected a list of n values");
    c.schedule.clear();
    for (const auto& v : r.node("schedule")) c.schedule.push_back(Reader::as<std::size_t>(v, r.field("schedule")));
  }
  c.epsilon = r.get<double>("epsilon", c.epsilon);
  c.epsilon_lil = r.get<double>("epsilon_lil", c.epsilon_lil);
  if (r.has("pass_fraction")) c.pass_fraction = r.get<double>("pass_fraction", 1.0);
  c.wlln_target = r.get<double>("wlln_target", c.wlln_target);
  c.block_scheme = parse_enum(r, "block_scheme", c.block_scheme, kSchemes);
  c.theta = r.get<double>("theta", c.theta);
  c.alpha = r.get<double>("alpha", c.alpha);
  c.policy = parse_enum(r, "policy", c.policy, kPolicies);
  c.cycle_points = r.get<std::size_t>("cycle_points", c.cycle_points);
  c.grid_step = r.get<double>("grid_step", c.grid_step);
  c.coverage_radius = r.get<double>("coverage_radius", c.coverage_radius);
  c.coverage_target = r.get<double>("coverage_target", c.coverage_target);
  c.measures = parse_enum(r, "measures", c.measures, kSelections);
  c.checkpoint_start = r.get<double>("checkpoint_start", c.checkpoint_start);
  c.checkpoint_ratio = r.get<double>("checkpoint_ratio", c.checkpoint_ratio);
  c.divergence_threshold = r.get<double>("divergence_threshold", c.divergence_threshold);
  c.divergence_target = r.get<double>("divergence_target", c.divergence_target);
  c.bound_p = r.get<double>("bound_p", c.bound_p);
  c.bound_delta = r.get<double>("bound_delta", c.bound_delta);
  c.bound_r = r.get<double>("bound_r", c.bound_r);
  c.x_points = r.get<std::size_t>("x_points", c.x_points);
  // Map each invariant to the key it concerns.
  r.check(c.theta > 1.0, "theta", "invariant violated: theta > 1");
  r.check(c.alpha > 0.0 && c.alpha < 1.0, "alpha", "invariant violated: 0 < alpha < 1");
  r.check(c.epsilon > 0.0, "epsilon", "invariant violated: epsilon > 0");
  r.check(c.epsilon_lil > 0.0, "epsilon_lil", "invariant violated: epsilon_lil > 0");
  r.check(c.trajectories >= 1, "trajectories", "invariant violated: m >= 1");
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("experiment", std::string("invariant violated: ") + e.what(), line_of(n));
  }
  return c;
}

BoundsSection parse_bounds(const YAML::Node& n) {
  const Reader r(n, "bounds", {"x", "y", "n", "B", "M_pp", "M_p", "K", "p", "delta", "r", "form"});
  BoundsSection b;
  auto& in = b.inputs;
  in.x = r.get<double>("x", in.x);
  in.y = r.get<double>("y", in.y);
  in.n = r.get<std::size_t>("n", in.n);
  in.B = r.get<double>("B", in.B);
  in.M_pp = r.get<double>("M_pp", in.M_pp);
  in.M_p = r.get<double>("M_p", in.M_p);
  in.K = r.get<double>("K", in.K);
  in.p = r.get<double>("p", in.p);
  in.delta = r.get<double>("delta", in.delta);
  in.r = r.get<double>("r", in.r);
  b.form = parse_enum(r, "form", b.form, kForms);
  r.check(in.K >= 1.0, "K", "invariant violated: K >= 1 (dominating constant)");
  try {
    in.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("bounds", std::string("invariant violated: ") + e.what(), line_of(n));
  }
  return b;
}

VerifySection parse_verify(const YAML::Node& n) {
  const Reader r(n, "verify", {"n", "direction", "corpus_size", "mc_replications", "expectation", "functions",
                               "axiom_cases"});
  VerifySection v;
  v.n = r.get<std::size_t>("n", v.n);
  r.check(v.n >= 1, "n", "must be >= 1");
  v.direction = parse_enum(r, "direction", v.direction, kDirections);
  v.corpus_size = r.get<std::size_t>("corpus_size", v.corpus_size);
  v.mc_replications = r.get<std::size_t>("mc_replications", v.mc_replications);
  v.expectation = parse_enum(r, "expectation", v.expectation, kCapacities);
  v.axiom_cases = r.get<std::size_t>("axiom_cases", v.axiom_cases);
  r.check(v.axiom_cases >= 1, "axiom_cases", "must be >= 1");
  if (r.has("functions")) {
    r.check(r.node("functions").IsSequence(), "functions", "expected a list of function tuples");
    for (const auto& tup : r.node("functions")) {
      if (!tup.IsSequence() || tup.size() == 0) throw ConfigError(r.field("functions"), "each tuple is a nonempty list", line_of(tup));
      std::vector<std::string> names;
      for (const auto& f : tup) {
        const auto s = Reader::as<std::string>(f, r.field("functions"));
        try {
          unary_from_name(s);
        } catch (const InvalidArgument& e) {
          throw ConfigError(r.field("functions"), e.what(), line_of(f));
        }
        names.push_back(s);
      }
      v.functions.push_back(std::move(names));
    }
  }
  return v;
}

ChoquetSection parse_choquet(const YAML::Node& n) {
  const Reader r(n, "choquet", {"coordinate", "transform", "power", "capacity"});
  ChoquetSection c;
  c.coordinate = r.get<std::size_t>("coordinate", c.coordinate);
  c.transform = parse_enum(r, "transform", c.transform, kTransforms);
  c.power = r.get<double>("power", c.power);
  r.check(c.power > 0.0, "power", "must be > 0");
  c.capacity = parse_enum(r, "capacity", c.capacity, kCapacities);
  return c;
}

}  // namespace

ConfigBundle parse_config_text(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("(document)", e.msg, static_cast<std::size_t>(e.mark.line) + 1);
  }
  const Reader r(root, "", {"name", "seed", "family", "dependence", "engine", "experiment", "bounds", "verify", "choquet"});
  ConfigBundle b;
  b.name = r.get<std::string>("name", "");
  b.seed = r.get<std::uint64_t>("seed", b.seed);
  r.check(r.has("family"), "family", "is required");
  b.family = parse_family(r.node("family"));
  if (r.has("dependence")) b.dependence = parse_dependence(r.node("dependence"));
  if (r.has("engine")) b.engine = parse_engine(r.node("engine"));
  if (r.has("experiment")) b.experiment = parse_experiment(r.node("experiment"));
  if (r.has("bounds")) b.bounds = parse_bounds(r.node("bounds"));
  if (r.has("verify")) b.verify = parse_verify(r.node("verify"));
  if (r.has("choquet")) b.choquet = parse_choquet(r.node("choquet"));
  if (b.dependence.mode == DependenceMode::copula_end) {
    try {
      (void)SequenceSampler(b.dependence, b.build_family(), 1);
    } catch (const InvalidArgument& e) {
      throw ConfigError("dependence.mode", std::string("invariant violated: ") + e.what(), r.line("dependence"));
    }
  }
  b.engine.seed = b.seed;
  if (b.experiment) b.experiment->seed = b.seed;
  return b;
}

ConfigBundle parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? ".inf" : "-.inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

std::string serialize_config(const ConfigBundle& b) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << YAML::DoubleQuoted << b.name;
  out << YAML::Key << "seed" << YAML::Value << b.seed;

  out << YAML::Key << "family" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "parameters" << YAML::Value << YAML::BeginSeq;
  for (const auto& a : b.family.parameters) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "name" << YAML::Value << a.name << YAML::Key << "lo"
        << YAML::Value << num(a.lo) << YAML::Key << "hi" << YAML::Value << num(a.hi) << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "grid_resolution" << YAML::Value << b.family.grid_resolution;
  out << YAML::Key << "K" << YAML::Value << num(b.family.K);
  out << YAML::Key << "marginals" << YAML::Value << YAML::BeginSeq;
  for (const auto& m : b.family.marginals) {
    out << YAML::BeginMap << YAML::Key << "kind" << YAML::Value << m.kind;
    for (const auto& [k, e] : m.fields) out << YAML::Key << k << YAML::Value << YAML::DoubleQuoted << e.text();
    if (m.kind == "discrete") {
      out << YAML::Key << "atoms" << YAML::Value << YAML::BeginSeq;
      for (const auto& [v, p] : m.atoms) {
        out << YAML::Flow << YAML::BeginSeq << YAML::DoubleQuoted << v.text() << YAML::DoubleQuoted << p.text()
            << YAML::EndSeq;
      }
      out << YAML::EndSeq;
    }
    out << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;

  const auto& d = b.dependence;
  out << YAML::Key << "dependence" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "mode" << YAML::Value << enum_name(d.mode, kModes);
  out << YAML::Key << "K" << YAML::Value << num(d.K);
  out << YAML::Key << "copula" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "lag_correlation" << YAML::Value << num(d.copula.lag_correlation);
  if (d.copula.correlation) {
    out << YAML::Key << "correlation" << YAML::Value << YAML::BeginSeq;
    const auto& c = *d.copula.correlation;
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      out << YAML::Flow << YAML::BeginSeq;
      for (Eigen::Index j = 0; j < c.cols(); ++j) out << num(c(i, j));
      out << YAML::EndSeq;
    }
    out << YAML::EndSeq;
  }
  out << YAML::EndMap;
  out << YAML::Key << "tables" << YAML::Value << YAML::BeginSeq;
  for (const auto& t : d.tables) {
    out << YAML::BeginMap << YAML::Key << "outcomes" << YAML::Value << YAML::BeginSeq;
    for (const auto& row : t.outcomes) {
      out << YAML::Flow << YAML::BeginSeq;
      for (double v : row) out << num(v);
      out << YAML::EndSeq;
    }
    out << YAML::EndSeq << YAML::Key << "probabilities" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (double p : t.probabilities) out << num(p);
    out << YAML::EndSeq << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;

  const auto& e = b.engine;
  out << YAML::Key << "engine" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "mc_replications" << YAML::Value << e.mc_replications;
  out << YAML::Key << "refinement" << YAML::Value << enum_name(e.refinement, kRefinements);
  out << YAML::Key << "tolerance" << YAML::Value << num(e.tolerance);
  out << YAML::Key << "path" << YAML::Value << enum_name(e.path, kPaths);
  out << YAML::Key << "enumeration_limit" << YAML::Value << e.enumeration_limit;
  out << YAML::Key << "independent_sup" << YAML::Value << (e.independent_sup ? "true" : "false");
  out << YAML::Key << "audit" << YAML::Value << (e.audit ? "true" : "false");
  out << YAML::EndMap;

  if (b.experiment) {
    const auto& c = *b.experiment;
    out << YAML::Key << "experiment" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "mode" << YAML::Value << enum_name(c.mode, kExperimentModes);
    out << YAML::Key << "trajectories" << YAML::Value << c.trajectories;
    out << YAML::Key << "horizon" << YAML::Value << c.horizon;
    out << YAML::Key << "burn_in" << YAML::Value << c.burn_in;
    out << YAML::Key << "schedule" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (auto v : c.schedule) out << v;
    out << YAML::EndSeq;
    out << YAML::Key << "epsilon" << YAML::Value << num(c.epsilon);
    out << YAML::Key << "epsilon_lil" << YAML::Value << num(c.epsilon_lil);
    if (c.pass_fraction) out << YAML::Key << "pass_fraction" << YAML::Value << num(*c.pass_fraction);
    out << YAML::Key << "wlln_target" << YAML::Value << num(c.wlln_target);
    out << YAML::Key << "block_scheme" << YAML::Value << enum_name(c.block_scheme, kSchemes);
    out << YAML::Key << "theta" << YAML::Value << num(c.theta);
    out << YAML::Key << "alpha" << YAML::Value << num(c.alpha);
    out << YAML::Key << "policy" << YAML::Value << enum_name(c.policy, kPolicies);
    out << YAML::Key << "cycle_points" << YAML::Value << c.cycle_points;
    out << YAML::Key << "grid_step" << YAML::Value << num(c.grid_step);
    out << YAML::Key << "coverage_radius" << YAML::Value << num(c.coverage_radius);
    out << YAML::Key << "coverage_target" << YAML::Value << num(c.coverage_target);
    out << YAML::Key << "measures" << YAML::Value << enum_name(c.measures, kSelections);
    out << YAML::Key << "checkpoint_start" << YAML::Value << num(c.checkpoint_start);
    out << YAML::Key << "checkpoint_ratio" << YAML::Value << num(c.checkpoint_ratio);
    out << YAML::Key << "divergence_threshold" << YAML::Value << num(c.divergence_threshold);
    out << YAML::Key << "divergence_target" << YAML::Value << num(c.divergence_target);
    out << YAML::Key << "bound_p" << YAML::Value << num(c.bound_p);
    out << YAML::Key << "bound_delta" << YAML::Value << num(c.bound_delta);
    out << YAML::Key << "bound_r" << YAML::Value << num(c.bound_r);
    out << YAML::Key << "x_points" << YAML::Value << c.x_points;
    out << YAML::EndMap;
  }

  if (b.bounds) {
    const auto& in = b.bounds->inputs;
    out << YAML::Key << "bounds" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "x" << YAML::Value << num(in.x);
    out << YAML::Key << "y" << YAML::Value << num(in.y);
    out << YAML::Key << "n" << YAML::Value << in.n;
    out << YAML::Key << "B" << YAML::Value << num(in.B);
    out << YAML::Key << "M_pp" << YAML::Value << num(in.M_pp);
    out << YAML::Key << "M_p" << YAML::Value << num(in.M_p);
    out << YAML::Key << "K" << YAML::Value << num(in.K);
    out << YAML::Key << "p" << YAML::Value << num(in.p);
    out << YAML::Key << "delta" << YAML::Value << num(in.delta);
    out << YAML::Key << "r" << YAML::Value << num(in.r);
    out << YAML::Key << "form" << YAML::Value << enum_name(b.bounds->form, kForms);
    out << YAML::EndMap;
  }

  const auto& v = b.verify;
  out << YAML::Key << "verify" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "n" << YAML::Value << v.n;
  out << YAML::Key << "direction" << YAML::Value << enum_name(v.direction, kDirections);
  out << YAML::Key << "corpus_size" << YAML::Value << v.corpus_size;
  out << YAML::Key << "mc_replications" << YAML::Value << v.mc_replications;
  out << YAML::Key << "expectation" << YAML::Value << enum_name(v.expectation, kCapacities);
  out << YAML::Key << "axiom_cases" << YAML::Value << v.axiom_cases;
  out << YAML::Key << "functions" << YAML::Value << YAML::BeginSeq;
  for (const auto& tup : v.functions) {
    out << YAML::Flow << YAML::BeginSeq;
    for (const auto& f : tup) out << YAML::DoubleQuoted << f;
    out << YAML::EndSeq;
  }
  out << YAML::EndSeq << YAML::EndMap;

  const auto& ch = b.choquet;
  out << YAML::Key << "choquet" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "coordinate" << YAML::Value << ch.coordinate;
  out << YAML::Key << "transform" << YAML::Value << enum_name(ch.transform, kTransforms);
  out << YAML::Key << "power" << YAML::Value << num(ch.power);
  out << YAML::Key << "capacity" << YAML::Value << enum_name(ch.capacity, kCapacities);
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace caplim::app
