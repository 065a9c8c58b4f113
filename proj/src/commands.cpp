#include "commands.hpp"

#include "config.hpp"
#include "manifest.hpp"

#include "caplim/axioms.hpp"
#include "caplim/bounds.hpp"
#include "caplim/dependence.hpp"
#include "caplim/limits.hpp"
#include "caplim/sublinear.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace caplim::app {

namespace {

struct Artifacts {
  bool pass = true;
  std::string summary;
  Json result = Json::object();
  std::string csv;
  std::string traces;
};

ConfigBundle load_bundle(const CommandRequest& req, bool required) {
  ConfigBundle b;
  if (req.config) {
    b = parse_config(*req.config);
  } else if (required) {
    throw ConfigError("--config", "this command needs a config file");
  } else {
    // Singleton standard normal.
    b.family.marginals.push_back({"normal", {{"mean", Expression("0", {})}, {"variance", Expression("1", {})}}, {}});
  }
  if (req.seed) b.seed = *req.seed;
  b.engine.seed = b.seed;
  b.engine.workers = req.workers;
  if (b.experiment) {
    b.experiment->seed = b.seed;
    b.experiment->workers = req.workers;
  }
  return b;
}

std::string config_digest(const ConfigBundle& b) { return sha256_hex(serialize_config(b)); }

Json margin_json(const MarginReport& r) {
  Json j;
  j["relation"] = r.relation;
  j["pass"] = r.pass;
  j["exact"] = r.exact;
  j["worst_margin"] = r.worst_margin;
  j["worst_std_error"] = r.worst_std_error;
  Json cases = Json::array();
  for (const auto& c : r.cases) {
    Json e;
    e["label"] = c.label;
    e["lhs"] = c.lhs;
    e["rhs"] = c.rhs;
    e["margin"] = c.margin;
    e["std_error"] = c.std_error;
    e["pass"] = c.pass;
    cases.push_back(e);
  }
  j["cases"] = cases;
  return j;
}

std::vector<FunctionTuple> tuples_of(const VerifySection& v) {
  std::vector<FunctionTuple> out;
  for (const auto& names : v.functions) {
    FunctionTuple t;
    for (const auto& n : names) t.push_back(unary_from_name(n));
    out.push_back(std::move(t));
  }
  return out;
}

Artifacts verify_command(const std::string& what, const ConfigBundle& b, std::size_t workers, bool configured) {
  Artifacts a;
  if (what == "axioms") {
    AxiomOptions opts;
    opts.seed = b.seed;
    opts.workers = workers;
    opts.cases = b.verify.axiom_cases;
    if (configured) opts.family = b.build_family();
    const auto rep = run_axiom_suite(opts);
    a.pass = rep.pass;
    a.summary = "axiom suite: " + std::string(rep.pass ? "PASS" : "FAIL") + "\n" + rep.summary();
    a.result["pass"] = rep.pass;
    a.result["cases"] = rep.cases;
    a.result["monte_carlo_cases"] = rep.monte_carlo_cases;
    a.result["failures"] = rep.failures;
    Json checks = Json::array();
    for (const auto& c : rep.checks) {
      Json e;
      e["case"] = c.case_index;
      e["property"] = c.property;
      e["path"] = to_string(c.path);
      e["lhs"] = c.lhs;
      e["rhs"] = c.rhs;
      e["tolerance"] = c.tolerance;
      e["pass"] = c.pass;
      checks.push_back(e);
    }
    a.result["checks"] = checks;
    std::ostringstream csv;
    csv << "case,property,path,lhs,rhs,tolerance,pass\n";
    for (const auto& c : rep.checks) {
      csv << c.case_index << ",\"" << c.property << "\"," << to_string(c.path) << ',' << format_value(c.lhs) << ','
          << format_value(c.rhs) << ',' << format_value(c.tolerance) << ',' << (c.pass ? 1 : 0) << '\n';
    }
    a.csv = csv.str();
    return a;
  }
  VerifyOptions vo;
  vo.corpus_size = b.verify.corpus_size;
  vo.mc_replications = b.verify.mc_replications;
  vo.seed = b.seed;
  vo.workers = workers;
  vo.expectation = b.verify.expectation;
  const auto family = b.build_family();
  MarginReport rep;
  if (what == "end") {
    rep = verify_end(b.dependence, family, b.verify.n, b.verify.direction, tuples_of(b.verify),
                     std::max(b.dependence.K, family.K()), vo);
  } else if (what == "extindep") {
    rep = verify_extended_independence(b.dependence, family, b.verify.n, tuples_of(b.verify), vo);
  } else {
    throw InvalidArgument("verify: expected axioms, end or extindep, got '" + what + "'");
  }
  a.pass = rep.pass;
  a.summary = rep.summary() + "\n";
  for (const auto& c : rep.cases) {
    if (!c.pass) {
      a.summary += "  FAIL " + c.label + ": lhs " + format_value(c.lhs) + ", rhs " + format_value(c.rhs) + ", gap " +
                   format_value(c.margin) + "\n";
    }
  }
  a.result = margin_json(rep);
  return a;
}

BoundInputs bound_inputs(const CommandRequest& req, const ConfigBundle& b) {
  BoundInputs in = b.bounds ? b.bounds->inputs : BoundInputs{};
  for (const auto& [k, v] : req.inputs) {
    if (k == "x") in.x = v;
    else if (k == "y") in.y = v;
    else if (k == "n") in.n = static_cast<std::size_t>(v);
    else if (k == "B") in.B = v;
    else if (k == "M_pp") in.M_pp = v;
    else if (k == "M_p") in.M_p = v;
    else if (k == "K") in.K = v;
    else if (k == "p") in.p = v;
    else if (k == "delta") in.delta = v;
    else if (k == "r") in.r = v;
    else throw InvalidArgument("bounds eval: unknown input '" + k + "'");
  }
  in.validate();
  return in;
}

Artifacts bounds_command(const CommandRequest& req, const ConfigBundle& b) {
  Artifacts a;
  const auto in = bound_inputs(req, b);
  const SplitForm form = b.bounds ? b.bounds->form : SplitForm::stated;
  std::vector<std::pair<std::string, double>> rows;
  const std::string& f = req.formula;
  const bool all = f == "all";
  if (all || f == "kolmogorov") rows.emplace_back("kolmogorov", kolmogorov_exp_bound(in));
  if (all || f == "chernoff") rows.emplace_back("chernoff", chernoff_truncated_bound(in));
  if (all || f == "split") rows.emplace_back("split", split_moment_bound(in, form));
  if (all || f == "power") rows.emplace_back("power", power_tail_bound(in));
  if (all || f == "chebyshev") rows.emplace_back("chebyshev", chebyshev_bound(in));
  if (all || f == "conjugate") {
    const auto c = conjugate_bounds(in, form);
    rows.emplace_back("conjugate_kolmogorov", c.exp_term);
    rows.emplace_back("conjugate_split", c.split);
    rows.emplace_back("conjugate_chebyshev", c.chebyshev);
  }
  if (all || f == "moricz") {
    if (in.p > 2.0) {
      // Inputs reinterpreted: M_pp as the largest Choquet value, B / n as the largest second moment.
      const auto mb = moricz_max_bound(in.p, in.n, in.M_pp, in.B / static_cast<double>(in.n), in.K);
      rows.emplace_back("moricz_dyadic", mb.dyadic);
      rows.emplace_back("moricz_dyadic_unshifted", mb.dyadic_unshifted);
    } else if (f == "moricz") {
      throw InvalidArgument("bounds eval: moricz needs p > 2");
    }
  }
  if (rows.empty() && f != "constants") throw InvalidArgument("bounds eval: unknown formula '" + f + "'");

  std::ostringstream table;
  table << "formula,value,clipped\n";
  std::ostringstream human;
  human << "inputs: x=" << format_value(in.x) << " y=" << format_value(in.y) << " n=" << in.n
        << " B=" << format_value(in.B) << " M_pp=" << format_value(in.M_pp) << " M_p=" << format_value(in.M_p)
        << " K=" << format_value(in.K) << " p=" << format_value(in.p) << " delta=" << format_value(in.delta)
        << " r=" << format_value(in.r) << "\n";
  Json jr = Json::array();
  for (const auto& [name, v] : rows) {
    table << name << ',' << format_value(v) << ',' << format_value(clip_capacity(v)) << '\n';
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-26s %.6f\n", name.c_str(), v);
    human << buf;
    Json e;
    e["formula"] = name;
    e["value"] = v;
    e["clipped"] = clip_capacity(v);
    jr.push_back(e);
  }
  human << "(exponential, chernoff and power rows exclude the capacity of the large-summand event)\n";
  const auto consts = derive_constants(in.p, in.K);
  a.traces = consts.report();
  a.summary = human.str();
  if (f == "constants") a.summary += a.traces;
  a.csv = table.str();
  a.result["rows"] = jr;
  a.result["constants"] = {{"C_p_split", consts.C_p_split},
                           {"C_p_split_post", consts.C_p_split_post},
                           {"delta_star", consts.delta_star},
                           {"C_p_moment", consts.C_p_moment},
                           {"M_moricz", consts.M_moricz}};
  return a;
}

Artifacts experiment_command(const std::string& mode_name, ConfigBundle& b, std::size_t workers) {
  ExperimentConfig cfg;
  if (b.experiment) {
    cfg = *b.experiment;
    if (mode_name != to_string(cfg.mode)) {
      throw ConfigError("experiment.mode", "config declares '" + std::string(to_string(cfg.mode)) +
                                               "' but the command asks for '" + mode_name + "'");
    }
  } else {
    bool found = false;
    for (auto m : {ExperimentMode::wlln, ExperimentMode::slln, ExperimentMode::cluster, ExperimentMode::lil,
                   ExperimentMode::necessity, ExperimentMode::bound_check}) {
      if (mode_name == to_string(m)) cfg.mode = m, found = true;
    }
    if (!found) throw InvalidArgument("experiment: unknown mode '" + mode_name + "'");
  }
  cfg.seed = b.seed;
  cfg.workers = workers;
  const auto model = b.model();
  ExperimentResult r;
  switch (cfg.mode) {
    case ExperimentMode::wlln: r = run_wlln(model, cfg); break;
    case ExperimentMode::slln: r = run_slln(model, cfg); break;
    case ExperimentMode::cluster: r = run_cluster(model, cfg); break;
    case ExperimentMode::lil: r = run_lil(model, cfg); break;
    case ExperimentMode::necessity: r = run_necessity(model, cfg); break;
    case ExperimentMode::bound_check: r = run_bound_check(model, cfg); break;
  }
  r.config_hash = config_digest(b);
  Artifacts a;
  a.pass = r.pass;
  a.result = r.to_json();
  a.csv = r.to_csv();
  a.summary = r.mode + ": " + (r.pass ? "PASS" : "FAIL") + "\n" + r.verdict + "\n";
  for (const auto& s : r.assumptions) a.summary += "assumption: " + s + "\n";
  if (cfg.mode == ExperimentMode::bound_check) {
    std::ostringstream t;
    t << "x            calculator               estimate      se            bound\n";
    for (const auto& row : r.summary["comparisons"]) {
      char buf[200];
      std::snprintf(buf, sizeof buf, "%-12.6g %-24s %-13.6g %-13.6g %-13.6g%s\n", row["x"].get<double>(),
                    row["calculator"].get<std::string>().c_str(), row["estimate"].get<double>(),
                    row["std_error"].get<double>(), row["bound"].get<double>(),
                    row["violated"].get<bool>() ? "  VIOLATED" : "");
      t << buf;
    }
    a.summary += t.str();
    a.traces = derive_constants(cfg.bound_p, model.family.K()).report();
  }
  return a;
}

Artifacts choquet_command(const ConfigBundle& b) {
  const SublinearEngine engine(b.build_family(), b.engine);
  ChoquetTarget t;
  t.coordinate = b.choquet.coordinate;
  t.transform = b.choquet.transform;
  t.power = b.choquet.power;
  ChoquetOptions o;
  o.capacity = b.choquet.capacity;
  const auto r = engine.choquet(t, o);
  Artifacts a;
  a.result["infinite"] = r.infinite;
  a.result["value"] = r.infinite ? Json(format_value(r.value)) : Json(r.value);
  a.result["error"] = r.error;
  a.result["upper_limit"] = r.upper_limit;
  a.result["evaluations"] = r.evaluations;
  a.summary = "choquet: " + (r.infinite ? std::string("+infinite") : format_value(r.value)) + " (error " +
              format_value(r.error) + ")\n";
  return a;
}

}  // namespace

int run_command(const CommandRequest& req, std::ostream& out, std::ostream& err) {
  const auto started = std::chrono::steady_clock::now();
  RunManifest manifest;
  for (const auto& c : req.command) manifest.command += (manifest.command.empty() ? "" : " ") + c;
  manifest.workers = req.workers;
  manifest.started_utc = utc_now();
  std::optional<std::filesystem::path> dir;
  if (req.out) dir = std::filesystem::path(*req.out);

  auto finish_manifest = [&] {
    if (!dir) return;
    manifest.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::filesystem::create_directories(*dir);
    std::ofstream m(*dir / "manifest.json");
    m << manifest.to_json().dump(2) << "\n";
  };

  try {
    if (req.command.empty()) throw InvalidArgument("no command given");
    const auto& head = req.command[0];
    Artifacts a;
    ConfigBundle bundle = load_bundle(req, head == "verify" && req.command.size() > 1 && req.command[1] != "axioms");
    manifest.seed = bundle.seed;
    manifest.config_hash = config_digest(bundle);
    if (head == "verify") {
      if (req.command.size() != 2) throw InvalidArgument("verify: expected axioms, end or extindep");
      a = verify_command(req.command[1], bundle, req.workers, req.config.has_value());
    } else if (head == "bounds") {
      if (req.command.size() != 2 || req.command[1] != "eval") throw InvalidArgument("bounds: expected 'bounds eval'");
      a = bounds_command(req, bundle);
    } else if (head == "experiment") {
      if (req.command.size() != 2) throw InvalidArgument("experiment: expected a mode");
      if (!req.config) throw ConfigError("--config", "experiments need a config file");
      a = experiment_command(req.command[1], bundle, req.workers);
    } else if (head == "choquet") {
      a = choquet_command(bundle);
    } else {
      throw InvalidArgument("unknown command '" + head + "'");
    }
    a.result["config_hash"] = manifest.config_hash;
    out << a.summary;
    if (dir) {
      write_output(*dir, "result.json", a.result.dump(2) + "\n", manifest);
      if (!a.csv.empty()) write_output(*dir, "data.csv", a.csv, manifest);
      if (!a.traces.empty()) write_output(*dir, "traces.txt", a.traces, manifest);
      write_output(*dir, "summary.txt", a.summary, manifest);
    }
    manifest.complete = true;
    finish_manifest();
    return a.pass ? kPass : kFail;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    manifest.complete = false;
    manifest.error = e.what();
    try {
      finish_manifest();
    } catch (const std::exception&) {
    }
    return kError;
  }
}

}  // namespace caplim::app
