#include "commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using caplim::app::CommandRequest;
  CLI::App app{"caplim: sub-linear expectations, capacity bounds and limit-theorem experiments"};
  app.require_subcommand(1);

  CommandRequest req;
  std::string config, out;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "YAML config file");
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--workers", req.workers, "worker threads (results do not depend on this)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "output directory");
  };

  auto* verify = app.add_subcommand("verify", "axiom suite, END and extended-independence checks");
  std::string what;
  verify->add_option("what", what, "axioms | end | extindep")->required()->check(CLI::IsMember({"axioms", "end", "extindep"}));
  add_common(verify);

  auto* bounds = app.add_subcommand("bounds", "tail-bound calculators");
  std::string action;
  bounds->add_option("action", action, "eval")->required()->check(CLI::IsMember({"eval"}));
  bounds->add_option("--formula", req.formula,
                     "kolmogorov | chernoff | split | power | chebyshev | conjugate | moricz | constants | all");
  std::map<std::string, double*> numeric;
  double x = 0, y = 0, n = 0, B = 0, mpp = 0, mp = 0, K = 0, p = 0, delta = 0, r = 0;
  for (auto [name, ptr] : std::initializer_list<std::pair<const char*, double*>>{
           {"x", &x}, {"y", &y}, {"n", &n}, {"B", &B}, {"M_pp", &mpp}, {"M_p", &mp}, {"K", &K}, {"p", &p},
           {"delta", &delta}, {"r", &r}}) {
    bounds->add_option(std::string("--") + name, *ptr, std::string("input ") + name);
    numeric[name] = ptr;
  }
  add_common(bounds);

  auto* experiment = app.add_subcommand("experiment", "limit-theorem experiments");
  std::string mode;
  experiment->add_option("mode", mode, "wlln | slln | cluster | lil | necessity | bound-check")
      ->required()
      ->check(CLI::IsMember({"wlln", "slln", "cluster", "lil", "necessity", "bound-check"}));
  add_common(experiment);

  auto* choquet = app.add_subcommand("choquet", "Choquet integral of a coordinate");
  add_common(choquet);

  CLI11_PARSE(app, argc, argv);

  CLI::App* chosen = app.get_subcommands().front();
  req.command.push_back(chosen->get_name());
  if (chosen == verify) req.command.push_back(what);
  if (chosen == bounds) req.command.push_back(action);
  if (chosen == experiment) req.command.push_back(mode);
  if (chosen->count("--config")) req.config = config;
  if (chosen->count("--seed")) req.seed = seed;
  if (chosen->count("--out")) req.out = out;
  if (chosen == bounds) {
    for (const auto& [name, ptr] : numeric) {
      if (bounds->count("--" + name)) req.inputs[name] = *ptr;
    }
  }
  return caplim::app::run_command(req, std::cout, std::cerr);
}
