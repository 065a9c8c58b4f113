#include "commands.hpp"
#include "manifest.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace caplim::app;
namespace fs = std::filesystem;

namespace {

const std::string kDir = CAPLIM_CONFIG_DIR;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(CommandRequest req) {
  std::ostringstream out, err;
  const int code = run_command(req, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("caplim_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string small_slln() {
  const auto p = scratch("config") / "slln.yaml";
  fs::create_directories(p.parent_path());
  std::ofstream(p) << "name: small\nseed: 5\nfamily:\n  parameters:\n    - {name: mu, lo: -1, hi: 1}\n"
                      "  marginals:\n    - {kind: normal, mean: mu, variance: 1}\n"
                      "experiment:\n  mode: slln\n  trajectories: 6\n  horizon: 4000\n  burn_in: 100\n  epsilon: 0.5\n";
  return p.string();
}

}  // namespace

TEST_CASE("sha256 known answers", "[manifest]") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("bounds eval chebyshev row", "[cli]") {
  CommandRequest req;
  req.command = {"bounds", "eval"};
  req.formula = "chebyshev";
  req.inputs = {{"x", 2.0}, {"B", 1.0}, {"K", 1.0}};
  const auto r = run(req);
  CHECK(r.code == kPass);
  CHECK(r.out.find("chebyshev                  0.929570") != std::string::npos);
}

TEST_CASE("bounds eval rejects bad input", "[cli]") {
  CommandRequest req;
  req.command = {"bounds", "eval"};
  req.inputs = {{"K", 0.5}};
  CHECK(run(req).code == kError);
  req.inputs = {};
  req.formula = "nonsense";
  CHECK(run(req).code == kError);
}

TEST_CASE("verify axioms on the example family passes", "[cli]") {
  CommandRequest req;
  req.command = {"verify", "axioms"};
  req.config = kDir + "/sigma_family.yaml";
  const auto r = run(req);
  INFO(r.out << r.err);
  CHECK(r.code == kPass);
}

TEST_CASE("verify extindep on the example family fails", "[cli]") {
  CommandRequest req;
  req.command = {"verify", "extindep"};
  req.config = kDir + "/sigma_family.yaml";
  const auto r = run(req);
  CHECK(r.code == kFail);
  CHECK(r.out.find("gap 15") != std::string::npos);
}

TEST_CASE("verify end on a negatively dependent table passes", "[cli]") {
  CommandRequest req;
  req.command = {"verify", "end"};
  req.config = kDir + "/discrete_joint_nd.yaml";
  CHECK(run(req).code == kPass);
}

TEST_CASE("experiment outputs and manifest", "[cli]") {
  const auto cfg = small_slln();
  const auto a = scratch("a"), b = scratch("b");
  CommandRequest req;
  req.command = {"experiment", "slln"};
  req.config = cfg;
  req.out = a.string();
  REQUIRE(run(req).code == kPass);
  req.out = b.string();
  REQUIRE(run(req).code == kPass);

  for (const char* f : {"result.json", "data.csv", "summary.txt", "manifest.json"}) CHECK(fs::exists(a / f));
  const auto ma = nlohmann::json::parse(slurp(a / "manifest.json"));
  const auto mb = nlohmann::json::parse(slurp(b / "manifest.json"));
  CHECK(ma["complete"] == true);
  CHECK(ma["seed"] == 5);
  CHECK(ma["files"] == mb["files"]);
  for (const auto& f : ma["files"]) {
    CHECK(f["sha256"] == sha256_hex(slurp(a / f["name"].get<std::string>())));
  }
  CHECK(slurp(a / "data.csv").rfind("checkpoint,trajectory,measure,statistic,value\n", 0) == 0);
}

TEST_CASE("experiment results are byte-identical across worker counts", "[cli][determinism]") {
  const auto cfg = small_slln();
  const auto a = scratch("w1"), b = scratch("w3");
  CommandRequest req;
  req.command = {"experiment", "slln"};
  req.config = cfg;
  req.out = a.string();
  REQUIRE(run(req).code == kPass);
  req.workers = 3;
  req.out = b.string();
  REQUIRE(run(req).code == kPass);
  CHECK(slurp(a / "result.json") == slurp(b / "result.json"));
  CHECK(slurp(a / "data.csv") == slurp(b / "data.csv"));
}

TEST_CASE("errors give exit code 1 and an incomplete manifest", "[cli]") {
  const auto d = scratch("err");
  CommandRequest req;
  req.command = {"experiment", "lil"};
  req.config = small_slln();
  req.out = d.string();
  const auto r = run(req);
  CHECK(r.code == kError);
  CHECK(r.err.find("experiment.mode") != std::string::npos);
  const auto m = nlohmann::json::parse(slurp(d / "manifest.json"));
  CHECK(m["complete"] == false);

  req.config = kDir + "/does_not_exist.yaml";
  CHECK(run(req).code == kError);
  req.command = {"verify", "end"};
  req.config.reset();
  CHECK(run(req).code == kError);
}

TEST_CASE("choquet command", "[cli]") {
  CommandRequest req;
  req.command = {"choquet"};
  req.config = kDir + "/necessity_pareto.yaml";
  CHECK(run(req).out.find("+infinite") != std::string::npos);
  req.config = kDir + "/bernoulli_family.yaml";
  CHECK(run(req).out.find("choquet: 0.6") != std::string::npos);
}
