#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"

#include <fstream>
#include <sstream>

using namespace fieldrec;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli_run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "fieldrec_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("generate then run with zero iterations") {
  const auto dir = scratch("zero");
  const auto cfg = (dir / "tiny.json").string();
  REQUIRE(cli({"generate", "--preset", "tiny", "--out", cfg}).code == 0);
  const auto r = cli({"run", "--config", cfg, "--iters", "0", "--out", (dir / "run").string()});
  CHECK(r.code == 0);
  const auto trace = lines(dir / "run" / "trace.csv");
  REQUIRE(trace.size() == 3);
  CHECK(trace[1] == "iteration,max_normalized_rmse,algorithm");
  CHECK(trace[2].rfind("0,", 0) == 0);
  CHECK(fs::exists(dir / "run" / "field.csv"));
  CHECK(fs::exists(dir / "run" / "errors.csv"));
  CHECK(fs::exists(dir / "run" / "summary.txt"));
}

TEST_CASE("run writes snapshots and a digest-bound trace") {
  const auto dir = scratch("snap");
  const auto cfg = (dir / "tiny.json").string();
  REQUIRE(cli({"generate", "--preset", "tiny", "--out", cfg}).code == 0);
  const auto r = cli({"run", "--config", cfg, "--iters", "20", "--snapshot-every", "10", "--threads", "2", "--out",
                      (dir / "run").string(), "--algorithm", "cirfe"});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "run" / "snapshots" / "state_0.csv"));
  CHECK(fs::exists(dir / "run" / "snapshots" / "state_20.csv"));
  const auto trace = lines(dir / "run" / "trace.csv");
  CHECK(trace.size() == 2 + 21);
  CHECK(trace.back().find(",cirfe") != std::string::npos);
  CHECK(r.out.find("algorithm: cirfe") != std::string::npos);
  const auto s = load_scenario(cfg);
  CHECK(trace[0] == "# digest: " + scenario_digest(s, Algorithm::Cirfe, 20));
}

TEST_CASE("verify passes on the tiny attacked scenario and prints the margin") {
  const auto dir = scratch("verify");
  const auto cfg = (dir / "tiny.json").string();
  REQUIRE(cli({"generate", "--preset", "tiny", "--out", cfg}).code == 0);
  const auto r = cli({"verify", "--config", cfg});
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("kappa: ") != std::string::npos);
  CHECK(r.out.find("PASS oracle-equivalence") != std::string::npos);
}

TEST_CASE("verify on the desk scenario reports the failed resilience condition") {
  const auto dir = scratch("desk");
  const auto cfg = (dir / "desk.json").string();
  REQUIRE(cli({"generate", "--preset", "desk", "--out", cfg}).code == 0);
  const auto r = cli({"verify", "--config", cfg});
  CHECK(r.out.find("PASS system/global observability") != std::string::npos);
  CHECK(r.out.find("PASS topology/interest subgraphs connected") != std::string::npos);
  CHECK(r.out.find("FAIL resilience") != std::string::npos);
  CHECK(r.out.find("kappa: ") != std::string::npos);
  CHECK(r.out.find("PASS oracle-equivalence") != std::string::npos);
  CHECK(r.code == 3);
}

TEST_CASE("compare writes both columns on the desk scenario") {
  const auto dir = scratch("compare");
  const auto cfg = (dir / "desk.json").string();
  REQUIRE(cli({"generate", "--preset", "desk", "--out", cfg}).code == 0);
  const auto r = cli({"compare", "--config", cfg, "--out", dir.string(), "--iters", "200"});
  REQUIRE(r.code == 0);
  const auto rows = lines(dir / "compare.csv");
  REQUIRE(rows.size() == 2 + 201);
  CHECK(rows[1] == "iteration,resilient_max_normalized_rmse,cirfe_max_normalized_rmse");
  std::istringstream last(rows.back());
  std::string it, res, cir;
  std::getline(last, it, ',');
  std::getline(last, res, ',');
  std::getline(last, cir, ',');
  CHECK(std::stod(res) < std::stod(cir));
}

TEST_CASE("generation is deterministic and seedable") {
  const auto a = cli({"generate", "--preset", "desk"});
  const auto b = cli({"generate", "--preset", "desk"});
  const auto c = cli({"generate", "--preset", "desk", "--seed", "77"});
  CHECK(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out != c.out);
}

TEST_CASE("exit codes and machine-readable errors") {
  const auto dir = scratch("errors");
  auto r = cli({"run"});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error: category=config", 0) == 0);

  r = cli({"run", "--config", (dir / "missing.json").string()});
  CHECK(r.code == 2);

  std::ofstream(dir / "broken.json") << "{\n\"grid_scenario\": [\n";
  r = cli({"run", "--config", (dir / "broken.json").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("line") != std::string::npos);

  r = cli({"run", "--algorithm", "kalman", "--config", (dir / "broken.json").string()});
  CHECK(r.code == 2);

  std::ofstream(dir / "gap.json") << R"({"grid_scenario": {"grid_side": 20, "agent_rows": 2, "agent_cols": 2,
      "measurement_window": 3, "interest_window": 5, "attacked_count": 0}})";
  r = cli({"run", "--config", (dir / "gap.json").string()});
  CHECK(r.code == 3);
  CHECK(r.err.rfind("error: category=assumption", 0) == 0);

  std::ofstream(dir / "disconnected.json") << R"({"field": {"size": 1, "values": [1]},
      "agents": [{"selectors": [1], "interest": "all"}, {"selectors": [1], "interest": "all"}],
      "graph": {"vertices": 2, "edges": []}})";
  r = cli({"run", "--config", (dir / "disconnected.json").string(), "--out", (dir / "o").string()});
  CHECK(r.code == 3);

  std::ofstream(dir / "blocked") << "x";
  const auto cfg = (dir / "tiny.json").string();
  REQUIRE(cli({"generate", "--preset", "tiny", "--out", cfg}).code == 0);
  r = cli({"run", "--config", cfg, "--iters", "1", "--out", (dir / "blocked" / "sub").string()});
  CHECK(r.code == 4);
  CHECK(r.err.rfind("error: category=runtime", 0) == 0);

  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({"frobnicate"}).code == 2);
}
