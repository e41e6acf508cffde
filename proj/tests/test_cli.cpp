#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "distlq/cli/commands.hpp"
#include "support.hpp"

using namespace distlq;
using distlq::cli::RunConfig;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(RunConfig cfg) {
  std::ostringstream out, err;
  const int code = cli::run(cfg, out, err);
  return {code, out.str(), err.str()};
}

RunConfig config(const std::string& sub, const std::string& scenario, const fs::path& out) {
  RunConfig c;
  c.subcommand = sub;
  c.scenario = scenario;
  c.out_dir = out.string();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_doc(const fs::path& dir, const std::string& name, const json& doc) {
  const auto p = dir / name;
  std::ofstream(p) << doc.dump(2);
  return p;
}

}  // namespace

TEST(Cli, CentralizedExampleOne) {
  const auto dir = testing_support::scratch_dir("cli_central");
  const auto r = run(config("centralized", testing_support::scenario_path("example1.json"), dir));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = json::parse(slurp(dir / "summary.json"));
  EXPECT_LE(summary["errors"]["terminal"].get<double>(), 1e-2);
  EXPECT_TRUE(std::isfinite(summary["costs"]["J"].get<double>()));
  EXPECT_EQ(summary["lambda_star"].size(), 2u);
  const auto p = slurp(dir / "P_norm.csv");
  EXPECT_EQ(p.substr(0, p.find('\n')), "t,P_norm");
  const auto s = slurp(dir / "state.csv");
  EXPECT_EQ(s.substr(0, s.find('\n')), "t,x1,x2");
  EXPECT_TRUE(fs::exists(dir / "control.csv"));
}

TEST(Cli, ZeroStateWeightGivesZeroRiccatiSolution) {
  const auto dir = testing_support::scratch_dir("cli_q0");
  auto doc = read_json_file(testing_support::scenario_path("example1.json"));
  doc["system"]["Q"] = json::parse("[[0, 0], [0, 0]]");
  doc["grid"]["num_steps"] = 200;
  const auto path = write_doc(dir, "q0.json", doc);
  ASSERT_EQ(run(config("centralized", path.string(), dir / "out")).code, 0);
  std::istringstream csv(slurp(dir / "out" / "P_norm.csv"));
  std::string line;
  std::getline(csv, line);
  int rows = 0;
  while (std::getline(csv, line)) {
    EXPECT_EQ(line.substr(line.find(',') + 1), "0") << line;
    ++rows;
  }
  EXPECT_EQ(rows, 201);
}

TEST(Cli, MalformedScenarioExitsWithSchemaCode) {
  const auto dir = testing_support::scratch_dir("cli_schema");
  auto doc = read_json_file(testing_support::scenario_path("example1.json"));
  doc["system"].erase("B");
  const auto path = write_doc(dir, "bad.json", doc);
  const auto r = run(config("centralized", path.string(), dir / "out"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("B"), std::string::npos);
  EXPECT_EQ(run(config("centralized", (dir / "missing.json").string(), dir / "out")).code, 2);
  std::ofstream(dir / "garbage.json") << "{not json";
  EXPECT_EQ(run(config("validate", (dir / "garbage.json").string(), dir / "out")).code, 2);
}

TEST(Cli, InadmissibleGammaExitsWithTopologyCode) {
  const auto dir = testing_support::scratch_dir("cli_gamma");
  auto doc = read_json_file(testing_support::scenario_path("example1.json"));
  doc["topology"]["gamma"] = 1.0;
  const auto path = write_doc(dir, "g.json", doc);
  const auto r = run(config("distributed", path.string(), dir / "out"));
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("3.0"), std::string::npos) << r.err;
}

TEST(Cli, SolverFailureExitsWithSolverCode) {
  const auto dir = testing_support::scratch_dir("cli_solver");
  auto cfg = config("centralized", testing_support::scenario_path("example1.json"), dir);
  cfg.max_n = 1;
  EXPECT_EQ(run(cfg).code, 3);
}

TEST(Cli, SingleAgentOutputIsByteIdenticalToCentralized) {
  const auto dir = testing_support::scratch_dir("cli_n1");
  const auto scen = testing_support::scenario_path("single_agent.json");
  ASSERT_EQ(run(config("centralized", scen, dir / "c")).code, 0);
  ASSERT_EQ(run(config("distributed", scen, dir / "d")).code, 0);
  EXPECT_EQ(slurp(dir / "c" / "P_norm.csv"), slurp(dir / "d" / "agent_1_P_norm.csv"));
  EXPECT_EQ(slurp(dir / "c" / "state.csv"), slurp(dir / "d" / "agent_1_state.csv"));
  EXPECT_EQ(slurp(dir / "c" / "control.csv"), slurp(dir / "d" / "agent_1_control.csv"));
}

TEST(Cli, DistributedWithReferenceAndDiagnostics) {
  const auto dir = testing_support::scratch_dir("cli_dist");
  auto cfg = config("distributed", testing_support::scenario_path("example1.json"), dir);
  cfg.with_reference = true;
  cfg.diagnostics = true;
  cfg.grid_steps = 400;
  const auto r = run(cfg);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = json::parse(slurp(dir / "summary.json"));
  EXPECT_LT(summary["errors"]["reference_u"].get<double>(), 5e-2);
  EXPECT_TRUE(summary["reference_within_tolerance"].get<bool>());
  EXPECT_TRUE(summary["errors"].contains("cross_agent_x"));
  const auto d = slurp(dir / "diagnostics.csv");
  EXPECT_EQ(d.substr(0, d.find('\n')), "round,quantity,delta_consensus,delta_mean");
  for (int i = 1; i <= 4; ++i) EXPECT_TRUE(fs::exists(dir / ("agent_" + std::to_string(i) + "_state.csv")));
}

TEST(Cli, ValidateReportsAssumptions) {
  const auto dir = testing_support::scratch_dir("cli_validate");
  auto ok = run(config("validate", testing_support::scenario_path("example1.json"), dir));
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("PASS  mean(A_i) = A"), std::string::npos);
  EXPECT_EQ(run(config("validate", testing_support::scenario_path("single_agent.json"), dir)).code, 0);
  EXPECT_EQ(run(config("validate", testing_support::scenario_path("ugv_example2.json"), dir)).code, 0);

  const auto lit = run(config("validate", testing_support::scenario_path("example1_identity_views.json"), dir));
  EXPECT_EQ(lit.code, 1);
  EXPECT_NE(lit.out.find("FAIL  mean(M_i M_i') = B R^-1 B'"), std::string::npos);

  auto doc = read_json_file(testing_support::scenario_path("example1.json"));
  doc["agents"][0]["A"][0][0] = 1.9;
  const auto bad = run(config("validate", write_doc(dir, "p.json", doc).string(), dir));
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("FAIL  mean(A_i) = A"), std::string::npos);
  EXPECT_NE(bad.out.find("residual 0.1"), std::string::npos) << bad.out;
}

TEST(Cli, ConsensusOnIdenticalPair) {
  const auto dir = testing_support::scratch_dir("cli_consensus");
  const auto r = run(config("consensus", testing_support::scenario_path("identical_pair.json"), dir));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = slurp(dir / "consensus_report.csv");
  EXPECT_EQ(rep.substr(0, rep.find('\n')), "case,J_proposed,J_baseline,consensus_residual");
  const auto summary = json::parse(slurp(dir / "summary.json"));
  EXPECT_LT(summary["errors"]["value_identity_rel"].get<double>(), 5e-3);
  EXPECT_LT(summary["costs"]["J_optimal"].get<double>(), summary["costs"]["J_baseline"].get<double>());
  EXPECT_TRUE(fs::exists(dir / "state_distributed.csv"));
}

TEST(Cli, ConsensusRejectsLQScenario) {
  const auto dir = testing_support::scratch_dir("cli_consensus_bad");
  EXPECT_EQ(run(config("consensus", testing_support::scenario_path("example1.json"), dir)).code, 2);
}
