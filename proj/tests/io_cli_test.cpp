#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "switchback/cli.hpp"
#include "switchback/io.hpp"
#include "switchback/rng.hpp"

using namespace switchback;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("switchback_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  std::string slurp(const fs::path& p) const {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  int cli(std::vector<std::string> args) const {
    std::vector<const char*> argv = {"switchback"};
    for (const std::string& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
  }

  fs::path dir_;
};

using IoTest = TempDir;
using CliTest = TempDir;

}  // namespace

TEST_F(IoTest, AssignmentRoundTrip) {
  const AssignmentMatrix w = sample({DesignKind::iid_multi_unit, 3, 4, 0.5, {}, {}}, 9);
  std::stringstream ss;
  write_assignment_csv(w, ss);
  const AssignmentMatrix back = read_assignment_csv(ss, "mem");
  EXPECT_EQ(back.values, w.values);
}

TEST_F(IoTest, OutcomeRoundTripIsBitExact) {
  Rng rng(17);
  OutcomeMatrix y{Grid<double>(4, 5, 0.0), {}};
  for (double& v : y.values.data()) v = rng.normal() * 1e3 + 1.0 / 3.0;
  y.values(0, 0) = 1e-300;
  y.values(1, 1) = -12345.678901234567;
  std::stringstream ss;
  write_outcome_csv(y, ss);
  const OutcomeMatrix back = read_outcome_csv(ss, "mem");
  for (std::size_t i = 0; i < y.values.data().size(); ++i) {
    EXPECT_EQ(back.values.data()[i], y.values.data()[i]);
  }
  EXPECT_EQ(back.unit_ids, (std::vector<std::string>{"1", "2", "3", "4"}));
}

TEST_F(IoTest, AssignmentErrorsNameTheCell) {
  std::stringstream ss("unit,t1,t2\n1,0,1\n2,0,2\n");
  try {
    read_assignment_csv(ss, "bad.csv");
    FAIL() << "expected a parse error";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("column 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("\"2\""), std::string::npos) << msg;
  }
}

TEST_F(IoTest, RaggedAndEmptyInputsAreRejected) {
  std::stringstream ragged("unit,t1,t2\n1,0\n");
  EXPECT_THROW(read_assignment_csv(ragged, "r.csv"), std::runtime_error);

  std::stringstream empty("");
  try {
    read_assignment_csv(empty, "e.csv");
    FAIL() << "expected an error on an empty file";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("no data rows"), std::string::npos);
  }

  std::stringstream header_only("unit,t1,t2\n");
  EXPECT_THROW(read_assignment_csv(header_only, "h.csv"), std::runtime_error);

  std::stringstream text_cell("unit,t1\n1,abc\n");
  EXPECT_THROW(read_outcome_csv(text_cell, "t.csv"), std::runtime_error);
}

TEST_F(IoTest, SidecarRoundTrip) {
  DesignSpec spec{DesignKind::regular_switchback, 4, 6, 0.5, {1, 3, 5}, {0.4, 0.5, 0.6}};
  const AssignmentMatrix w = sample(spec, 77);
  write_sidecar_json(w, path("side.json"));
  const auto [back, seed] = read_sidecar_json(path("side.json"));
  EXPECT_EQ(seed, 77u);
  EXPECT_EQ(back.kind, spec.kind);
  EXPECT_EQ(back.n_units, spec.n_units);
  EXPECT_EQ(back.breakpoints, spec.breakpoints);
  EXPECT_EQ(back.weights, spec.weights);
}

TEST_F(IoTest, ScenarioParsing) {
  const json scenario{{"designs", json::array({{{"kind", "rbsd"}, {"p", 0.5}}})},
                      {"model", {{"deltas", {0.0, 0.2}}}},
                      {"reps", 10},
                      {"lag", 1},
                      {"master_seed", 3},
                      {"base", {{"lognormal", {{"units", 20}, {"steps", 6}, {"seed", 2}}}}}};
  const Scenario sc = scenario_from_json(scenario, dir_);
  EXPECT_EQ(sc.designs.size(), 1u);
  EXPECT_EQ(sc.model.deltas, (std::vector<double>{0.0, 0.2}));
  EXPECT_EQ(sc.reps, 10);
  const OutcomeMatrix base = scenario_base_panel(sc);
  EXPECT_EQ(base.n_units(), 20);
  const MonteCarloConfig cfg = scenario_config(sc, base, 1);
  EXPECT_EQ(cfg.designs[0].n_units, 20);  // inherited from the panel
  EXPECT_EQ(cfg.designs[0].n_steps, 6);

  json no_base = scenario;
  no_base.erase("base");
  EXPECT_THROW(scenario_from_json(no_base, dir_), std::runtime_error);

  json bad_estimator = scenario;
  bad_estimator["estimators"] = {"tau", "bogus"};
  EXPECT_THROW(scenario_from_json(bad_estimator, dir_), std::runtime_error);
}

TEST_F(CliTest, GenerateIsDeterministicAndWritesSidecar) {
  const std::vector<std::string> args = {"generate", "--design", "rbsd",  "--units", "4",
                                         "--steps",  "4",        "--p",   "0.5",     "--seed",
                                         "7",        "--out",    path("w.csv").string()};
  ASSERT_EQ(cli(args), 0);
  const std::string first = slurp(path("w.csv"));
  ASSERT_EQ(cli(args), 0);
  EXPECT_EQ(slurp(path("w.csv")), first);
  EXPECT_TRUE(fs::exists(path("w.csv.json")));
  const auto [spec, seed] = read_sidecar_json(path("w.csv.json"));
  EXPECT_EQ(seed, 7u);
  EXPECT_EQ(spec.kind, DesignKind::rbsd);
}

TEST_F(CliTest, ValidateFlagsCorruptedBalance) {
  ASSERT_EQ(cli({"generate", "--design", "rbsd", "--units", "4", "--steps", "4", "--p", "0.5",
                 "--seed", "7", "--out", path("w.csv").string()}),
            0);
  // hand-edit one cell: flips a row sum from 2 to 3
  std::string csv = slurp(path("w.csv"));
  const std::size_t zero = csv.find(",0");
  ASSERT_NE(zero, std::string::npos);
  csv[zero + 1] = '1';
  std::ofstream(path("w.csv")) << csv;

  const int rc = cli({"validate", "--input", path("w.csv").string(), "--design", "rbsd", "--p",
                      "0.5", "--out", path("v.json").string()});
  EXPECT_EQ(rc, 1);
  const json report = json::parse(slurp(path("v.json")));
  EXPECT_FALSE(report["valid"].get<bool>());
  ASSERT_FALSE(report["violations"].empty());
  EXPECT_NE(report["violations"][0].get<std::string>().find("sums to"), std::string::npos);

  // the untouched matrix validates clean
  ASSERT_EQ(cli({"generate", "--design", "rbsd", "--units", "4", "--steps", "4", "--p", "0.5",
                 "--seed", "7", "--out", path("w2.csv").string()}),
            0);
  EXPECT_EQ(cli({"validate", "--input", path("w2.csv").string(), "--design", "rbsd", "--p", "0.5",
                 "--out", path("v2.json").string()}),
            0);
}

TEST_F(CliTest, ProbabilityPrintsTheClosedFormValue) {
  ASSERT_EQ(cli({"probability", "--design", "rbsd", "--steps", "14", "--p", "0.5", "--lag", "1",
                 "--out", path("p.json").string()}),
            0);
  const json j = json::parse(slurp(path("p.json")));
  EXPECT_EQ(j["p_all_treated"].get<double>(), 12.0 / 52.0);
  EXPECT_NE(slurp(path("p.json")).find("0.230769"), std::string::npos);
}

TEST_F(CliTest, EstimateMatchesTheLibraryPath) {
  const DesignSpec spec{DesignKind::rbsd, 6, 8, 0.5, {}, {}};
  const AssignmentMatrix w = sample(spec, 123);
  write_assignment_csv(w, path("w.csv"));
  write_sidecar_json(w, path("w.json"));
  Rng rng(9);
  OutcomeMatrix y{Grid<double>(6, 8, 0.0), {}};
  for (double& v : y.values.data()) v = rng.normal() * 2.0 + 1.0;
  write_outcome_csv(y, path("y.csv"));

  ASSERT_EQ(cli({"estimate", "--assignment", path("w.csv").string(), "--outcomes",
                 path("y.csv").string(), "--sidecar", path("w.json").string(), "--lag", "1",
                 "--out", path("r.json").string()}),
            0);
  const json j = json::parse(slurp(path("r.json")));
  const EstimateReport direct = ht_tau_lag(w, y, 1, window_provider(spec, 1));
  EXPECT_EQ(j["point"].get<double>(), direct.point);
  EXPECT_EQ(j["std_error"].get<double>(), direct.std_error);
  EXPECT_EQ(j["estimand"].get<std::string>(), "tau_lag");
  EXPECT_EQ(j["schema"].get<std::string>(), "switchback/estimate_report/v1");

  // without --lag the plain average effect is reported
  ASSERT_EQ(cli({"estimate", "--assignment", path("w.csv").string(), "--outcomes",
                 path("y.csv").string(), "--sidecar", path("w.json").string(), "--out",
                 path("r2.json").string()}),
            0);
  const json j2 = json::parse(slurp(path("r2.json")));
  EXPECT_EQ(j2["point"].get<double>(), ht_tau(w, y, marginal_provider(spec)).point);
}

TEST_F(CliTest, SimulateWritesReportAndReplicates) {
  const json scenario{
      {"designs", json::array({{{"kind", "rbsd"}, {"p", 0.5}, {"name", "rbsd"}},
                               {{"kind", "item"}, {"p", 0.5}, {"name", "item"}}})},
      {"model", {{"deltas", {0.1, 0.0}}}},
      {"reps", 8},
      {"alpha", 0.05},
      {"lag", 1},
      {"master_seed", 42},
      {"base", {{"lognormal", {{"units", 30}, {"steps", 6}, {"seed", 4}}}}}};
  std::ofstream(path("sc.json")) << scenario.dump(2);
  ASSERT_EQ(cli({"simulate", "--scenario", path("sc.json").string(), "--out",
                 path("report.json").string(), "--replicate-csv", path("reps.csv").string(),
                 "--threads", "2"}),
            0);
  const json report = json::parse(slurp(path("report.json")));
  EXPECT_EQ(report["schema"].get<std::string>(), "switchback/simulation_report/v1");
  EXPECT_EQ(report["cells"].size(), 4u);
  EXPECT_EQ(report["reps"].get<int>(), 8);

  std::ifstream reps(path("reps.csv"));
  std::string header;
  std::getline(reps, header);
  EXPECT_EQ(header, "design,replicate,estimator,estimate,std_error,p_value");
  int lines = 0;
  for (std::string line; std::getline(reps, line);) {
    if (!line.empty()) ++lines;
  }
  EXPECT_EQ(lines, 4 * 8);

  // --seed overrides the scenario master seed and is echoed into the report
  ASSERT_EQ(cli({"simulate", "--scenario", path("sc.json").string(), "--seed", "2222", "--out",
                 path("report2.json").string()}),
            0);
  const json report2 = json::parse(slurp(path("report2.json")));
  EXPECT_EQ(report2["master_seed"].get<std::uint64_t>(), 2222u);
  EXPECT_NE(report2["cells"][0]["me"].get<double>(), report["cells"][0]["me"].get<double>());
}

TEST_F(CliTest, GenDataEmitsUsablePanels) {
  ASSERT_EQ(cli({"gen-data", "--kind", "lognormal", "--units", "25", "--steps", "4", "--seed",
                 "3", "--out", path("panel.csv").string()}),
            0);
  const OutcomeMatrix y = read_outcome_csv(path("panel.csv"));
  EXPECT_EQ(y.n_units(), 25);
  EXPECT_EQ(y.n_steps(), 4);

  ASSERT_EQ(cli({"gen-data", "--kind", "powerlaw", "--users", "5000", "--seed", "3", "--out",
                 path("freq.json").string()}),
            0);
  const json j = json::parse(slurp(path("freq.json")));
  EXPECT_EQ(j["schema"].get<std::string>(), "switchback/frequency_table/v1");
  EXPECT_EQ(j["value"][0].get<int>(), 1);
  EXPECT_GT(j["count"][0].get<long long>(), 2000);
}

TEST_F(CliTest, UsageAndDataErrorsUseDistinctExitCodes) {
  EXPECT_EQ(cli({"generate", "--bogus-flag", "1"}), 2);
  EXPECT_EQ(cli({"no-such-subcommand"}), 2);
  EXPECT_EQ(cli({}), 2);
  EXPECT_EQ(cli({"--help"}), 0);
  // invalid spec is a data error, not a usage error
  EXPECT_EQ(cli({"generate", "--design", "rbsd", "--units", "3", "--steps", "4", "--p", "0.5",
                 "--out", path("x.csv").string()}),
            1);
  // unreadable input file
  EXPECT_EQ(cli({"validate", "--input", path("missing.csv").string(), "--design", "rbsd"}), 1);
}
