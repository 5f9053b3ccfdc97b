#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "logitcp/io.hpp"

namespace logitcp {
namespace {

namespace fs = std::filesystem;

fs::path workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("logitcp_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(LOGITCP_CLI) + " " + args + " > " + (workdir() / "stdout.txt").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string stdout_text() { return read_text(workdir() / "stdout.txt"); }

std::string p(const std::string& name) { return (workdir() / name).string(); }

std::vector<std::vector<double>> read_csv(const std::string& path) {
  std::vector<std::vector<double>> rows;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

// Small rank-1 dataset shared by most tests.
const std::string& dataset() {
  static const std::string dir = [] {
    EXPECT_EQ(run("simulate --dims 30,10,10 --rank 1 --snr 3 --baseline 40 --seed 2 --out " + p("sim")), 0);
    return p("sim");
  }();
  return dir;
}

TEST(Cli, SimulateScenarioScaledDims) {
  ASSERT_EQ(run("simulate --scenario I --scale 0.2 --seed 1 --baseline 10 --out " + p("scen")), 0);
  const auto x = read_binary_tensor(p("scen/data.txt"));
  EXPECT_EQ(x.dims(), (Dims{200, 10, 10}));
  EXPECT_TRUE(x.fully_observed());
  const auto truth = read_model(p("scen/truth.json"));
  EXPECT_EQ(truth.model.rank(), 1);
  EXPECT_DOUBLE_EQ(truth.model.d[0], 30.0);
}

TEST(Cli, SimulateIsDeterministic) {
  ASSERT_EQ(run("simulate --scenario II --scale 0.05 --seed 7 --baseline-reps 2 --out " + p("d1")), 0);
  ASSERT_EQ(run("simulate --scenario II --scale 0.05 --seed 7 --baseline-reps 2 --out " + p("d2")), 0);
  EXPECT_EQ(read_text(p("d1/data.txt")), read_text(p("d2/data.txt")));
  EXPECT_EQ(read_text(p("d1/truth.json")), read_text(p("d2/truth.json")));
}

TEST(Cli, SimulateValidation) {
  EXPECT_EQ(run("simulate --dims 20,10,10 --snr 5,3 --baseline 1 --out " + p("bad")), 2);
  EXPECT_NE(stdout_text().find("SNR"), std::string::npos);
  EXPECT_EQ(run("simulate --dims 20,10,10 --rank 2 --snr 5,3 --baseline 1 --out " + p("ok")), 0);
  EXPECT_EQ(run("simulate --scenario V --out " + p("bad")), 2);
  EXPECT_EQ(run("simulate --dims 20,10 --out " + p("bad")), 2);
  EXPECT_EQ(run("simulate --baseline 1 --out " + p("bad")), 2);
  EXPECT_EQ(run("simulate --scenario I --dims 2,2,2 --out " + p("bad")), 2);
}

TEST(Cli, FitWritesModelAndReport) {
  ASSERT_EQ(run("fit --data " + dataset() + "/data.txt --rank 1 --seed 3 --out " + p("fit.json") + " --report " +
                p("fit.txt")),
            0);
  const auto doc = read_model(p("fit.json"));
  EXPECT_EQ(doc.model.rank(), 1);
  EXPECT_EQ(doc.config["method"], "tp");
  EXPECT_TRUE(doc.metadata["converged"].get<bool>());
  const auto report = read_text(p("fit.txt"));
  for (const char* key : {"AIC:", "BIC:", "df:", "cumulative%"}) EXPECT_NE(report.find(key), std::string::npos) << key;
}

TEST(Cli, FitIsDeterministic) {
  const std::string args = "fit --data " + dataset() + "/data.txt --rank 2 --method tsp --c-ratio 0.6 --seed 5 --out ";
  run(args + p("a.json"));
  run(args + p("b.json"));
  EXPECT_EQ(read_text(p("a.json")), read_text(p("b.json")));
}

TEST(Cli, FitSRatioSetsFloorCardinality) {
  ASSERT_EQ(run("fit --data " + dataset() + "/data.txt --rank 1 --method ttp --s-ratio 0.25 --seed 3 --out " +
                p("ttp.json")),
            0);
  const auto doc = read_model(p("ttp.json"));
  EXPECT_EQ(doc.config["penalty"]["s"], (std::vector<int>{7, 2, 2}));
  EXPECT_LE((doc.model.U.col(0).array() != 0.0).count(), 7);
  EXPECT_LE((doc.model.V.col(0).array() != 0.0).count(), 2);
}

TEST(Cli, FitSymmetricNeedsSquareModes) {
  EXPECT_EQ(run("fit --data " + dataset() + "/data.txt --rank 1 --symmetric-uv --out " + p("sym.json")), 2);
  ASSERT_EQ(run("simulate --dims 12,12,5 --rank 1 --snr 3 --baseline 30 --seed 4 --out " + p("sq")), 0);
  const int code = run("fit --data " + p("sq/data.txt") + " --rank 4 --symmetric-uv --seed 1 --out " + p("sym.json"));
  ASSERT_TRUE(code == 0 || code == 3);
  const auto m = read_model(p("sym.json")).model;
  EXPECT_EQ(m.U, m.V);
}

TEST(Cli, FitExitCodes) {
  EXPECT_EQ(run("fit --data " + dataset() + "/data.txt --rank 1 --max-outer 1 --out " + p("short.json")), 3);
  EXPECT_FALSE(read_model(p("short.json")).metadata["converged"].get<bool>());
  EXPECT_EQ(run("fit --data " + dataset() + "/data.txt --rank 1 --method tsp --out " + p("x.json")), 2);
  EXPECT_EQ(run("fit --data " + dataset() + "/data.txt --rank 1 --method tp --c-ratio 0.5 --out " + p("x.json")), 2);
  EXPECT_EQ(run("fit --data " + p("missing.txt") + " --rank 1 --out " + p("x.json")), 2);
  EXPECT_EQ(run("fit --data " + dataset() + "/data.txt --out " + p("x.json")), 2);
}

TEST(Cli, SelectWritesTableAndChoice) {
  const std::string args = "select --data " + dataset() + "/data.txt --method ttp --ranks 1,2 --ratios 0.5,1 --seed 1 "
                           "--criterion aic --out ";
  ASSERT_EQ(run(args + p("sel1.csv")), 0);
  EXPECT_NE(stdout_text().find("selected method=ttp rank="), std::string::npos);
  ASSERT_EQ(run(args + p("sel2.csv")), 0);
  const auto table = read_text(p("sel1.csv"));
  EXPECT_EQ(table, read_text(p("sel2.csv")));
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 4);
}

TEST(Cli, SelectDevianceEmitsComponentColumns) {
  ASSERT_EQ(run("select --data " + dataset() + "/data.txt --ranks 1,2 --criterion deviance --out " + p("dev.csv")), 0);
  const auto table = read_text(p("dev.csv"));
  EXPECT_NE(table.find("cumulative_2"), std::string::npos);
  EXPECT_NE(table.find("marginal_1"), std::string::npos);
}

TEST(Cli, SelectBadGrid) {
  EXPECT_EQ(run("select --data " + dataset() + "/data.txt --ranks 1 --criterion ebic --out " + p("x.csv")), 2);
  EXPECT_EQ(run("select --data " + dataset() + "/data.txt --ranks 1 --ratios 0.5 --out " + p("x.csv")), 2);
}

TEST(Cli, CompleteCoversExactlyMissingCells) {
  auto x = read_binary_tensor(dataset() + "/data.txt");
  std::vector<std::uint8_t> mask(x.mask().begin(), x.mask().end());
  for (std::size_t n = 0; n < mask.size(); n += 7) mask[n] = 0;
  const auto train = x.with_mask(mask);
  std::vector<std::uint8_t> hmask(mask.size());
  for (std::size_t n = 0; n < mask.size(); ++n) hmask[n] = !mask[n];
  write_tensor(workdir() / "train.txt", train);
  write_tensor(workdir() / "hold.txt", x.with_mask(hmask));
  const std::string args = "complete --data " + p("train.txt") + " --rank 1 --seed 2 --holdout " + p("hold.txt");
  const int code = run(args + " --out " + p("pred1.csv"));
  ASSERT_TRUE(code == 0 || code == 3);
  EXPECT_NE(stdout_text().find("completion AUC"), std::string::npos);
  run(args + " --out " + p("pred2.csv"));
  EXPECT_EQ(read_text(p("pred1.csv")), read_text(p("pred2.csv")));

  std::ifstream in(p("pred1.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "i,j,k,prob,label");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::size_t i, j, k;
    double prob;
    int label;
    char c;
    std::stringstream ss(line);
    ss >> i >> c >> j >> c >> k >> c >> prob >> c >> label;
    EXPECT_FALSE(train.observed(i - 1, j - 1, k - 1));
    EXPECT_EQ(label, prob >= 0.5 ? 1 : 0);
    ++rows;
  }
  EXPECT_EQ(rows, train.size() - train.observed_count());
}

TEST(Cli, CompleteWithModelAndThreshold) {
  ASSERT_EQ(run("fit --data " + dataset() + "/data.txt --rank 1 --seed 3 --out " + p("full.json")), 0);
  auto x = read_binary_tensor(dataset() + "/data.txt");
  std::vector<std::uint8_t> mask(x.size(), 1);
  mask[0] = 0;
  write_tensor(workdir() / "one_missing.txt", x.with_mask(mask));
  ASSERT_EQ(run("complete --data " + p("one_missing.txt") + " --model " + p("full.json") + " --threshold 0 --out " +
                p("one.csv")),
            0);
  const auto text = read_text(p("one.csv"));
  EXPECT_EQ(text.substr(text.rfind(',') + 1), "1\n");
  EXPECT_EQ(run("complete --data " + dataset() + "/data.txt --model " + p("full.json") + " --out " + p("x.csv")), 2);
  EXPECT_EQ(run("complete --data " + p("one_missing.txt") + " --model " + p("full.json") + " --rank 2 --out " +
                p("x.csv")),
            2);
}

TEST(Cli, ReportSlicesAndTruthMetrics) {
  ASSERT_EQ(run("report --model " + dataset() + "/truth.json --truth " + dataset() + "/truth.json --out " + p("rep")), 0);
  const auto rep = read_text(p("rep/report.txt"));
  EXPECT_NE(rep.find("rmse: 0\n"), std::string::npos);
  EXPECT_NE(rep.find("mean_error: 0\n"), std::string::npos);
  EXPECT_NE(rep.find("weight_error: 0\n"), std::string::npos);
  const auto slice = read_csv(p("rep/slice_1.csv"));
  ASSERT_EQ(slice.size(), 30u);
  double max_abs = 0.0;
  for (const auto& row : slice) {
    ASSERT_EQ(row.size(), 10u);
    for (double v : row) max_abs = std::max(max_abs, std::abs(v));
  }
  EXPECT_EQ(max_abs, 1.0);
}

TEST(Cli, ReportDimsMismatch) {
  ASSERT_EQ(run("simulate --dims 12,12,5 --rank 1 --snr 3 --baseline 30 --seed 4 --out " + p("other")), 0);
  EXPECT_EQ(run("report --model " + dataset() + "/truth.json --truth " + p("other/truth.json") + " --out " + p("r2")), 2);
}

TEST(Cli, ReportIsDeterministic) {
  run("report --model " + dataset() + "/truth.json --out " + p("ra"));
  run("report --model " + dataset() + "/truth.json --out " + p("rb"));
  EXPECT_EQ(read_text(p("ra/slice_1.csv")), read_text(p("rb/slice_1.csv")));
  EXPECT_EQ(read_text(p("ra/report.txt")), read_text(p("rb/report.txt")));
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("bogus"), 2);
  EXPECT_EQ(run("fit --help"), 0);
}

}  // namespace
}  // namespace logitcp
