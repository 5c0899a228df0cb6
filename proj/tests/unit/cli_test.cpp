#include <cstdlib>
#include <fstream>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "tpt/error.hpp"

using namespace tpt;
using tpt::support::TempDir;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result run(const std::string& args, const TempDir& dir) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string(THREEPHASE_BIN) + " " + args + " > " + out.string() + " 2> " +
                          err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = support::slurp(out);
  r.err = support::slurp(err);
  return r;
}

std::filesystem::path write_config(const TempDir& dir, const std::string& name,
                                   const app::RunConfig& cfg) {
  const auto p = dir / name;
  std::ofstream(p) << app::to_json(cfg).dump(2);
  return p;
}

}  // namespace

TEST(Cli, TrainWritesRunAndIsDeterministic) {
  TempDir dir("cli_train");
  auto cfg = support::tiny_run_config(dir / "a");
  const auto cfg_path = write_config(dir, "tiny.json", cfg);
  const auto r1 = run("train --config " + cfg_path.string(), dir);
  ASSERT_EQ(r1.code, 0) << r1.err;
  const auto metrics = support::read_jsonl(dir / "a" / "metrics.jsonl");
  EXPECT_GE(metrics.size(), 2u);
  for (const char* f : {"config.json", "vocab.json", "steps.jsonl", "summary.json", "theta_drift.csv",
                        "theta_drift.svg"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "a" / f)) << f;
  }
  const auto r2 = run("train --config " + cfg_path.string() + " --out " + (dir / "b").string(), dir);
  ASSERT_EQ(r2.code, 0) << r2.err;
  EXPECT_EQ(support::slurp(dir / "a" / "summary.json"), support::slurp(dir / "b" / "summary.json"));
  EXPECT_EQ(support::slurp(dir / "a" / "steps.jsonl"), support::slurp(dir / "b" / "steps.jsonl"));

  EXPECT_EQ(run("eval " + (dir / "a").string(), dir).code, 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "a" / "eval.json"));
  EXPECT_EQ(run("diagnose " + (dir / "a").string(), dir).code, 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "a" / "diagnostics.json"));
}

TEST(Cli, ResumeReproducesUninterruptedRun) {
  TempDir dir("cli_resume");
  auto cfg = support::tiny_run_config(dir / "full");
  cfg.train.checkpoint_every = 10;
  const auto cfg_path = write_config(dir, "cfg.json", cfg);
  ASSERT_EQ(run("train --config " + cfg_path.string(), dir).code, 0);

  auto half = cfg;
  half.out_dir = (dir / "resumed").string();
  const auto half_path = write_config(dir, "half.json", half);
  ASSERT_EQ(run("train --config " + half_path.string() + " --steps 20", dir).code, 0);
  // Start over from the step-10 checkpoint of the full run into a fresh directory.
  const auto r = run("train --config " + half_path.string() + " --resume " +
                         (dir / "full" / "checkpoints" / "step_000010").string(),
                     dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(support::slurp(dir / "full" / "summary.json"), support::slurp(dir / "resumed" / "summary.json"));
  EXPECT_EQ(support::slurp(dir / "full" / "steps.jsonl"), support::slurp(dir / "resumed" / "steps.jsonl"));
}

TEST(Cli, IndivisibleHeadsExitTwo) {
  TempDir dir("cli_heads");
  auto cfg = support::tiny_run_config(dir / "x");
  cfg.model.n_q_heads = 4;
  cfg.model.n_kv_heads = 2;
  const auto p = write_config(dir, "bad.json", cfg);
  const auto r = run("train --config " + p.string(), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("N | n_q"), std::string::npos) << r.err;
}

TEST(Cli, MissingFilesExitThree) {
  TempDir dir("cli_io");
  EXPECT_EQ(run("train --config /nonexistent/cfg.json", dir).code, 3);
  EXPECT_EQ(run("eval /nonexistent/run", dir).code, 3);
}

TEST(Cli, MalformedConfigExitTwo) {
  TempDir dir("cli_json");
  std::ofstream(dir / "bad.json") << "{ \"model\": ";
  EXPECT_EQ(run("train --config " + (dir / "bad.json").string(), dir).code, 2);
  std::ofstream(dir / "unknown.json") << R"({"modle": {}})";
  EXPECT_EQ(run("train --config " + (dir / "unknown.json").string(), dir).code, 2);
  EXPECT_EQ(run("frobnicate", dir).code, 2);
}

TEST(Cli, VerifyPassesAndFaultInjectionFails) {
  TempDir dir("cli_verify");
  const auto ok = run("verify --out " + dir.path().string(), dir);
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "verify.json"));
  const auto bad = run("verify --inject-fault horn", dir);
  EXPECT_EQ(bad.code, 1);
  const auto report = nlohmann::json::parse(bad.out);
  for (const auto& s : report["suites"]) {
    if (s["name"] == "pinning") EXPECT_FALSE(s["passed"].get<bool>());
  }
}

TEST(Cli, SweepRejectsIndivisibleNBeforeTraining) {
  TempDir dir("cli_sweep");
  auto cfg = support::tiny_run_config(dir / "sweep");
  cfg.model.d_model = 192;
  cfg.model.d_ff = 64;
  const auto p = write_config(dir, "cfg.json", cfg);
  const auto r = run("sweep-n --config " + p.string() + " --phases 3,5", dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(std::filesystem::exists(dir / "sweep" / "N3" / "metrics.jsonl"));
}

TEST(Cli, SweepWritesTable) {
  TempDir dir("cli_sweep_ok");
  auto cfg = support::tiny_run_config(dir / "sweep");
  cfg.optimizer.total_steps = 4;
  cfg.optimizer.warmup_steps = 1;
  const auto p = write_config(dir, "cfg.json", cfg);
  const auto r = run("sweep-n --config " + p.string() + " --phases 1,3", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto table = nlohmann::json::parse(support::slurp(dir / "sweep" / "sweep.json"));
  ASSERT_EQ(table["rows"].size(), 2u);
  EXPECT_EQ(table["rows"][1]["theta_count"], 2 * (24 / 3) / 2);
  EXPECT_TRUE(std::filesystem::exists(dir / "sweep" / "sweep.csv"));
}

TEST(Compare, IdenticalRunsAndSeedGroups) {
  TempDir dir("cmp");
  std::vector<std::filesystem::path> runs;
  for (int seed : {1, 1, 2, 3}) {
    auto cfg = support::tiny_run_config(dir / ("s" + std::to_string(runs.size())));
    cfg.optimizer.total_steps = 10;
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.label = runs.empty() ? "first" : "seeds";
    std::ostringstream log;
    runs.push_back(app::run_training(cfg, log).run_dir);
  }
  const auto same = app::run_compare({runs[0], runs[1]}, dir / "same");
  for (const auto& row : same["table"]) EXPECT_EQ(row["delta_vs_first"][1].get<double>(), 0.0);
  EXPECT_EQ(same["runs"][1]["delta_vs_first"].get<double>(), 0.0);

  const auto groups = app::run_compare({runs[0], runs[1], runs[2], runs[3]}, dir / "seeds");
  for (const auto& g : groups["groups"]) {
    if (g["label"] == "seeds") {
      EXPECT_EQ(g["n"], 3);
      EXPECT_FALSE(g["std_final_val_loss"].is_null());
    }
  }
  const auto md = support::slurp(dir / "seeds" / "compare.md");
  EXPECT_NE(md.find("+"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(dir / "seeds" / "loss_curves.svg"));
}

TEST(Compare, MismatchedGridsReportedNotFatal) {
  TempDir dir("cmp_grid");
  auto a = support::tiny_run_config(dir / "a");
  auto b = a;
  b.out_dir = (dir / "b").string();
  b.train.eval_every = 5;
  std::ostringstream log;
  app::run_training(a, log);
  app::run_training(b, log);
  const auto rep = app::run_compare({dir / "a", dir / "b"}, dir / "out");
  EXPECT_FALSE(rep["mismatched_steps"].empty());
}

TEST(RunConfig, CrossChecksAndOverrides) {
  auto cfg = app::toy_run_config();
  cfg.train.seq_len = 64;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = app::toy_run_config();
  EXPECT_EQ(app::run_config_from_json(app::to_json(cfg)), cfg);
  app::Overrides o;
  o.steps = 10;
  o.seed = 5;
  app::apply(cfg, o);
  EXPECT_EQ(cfg.optimizer.total_steps, 10);
  EXPECT_LE(cfg.optimizer.warmup_steps, 10);
  EXPECT_EQ(cfg.seed, 5u);
}
