#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "tpt/data.hpp"
#include "tpt/model.hpp"
#include "tpt/train.hpp"

namespace tpt::app {

enum ExitCode : int { kOk = 0, kInvariantFailure = 1, kConfigError = 2, kIoError = 3 };

struct RunConfig {
  model::ModelConfig model;
  train::OptimizerConfig optimizer;
  data::DataConfig data;
  train::TrainConfig train;
  std::uint64_t seed = 42;
  std::string out_dir = "runs/default";
  bool deterministic = true;
  std::string label;  // runs sharing a label are aggregated by compare

  /// Validates every section plus the cross-section constraints.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

nlohmann::json to_json(const RunConfig& c);
/// Unknown keys anywhere throw ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
/// IoError when unreadable, ConfigError when malformed or invalid.
RunConfig load_run_config(const std::filesystem::path& path);

/// Small fast-training preset used by tests, smoke runs and the README.
RunConfig toy_run_config();

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<bool> deterministic;
  std::optional<int> steps;  // sets optimizer.total_steps
};

void apply(RunConfig& cfg, const Overrides& o);

struct TrainOutcome {
  std::filesystem::path run_dir;
  nlohmann::json summary;
};

/// Full training run into cfg.out_dir: config.json, vocab.json, steps.jsonl,
/// metrics.jsonl (one record per eval), checkpoints/, summary.json and the
/// drift heatmap. With `resume`, continues from that checkpoint directory.
TrainOutcome run_training(const RunConfig& cfg, std::ostream& log,
                          const std::optional<std::filesystem::path>& resume = std::nullopt);

/// Latest checkpoint directory under run_dir/checkpoints. IoError if none.
std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir);

/// Validation metrics of a run's latest checkpoint; writes run_dir/eval.json.
nlohmann::json run_eval(const std::filesystem::path& run_dir);

/// Diagnostics of a run's latest checkpoint; writes diagnostics.json,
/// theta_drift.csv and theta_drift.svg under run_dir.
nlohmann::json run_diagnose(const std::filesystem::path& run_dir, std::ostream& log);

struct VerifyOptions {
  std::optional<RunConfig> config;
  bool inject_horn_fault = false;  // perturbs the horn by 1e-3 so pinning must fail
};

/// Invariant suites; report["passed"] is the conjunction of every suite.
nlohmann::json run_verify(const VerifyOptions& opt, std::ostream& log);

/// Sweep-n head rule: N = 1 keeps 6 query / 3 KV heads, otherwise 2N / N.
model::ModelConfig sweep_model_for(const model::ModelConfig& base, int n_phases);

/// One run per N under base.out_dir/N<n>, in parallel up to `threads`
/// workers. Every N is validated before any training starts.
nlohmann::json run_sweep(const RunConfig& base, const std::vector<int>& phases, int threads,
                         std::ostream& log);

/// Step-aligned loss table, final deltas against the first run, and
/// mean/std per label. Writes compare.json, compare.md and loss_curves.svg
/// into out_dir.
nlohmann::json run_compare(const std::vector<std::filesystem::path>& run_dirs,
                           const std::filesystem::path& out_dir);

/// Sweep worker cap from THREEPHASE_THREADS, else hardware concurrency.
int sweep_threads_from_env();

}  // namespace tpt::app
