// threephase: train, evaluate, verify, sweep N, diagnose and compare runs.

#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "tpt/app.hpp"
#include "tpt/error.hpp"

namespace fs = std::filesystem;
using namespace tpt;

namespace {

struct CommonFlags {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  bool deterministic = true;
  int steps = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "run configuration JSON");
    cmd->add_option("--seed", seed, "override the config seed");
    cmd->add_option("--out", out, "override the output directory");
    cmd->add_option("--deterministic", deterministic, "serial kernels (true) or OpenMP (false)");
    cmd->add_option("--steps", steps, "override optimizer.total_steps")->check(CLI::PositiveNumber);
    cmd_ = cmd;
  }

  app::RunConfig resolve() const {
    auto cfg = config.empty() ? app::toy_run_config() : app::load_run_config(config);
    app::Overrides o;
    if (cmd_->count("--seed")) o.seed = seed;
    if (cmd_->count("--out")) o.out_dir = out;
    if (cmd_->count("--deterministic")) o.deterministic = deterministic;
    if (cmd_->count("--steps")) o.steps = steps;
    app::apply(cfg, o);
    cfg.validate();
    return cfg;
  }

 private:
  CLI::App* cmd_ = nullptr;
};

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::vector<int> parse_phases(const std::string& spec) {
  std::vector<int> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("bad N list entry '" + item + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Three-phase transformer experiments"};
  cli.require_subcommand(1);

  CommonFlags train_flags;
  std::string resume;
  auto* train = cli.add_subcommand("train", "train a model and write a run directory");
  train_flags.attach(train);
  train->add_option("--resume", resume, "continue from this checkpoint directory")
;

  std::string eval_dir;
  auto* eval = cli.add_subcommand("eval", "evaluate the latest checkpoint of a run");
  eval->add_option("run_dir", eval_dir, "run directory")->required();

  std::string verify_config, verify_fault, verify_out;
  auto* verify = cli.add_subcommand("verify", "run the invariant suites");
  verify->add_option("--config", verify_config, "also check this run configuration")
      ;
  verify->add_option("--inject-fault", verify_fault, "test hook: 'horn' perturbs the horn by 1e-3")
      ->check(CLI::IsMember({"horn"}));
  verify->add_option("--out", verify_out, "directory for verify.json");

  CommonFlags sweep_flags;
  std::string phases = "1,2,3,4,6,8,12";
  auto* sweep = cli.add_subcommand("sweep-n", "train one model per phase count");
  sweep_flags.attach(sweep);
  sweep->add_option("--phases", phases, "comma-separated N values");

  std::string diag_dir;
  auto* diagnose = cli.add_subcommand("diagnose", "measure drift, balance and radii of a run");
  diagnose->add_option("run_dir", diag_dir, "run directory")->required();

  std::vector<std::string> compare_dirs;
  std::string compare_out = "runs/compare";
  auto* compare = cli.add_subcommand("compare", "compare loss curves across runs");
  compare->add_option("run_dirs", compare_dirs, "two or more run directories")
      ->required();
  compare->add_option("--out", compare_out, "report directory");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? app::kOk : app::kConfigError;
  }

  try {
    if (*train) {
      const auto cfg = train_flags.resolve();
      std::optional<fs::path> from;
      if (!resume.empty()) from = resume;
      const auto out = app::run_training(cfg, std::cout, from);
      std::cout << out.summary.dump(2) << "\n";
    } else if (*eval) {
      std::cout << app::run_eval(eval_dir).dump(2) << "\n";
    } else if (*verify) {
      app::VerifyOptions opt;
      if (!verify_config.empty()) opt.config = app::load_run_config(verify_config);
      opt.inject_horn_fault = verify_fault == "horn";
      const auto report = app::run_verify(opt, std::cerr);
      if (!verify_out.empty()) {
        fs::create_directories(verify_out);
        write_json(fs::path(verify_out) / "verify.json", report);
      }
      std::cout << report.dump(2) << "\n";
      return report["passed"].get<bool>() ? app::kOk : app::kInvariantFailure;
    } else if (*sweep) {
      const auto cfg = sweep_flags.resolve();
      const auto table = app::run_sweep(cfg, parse_phases(phases), app::sweep_threads_from_env(), std::cerr);
      std::cout << table.dump(2) << "\n";
    } else if (*diagnose) {
      std::cout << app::run_diagnose(diag_dir, std::cerr).dump(2) << "\n";
    } else if (*compare) {
      std::vector<fs::path> dirs(compare_dirs.begin(), compare_dirs.end());
      const auto report = app::run_compare(dirs, compare_out);
      std::ifstream md(fs::path(compare_out) / "compare.md");
      std::cout << md.rdbuf();
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return app::kConfigError;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return app::kIoError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return app::kIoError;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return app::kConfigError;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return app::kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return app::kInvariantFailure;
  }
  return app::kOk;
}
