#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "tpt/app.hpp"
#include "tpt/diagnostics.hpp"
#include "tpt/error.hpp"

namespace tpt::app {
namespace fs = std::filesystem;
using nlohmann::json;

model::ModelConfig sweep_model_for(const model::ModelConfig& base, int n_phases) {
  auto m = base;
  m.baseline_mode = false;
  m.n_phases = n_phases;
  if (n_phases == 1) {
    m.n_q_heads = 6;
    m.n_kv_heads = 3;
  } else {
    m.n_q_heads = 2 * n_phases;
    m.n_kv_heads = n_phases;
  }
  return m;
}

json run_sweep(const RunConfig& base, const std::vector<int>& phases, int threads,
               std::ostream& log) {
  if (phases.empty()) throw ConfigError("sweep needs at least one N");
  std::vector<RunConfig> cells;
  for (int n : phases) {
    RunConfig c = base;
    c.model = sweep_model_for(base.model, n);
    c.out_dir = (fs::path(base.out_dir) / ("N" + std::to_string(n))).string();
    c.label = "N" + std::to_string(n);
    try {
      c.validate();
    } catch (const ConfigError& e) {
      throw ConfigError("sweep rejects N=" + std::to_string(n) + ": " + e.what());
    }
    cells.push_back(std::move(c));
  }

  std::vector<json> results(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mu;
  const auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        std::ostringstream cell_log;
        results[i] = run_training(cells[i], cell_log).summary;
        std::lock_guard lock(log_mu);
        log << "N=" << cells[i].model.n_phases << " done: val "
            << results[i]["final_val_loss"].get<double>() << "\n";
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_workers = static_cast<std::size_t>(std::clamp<int>(threads, 1, static_cast<int>(cells.size())));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  json rows = json::array();
  std::ostringstream csv;
  csv << "n_phases,n_q_heads,n_kv_heads,d_phase,theta_count,parameters,final_val_loss,"
         "zero_sum_residual,analytic_residual\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& m = cells[i].model;
    const auto T = static_cast<std::size_t>(cells[i].train.seq_len);
    const double analytic = m.horn_inject ? phase::analytic_pinned_residual(m.n_phases, T) : 0.0;
    json row = {{"n_phases", m.n_phases},
                {"n_q_heads", m.n_q_heads},
                {"n_kv_heads", m.n_kv_heads},
                {"d_phase", m.d_phase()},
                {"theta_count", m.n_layers * m.d_phase() / 2},
                {"parameters", results[i]["parameters"]},
                {"final_val_loss", results[i]["final_val_loss"]},
                {"zero_sum_residual", results[i]["zero_sum_residual"]},
                {"analytic_residual", analytic},
                {"run_dir", cells[i].out_dir}};
    csv << m.n_phases << ',' << m.n_q_heads << ',' << m.n_kv_heads << ',' << m.d_phase() << ','
        << row["theta_count"] << ',' << row["parameters"] << ',' << row["final_val_loss"] << ','
        << row["zero_sum_residual"] << ',' << analytic << '\n';
    rows.push_back(std::move(row));
  }
  const json out = {{"rows", rows}, {"workers", n_workers}};
  std::ofstream(fs::path(base.out_dir) / "sweep.json") << out.dump(2) << "\n";
  std::ofstream csv_file(fs::path(base.out_dir) / "sweep.csv");
  csv_file << csv.str();
  if (!csv_file) throw IoError("cannot write sweep table under " + base.out_dir);
  return out;
}

namespace {

struct RunData {
  std::string name;
  std::string label;
  std::map<std::int64_t, double> val_loss;
  double final_val = 0.0;
};

RunData read_run(const fs::path& dir) {
  RunData r;
  r.name = dir.filename().string();
  if (r.name.empty()) r.name = dir.parent_path().filename().string();
  std::ifstream sin(dir / "summary.json");
  if (!sin) throw IoError("no summary.json in " + dir.string());
  try {
    const auto summary = json::parse(sin);
    r.label = summary.value("label", std::string());
    r.final_val = summary.at("final_val_loss").get<double>();
    std::ifstream min(dir / "metrics.jsonl");
    if (!min) throw IoError("no metrics.jsonl in " + dir.string());
    std::string line;
    while (std::getline(min, line)) {
      if (line.empty()) continue;
      const auto rec = json::parse(line);
      r.val_loss[rec.at("step").get<std::int64_t>()] = rec.at("val_loss").get<double>();
    }
  } catch (const json::exception& e) {
    throw IoError("malformed run files in " + dir.string() + ": " + e.what());
  }
  if (r.label.empty()) r.label = r.name;
  return r;
}

}  // namespace

json run_compare(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.size() < 2) throw ConfigError("compare needs at least two run directories");
  std::vector<RunData> runs;
  for (const auto& d : run_dirs) runs.push_back(read_run(d));

  std::set<std::int64_t> steps;
  for (const auto& r : runs) {
    for (const auto& [s, v] : r.val_loss) steps.insert(s);
  }
  json table = json::array();
  json mismatched = json::array();
  for (auto s : steps) {
    json row = {{"step", s}};
    json losses = json::array();
    bool complete = true;
    for (const auto& r : runs) {
      const auto it = r.val_loss.find(s);
      if (it == r.val_loss.end()) {
        losses.push_back(nullptr);
        complete = false;
      } else {
        losses.push_back(it->second);
      }
    }
    row["val_loss"] = losses;
    if (complete) {
      json deltas = json::array();
      for (std::size_t i = 0; i < runs.size(); ++i) {
        deltas.push_back(losses[i].get<double>() - losses[0].get<double>());
      }
      row["delta_vs_first"] = deltas;
    } else {
      mismatched.push_back(s);
    }
    table.push_back(std::move(row));
  }

  json finals = json::array();
  for (const auto& r : runs) {
    finals.push_back({{"run", r.name}, {"label", r.label}, {"final_val_loss", r.final_val},
                      {"delta_vs_first", r.final_val - runs.front().final_val}});
  }

  std::map<std::string, std::vector<double>> by_label;
  for (const auto& r : runs) by_label[r.label].push_back(r.final_val);
  json groups = json::array();
  for (const auto& [label, vals] : by_label) {
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    json g = {{"label", label}, {"n", vals.size()}, {"mean_final_val_loss", mean}};
    if (vals.size() > 1) {
      double ss = 0.0;
      for (double v : vals) ss += (v - mean) * (v - mean);
      g["std_final_val_loss"] = std::sqrt(ss / static_cast<double>(vals.size() - 1));
    } else {
      g["std_final_val_loss"] = nullptr;
    }
    groups.push_back(std::move(g));
  }

  const json report = {{"runs", finals}, {"table", table}, {"groups", groups},
                       {"mismatched_steps", mismatched}};

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string());
  std::ofstream(out_dir / "compare.json") << report.dump(2) << "\n";

  std::ostringstream md;
  md << "| run | label | final val loss | delta vs " << runs.front().name << " |\n|---|---|---|---|\n";
  for (const auto& f : finals) {
    char delta[32];
    std::snprintf(delta, sizeof delta, "%+.6f", f["delta_vs_first"].get<double>());
    md << "| " << f["run"].get<std::string>() << " | " << f["label"].get<std::string>() << " | "
       << f["final_val_loss"].get<double>() << " | " << delta << " |\n";
  }
  md << "\n| label | n | mean | std |\n|---|---|---|---|\n";
  for (const auto& g : groups) {
    md << "| " << g["label"].get<std::string>() << " | " << g["n"] << " | "
       << g["mean_final_val_loss"].get<double>() << " | "
       << (g["std_final_val_loss"].is_null() ? std::string("-") : g["std_final_val_loss"].dump())
       << " |\n";
  }
  if (!mismatched.empty()) md << "\nsteps missing from some runs: " << mismatched.dump() << "\n";
  std::ofstream(out_dir / "compare.md") << md.str();

  std::vector<diag::Series> series;
  for (const auto& r : runs) {
    diag::Series s{r.name, {}, {}};
    for (const auto& [step, v] : r.val_loss) {
      s.x.push_back(static_cast<double>(step));
      s.y.push_back(v);
    }
    series.push_back(std::move(s));
  }
  std::ofstream svg(out_dir / "loss_curves.svg");
  svg << diag::line_chart_svg(series, "validation loss", "step", "loss");
  if (!svg) throw IoError("cannot write " + (out_dir / "loss_curves.svg").string());
  return report;
}

}  // namespace tpt::app
