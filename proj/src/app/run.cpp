#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tpt/app.hpp"
#include "tpt/checkpoint.hpp"
#include "tpt/diagnostics.hpp"
#include "tpt/error.hpp"
#include "tpt/kernels.hpp"

namespace tpt::app {
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<nlohmann::json> read_jsonl(const fs::path& path) {
  std::vector<nlohmann::json> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw IoError("malformed line in " + path.string() + ": " + e.what());
    }
  }
  return out;
}

// Drops records past `step` so a resumed run appends a consistent history.
void truncate_jsonl(const fs::path& path, std::int64_t step) {
  std::string kept;
  for (const auto& rec : read_jsonl(path)) {
    if (rec.at("step").get<std::int64_t>() <= step) kept += rec.dump() + "\n";
  }
  write_text(path, kept);
}

std::string checkpoint_name(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%06lld", static_cast<long long>(step));
  return buf;
}

nlohmann::json eval_record(const train::Trainer& tr, std::optional<double> train_loss, double lr,
                           double aux, double elapsed_s) {
  const auto m = tr.evaluate_now();
  const auto& tc = tr.train_config();
  const auto d = diag::collect(tr.model(), tr.corpus().val, static_cast<std::size_t>(tc.seq_len),
                               static_cast<std::size_t>(tc.eval_batch), tr.step(),
                               static_cast<std::size_t>(tc.eval_max_windows));
  nlohmann::json rec = {{"step", tr.step()},
                        {"train_loss", train_loss ? nlohmann::json(*train_loss) : nlohmann::json(nullptr)},
                        {"val_loss", m.loss},
                        {"ppl", m.ppl},
                        {"bpb", m.bpb},
                        {"phase_means", d.phase_means},
                        {"zero_sum_residual", d.zero_sum_residual},
                        {"theta_l2_drift", d.theta_l2_drift},
                        {"theta_mean", d.theta_mean},
                        {"phase_radii", d.phase_radii},
                        {"block_phase_radii", d.block_phase_radii},
                        {"aux_loss", aux},
                        {"lr", lr},
                        {"elapsed_s", elapsed_s}};
  const auto& mc = tr.model().config();
  if (mc.horn_inject) {
    rec["analytic_residual"] =
        phase::analytic_pinned_residual(mc.n_phases, static_cast<std::size_t>(tc.seq_len));
  }
  if (d.horn_head) rec["horn_head"] = *d.horn_head;
  return rec;
}

struct LoadedRun {
  RunConfig cfg;
  data::Corpus corpus;
  Checkpoint ckpt;
};

LoadedRun load_run(const fs::path& run_dir) {
  LoadedRun r{load_run_config(run_dir / "config.json"), {}, {}};
  r.corpus = data::load_corpus(r.cfg.data);
  if (fs::exists(run_dir / "vocab.json") && !(data::Vocab::load(run_dir / "vocab.json") == r.corpus.vocab)) {
    throw IoError("corpus in " + run_dir.string() + " no longer matches its saved vocabulary");
  }
  r.ckpt = load_checkpoint(latest_checkpoint(run_dir));
  return r;
}

}  // namespace

fs::path latest_checkpoint(const fs::path& run_dir) {
  const fs::path root = run_dir / "checkpoints";
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError("no checkpoints under " + run_dir.string());
  fs::path best;
  for (const auto& entry : fs::directory_iterator(root)) {
    const auto name = entry.path().filename().string();
    if (entry.is_directory() && name.rfind("step_", 0) == 0 && (best.empty() || name > best.filename().string())) {
      best = entry.path();
    }
  }
  if (best.empty()) throw IoError("no checkpoints under " + run_dir.string());
  return best;
}

TrainOutcome run_training(const RunConfig& cfg, std::ostream& log,
                          const std::optional<fs::path>& resume) {
  cfg.validate();
  kernels::BackendGuard backend(cfg.deterministic ? kernels::Backend::Serial
                                                  : kernels::Backend::OpenMP);
  const fs::path dir = cfg.out_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());

  auto corpus = data::load_corpus(cfg.data);
  const auto vocab = corpus.vocab;
  train::Trainer tr(cfg.model, cfg.optimizer, cfg.train, cfg.seed, std::move(corpus));

  const auto steps_path = dir / "steps.jsonl";
  const auto metrics_path = dir / "metrics.jsonl";
  const auto t0 = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  if (resume) {
    tr.restore(load_checkpoint(*resume));
    // Checkpoints live at <run>/checkpoints/step_N. Resuming into another
    // directory carries that run's history over so the summary stays whole.
    const fs::path source = fs::absolute(*resume).lexically_normal().parent_path().parent_path();
    if (!fs::equivalent(source, dir, ec) && fs::exists(source / "steps.jsonl") &&
        fs::exists(source / "metrics.jsonl")) {
      fs::copy_file(source / "steps.jsonl", steps_path, fs::copy_options::overwrite_existing);
      fs::copy_file(source / "metrics.jsonl", metrics_path, fs::copy_options::overwrite_existing);
    }
    if (!fs::exists(dir / "config.json")) {
      write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
      vocab.save(dir / "vocab.json");
    }
    truncate_jsonl(steps_path, tr.step());
    truncate_jsonl(metrics_path, tr.step());
    log << "resumed from " << resume->string() << " at step " << tr.step() << "\n";
  } else {
    write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
    vocab.save(dir / "vocab.json");
    write_text(steps_path, "");
    write_text(metrics_path, eval_record(tr, std::nullopt, 0.0, 0.0, elapsed()).dump() + "\n");
  }

  std::ofstream steps(steps_path, std::ios::app), metrics(metrics_path, std::ios::app);
  if (!steps || !metrics) throw IoError("cannot append to logs in " + dir.string());

  const auto total = static_cast<std::int64_t>(cfg.optimizer.total_steps);
  const auto& tc = cfg.train;
  while (tr.step() < total) {
    const auto s = tr.train_step();
    steps << nlohmann::json{{"step", s.step}, {"loss", s.loss}, {"ce", s.ce}, {"aux", s.aux},
                            {"lr", s.lr}, {"grad_norm", s.grad_norm}}.dump()
          << "\n";
    const bool last = s.step == total;
    if (last || (tc.eval_every > 0 && s.step % tc.eval_every == 0)) {
      const auto rec = eval_record(tr, s.loss, s.lr, s.aux, elapsed());
      metrics << rec.dump() << "\n" << std::flush;
      log << "step " << s.step << "  train " << s.loss << "  val " << rec["val_loss"].get<double>()
          << "  residual " << rec["zero_sum_residual"].get<double>() << "\n";
    }
    if (last || (tc.checkpoint_every > 0 && s.step % tc.checkpoint_every == 0)) {
      save_checkpoint(dir / "checkpoints" / checkpoint_name(s.step), tr.snapshot());
    }
  }
  steps.close();
  metrics.close();
  if (!steps || !metrics) throw IoError("error while writing logs in " + dir.string());

  const auto step_recs = read_jsonl(steps_path);
  const auto eval_recs = read_jsonl(metrics_path);
  if (eval_recs.empty()) throw IoError("no evaluation records in " + metrics_path.string());
  const auto& fin = eval_recs.back();
  nlohmann::json summary = {
      {"label", cfg.label},
      {"seed", cfg.seed},
      {"steps", tr.step()},
      {"parameters", tr.model().parameter_count()},
      {"vocab_size", vocab.size()},
      {"bytes_per_token", tr.corpus().bytes_per_token},
      {"initial_val_loss", eval_recs.front()["val_loss"]},
      {"initial_train_loss", step_recs.empty() ? nlohmann::json(nullptr) : step_recs.front()["loss"]},
      {"final_train_loss", step_recs.empty() ? nlohmann::json(nullptr) : step_recs.back()["loss"]},
      {"final_val_loss", fin["val_loss"]},
      {"final_ppl", fin["ppl"]},
      {"final_bpb", fin["bpb"]},
      {"zero_sum_residual", fin["zero_sum_residual"]},
      {"phase_means", fin["phase_means"]},
      {"theta_l2_drift", fin["theta_l2_drift"]},
      {"theta_count", cfg.model.baseline_mode ? 0 : cfg.model.n_layers * cfg.model.d_phase() / 2},
      {"n_phases", cfg.model.n_phases},
      {"baseline_mode", cfg.model.baseline_mode},
  };
  if (fin.contains("analytic_residual")) summary["analytic_residual"] = fin["analytic_residual"];
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  const auto drift = diag::theta_drift(tr.model().theta_bank());
  write_text(dir / "theta_drift.csv", diag::heatmap_csv(drift.per_pair));
  write_text(dir / "theta_drift.svg", diag::heatmap_svg(drift.per_pair));
  return {dir, summary};
}

nlohmann::json run_eval(const fs::path& run_dir) {
  auto run = load_run(run_dir);
  model::Model<float> m(run.cfg.model, 0);
  import_model(m, run.ckpt);
  const auto& tc = run.cfg.train;
  const auto met = train::evaluate(m, run.corpus.val, static_cast<std::size_t>(tc.seq_len),
                                   static_cast<std::size_t>(tc.eval_batch),
                                   run.corpus.bytes_per_token);
  const nlohmann::json out = {{"step", run.ckpt.step},
                              {"val_loss", met.loss},
                              {"ppl", met.ppl},
                              {"bpb", met.bpb},
                              {"bytes_per_token", run.corpus.bytes_per_token},
                              {"val_tokens", run.corpus.val.size()}};
  write_text(run_dir / "eval.json", out.dump(2) + "\n");
  return out;
}

nlohmann::json run_diagnose(const fs::path& run_dir, std::ostream& log) {
  auto run = load_run(run_dir);
  model::Model<float> m(run.cfg.model, 0);
  import_model(m, run.ckpt);
  const auto& tc = run.cfg.train;
  const auto rec = diag::collect(m, run.corpus.val, static_cast<std::size_t>(tc.seq_len),
                                 static_cast<std::size_t>(tc.eval_batch),
                                 static_cast<std::int64_t>(run.ckpt.step));
  auto out = diag::to_json(rec);
  const auto drift = diag::theta_drift(m.theta_bank());
  out["theta_init_mean"] = drift.init_mean;
  std::vector<double> rms_deg;
  for (std::size_t l = 0; l < drift.l2.size(); ++l) {
    const double rms = diag::per_theta_rms(drift.l2[l], drift.per_pair[l].size());
    rms_deg.push_back(diag::radians_to_degrees(rms));
  }
  out["theta_rms_drift_deg"] = rms_deg;
  const auto pc = diag::measurement_phases(run.cfg.model);
  if (run.cfg.model.horn_inject) {
    const auto T = static_cast<std::size_t>(tc.seq_len);
    out["analytic_residual"] = phase::analytic_pinned_residual(pc.n_phases(), T);
    out["intrinsic_phase_means"] = diag::intrinsic_phase_means(rec.phase_means, T);
  }
  write_text(run_dir / "diagnostics.json", out.dump(2) + "\n");
  write_text(run_dir / "theta_drift.csv", diag::heatmap_csv(drift.per_pair));
  write_text(run_dir / "theta_drift.svg", diag::heatmap_svg(drift.per_pair));

  log << "checkpoint step " << run.ckpt.step << "\n";
  log << "zero-sum residual " << rec.zero_sum_residual << "\n";
  for (std::size_t l = 0; l < drift.l2.size(); ++l) {
    log << "block " << l << ": init mean " << drift.init_mean[l] << " rad, mean " << drift.mean[l]
        << " rad, L2 drift " << drift.l2[l] << " rad (" << rms_deg[l] << " deg per theta)\n";
  }
  return out;
}

}  // namespace tpt::app
