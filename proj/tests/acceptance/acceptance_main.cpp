// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only when
// all of them hold.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

#include "test_support.hpp"
#include "tpt/checkpoint.hpp"
#include "tpt/gradcheck.hpp"
#include "tpt/ops.hpp"
#include "tpt/phase.hpp"

using namespace tpt;
using support::TempDir;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome structural_pinning() {
  double worst = 0.0;
  Rng rng(2024);
  for (int n : {1, 2, 3, 4, 6, 8, 12}) {
    const int d = 24 * n;
    const phase::PhaseConfig pc(n, d);
    for (std::size_t T : {8u, 128u, 1024u}) {
      const std::size_t B = T == 1024 ? 1 : 4;
      const auto x = randn<float>({B, T, static_cast<std::size_t>(d)}, 1.0, rng);
      const auto out = phase::horn_substitute(x, phase::HornProfile::fixed(T).to_tensor<float>(), pc);
      worst = std::max(worst, std::abs(phase::zero_sum_residual(out, pc) -
                                       phase::analytic_pinned_residual(n, T)));
    }
  }
  const bool refs = std::abs(phase::analytic_pinned_residual(3, 128) - 0.12734) < 5e-6 &&
                    std::abs(phase::analytic_pinned_residual(3, 1024) - 0.0220) < 5e-5 &&
                    std::abs(phase::analytic_pinned_residual(1, 1024) - 0.00733) < 5e-6;
  return {worst < 1e-6 && refs, "max |residual - N*H_T/T| = " + fmt("%.3g", worst)};
}

Outcome rotation_orthogonality() {
  const phase::PhaseConfig pc(3, 48);
  Rng rng(77);
  double norm_err = 0.0, inv_err = 0.0;
  for (int probe = 0; probe < 1000; ++probe) {
    const auto h = randn<float>({1, 2, 48}, 1.0, rng);
    const auto theta = randn<float>({8}, 2.0, rng);
    const auto y = model::phase_rotation_layer(h, theta, pc);
    const auto back = phase::phase_rotate(y, theta, pc, phase::Direction::Inverse);
    for (std::size_t r = 0; r < 2; ++r) {
      double a = 0, b = 0;
      for (std::size_t k = 0; k < 48; ++k) {
        a += double(h.data()[r * 48 + k]) * h.data()[r * 48 + k];
        b += double(y.data()[r * 48 + k]) * y.data()[r * 48 + k];
      }
      norm_err = std::max(norm_err, std::abs(std::sqrt(a) - std::sqrt(b)));
    }
    inv_err = std::max(inv_err, support::max_abs_diff(back.data(), h.data()));
  }
  // Jacobian of a d_phase = 8 rotation layer by central differences.
  const phase::PhaseConfig small(1, 8);
  const auto theta = randn<double>({4}, 1.0, rng);
  const auto x0 = randn<double>({1, 8}, 1.0, rng);
  Eigen::Matrix<double, 8, 8> J;
  const double hstep = 1e-6;
  for (int j = 0; j < 8; ++j) {
    std::vector<double> p(x0.data().begin(), x0.data().end()), m = p;
    p[j] += hstep;
    m[j] -= hstep;
    const auto yp = model::phase_rotation_layer(Tensor<double>({1, 8}, p), theta, small);
    const auto ym = model::phase_rotation_layer(Tensor<double>({1, 8}, m), theta, small);
    for (int i = 0; i < 8; ++i) J(i, j) = (yp.data()[i] - ym.data()[i]) / (2 * hstep);
  }
  const Eigen::JacobiSVD<Eigen::Matrix<double, 8, 8>> svd(J);
  const double sv_err = (svd.singularValues().array() - 1.0).abs().maxCoeff();
  return {norm_err < 1e-5 && inv_err < 1e-5 && sv_err < 1e-4,
          "1000 probes: norm " + fmt("%.2g", norm_err) + ", inverse " + fmt("%.2g", inv_err) +
              ", |sigma - 1| " + fmt("%.2g", sv_err)};
}

Outcome gradient_fidelity() {
  model::ModelConfig c;
  c.vocab_size = 13;
  c.d_model = 24;
  c.n_layers = 2;
  c.n_phases = 3;
  c.n_q_heads = 6;
  c.n_kv_heads = 3;
  c.d_ff = 32;
  c.max_seq_len = 8;
  c.learnable_horn = true;
  model::Model<double> m(c, 31);
  Rng rng(32);
  TokenBatch in{2, 8, {}};
  std::vector<TokenId> tgt;
  for (int i = 0; i < 16; ++i) {
    in.ids.push_back(static_cast<TokenId>(1 + rng.below(12)));
    tgt.push_back(static_cast<TokenId>(1 + rng.below(12)));
  }
  const auto loss = [&] { return cross_entropy(m.forward(in).logits, tgt); };
  std::vector<std::pair<std::string, Tensor<double>>> leaves;
  for (const auto& p : m.params().items()) leaves.emplace_back(p.name, p.value);
  gradcheck::Options opt;
  opt.per_leaf = 7;
  const auto rep = gradcheck::check(loss, leaves, rng, opt);
  std::size_t theta = 0, norm = 0, horn = 0;
  for (const auto& p : rep.probes) {
    theta += p.name.find("theta") != std::string::npos;
    norm += p.name.find("norm") != std::string::npos;
    horn += p.name == "horn";
  }
  const bool ok = rep.count() >= 100 && rep.failures(1e-4) == 0 && theta > 0 && norm > 0 && horn > 0;
  return {ok, std::to_string(rep.count()) + " probes (" + std::to_string(theta) + " theta, " +
                  std::to_string(norm) + " norm, " + std::to_string(horn) +
                  " horn), max rel err " + fmt("%.2g", rep.max_rel_err)};
}

Outcome parameter_counts() {
  model::ModelConfig small;
  small.vocab_size = 10000;
  small.d_model = 192;
  small.n_layers = 4;
  small.d_ff = 512;
  small.n_q_heads = 6;
  small.n_kv_heads = 3;
  small.n_phases = 3;
  const auto a = model::count_parameters(small);
  const auto b = model::count_parameters(model::ModelConfig::baseline_of(small));
  const model::Model<float> built(small, 1);
  model::ModelConfig big = small;
  big.vocab_size = 32000;
  big.d_model = 768;
  big.n_layers = 12;
  big.n_q_heads = 12;
  big.n_kv_heads = 3;
  big.d_ff = 2048;
  const auto big_delta = model::count_parameters(big) -
                         model::count_parameters(model::ModelConfig::baseline_of(big));
  return {a == 5463872 && b == 5463744 && built.parameter_count() == a && big_delta == 1536,
          "3PT " + std::to_string(a) + ", baseline " + std::to_string(b) + ", 123M-shape delta " +
              std::to_string(big_delta)};
}

Outcome theta_schedule() {
  const double table[] = {0.131, 0.262, 0.393, 0.524, 0.654, 0.785,
                          0.916, 1.047, 1.178, 1.309, 1.440, 1.571};
  model::ModelConfig c;
  c.n_layers = 12;
  c.d_model = 192;
  c.vocab_size = 16;
  c.d_ff = 16;
  const model::Model<float> m(c, 3);
  const auto bank = m.theta_bank();
  double worst = 0.0;
  for (std::size_t l = 0; l < 12; ++l) {
    double mean = 0;
    for (double v : bank.init(l)) mean += v;
    worst = std::max(worst, std::abs(mean / bank.init(l).size() - table[l]));
  }
  return {worst < 5e-4, "max |init mean - table| = " + fmt("%.3g", worst)};
}

Outcome dead_aux() {
  auto base = app::toy_run_config();
  base.model.horn_inject = false;
  base.model.zero_mean_enforce = true;
  base.optimizer.total_steps = 200;
  base.optimizer.warmup_steps = 20;
  const auto corpus = data::load_corpus(base.data);
  auto with = base;
  with.model.use_aux_loss = true;
  train::Trainer off(base.model, base.optimizer, base.train, base.seed, corpus);
  train::Trainer on(with.model, with.optimizer, with.train, with.seed, corpus);
  double max_aux = 0.0;
  for (int i = 0; i < 200; ++i) {
    off.train_step();
    max_aux = std::max(max_aux, std::abs(on.train_step().aux));
  }
  double diff = 0.0;
  for (std::size_t i = 0; i < off.model().params().items().size(); ++i) {
    diff = std::max(diff, support::max_abs_diff(off.model().params().items()[i].value.data(),
                                                on.model().params().items()[i].value.data()));
  }
  return {max_aux < 1e-12 && diff < 1e-7,
          "200 steps: max aux " + fmt("%.3g", max_aux) + ", max param diff " + fmt("%.3g", diff)};
}

Outcome ppl_bpb_identity() {
  const auto spot = train::metrics_from_loss(2.7765, 3.69);
  auto cfg = app::toy_run_config();
  cfg.data.toy_corpus_bytes = 20000;
  const auto corpus = data::load_corpus(cfg.data);
  const model::Model<float> m(cfg.model, 4);
  const auto met = train::evaluate(m, corpus.val, 32, 8, corpus.bytes_per_token);
  const double e1 = std::abs(met.ppl - std::exp(met.loss)) / met.ppl;
  const double e2 = std::abs(met.bpb - met.loss / (std::numbers::ln2 * corpus.bytes_per_token));
  return {std::abs(spot.bpb - 1.0855) < 5e-4 && e1 < 1e-12 && e2 < 1e-12,
          "spot bpb " + fmt("%.5f", spot.bpb) + ", evaluate() identities within " +
              fmt("%.1g", std::max(e1, e2))};
}

Outcome smoke_training() {
  TempDir dir("accept_smoke");
  auto tpt_cfg = app::toy_run_config();
  tpt_cfg.out_dir = (dir / "3pt").string();
  auto base_cfg = tpt_cfg;
  base_cfg.model = model::ModelConfig::baseline_of(tpt_cfg.model);
  base_cfg.out_dir = (dir / "baseline").string();
  base_cfg.label = "baseline";
  std::ostringstream log;
  std::string detail;
  bool ok = true;
  for (const auto* c : {&tpt_cfg, &base_cfg}) {
    app::run_training(*c, log);
    const auto rows = support::read_jsonl(std::filesystem::path(c->out_dir) / "metrics.jsonl");
    const double first = rows.front()["val_loss"].get<double>();
    const double last = rows.back()["val_loss"].get<double>();
    ok = ok && rows.back()["step"] == 300 && last < 0.6 * first;
    detail += c->label + " " + fmt("%.3f", first) + " -> " + fmt("%.3f", last) + "; ";
  }
  const auto rep = app::run_compare({dir / "3pt", dir / "baseline"}, dir / "compare");
  const auto md = support::slurp(dir / "compare" / "compare.md");
  const double delta = rep["runs"][1]["delta_vs_first"].get<double>();
  ok = ok && md.find(delta >= 0 ? "+" : "-") != std::string::npos;
  return {ok, detail + "signed delta " + fmt("%+.4f", delta)};
}

Outcome determinism_and_resume() {
  TempDir dir("accept_det");
  auto cfg = app::toy_run_config();
  cfg.optimizer.total_steps = 60;
  cfg.optimizer.warmup_steps = 10;
  cfg.train.eval_every = 20;
  cfg.train.checkpoint_every = 30;
  cfg.data.toy_corpus_bytes = 40000;
  std::ostringstream log;
  cfg.out_dir = (dir / "a").string();
  app::run_training(cfg, log);
  cfg.out_dir = (dir / "b").string();
  app::run_training(cfg, log);
  cfg.out_dir = (dir / "c").string();
  app::run_training(cfg, log, dir / "a" / "checkpoints" / "step_000030");
  const auto m = [&](const char* run) { return support::slurp(dir / run / "metrics.jsonl"); };
  const auto strip = [](const std::string& s) {
    // elapsed_s is wall-clock; everything else must match byte for byte.
    std::string out;
    for (const auto& row : [&] {
           std::vector<nlohmann::json> rows;
           std::istringstream in(s);
           std::string line;
           while (std::getline(in, line)) {
             auto j = nlohmann::json::parse(line);
             j.erase("elapsed_s");
             rows.push_back(j);
           }
           return rows;
         }()) {
      out += row.dump() + "\n";
    }
    return out;
  };
  const bool same_seed = strip(m("a")) == strip(m("b"));
  const auto tail = [&](const char* run) {
    std::string out;
    for (const auto& row : support::read_jsonl(dir / run / "metrics.jsonl")) {
      if (row["step"].get<int>() <= 30) continue;
      auto r = row;
      r.erase("elapsed_s");
      out += r.dump() + "\n";
    }
    return out;
  };
  const bool resumed = !tail("a").empty() && tail("a") == tail("c");
  const bool summaries = support::slurp(dir / "a" / "summary.json") == support::slurp(dir / "c" / "summary.json");
  return {same_seed && resumed && summaries,
          std::string("same seed ") + (same_seed ? "identical" : "DIFFERENT") + ", resume from step 30 " +
              (resumed && summaries ? "identical" : "DIFFERENT")};
}

Outcome rope_relative() {
  const model::RopeTable table(256, 32, 10000.0);
  Rng rng(55);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto q = randn<float>({1, 32}, 1.0, rng), k = randn<float>({1, 32}, 1.0, rng);
    const int p = static_cast<int>(rng.below(100)), r = static_cast<int>(rng.below(100));
    const auto score = [&](int a, int b) {
      const int pa[] = {a}, pb[] = {b};
      const auto qa = model::rope_rotate(q, table, pa), kb = model::rope_rotate(k, table, pb);
      double s = 0;
      for (int i = 0; i < 32; ++i) s += double(qa.data()[i]) * kb.data()[i];
      return s;
    };
    const double ref = score(p, r);
    for (int shift : {1, 7, 50, 150}) worst = std::max(worst, std::abs(score(p + shift, r + shift) - ref));
  }
  return {worst < 1e-4, "max score change under joint shift " + fmt("%.2g", worst)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"structural pinning", structural_pinning},
      {"rotation orthogonality", rotation_orthogonality},
      {"gradient fidelity", gradient_fidelity},
      {"parameter-count identities", parameter_counts},
      {"theta init schedule", theta_schedule},
      {"dead-aux equivalence", dead_aux},
      {"ppl/bpb arithmetic identity", ppl_bpb_identity},
      {"smoke training", smoke_training},
      {"determinism and checkpointing", determinism_and_resume},
      {"rope relative position", rope_relative},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %2zu %-30s %7.2fs  %s\n", o.passed ? "PASS" : "FAIL", i + 1, criteria[i].first, secs,
                o.detail.c_str());
    std::fflush(stdout);
    failures += !o.passed;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
