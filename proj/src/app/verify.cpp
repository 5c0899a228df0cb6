#include <algorithm>
#include <cmath>
#include <numbers>

#include "tpt/app.hpp"
#include "tpt/error.hpp"
#include "tpt/gradcheck.hpp"
#include "tpt/phase.hpp"

namespace tpt::app {
namespace {

using nlohmann::json;

struct Suite {
  std::string name;
  bool passed = true;
  json details = json::object();
};

Suite pinning_suite(const VerifyOptions& opt) {
  Suite s{"pinning"};
  std::vector<std::pair<int, std::size_t>> cases;
  for (int n : {1, 2, 3, 4, 6, 8, 12}) cases.emplace_back(n, 128);
  if (opt.config && !opt.config->model.baseline_mode) {
    cases.emplace_back(opt.config->model.n_phases, static_cast<std::size_t>(opt.config->train.seq_len));
  }
  Rng rng(1234);
  json rows = json::array();
  for (const auto& [n, T] : cases) {
    const int d = opt.config && n == opt.config->model.n_phases ? opt.config->model.d_model : 24 * n;
    const phase::PhaseConfig pc(n, d);
    auto horn = phase::HornProfile::fixed(T).to_tensor<float>();
    if (opt.inject_horn_fault) {
      for (float& v : horn.mutable_data()) v += 1e-3f;
    }
    const auto x = randn<float>({2, T, static_cast<std::size_t>(d)}, 1.0, rng);
    const double measured = phase::zero_sum_residual(phase::horn_substitute(x, horn, pc), pc);
    const double analytic = phase::analytic_pinned_residual(n, T);
    const double err = std::abs(measured - analytic);
    const bool ok = err < 1e-6;
    s.passed = s.passed && ok;
    rows.push_back({{"n_phases", n}, {"d_model", d}, {"T", T}, {"analytic", analytic},
                    {"measured", measured}, {"abs_err", err}, {"passed", ok}});
  }
  s.details["cases"] = rows;
  s.details["tolerance"] = 1e-6;
  s.details["fault_injected"] = opt.inject_horn_fault;
  return s;
}

Suite orthogonality_suite() {
  Suite s{"orthogonality"};
  Rng rng(99);
  double worst_norm = 0.0, worst_inverse = 0.0;
  const phase::PhaseConfig pc(3, 48);
  for (int probe = 0; probe < 200; ++probe) {
    const auto h = randn<float>({1, 4, 48}, 1.0, rng);
    const auto theta = randn<float>({8}, 2.0, rng);
    const auto out = phase::phase_rotate(h, theta, pc);
    const auto back = phase::phase_rotate(out, theta, pc, phase::Direction::Inverse);
    for (std::size_t r = 0; r < 4; ++r) {
      double a = 0.0, b = 0.0;
      for (std::size_t k = 0; k < 48; ++k) {
        a += double(h.data()[r * 48 + k]) * h.data()[r * 48 + k];
        b += double(out.data()[r * 48 + k]) * out.data()[r * 48 + k];
      }
      worst_norm = std::max(worst_norm, std::abs(std::sqrt(a) - std::sqrt(b)));
    }
    for (std::size_t k = 0; k < h.numel(); ++k) {
      worst_inverse = std::max(worst_inverse, double(std::abs(back.data()[k] - h.data()[k])));
    }
  }
  s.passed = worst_norm < 1e-5 && worst_inverse < 1e-5;
  s.details = {{"probes", 200}, {"max_norm_err", worst_norm}, {"max_inverse_err", worst_inverse},
               {"tolerance", 1e-5}};
  return s;
}

Suite gradient_suite() {
  Suite s{"gradients"};
  model::ModelConfig cfg;
  cfg.vocab_size = 13;
  cfg.d_model = 24;
  cfg.n_layers = 2;
  cfg.n_phases = 3;
  cfg.n_q_heads = 6;
  cfg.n_kv_heads = 3;
  cfg.d_ff = 32;
  cfg.max_seq_len = 8;
  cfg.learnable_horn = true;
  cfg.use_aux_loss = true;
  model::Model<double> m(cfg, 5);
  Rng rng(17);
  TokenBatch in{2, 8, {}};
  std::vector<TokenId> tgt;
  for (int i = 0; i < 16; ++i) {
    in.ids.push_back(static_cast<TokenId>(1 + rng.below(12)));
    tgt.push_back(static_cast<TokenId>(1 + rng.below(12)));
  }
  const auto loss = [&] {
    const auto fr = m.forward(in);
    return add(cross_entropy(fr.logits, tgt), fr.aux_loss);
  };
  std::vector<std::pair<std::string, Tensor<double>>> leaves;
  for (const auto& p : m.params().items()) leaves.emplace_back(p.name, p.value);
  gradcheck::Options go;
  go.per_leaf = 6;
  const auto rep = gradcheck::check(loss, leaves, rng, go);
  s.passed = rep.count() >= 100 && rep.failures(1e-4) == 0;
  s.details = {{"probes", rep.count()}, {"max_rel_err", rep.max_rel_err}, {"worst", rep.worst},
               {"tolerance", 1e-4}};
  return s;
}

Suite param_count_suite() {
  Suite s{"parameter_counts"};
  model::ModelConfig small;  // defaults are the 5.5M shape
  const auto tpt = model::count_parameters(small);
  const auto base = model::count_parameters(model::ModelConfig::baseline_of(small));
  auto learn = small;
  learn.learnable_horn = true;
  const auto learnable = model::count_parameters(learn);

  model::ModelConfig big;
  big.vocab_size = 32000;
  big.d_model = 768;
  big.n_layers = 12;
  big.n_q_heads = 12;
  big.n_kv_heads = 3;
  big.d_ff = 2048;
  big.max_seq_len = 1024;
  const auto big_tpt = model::count_parameters(big);
  const auto big_base = model::count_parameters(model::ModelConfig::baseline_of(big));

  s.passed = tpt == 5463872 && base == 5463744 && learnable - tpt == 129 && big_tpt - big_base == 1536;
  s.details = {{"small_3pt", tpt},           {"small_baseline", base},
               {"small_delta", tpt - base},  {"learnable_horn_delta", learnable - tpt},
               {"large_3pt", big_tpt},       {"large_baseline", big_base},
               {"large_delta", big_tpt - big_base}};
  return s;
}

Suite theta_init_suite() {
  Suite s{"theta_init"};
  const std::vector<double> table = {0.131, 0.262, 0.393, 0.524, 0.654, 0.785,
                                     0.916, 1.047, 1.178, 1.309, 1.440, 1.571};
  const auto bank = phase::ThetaBank::depth_linear(12, 64);
  double worst = 0.0;
  json means = json::array();
  for (std::size_t l = 0; l < 12; ++l) {
    const auto& v = bank.init(l);
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    means.push_back(mean);
    worst = std::max(worst, std::abs(mean - table[l]));
  }
  s.passed = worst < 5e-4;
  s.details = {{"means", means}, {"max_abs_err", worst}, {"tolerance", 5e-4}};
  return s;
}

Suite rope_suite() {
  Suite s{"rope_relative"};
  const model::RopeTable table(64, 16, 10000.0);
  Rng rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto q = randn<double>({1, 16}, 1.0, rng);
    const auto k = randn<double>({1, 16}, 1.0, rng);
    const int p = static_cast<int>(rng.below(20)), r = static_cast<int>(rng.below(20));
    const auto score = [&](int a, int b) {
      const int pa[] = {a}, pb[] = {b};
      const auto qa = model::rope_rotate(q, table, pa);
      const auto kb = model::rope_rotate(k, table, pb);
      double dot = 0.0;
      for (std::size_t i = 0; i < 16; ++i) dot += qa.data()[i] * kb.data()[i];
      return dot;
    };
    const double ref = score(p, r);
    for (int shift : {1, 5, 17}) worst = std::max(worst, std::abs(score(p + shift, r + shift) - ref));
  }
  s.passed = worst < 1e-4;
  s.details = {{"max_abs_err", worst}, {"tolerance", 1e-4}};
  return s;
}

Suite dead_aux_suite() {
  Suite s{"dead_aux"};
  auto base = toy_run_config();
  base.model.d_model = 24;
  base.model.d_ff = 48;
  base.model.max_seq_len = 16;
  base.model.horn_inject = false;
  base.model.zero_mean_enforce = true;
  base.train.seq_len = 16;
  base.train.batch_size = 4;
  base.optimizer.total_steps = 200;
  base.optimizer.warmup_steps = 20;
  base.data.toy_corpus_bytes = 20000;
  const auto corpus = data::load_corpus(base.data);

  auto with_aux = base;
  with_aux.model.use_aux_loss = true;
  train::Trainer off(base.model, base.optimizer, base.train, base.seed, corpus);
  train::Trainer on(with_aux.model, with_aux.optimizer, with_aux.train, with_aux.seed, corpus);
  double max_aux = 0.0;
  for (int i = 0; i < base.optimizer.total_steps; ++i) {
    off.train_step();
    max_aux = std::max(max_aux, std::abs(on.train_step().aux));
  }
  double max_diff = 0.0;
  const auto& a = off.model().params().items();
  const auto& b = on.model().params().items();
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < a[i].value.numel(); ++k) {
      max_diff = std::max(max_diff, double(std::abs(a[i].value.data()[k] - b[i].value.data()[k])));
    }
  }
  s.passed = max_aux < 1e-12 && max_diff < 1e-7;
  s.details = {{"steps", base.optimizer.total_steps}, {"max_aux", max_aux},
               {"max_param_diff", max_diff}, {"aux_tolerance", 1e-12}, {"param_tolerance", 1e-7}};
  return s;
}

Suite config_suite(const RunConfig& cfg) {
  Suite s{"config"};
  try {
    cfg.validate();
    s.details = {{"parameters", model::count_parameters(cfg.model)},
                 {"theta_count", cfg.model.baseline_mode ? 0 : cfg.model.n_layers * cfg.model.d_phase() / 2}};
  } catch (const ConfigError& e) {
    s.passed = false;
    s.details = {{"error", e.what()}};
  }
  return s;
}

}  // namespace

json run_verify(const VerifyOptions& opt, std::ostream& log) {
  std::vector<Suite> suites;
  if (opt.config) suites.push_back(config_suite(*opt.config));
  suites.push_back(pinning_suite(opt));
  suites.push_back(orthogonality_suite());
  suites.push_back(gradient_suite());
  suites.push_back(param_count_suite());
  suites.push_back(theta_init_suite());
  suites.push_back(rope_suite());
  suites.push_back(dead_aux_suite());

  json report = {{"passed", true}, {"suites", json::array()}};
  json analytic = json::object();
  for (int n : {1, 2, 3, 4, 6, 8, 12}) {
    analytic[std::to_string(n)] = phase::analytic_pinned_residual(n, 128);
  }
  report["analytic_pinned_residual_T128"] = analytic;
  for (const auto& s : suites) {
    log << (s.passed ? "PASS " : "FAIL ") << s.name << "\n";
    report["suites"].push_back({{"name", s.name}, {"passed", s.passed}, {"details", s.details}});
    if (!s.passed) report["passed"] = false;
  }
  return report;
}

}  // namespace tpt::app
