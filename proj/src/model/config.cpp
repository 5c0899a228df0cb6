#include <cmath>
#include <set>
#include <string>

#include "tpt/error.hpp"
#include "tpt/model.hpp"

namespace tpt::model {
namespace {

std::string num(int v) { return std::to_string(v); }

}  // namespace

void ModelConfig::validate() const {
  const auto require_positive = [](int v, const char* name) {
    if (v < 1) throw ConfigError(std::string(name) + " must be >= 1, got " + num(v));
  };
  require_positive(vocab_size, "vocab_size");
  require_positive(d_model, "d_model");
  require_positive(n_layers, "n_layers");
  require_positive(n_phases, "n_phases");
  require_positive(n_q_heads, "n_q_heads");
  require_positive(n_kv_heads, "n_kv_heads");
  require_positive(d_ff, "d_ff");
  require_positive(max_seq_len, "max_seq_len");
  if (!(norm_eps > 0)) throw ConfigError("norm_eps must be positive");
  if (!(init_std > 0) || !(embed_init_std > 0)) throw ConfigError("init std must be positive");
  if (!(rope_base > 1)) throw ConfigError("rope_base must be > 1");
  if (!(aux_coef >= 0)) throw ConfigError("aux_coef must be >= 0");

  if (n_q_heads % n_kv_heads != 0) {
    throw ConfigError("GQA requires n_kv_heads | n_q_heads, got n_q=" + num(n_q_heads) +
                      ", n_kv=" + num(n_kv_heads));
  }
  if (d_model % n_q_heads != 0) {
    throw ConfigError("n_q_heads=" + num(n_q_heads) + " does not divide d_model=" + num(d_model));
  }
  if (d_head() % 2 != 0) throw ConfigError("d_head=" + num(d_head()) + " must be even for RoPE");

  if (baseline_mode) {
    if (horn_inject || zero_mean_enforce || use_aux_loss || residual_pr || learnable_horn) {
      throw ConfigError("baseline_mode excludes horn_inject, zero_mean_enforce, use_aux_loss, "
                        "residual_pr and learnable_horn");
    }
    return;
  }
  if (n_q_heads % n_phases != 0 || n_kv_heads % n_phases != 0) {
    throw ConfigError("phase-aligned GQA requires N | n_q and N | n_kv, got N=" + num(n_phases) +
                      ", n_q=" + num(n_q_heads) + ", n_kv=" + num(n_kv_heads));
  }
  phase::PhaseConfig(n_phases, d_model);  // N | d_model, even d_phase
  if (learnable_horn && !horn_inject) throw ConfigError("learnable_horn requires horn_inject");
}

phase::PhaseConfig ModelConfig::phase() const { return phase::PhaseConfig(norm_phases(), d_model); }

ModelConfig ModelConfig::baseline_of(const ModelConfig& cfg) {
  ModelConfig b = cfg;
  b.baseline_mode = true;
  b.horn_inject = false;
  b.zero_mean_enforce = false;
  b.use_aux_loss = false;
  b.residual_pr = false;
  b.learnable_horn = false;
  b.scale_embedding = true;
  return b;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {
      {"vocab_size", c.vocab_size},
      {"d_model", c.d_model},
      {"n_layers", c.n_layers},
      {"n_phases", c.n_phases},
      {"n_q_heads", c.n_q_heads},
      {"n_kv_heads", c.n_kv_heads},
      {"d_ff", c.d_ff},
      {"max_seq_len", c.max_seq_len},
      {"rope_base", c.rope_base},
      {"norm_eps", c.norm_eps},
      {"init_std", c.init_std},
      {"embed_init_std", c.embed_init_std},
      {"horn_inject", c.horn_inject},
      {"zero_mean_enforce", c.zero_mean_enforce},
      {"use_aux_loss", c.use_aux_loss},
      {"aux_coef", c.aux_coef},
      {"residual_pr", c.residual_pr},
      {"learnable_horn", c.learnable_horn},
      {"scale_embedding", c.scale_embedding},
      {"baseline_mode", c.baseline_mode},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c;
  const auto defaults = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown model key '" + key + "'");
    const auto& proto = defaults.at(key);
    const bool ok = (proto.is_boolean() && value.is_boolean()) ||
                    (proto.is_number_integer() && value.is_number_integer()) ||
                    (proto.is_number_float() && value.is_number());
    if (!ok) throw ConfigError("model key '" + key + "' has the wrong type");
  }
  const auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("vocab_size", c.vocab_size);
  get("d_model", c.d_model);
  get("n_layers", c.n_layers);
  get("n_phases", c.n_phases);
  get("n_q_heads", c.n_q_heads);
  get("n_kv_heads", c.n_kv_heads);
  get("d_ff", c.d_ff);
  get("max_seq_len", c.max_seq_len);
  get("rope_base", c.rope_base);
  get("norm_eps", c.norm_eps);
  get("init_std", c.init_std);
  get("embed_init_std", c.embed_init_std);
  get("horn_inject", c.horn_inject);
  get("zero_mean_enforce", c.zero_mean_enforce);
  get("use_aux_loss", c.use_aux_loss);
  get("aux_coef", c.aux_coef);
  get("residual_pr", c.residual_pr);
  get("learnable_horn", c.learnable_horn);
  get("scale_embedding", c.scale_embedding);
  get("baseline_mode", c.baseline_mode);
  return c;
}

std::string block_prefix(int layer) { return "blocks." + std::to_string(layer) + "."; }

std::vector<ParamSpec> parameter_layout(const ModelConfig& cfg) {
  cfg.validate();
  const auto V = static_cast<std::size_t>(cfg.vocab_size);
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto kv = static_cast<std::size_t>(cfg.n_kv_heads * cfg.d_head());
  const auto ff = static_cast<std::size_t>(cfg.d_ff);
  const double s = cfg.init_std;

  std::vector<ParamSpec> out;
  out.push_back({"tok_emb", {V, d}, true, InitKind::Normal, cfg.embed_init_std});
  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto p = block_prefix(l);
    out.push_back({p + "norm1.weight", {d}, false, InitKind::Ones, 0.0, l});
    out.push_back({p + "attn.wq", {d, d}, true, InitKind::Normal, s, l});
    out.push_back({p + "attn.wk", {d, kv}, true, InitKind::Normal, s, l});
    out.push_back({p + "attn.wv", {d, kv}, true, InitKind::Normal, s, l});
    out.push_back({p + "attn.wo", {d, d}, true, InitKind::Normal, s, l});
    if (!cfg.baseline_mode) {
      out.push_back({p + "rotation.theta", {static_cast<std::size_t>(cfg.d_phase() / 2)}, false,
                     InitKind::DepthLinearTheta, 0.0, l});
    }
    out.push_back({p + "norm2.weight", {d}, false, InitKind::Ones, 0.0, l});
    out.push_back({p + "ffn.w_gate", {d, ff}, true, InitKind::Normal, s, l});
    out.push_back({p + "ffn.w_up", {d, ff}, true, InitKind::Normal, s, l});
    out.push_back({p + "ffn.w_down", {ff, d}, true, InitKind::Normal, s, l});
  }
  out.push_back({"norm_f.weight", {d}, false, InitKind::Ones});
  out.push_back({"lm_head", {d, V}, true, InitKind::Normal, s});
  if (cfg.learnable_horn) {
    out.push_back({"horn", {static_cast<std::size_t>(cfg.max_seq_len) + 1}, false, InitKind::Horn});
  }
  return out;
}

std::size_t count_parameters(const ModelConfig& cfg) {
  std::size_t n = 0;
  for (const auto& p : parameter_layout(cfg)) n += numel(p.shape);
  return n;
}

}  // namespace tpt::model
