#include <algorithm>

#include "tpt/error.hpp"
#include "tpt/model.hpp"

namespace tpt::model {

template <typename T>
void ParamStore<T>::add(std::string name, Tensor<T> value, bool is_matrix) {
  if (contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
  items_.push_back({std::move(name), std::move(value), is_matrix});
}

template <typename T>
Tensor<T>& ParamStore<T>::at(const std::string& name) {
  for (auto& p : items_) {
    if (p.name == name) return p.value;
  }
  throw ConfigError("no parameter named '" + name + "'");
}

template <typename T>
const Tensor<T>& ParamStore<T>::at(const std::string& name) const {
  return const_cast<ParamStore*>(this)->at(name);
}

template <typename T>
bool ParamStore<T>::contains(const std::string& name) const {
  return std::any_of(items_.begin(), items_.end(), [&](const auto& p) { return p.name == name; });
}

template <typename T>
std::size_t ParamStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.value.numel();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : items_) p.value.zero_grad();
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      rope_(static_cast<std::size_t>(cfg.max_seq_len), static_cast<std::size_t>(cfg.d_head()),
            cfg.rope_base) {
  Rng rng(seed);
  for (const auto& spec : parameter_layout(cfg_)) {
    Tensor<T> value;
    switch (spec.init) {
      case InitKind::Normal:
        value = randn<T>(spec.shape, spec.init_std, rng, true);
        break;
      case InitKind::Ones:
        value = Tensor<T>::full(spec.shape, T(1), true);
        break;
      case InitKind::DepthLinearTheta: {
        const auto init = phase::theta_init(spec.layer, cfg_.n_layers, cfg_.d_phase());
        std::vector<T> v(init.begin(), init.end());
        theta_init_.push_back(v);
        value = Tensor<T>(spec.shape, std::move(v), true);
        break;
      }
      case InitKind::Horn:
        value = phase::HornProfile::learnable(static_cast<std::size_t>(cfg_.max_seq_len))
                    .template to_tensor<T>();
        break;
    }
    params_.add(spec.name, std::move(value), spec.is_matrix);
  }
  if (cfg_.horn_inject && !cfg_.learnable_horn) {
    fixed_horn_ = phase::HornProfile::fixed(static_cast<std::size_t>(cfg_.max_seq_len))
                      .template to_tensor<T>();
  }
}

template <typename T>
const Tensor<T>* Model<T>::horn() const {
  if (!cfg_.horn_inject) return nullptr;
  if (cfg_.learnable_horn) return &params_.at("horn");
  return &*fixed_horn_;
}

template <typename T>
Tensor<T> Model<T>::embed(const TokenBatch& tokens) const {
  return model::embed(tokens, params_.at("tok_emb"), horn(), cfg_);
}

template <typename T>
BlockParams<T> Model<T>::block(int layer) const {
  if (layer < 0 || layer >= cfg_.n_layers) {
    throw DomainError("block " + std::to_string(layer) + " outside [0, " +
                      std::to_string(cfg_.n_layers) + ")");
  }
  const auto p = block_prefix(layer);
  BlockParams<T> b;
  b.norm1 = params_.at(p + "norm1.weight");
  b.attn = {params_.at(p + "attn.wq"), params_.at(p + "attn.wk"), params_.at(p + "attn.wv"),
            params_.at(p + "attn.wo")};
  if (!cfg_.baseline_mode) b.theta = params_.at(p + "rotation.theta");
  b.norm2 = params_.at(p + "norm2.weight");
  b.w_gate = params_.at(p + "ffn.w_gate");
  b.w_up = params_.at(p + "ffn.w_up");
  b.w_down = params_.at(p + "ffn.w_down");
  return b;
}

template <typename T>
ForwardResult<T> Model<T>::forward(const TokenBatch& tokens) const {
  if (tokens.seq > static_cast<std::size_t>(cfg_.max_seq_len)) {
    throw ShapeError("sequence length " + std::to_string(tokens.seq) + " exceeds max_seq_len " +
                     std::to_string(cfg_.max_seq_len));
  }
  ForwardResult<T> out;
  out.embedded = embed(tokens);
  out.aux_loss = cfg_.use_aux_loss
                     ? scale(phase::aux_zero_sum_loss(out.embedded, cfg_.phase()), cfg_.aux_coef)
                     : Tensor<T>::scalar(T(0));
  Tensor<T> h = out.embedded;
  for (int l = 0; l < cfg_.n_layers; ++l) {
    h = block_forward(h, block(l), cfg_, rope_);
    out.block_outputs.push_back(h);
  }
  auto hf = phase_aware_rms_norm(h, params_.at("norm_f.weight"), cfg_.norm_phases(), cfg_.norm_eps);
  out.logits = matmul(hf, params_.at("lm_head"));
  return out;
}

template <typename T>
phase::ThetaBank Model<T>::theta_bank() const {
  std::vector<std::vector<double>> init, current;
  if (cfg_.baseline_mode) return phase::ThetaBank(init, current);
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const auto& snap = theta_init_.at(static_cast<std::size_t>(l));
    init.emplace_back(snap.begin(), snap.end());
    const auto cur = params_.at(block_prefix(l) + "rotation.theta").data();
    current.emplace_back(cur.begin(), cur.end());
  }
  return phase::ThetaBank(std::move(init), std::move(current));
}

template <typename T>
void Model<T>::restore_theta_init_snapshot(std::vector<std::vector<T>> snapshot) {
  if (snapshot.size() != theta_init_.size()) {
    throw ShapeError("theta snapshot has " + std::to_string(snapshot.size()) + " layers, model has " +
                     std::to_string(theta_init_.size()));
  }
  for (std::size_t l = 0; l < snapshot.size(); ++l) {
    if (snapshot[l].size() != theta_init_[l].size()) {
      throw ShapeError("theta snapshot width mismatch at layer " + std::to_string(l));
    }
  }
  theta_init_ = std::move(snapshot);
}

template class ParamStore<float>;
template class ParamStore<double>;
template class Model<float>;
template class Model<double>;

}  // namespace tpt::model
