#include <cmath>
#include <numbers>

#include "tpt/error.hpp"
#include "tpt/train.hpp"

namespace tpt::train {

void OptimizerConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("optimizer.lr must be positive");
  if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1)) {
    throw ConfigError("optimizer betas must lie in (0, 1)");
  }
  if (!(eps > 0)) throw ConfigError("optimizer.eps must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("optimizer.weight_decay must be >= 0");
  if (total_steps < 1) throw ConfigError("optimizer.total_steps must be >= 1");
  if (warmup_steps < 0 || warmup_steps > total_steps) {
    throw ConfigError("optimizer.warmup_steps must lie in [0, total_steps]");
  }
  if (!(min_lr_ratio >= 0 && min_lr_ratio <= 1)) {
    throw ConfigError("optimizer.min_lr_ratio must lie in [0, 1]");
  }
}

nlohmann::json to_json(const OptimizerConfig& c) {
  return {{"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"weight_decay", c.weight_decay},
          {"warmup_steps", c.warmup_steps},
          {"total_steps", c.total_steps},
          {"grad_clip", c.grad_clip},
          {"min_lr_ratio", c.min_lr_ratio},
          {"decay_1d", c.decay_1d}};
}

OptimizerConfig optimizer_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("optimizer config must be a JSON object");
  OptimizerConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "lr") c.lr = value.get<double>();
      else if (key == "beta1") c.beta1 = value.get<double>();
      else if (key == "beta2") c.beta2 = value.get<double>();
      else if (key == "eps") c.eps = value.get<double>();
      else if (key == "weight_decay") c.weight_decay = value.get<double>();
      else if (key == "warmup_steps") c.warmup_steps = value.get<int>();
      else if (key == "total_steps") c.total_steps = value.get<int>();
      else if (key == "grad_clip") c.grad_clip = value.get<double>();
      else if (key == "min_lr_ratio") c.min_lr_ratio = value.get<double>();
      else if (key == "decay_1d") c.decay_1d = value.get<bool>();
      else throw ConfigError("unknown optimizer key '" + key + "'");
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("optimizer key '" + key + "' has the wrong type");
    }
  }
  return c;
}

double lr_at(std::int64_t step, const OptimizerConfig& cfg) {
  if (step < 0 || step > cfg.total_steps) {
    throw DomainError("lr_at: step " + std::to_string(step) + " outside [0, " +
                      std::to_string(cfg.total_steps) + "]");
  }
  if (step < cfg.warmup_steps) {
    return cfg.lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  const double span = cfg.total_steps - cfg.warmup_steps;
  const double progress = span > 0 ? static_cast<double>(step - cfg.warmup_steps) / span : 1.0;
  const double floor = cfg.min_lr_ratio * cfg.lr;
  return floor + (cfg.lr - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
double grad_norm(const model::ParamStore<T>& params) {
  double ss = 0.0;
  for (const auto& p : params.items()) {
    for (T g : p.value.grad()) ss += double(g) * double(g);
  }
  return std::sqrt(ss);
}

template <typename T>
double clip_grad_norm(model::ParamStore<T>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm > 0 && norm > max_norm) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto& p : params.items()) {
      if (!p.value.has_grad()) continue;
      for (T& g : p.value.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

template <typename T>
AdamW<T>::AdamW(const OptimizerConfig& cfg, const model::ParamStore<T>& params) : cfg_(cfg) {
  cfg_.validate();
  for (const auto& p : params.items()) {
    m_.emplace_back(p.value.numel(), T(0));
    v_.emplace_back(p.value.numel(), T(0));
  }
}

template <typename T>
void AdamW<T>::step(model::ParamStore<T>& params, double lr) {
  auto& items = params.items();
  if (items.size() != m_.size()) throw ShapeError("AdamW: parameter set changed since construction");
  if (checked_mode()) {
    for (const auto& p : items) {
      for (T g : p.value.grad()) {
        if (!std::isfinite(g)) throw NumericError("AdamW: non-finite gradient in '" + p.name + "'");
      }
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& p = items[i];
    if (!p.value.has_grad()) continue;
    const auto g = p.value.grad();
    auto w = p.value.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    const double decay = (p.is_matrix || cfg_.decay_1d) ? 1.0 - lr * cfg_.weight_decay : 1.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      const double mk = cfg_.beta1 * double(m[k]) + (1.0 - cfg_.beta1) * gk;
      const double vk = cfg_.beta2 * double(v[k]) + (1.0 - cfg_.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double update = (mk / bc1) / (std::sqrt(vk / bc2) + cfg_.eps);
      w[k] = static_cast<T>(double(w[k]) * decay - lr * update);
    }
  }
}

template <typename T>
void AdamW<T>::set_state(std::int64_t t, std::vector<std::vector<T>> m,
                         std::vector<std::vector<T>> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw ShapeError("AdamW: moment count mismatch");
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].size() != m_[i].size() || v[i].size() != v_[i].size()) {
      throw ShapeError("AdamW: moment size mismatch at parameter " + std::to_string(i));
    }
  }
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

Metrics metrics_from_loss(double loss, double bytes_per_token) {
  if (!(bytes_per_token > 0)) throw DomainError("bytes_per_token must be positive");
  return {loss, std::exp(loss), loss / (std::numbers::ln2 * bytes_per_token)};
}

template double grad_norm(const model::ParamStore<float>&);
template double grad_norm(const model::ParamStore<double>&);
template double clip_grad_norm(model::ParamStore<float>&, double);
template double clip_grad_norm(model::ParamStore<double>&, double);
template class AdamW<float>;
template class AdamW<double>;

}  // namespace tpt::train
