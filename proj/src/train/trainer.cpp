#include <algorithm>
#include <numeric>

#include "tpt/error.hpp"
#include "tpt/train.hpp"

namespace tpt::train {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (seq_len < 1) throw ConfigError("train.seq_len must be >= 1");
  if (grad_accum < 1) throw ConfigError("train.grad_accum must be >= 1");
  if (eval_every < 0 || checkpoint_every < 0) throw ConfigError("train intervals must be >= 0");
  if (eval_batch < 1) throw ConfigError("train.eval_batch must be >= 1");
  if (eval_max_windows < 0) throw ConfigError("train.eval_max_windows must be >= 0");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},           {"seq_len", c.seq_len},
          {"grad_accum", c.grad_accum},           {"eval_every", c.eval_every},
          {"checkpoint_every", c.checkpoint_every}, {"eval_batch", c.eval_batch},
          {"eval_max_windows", c.eval_max_windows}, {"checked", c.checked}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "seq_len") c.seq_len = value.get<int>();
      else if (key == "grad_accum") c.grad_accum = value.get<int>();
      else if (key == "eval_every") c.eval_every = value.get<int>();
      else if (key == "checkpoint_every") c.checkpoint_every = value.get<int>();
      else if (key == "eval_batch") c.eval_batch = value.get<int>();
      else if (key == "eval_max_windows") c.eval_max_windows = value.get<int>();
      else if (key == "checked") c.checked = value.get<bool>();
      else throw ConfigError("unknown train key '" + key + "'");
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("train key '" + key + "' has the wrong type");
    }
  }
  return c;
}

template <typename T>
Metrics evaluate(const model::Model<T>& m, std::span<const TokenId> val, std::size_t seq_len,
                 std::size_t batch, double bytes_per_token, std::size_t max_windows) {
  if (batch == 0) throw DomainError("evaluate: batch must be >= 1");
  std::size_t n = data::window_count(val.size(), seq_len);
  if (n == 0) {
    throw DomainError("evaluate: validation set of " + std::to_string(val.size()) +
                      " tokens holds no window of " + std::to_string(seq_len));
  }
  if (max_windows > 0) n = std::min(n, max_windows);

  NoGradGuard no_grad;
  double total = 0.0;
  std::size_t count = 0;
  std::vector<std::size_t> windows;
  for (std::size_t first = 0; first < n; first += batch) {
    windows.resize(std::min(batch, n - first));
    std::iota(windows.begin(), windows.end(), first);
    const auto [in, tgt] = data::gather_windows(val, seq_len, windows);
    const auto scored = static_cast<std::size_t>(
        std::count_if(tgt.ids.begin(), tgt.ids.end(), [](TokenId t) { return t != data::kPadId; }));
    if (scored == 0) continue;
    const auto logits = m.forward(in).logits;
    total += double(cross_entropy(logits, tgt.ids, data::kPadId).item()) * double(scored);
    count += scored;
  }
  if (count == 0) throw DomainError("evaluate: every validation target is padding");
  return metrics_from_loss(total / double(count), bytes_per_token);
}

template Metrics evaluate(const model::Model<float>&, std::span<const TokenId>, std::size_t,
                          std::size_t, double, std::size_t);
template Metrics evaluate(const model::Model<double>&, std::span<const TokenId>, std::size_t,
                          std::size_t, double, std::size_t);

Trainer::Trainer(const model::ModelConfig& model_cfg, const OptimizerConfig& opt_cfg,
                 const TrainConfig& train_cfg, std::uint64_t seed, data::Corpus corpus)
    : model_cfg_(model_cfg),
      opt_cfg_(opt_cfg),
      train_cfg_(train_cfg),
      seed_(seed),
      corpus_(std::move(corpus)),
      model_(model_cfg, Rng::derive(seed, 1)),
      optimizer_(opt_cfg, model_.params()),
      sampler_(corpus_.train, static_cast<std::size_t>(train_cfg.seq_len),
               static_cast<std::size_t>(train_cfg.batch_size), Rng::derive(seed, 2)) {
  train_cfg_.validate();
  if (train_cfg_.seq_len > model_cfg_.max_seq_len) {
    throw ConfigError("train.seq_len " + std::to_string(train_cfg_.seq_len) +
                      " exceeds model.max_seq_len " + std::to_string(model_cfg_.max_seq_len));
  }
  if (corpus_.vocab.size() > static_cast<std::size_t>(model_cfg_.vocab_size)) {
    throw ConfigError("corpus vocabulary of " + std::to_string(corpus_.vocab.size()) +
                      " exceeds model.vocab_size " + std::to_string(model_cfg_.vocab_size));
  }
}

StepStats Trainer::train_step() {
  CheckedModeGuard checked(train_cfg_.checked || checked_mode());
  auto& params = model_.params();
  params.zero_grad();

  StepStats s;
  const double inv_accum = 1.0 / train_cfg_.grad_accum;
  for (int a = 0; a < train_cfg_.grad_accum; ++a) {
    const auto [in, tgt] = sampler_.next();
    const auto fr = model_.forward(in);
    const auto ce = cross_entropy(fr.logits, tgt.ids, data::kPadId);
    const auto loss = add(ce, fr.aux_loss);
    scale(loss, inv_accum).backward();
    s.ce += double(ce.item()) * inv_accum;
    s.aux += double(fr.aux_loss.item()) * inv_accum;
    s.loss += double(loss.item()) * inv_accum;
  }
  s.grad_norm = clip_grad_norm(params, opt_cfg_.grad_clip);
  const std::int64_t t = optimizer_.steps_taken() + 1;
  s.lr = lr_at(std::min<std::int64_t>(t, opt_cfg_.total_steps), opt_cfg_);
  optimizer_.step(params, s.lr);
  s.step = optimizer_.steps_taken();
  return s;
}

Metrics Trainer::evaluate_now() const {
  return evaluate(model_, corpus_.val, static_cast<std::size_t>(train_cfg_.seq_len),
                  static_cast<std::size_t>(train_cfg_.eval_batch), corpus_.bytes_per_token,
                  static_cast<std::size_t>(train_cfg_.eval_max_windows));
}

Checkpoint Trainer::snapshot() const {
  Checkpoint ck;
  ck.step = static_cast<std::uint64_t>(optimizer_.steps_taken());
  const auto ss = sampler_.state();
  ck.rng = ss.epoch_rng;
  export_model(model_, ck);
  ck.metadata = {{"seed", seed_},
                 {"sampler_epoch", ss.epoch},
                 {"sampler_cursor", ss.cursor},
                 {"optimizer", to_json(opt_cfg_)},
                 {"train", to_json(train_cfg_)}};
  const auto& items = model_.params().items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    ck.put("adam_m/" + items[i].name, items[i].value.shape(), optimizer_.first_moments()[i]);
    ck.put("adam_v/" + items[i].name, items[i].value.shape(), optimizer_.second_moments()[i]);
  }
  return ck;
}

void Trainer::restore(const Checkpoint& ck) {
  if (ck.config != model::to_json(model_cfg_)) {
    throw ConfigError("checkpoint was written for a different model configuration");
  }
  import_model(model_, ck);
  std::vector<std::vector<float>> m, v;
  for (const auto& p : model_.params().items()) {
    m.push_back(ck.at("adam_m/" + p.name).data);
    v.push_back(ck.at("adam_v/" + p.name).data);
  }
  optimizer_.set_state(static_cast<std::int64_t>(ck.step), std::move(m), std::move(v));
  try {
    sampler_.set_state({ck.rng, ck.metadata.at("sampler_epoch").get<std::uint64_t>(),
                        ck.metadata.at("sampler_cursor").get<std::size_t>()});
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: missing sampler position: ") + e.what());
  }
}

}  // namespace tpt::train
