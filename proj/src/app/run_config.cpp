#include <cstdlib>
#include <fstream>
#include <thread>

#include "tpt/app.hpp"
#include "tpt/error.hpp"

namespace tpt::app {

void RunConfig::validate() const {
  model.validate();
  optimizer.validate();
  data.validate();
  train.validate();
  if (train.seq_len > model.max_seq_len) {
    throw ConfigError("train.seq_len " + std::to_string(train.seq_len) + " exceeds model.max_seq_len " +
                      std::to_string(model.max_seq_len));
  }
  if (data.max_vocab > static_cast<std::size_t>(model.vocab_size)) {
    throw ConfigError("data.max_vocab " + std::to_string(data.max_vocab) +
                      " exceeds model.vocab_size " + std::to_string(model.vocab_size));
  }
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

nlohmann::json to_json(const RunConfig& c) {
  return {{"model", model::to_json(c.model)},
          {"optimizer", train::to_json(c.optimizer)},
          {"data", data::to_json(c.data)},
          {"train", train::to_json(c.train)},
          {"seed", c.seed},
          {"out_dir", c.out_dir},
          {"deterministic", c.deterministic},
          {"label", c.label}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "model") c.model = model::model_config_from_json(value);
      else if (key == "optimizer") c.optimizer = train::optimizer_config_from_json(value);
      else if (key == "data") c.data = data::data_config_from_json(value);
      else if (key == "train") c.train = train::train_config_from_json(value);
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "out_dir") c.out_dir = value.get<std::string>();
      else if (key == "deterministic") c.deterministic = value.get<bool>();
      else if (key == "label") c.label = value.get<std::string>();
      else throw ConfigError("unknown config key '" + key + "'");
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key '" + key + "' has the wrong type");
    }
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  auto cfg = run_config_from_json(j);
  cfg.validate();
  return cfg;
}

RunConfig toy_run_config() {
  RunConfig c;
  c.model.vocab_size = 128;
  c.model.d_model = 48;
  c.model.n_layers = 2;
  c.model.n_phases = 3;
  c.model.n_q_heads = 6;
  c.model.n_kv_heads = 3;
  c.model.d_ff = 128;
  c.model.max_seq_len = 32;
  c.optimizer.lr = 3e-3;
  c.optimizer.warmup_steps = 30;
  c.optimizer.total_steps = 300;
  c.data.max_vocab = 128;
  c.data.toy_corpus_bytes = 100000;
  c.train.batch_size = 16;
  c.train.seq_len = 32;
  c.train.eval_every = 50;
  c.train.eval_batch = 32;
  c.out_dir = "runs/toy";
  c.label = "3pt";
  return c;
}

void apply(RunConfig& cfg, const Overrides& o) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.deterministic) cfg.deterministic = *o.deterministic;
  if (o.steps) {
    cfg.optimizer.total_steps = *o.steps;
    if (cfg.optimizer.warmup_steps > *o.steps) cfg.optimizer.warmup_steps = *o.steps;
  }
}

int sweep_threads_from_env() {
  if (const char* env = std::getenv("THREEPHASE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(v);
    throw ConfigError("THREEPHASE_THREADS must be a positive integer, got '" + std::string(env) + "'");
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace tpt::app
