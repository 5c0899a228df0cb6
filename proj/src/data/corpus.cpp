#include <array>
#include <cmath>
#include <fstream>
#include <iterator>

#include "tpt/data.hpp"
#include "tpt/error.hpp"

namespace tpt::data {

void DataConfig::validate() const {
  if (max_vocab < 3) throw ConfigError("data.max_vocab must be >= 3");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("data.val_fraction must lie in (0, 1)");
  }
  if (corpus_path.empty() && toy_corpus_bytes < 1000) {
    throw ConfigError("data.toy_corpus_bytes must be >= 1000");
  }
}

nlohmann::json to_json(const DataConfig& c) {
  return {{"corpus_path", c.corpus_path},       {"toy_corpus_bytes", c.toy_corpus_bytes},
          {"toy_corpus_seed", c.toy_corpus_seed}, {"max_vocab", c.max_vocab},
          {"val_fraction", c.val_fraction}};
}

DataConfig data_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("data config must be a JSON object");
  DataConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "corpus_path") c.corpus_path = value.get<std::string>();
      else if (key == "toy_corpus_bytes") c.toy_corpus_bytes = value.get<std::size_t>();
      else if (key == "toy_corpus_seed") c.toy_corpus_seed = value.get<std::uint64_t>();
      else if (key == "max_vocab") c.max_vocab = value.get<std::size_t>();
      else if (key == "val_fraction") c.val_fraction = value.get<double>();
      else throw ConfigError("unknown data key '" + key + "'");
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("data key '" + key + "' has the wrong type");
    }
  }
  return c;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read corpus " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error while reading " + path.string());
  return text;
}

Corpus prepare_corpus(std::string_view text, std::size_t max_vocab, double val_fraction) {
  Corpus c;
  c.vocab = Vocab::build(text, max_vocab);
  c.bytes_per_token = bytes_per_token(text);
  auto ids = c.vocab.encode(text);
  const auto n_val = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(ids.size())));
  if (n_val >= ids.size()) throw DomainError("corpus too small to hold out a validation split");
  c.train.assign(ids.begin(), ids.end() - static_cast<std::ptrdiff_t>(n_val));
  c.val.assign(ids.end() - static_cast<std::ptrdiff_t>(n_val), ids.end());
  return c;
}

Corpus load_corpus(const DataConfig& cfg) {
  cfg.validate();
  const std::string text = cfg.corpus_path.empty()
                               ? generate_toy_corpus(cfg.toy_corpus_bytes, cfg.toy_corpus_seed)
                               : read_text_file(cfg.corpus_path);
  return prepare_corpus(text, cfg.max_vocab, cfg.val_fraction);
}

namespace {

constexpr std::array kNames = {"anna", "ben", "clara", "dev", "emil", "fay", "gus", "hana",
                               "ivo", "jun", "kim", "lena"};
constexpr std::array kNouns = {"cat", "dog", "bird", "fox", "horse", "fish", "owl", "mouse",
                               "boat", "cart", "lamp", "drum", "kite", "ball", "book", "cup",
                               "apple", "pear", "bread", "cake", "stone", "leaf", "tree", "flower"};
constexpr std::array kAdjectives = {"red", "small", "old", "quiet", "bright", "green", "tall",
                                    "soft", "heavy", "quick", "warm", "round"};
constexpr std::array kVerbs = {"found", "saw", "took", "moved", "liked", "washed", "carried",
                               "painted", "dropped", "watched"};
constexpr std::array kPlaces = {"garden", "river", "market", "forest", "kitchen", "hill",
                                "school", "harbor"};
constexpr std::array kPreps = {"near", "behind", "under", "inside"};
constexpr std::array kTimes = {"in the morning", "at night", "after lunch", "before dinner"};

template <std::size_t N>
const char* pick(const std::array<const char*, N>& words, Rng& rng) {
  return words[static_cast<std::size_t>(rng.below(N))];
}

// Each noun prefers two adjectives so the stream carries learnable bigrams.
const char* adjective_for(std::size_t noun, Rng& rng) {
  const std::size_t a = rng.below(4) == 0 ? rng.below(kAdjectives.size())
                                          : (noun * 5 + rng.below(2)) % kAdjectives.size();
  return kAdjectives[a];
}

std::string noun_phrase(Rng& rng) {
  const auto n = static_cast<std::size_t>(rng.below(kNouns.size()));
  return std::string("the ") + adjective_for(n, rng) + " " + kNouns[n];
}

}  // namespace

std::string generate_toy_corpus(std::size_t target_bytes, std::uint64_t seed) {
  Rng rng(seed);
  std::string out;
  out.reserve(target_bytes + 128);
  while (out.size() < target_bytes) {
    std::string s;
    switch (rng.below(5)) {
      case 0:
        s = std::string(pick(kNames, rng)) + " " + pick(kVerbs, rng) + " " + noun_phrase(rng) + " .";
        break;
      case 1:
        s = noun_phrase(rng) + " was " + pick(kPreps, rng) + " the " + pick(kPlaces, rng) + " .";
        break;
      case 2:
        s = std::string(pick(kNames, rng)) + " and " + pick(kNames, rng) + " went to the " +
            pick(kPlaces, rng) + " " + pick(kTimes, rng) + " .";
        break;
      case 3:
        s = std::string("in the ") + pick(kPlaces, rng) + " " + pick(kNames, rng) + " " +
            pick(kVerbs, rng) + " " + noun_phrase(rng) + " and " + noun_phrase(rng) + " .";
        break;
      default:
        s = noun_phrase(rng) + " is very " + pick(kAdjectives, rng) + " .";
        break;
    }
    out += s;
    out += rng.below(6) == 0 ? '\n' : ' ';
  }
  return out;
}

std::size_t window_count(std::size_t n_ids, std::size_t seq_len) {
  if (seq_len == 0) throw DomainError("seq_len must be >= 1");
  return n_ids == 0 ? 0 : (n_ids - 1) / seq_len;
}

std::pair<TokenBatch, TokenBatch> gather_windows(std::span<const TokenId> ids, std::size_t seq_len,
                                                 std::span<const std::size_t> windows) {
  TokenBatch in{windows.size(), seq_len, {}}, tgt{windows.size(), seq_len, {}};
  in.ids.reserve(windows.size() * seq_len);
  tgt.ids.reserve(windows.size() * seq_len);
  const std::size_t n = window_count(ids.size(), seq_len);
  for (std::size_t w : windows) {
    if (w >= n) throw DomainError("window " + std::to_string(w) + " outside " + std::to_string(n));
    const auto* start = ids.data() + w * seq_len;
    in.ids.insert(in.ids.end(), start, start + seq_len);
    tgt.ids.insert(tgt.ids.end(), start + 1, start + seq_len + 1);
  }
  return {std::move(in), std::move(tgt)};
}

WindowSampler::WindowSampler(std::vector<TokenId> ids, std::size_t seq_len, std::size_t batch,
                             std::uint64_t seed)
    : ids_(std::move(ids)), seq_len_(seq_len), batch_(batch), rng_(Rng::derive(seed, 0x5a3d)) {
  if (batch == 0) throw DomainError("batch size must be >= 1");
  if (window_count(ids_.size(), seq_len) == 0) {
    throw DomainError("corpus of " + std::to_string(ids_.size()) +
                      " tokens is shorter than one window of " + std::to_string(seq_len + 1));
  }
  start_epoch();
}

void WindowSampler::start_epoch() {
  epoch_rng_ = rng_.state();
  order_.resize(window_count(ids_.size(), seq_len_));
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  shuffle(std::span<std::size_t>(order_), rng_);
  cursor_ = 0;
}

std::pair<TokenBatch, TokenBatch> WindowSampler::next() {
  std::vector<std::size_t> picked;
  picked.reserve(batch_);
  while (picked.size() < batch_) {
    if (cursor_ == order_.size()) {
      ++epoch_;
      start_epoch();
    }
    picked.push_back(order_[cursor_++]);
  }
  return gather_windows(ids_, seq_len_, picked);
}

void WindowSampler::set_state(const State& s) {
  rng_.set_state(s.epoch_rng);
  start_epoch();
  if (s.cursor > order_.size()) throw DomainError("sampler cursor past the end of the epoch");
  epoch_ = s.epoch;
  cursor_ = s.cursor;
}

}  // namespace tpt::data
