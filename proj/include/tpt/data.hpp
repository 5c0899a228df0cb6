#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "tpt/ops.hpp"
#include "tpt/rng.hpp"

namespace tpt::data {

inline constexpr TokenId kPadId = 0;  // also the loss ignore_index
inline constexpr TokenId kUnkId = 1;
inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kUnkToken = "<unk>";

std::vector<std::string_view> split_whitespace(std::string_view text);

/// Word-level vocabulary. Ids 0 and 1 are reserved; the rest are assigned by
/// descending frequency with ties broken lexicographically.
class Vocab {
 public:
  /// Throws DomainError on a corpus without tokens, ConfigError if max_size < 3.
  static Vocab build(std::string_view text, std::size_t max_size);

  std::size_t size() const { return tokens_.size(); }
  /// kUnkId for out-of-vocabulary words.
  TokenId id_of(std::string_view token) const;
  const std::string& token_of(TokenId id) const;
  std::uint64_t frequency(TokenId id) const { return freqs_.at(static_cast<std::size_t>(id)); }

  /// Whitespace split, OOV -> kUnkId. Never emits kPadId.
  std::vector<TokenId> encode(std::string_view text) const;
  /// Tokens joined with single spaces.
  std::string decode(std::span<const TokenId> ids) const;

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_ && freqs_ == o.freqs_; }

 private:
  void index();
  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> freqs_;
  std::unordered_map<std::string, TokenId> ids_;
};

/// UTF-8 bytes per token when tokens are joined by single spaces:
/// (sum of token bytes + n - 1) / n. Throws DomainError on empty text.
double bytes_per_token(std::string_view text);

struct DataConfig {
  std::string corpus_path;           // empty: generate the built-in toy corpus
  std::size_t toy_corpus_bytes = 100000;
  std::uint64_t toy_corpus_seed = 7;
  std::size_t max_vocab = 10000;
  double val_fraction = 0.05;

  void validate() const;
  bool operator==(const DataConfig&) const = default;
};

nlohmann::json to_json(const DataConfig& c);
DataConfig data_config_from_json(const nlohmann::json& j);

struct Corpus {
  Vocab vocab;
  std::vector<TokenId> train;
  std::vector<TokenId> val;  // final val_fraction of the token stream
  double bytes_per_token = 0.0;
};

/// Throws IoError when the file cannot be read.
std::string read_text_file(const std::filesystem::path& path);
Corpus prepare_corpus(std::string_view text, std::size_t max_vocab, double val_fraction);
Corpus load_corpus(const DataConfig& cfg);

/// Grammar-generated English-like text with strong local structure, about
/// target_bytes long. Deterministic in seed.
std::string generate_toy_corpus(std::size_t target_bytes, std::uint64_t seed);

/// Number of non-overlapping (input, shifted target) windows of length seq_len.
std::size_t window_count(std::size_t n_ids, std::size_t seq_len);

/// Inputs and next-token targets for a set of window indices.
std::pair<TokenBatch, TokenBatch> gather_windows(std::span<const TokenId> ids, std::size_t seq_len,
                                                 std::span<const std::size_t> windows);

/// Training batches over shuffled non-overlapping windows. Each epoch is a
/// fresh Fisher-Yates permutation drawn from the sampler's own stream.
class WindowSampler {
 public:
  struct State {
    Rng::State epoch_rng;  // stream state right before the current epoch's shuffle
    std::uint64_t epoch = 0;
    std::size_t cursor = 0;
    bool operator==(const State&) const = default;
  };

  /// Throws DomainError when ids hold less than one full window.
  WindowSampler(std::vector<TokenId> ids, std::size_t seq_len, std::size_t batch,
                std::uint64_t seed);

  std::size_t n_windows() const { return order_.size(); }
  std::size_t seq_len() const { return seq_len_; }
  std::size_t batch() const { return batch_; }

  /// Next batch; wraps into a reshuffled epoch when the current one runs out.
  std::pair<TokenBatch, TokenBatch> next();
  const std::vector<std::size_t>& epoch_order() const { return order_; }

  State state() const { return {epoch_rng_, epoch_, cursor_}; }
  void set_state(const State& s);

 private:
  void start_epoch();

  std::vector<TokenId> ids_;
  std::size_t seq_len_, batch_;
  Rng rng_;
  Rng::State epoch_rng_;
  std::uint64_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

}  // namespace tpt::data
