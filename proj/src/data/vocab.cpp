#include <algorithm>
#include <fstream>
#include <map>

#include "tpt/data.hpp"
#include "tpt/error.hpp"

namespace tpt::data {
namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

}  // namespace

std::vector<std::string_view> split_whitespace(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.push_back(text.substr(start, i - start));
  }
  return out;
}

Vocab Vocab::build(std::string_view text, std::size_t max_size) {
  if (max_size < 3) throw ConfigError("vocab max_size must be >= 3, got " + std::to_string(max_size));
  const auto words = split_whitespace(text);
  if (words.empty()) throw DomainError("cannot build a vocabulary from an empty corpus");

  std::map<std::string_view, std::uint64_t> counts;
  for (auto w : words) ++counts[w];
  counts.erase(kPadToken);
  counts.erase(kUnkToken);

  std::vector<std::pair<std::string_view, std::uint64_t>> ranked(counts.begin(), counts.end());
  // counts is already lexicographic, so a stable sort on frequency keeps the tie-break.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > max_size - 2) ranked.resize(max_size - 2);

  Vocab v;
  v.tokens_ = {kPadToken, kUnkToken};
  v.freqs_ = {0, 0};
  for (const auto& [w, n] : ranked) {
    v.tokens_.emplace_back(w);
    v.freqs_.push_back(n);
  }
  v.index();
  return v;
}

void Vocab::index() {
  ids_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw ConfigError("vocab: duplicate token '" + tokens_[i] + "'");
    }
  }
}

TokenId Vocab::id_of(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  if (it == ids_.end() || it->second == kPadId) return kUnkId;
  return it->second;
}

const std::string& Vocab::token_of(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DomainError("token id " + std::to_string(id) + " outside vocabulary of " +
                      std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocab::encode(std::string_view text) const {
  const auto words = split_whitespace(text);
  std::vector<TokenId> out;
  out.reserve(words.size());
  for (auto w : words) out.push_back(id_of(w));
  return out;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token_of(ids[i]);
  }
  return out;
}

nlohmann::json Vocab::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    entries.push_back({{"token", tokens_[i]}, {"id", i}, {"frequency", freqs_[i]}});
  }
  return {{"size", tokens_.size()}, {"tokens", entries}};
}

Vocab Vocab::from_json(const nlohmann::json& j) {
  Vocab v;
  try {
    const auto& entries = j.at("tokens");
    v.tokens_.resize(entries.size());
    v.freqs_.resize(entries.size());
    std::vector<bool> seen(entries.size(), false);
    for (const auto& e : entries) {
      const auto id = e.at("id").get<std::size_t>();
      if (id >= entries.size() || seen[id]) throw IoError("vocab: ids are not dense");
      seen[id] = true;
      v.tokens_[id] = e.at("token").get<std::string>();
      v.freqs_[id] = e.at("frequency").get<std::uint64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("vocab: malformed JSON: ") + e.what());
  }
  if (v.tokens_.size() < 2 || v.tokens_[0] != kPadToken || v.tokens_[1] != kUnkToken) {
    throw IoError("vocab: reserved ids 0 and 1 must be <pad> and <unk>");
  }
  v.index();
  return v;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json().dump(1) << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("vocab: " + std::string(e.what()));
  }
}

double bytes_per_token(std::string_view text) {
  const auto words = split_whitespace(text);
  if (words.empty()) throw DomainError("bytes_per_token: text has no tokens");
  std::size_t bytes = words.size() - 1;
  for (auto w : words) bytes += w.size();
  return static_cast<double>(bytes) / static_cast<double>(words.size());
}

}  // namespace tpt::data
