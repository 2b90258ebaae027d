#include "mha/core.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

#include "mha/math.hpp"
#include "mha/random.hpp"

namespace mha {

namespace {

const char* const kSpecialSurface[kNumSpecials] = {"<s>", "</s>", "<unk>"};

void check_position(std::size_t position, std::size_t lo, std::size_t hi, const char* what) {
  if (position < lo || position > hi) {
    throw std::out_of_range(std::string(what) + ": position " + std::to_string(position) +
                            " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

}  // namespace

// ---------------------------------------------------------------- Vocabulary

Vocabulary::Vocabulary() {
  for (const char* s : kSpecialSurface) add(s);
}

Vocabulary Vocabulary::from_tokens(std::span<const std::string> tokens) {
  Vocabulary vocab;
  for (const auto& t : tokens) vocab.add(t);
  return vocab;
}

TokenId Vocabulary::add(std::string_view token) {
  if (token.empty()) throw std::invalid_argument("vocabulary: empty token");
  if (auto it = ids_.find(std::string(token)); it != ids_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.emplace_back(token);
  ids_.emplace(tokens_.back(), id);
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  if (auto it = ids_.find(std::string(token)); it != ids_.end()) return it->second;
  return std::nullopt;
}

TokenId Vocabulary::lookup(std::string_view token) const { return find(token).value_or(kUnk); }

const std::string& Vocabulary::token(TokenId id) const {
  if (!contains(id)) throw std::out_of_range("vocabulary: invalid token id " + std::to_string(id));
  return tokens_[id];
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.size() < kNumSpecials) {
    throw std::runtime_error("vocabulary file " + path.string() + ": missing special tokens");
  }
  for (std::size_t i = 0; i < kNumSpecials; ++i) {
    if (lines[i] != kSpecialSurface[i]) {
      throw std::runtime_error("vocabulary file " + path.string() + ": line " +
                               std::to_string(i + 1) + " must be " + kSpecialSurface[i]);
    }
  }
  Vocabulary vocab;
  for (std::size_t i = kNumSpecials; i < lines.size(); ++i) {
    if (vocab.find(lines[i])) {
      throw std::runtime_error("vocabulary file " + path.string() + ": duplicate token on line " +
                               std::to_string(i + 1));
    }
    vocab.add(lines[i]);
  }
  return vocab;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary file " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

// ------------------------------------------------------------------ Sentence

Sentence::Sentence(std::vector<TokenId> ids) : ids_(std::move(ids)) {
  if (ids_.empty()) throw std::invalid_argument("empty sentence");
}

Sentence::Sentence(std::initializer_list<TokenId> ids) : Sentence(std::vector<TokenId>(ids)) {}

TokenId Sentence::word(std::size_t position) const {
  check_position(position, 1, ids_.size(), "word");
  return ids_[position - 1];
}

std::span<const TokenId> Sentence::prefix(std::size_t position) const {
  check_position(position, 1, ids_.size() + 1, "prefix");
  return std::span<const TokenId>(ids_).first(position - 1);
}

std::span<const TokenId> Sentence::suffix_from(std::size_t position) const {
  check_position(position, 1, ids_.size() + 1, "suffix");
  return std::span<const TokenId>(ids_).subspan(position - 1);
}

std::size_t SentenceHash::operator()(const Sentence& s) const noexcept {
  std::uint64_t h = 0x84222325cbf29ce4ULL ^ s.size();
  for (TokenId id : s.ids()) h = splitmix64(h ^ id);
  return static_cast<std::size_t>(h);
}

void AttackTask::validate(std::size_t num_classes) const {
  if (example.label >= num_classes) throw std::invalid_argument("attack task: label out of range");
  if (target_label >= num_classes) throw std::invalid_argument("attack task: target out of range");
  if (target_label == example.label) {
    throw std::invalid_argument("attack task: target label equals the true label");
  }
  const std::size_t n = example.sentence.size();
  for (std::size_t p : forbidden_positions) check_position(p, 1, n, "forbidden position");
  if (!std::is_sorted(forbidden_positions.begin(), forbidden_positions.end())) {
    throw std::invalid_argument("attack task: forbidden positions must be sorted");
  }
}

bool AttackTask::is_forbidden(std::size_t position) const {
  return std::binary_search(forbidden_positions.begin(), forbidden_positions.end(), position);
}

// -------------------------------------------------------------- tokenization

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      words.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return words;
}

Sentence tokenize(std::string_view text, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.lookup(w));
  if (ids.empty()) throw std::invalid_argument("empty sentence");
  return Sentence(std::move(ids));
}

std::string detokenize(const Sentence& x, const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : x.ids()) {
    if (!out.empty()) out.push_back(' ');
    out += vocab.token(id);
  }
  return out;
}

// --------------------------------------------------------------------- edits

Sentence replace_word(const Sentence& x, std::size_t position, TokenId word) {
  check_position(position, 1, x.size(), "replace_word");
  std::vector<TokenId> ids(x.ids().begin(), x.ids().end());
  ids[position - 1] = word;
  return Sentence(std::move(ids));
}

Sentence insert_word(const Sentence& x, std::size_t position, TokenId word) {
  check_position(position, 1, x.size() + 1, "insert_word");
  std::vector<TokenId> ids;
  ids.reserve(x.size() + 1);
  ids.insert(ids.end(), x.ids().begin(), x.ids().begin() + static_cast<std::ptrdiff_t>(position - 1));
  ids.push_back(word);
  ids.insert(ids.end(), x.ids().begin() + static_cast<std::ptrdiff_t>(position - 1), x.ids().end());
  return Sentence(std::move(ids));
}

Sentence delete_word(const Sentence& x, std::size_t position) {
  if (x.size() == 1) throw std::invalid_argument("delete_word: would empty sentence");
  check_position(position, 1, x.size(), "delete_word");
  std::vector<TokenId> ids(x.ids().begin(), x.ids().end());
  ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(position - 1));
  return Sentence(std::move(ids));
}

std::size_t traversal_next(std::size_t position, std::size_t length) {
  if (length == 0) throw std::invalid_argument("traversal_next: empty sentence");
  check_position(position, 1, length, "traversal_next");
  return position != length ? position + 1 : 1;
}

// ------------------------------------------------------------------- random

std::size_t sample_weighted(Rng& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("sample_weighted: negative weight");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("sample_weighted: zero total weight");
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

std::size_t sample_log_probs(Rng& rng, std::span<const double> log_probs) {
  if (log_probs.empty()) throw std::invalid_argument("sample_log_probs: empty distribution");
  const double u = uniform01(rng);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < log_probs.size(); ++i) {
    if (log_probs[i] == kNegInf) continue;
    acc += std::exp(log_probs[i]);
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

}  // namespace mha
