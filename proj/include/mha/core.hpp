#ifndef MHA_CORE_HPP
#define MHA_CORE_HPP

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mha {

using TokenId = std::uint32_t;
using ClassId = std::size_t;

inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kUnk = 2;
inline constexpr std::size_t kNumSpecials = 3;

/// Token alphabet. Ids are dense; ids 0..2 are always <s>, </s>, <unk>.
class Vocabulary {
 public:
  Vocabulary();

  /// Builds a vocabulary from ordinary tokens (specials are prepended).
  /// Duplicates are ignored; the first occurrence fixes the id.
  static Vocabulary from_tokens(std::span<const std::string> tokens);

  /// Plain-text format: one token per line, line number = id, first three
  /// lines are the specials in fixed order.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  TokenId add(std::string_view token);
  std::optional<TokenId> find(std::string_view token) const;
  /// Like find(), but falls back to <unk>.
  TokenId lookup(std::string_view token) const;
  const std::string& token(TokenId id) const;

  std::size_t size() const { return tokens_.size(); }
  bool contains(TokenId id) const { return id < tokens_.size(); }
  static bool is_special(TokenId id) { return id < kNumSpecials; }

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

/// Non-empty token sequence. Positions in the public API are 1-based.
class Sentence {
 public:
  Sentence() = default;
  explicit Sentence(std::vector<TokenId> ids);
  Sentence(std::initializer_list<TokenId> ids);

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  /// 1-based access.
  TokenId word(std::size_t position) const;
  TokenId operator[](std::size_t index) const { return ids_[index]; }

  std::span<const TokenId> ids() const { return ids_; }
  /// Tokens at positions [1, position).
  std::span<const TokenId> prefix(std::size_t position) const;
  /// Tokens at positions [position, n].
  std::span<const TokenId> suffix_from(std::size_t position) const;

  auto operator<=>(const Sentence&) const = default;
  bool operator==(const Sentence&) const = default;

 private:
  std::vector<TokenId> ids_;
};

struct SentenceHash {
  std::size_t operator()(const Sentence& s) const noexcept;
};

struct LabeledExample {
  Sentence sentence;
  ClassId label = 0;
  // Leading positions that belong to a fixed context (e.g. the premise of a
  // pair task plus its separator) and are never edited by an attacker.
  std::size_t protected_prefix = 0;
};

struct AttackTask {
  LabeledExample example;
  ClassId target_label = 0;
  std::vector<std::size_t> forbidden_positions;  // 1-based, sorted, unique

  /// Checks target != label and that every forbidden position is in [1, n].
  void validate(std::size_t num_classes) const;
  bool is_forbidden(std::size_t position) const;
};

Sentence tokenize(std::string_view text, const Vocabulary& vocab);
/// Splits into lowercase surface strings without vocabulary lookup.
std::vector<std::string> split_words(std::string_view text);
std::string detokenize(const Sentence& x, const Vocabulary& vocab);

Sentence replace_word(const Sentence& x, std::size_t position, TokenId word);
Sentence insert_word(const Sentence& x, std::size_t position, TokenId word);
Sentence delete_word(const Sentence& x, std::size_t position);

/// Cyclic traversal over positions: i+1, wrapping n -> 1.
std::size_t traversal_next(std::size_t position, std::size_t length);

}  // namespace mha

#endif  // MHA_CORE_HPP
