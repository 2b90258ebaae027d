#ifndef MHA_LM_HPP
#define MHA_LM_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <unordered_map>

#include "mha/core.hpp"

namespace mha {

enum class Direction { forward, backward };

std::string_view to_string(Direction d);
Direction parse_direction(std::string_view s);

/// Conditional word model. A forward model conditions on the prefix of the
/// predicted word; a backward model conditions on its suffix. Both receive
/// the context in natural (left-to-right) order.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual Direction direction() const = 0;
  virtual double cond_logprob(TokenId word, std::span<const TokenId> context) const = 0;
  /// Number of predictable events: ordinary vocabulary tokens plus </s>.
  virtual std::size_t alphabet_size() const = 0;
};

/// Add-k smoothed count model over (order-1)-token contexts, padded with <s>.
///
///   P(w | ctx) = (c(ctx, w) + k) / (c(ctx) + k * A)
///
/// A backward model is trained on token-reversed sentences and reverses the
/// suffix it is handed, so LM_b(w | w_{m+1..n}) is queried with the suffix as
/// it appears in the sentence.
class NGramLM final : public LanguageModel {
 public:
  static constexpr int kMaxOrder = 4;

  NGramLM(int order, double k, Direction direction, std::size_t alphabet_size);

  Direction direction() const override { return direction_; }
  double cond_logprob(TokenId word, std::span<const TokenId> context) const override;
  std::size_t alphabet_size() const override { return alphabet_; }

  int order() const { return order_; }
  double k() const { return k_; }

  /// Counts one training sentence given in natural order.
  void observe(std::span<const TokenId> sentence);

  /// Raw counts for a context tail given in model order (oldest first),
  /// already padded to order-1 tokens.
  std::uint64_t count(std::span<const TokenId> tail, TokenId word) const;
  std::uint64_t context_count(std::span<const TokenId> tail) const;

  static NGramLM load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  struct JointKey {
    std::uint64_t context;
    TokenId word;
    bool operator==(const JointKey&) const = default;
  };
  struct JointKeyHash {
    std::size_t operator()(const JointKey& k) const noexcept;
  };

  std::uint64_t pack(std::span<const TokenId> tail) const;
  /// Packs the model-order tail of a natural-order context.
  std::uint64_t context_key(std::span<const TokenId> context) const;
  void add_count(std::uint64_t context, TokenId word, std::uint64_t n);

  int order_;
  double k_;
  Direction direction_;
  std::size_t alphabet_;
  std::unordered_map<std::uint64_t, std::uint64_t> context_totals_;
  std::unordered_map<JointKey, std::uint64_t, JointKeyHash> joint_;
};

NGramLM train_ngram(std::span<const Sentence> corpus, int order, double k, Direction direction,
                    const Vocabulary& vocab);

/// log LM(x): chain rule over positions 1..n plus the </s> event. Forward
/// models only.
double sentence_logprob(const LanguageModel& lm, const Sentence& x);

/// exp(-total logprob / events), one event per token plus one </s> per
/// sentence.
double perplexity(const LanguageModel& lm, std::span<const Sentence> corpus);

/// Per-sentence perplexity, exp(-logprob / (n + 1)).
double sentence_perplexity(const LanguageModel& lm, const Sentence& x);

}  // namespace mha

#endif  // MHA_LM_HPP
