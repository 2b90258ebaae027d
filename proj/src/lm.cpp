#include "mha/lm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "mha/random.hpp"

namespace mha {

namespace {

constexpr int kBitsPerToken = 21;
constexpr std::uint64_t kTokenMask = (std::uint64_t{1} << kBitsPerToken) - 1;

}  // namespace

std::string_view to_string(Direction d) { return d == Direction::forward ? "forward" : "backward"; }

Direction parse_direction(std::string_view s) {
  if (s == "forward") return Direction::forward;
  if (s == "backward") return Direction::backward;
  throw std::invalid_argument("unknown LM direction '" + std::string(s) + "'");
}

std::size_t NGramLM::JointKeyHash::operator()(const JointKey& k) const noexcept {
  return static_cast<std::size_t>(splitmix64(k.context * 0x100000001b3ULL ^ k.word));
}

NGramLM::NGramLM(int order, double k, Direction direction, std::size_t alphabet_size)
    : order_(order), k_(k), direction_(direction), alphabet_(alphabet_size) {
  if (order < 1 || order > kMaxOrder) {
    throw std::invalid_argument("ngram: order must be in [1, " + std::to_string(kMaxOrder) + "]");
  }
  if (!(k > 0.0)) throw std::invalid_argument("ngram: smoothing constant k must be positive");
  if (alphabet_size < 1) throw std::invalid_argument("ngram: empty alphabet");
}

std::uint64_t NGramLM::pack(std::span<const TokenId> tail) const {
  std::uint64_t key = 0;
  for (TokenId t : tail) {
    if (t > kTokenMask) throw std::out_of_range("ngram: token id too large");
    key = (key << kBitsPerToken) | t;
  }
  return key;
}

std::uint64_t NGramLM::context_key(std::span<const TokenId> context) const {
  const auto width = static_cast<std::size_t>(order_ - 1);
  std::array<TokenId, kMaxOrder> tail{};
  // Tail in model order, oldest first, left-padded with <s>.
  for (std::size_t j = 0; j < width; ++j) {
    // Distance from the predicted word: width - j.
    const std::size_t back = width - j;
    if (back > context.size()) {
      tail[j] = kBos;
    } else if (direction_ == Direction::forward) {
      tail[j] = context[context.size() - back];
    } else {
      tail[j] = context[back - 1];
    }
  }
  return pack(std::span<const TokenId>(tail.data(), width));
}

void NGramLM::add_count(std::uint64_t context, TokenId word, std::uint64_t n) {
  context_totals_[context] += n;
  joint_[JointKey{context, word}] += n;
}

void NGramLM::observe(std::span<const TokenId> sentence) {
  std::vector<TokenId> seq(sentence.begin(), sentence.end());
  if (direction_ == Direction::backward) std::reverse(seq.begin(), seq.end());
  const auto width = static_cast<std::size_t>(order_ - 1);
  std::vector<TokenId> padded(width, kBos);
  padded.insert(padded.end(), seq.begin(), seq.end());
  padded.push_back(kEos);
  for (std::size_t i = width; i < padded.size(); ++i) {
    const auto tail = std::span<const TokenId>(padded).subspan(i - width, width);
    add_count(pack(tail), padded[i], 1);
  }
}

std::uint64_t NGramLM::count(std::span<const TokenId> tail, TokenId word) const {
  auto it = joint_.find(JointKey{pack(tail), word});
  return it == joint_.end() ? 0 : it->second;
}

std::uint64_t NGramLM::context_count(std::span<const TokenId> tail) const {
  auto it = context_totals_.find(pack(tail));
  return it == context_totals_.end() ? 0 : it->second;
}

double NGramLM::cond_logprob(TokenId word, std::span<const TokenId> context) const {
  const std::uint64_t ctx = context_key(context);
  std::uint64_t joint = 0;
  std::uint64_t total = 0;
  if (auto it = context_totals_.find(ctx); it != context_totals_.end()) {
    total = it->second;
    if (auto jt = joint_.find(JointKey{ctx, word}); jt != joint_.end()) joint = jt->second;
  }
  return std::log((static_cast<double>(joint) + k_) /
                  (static_cast<double>(total) + k_ * static_cast<double>(alphabet_)));
}

void NGramLM::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write language model " + path.string());
  char kbuf[64];
  std::snprintf(kbuf, sizeof kbuf, "%.17g", k_);
  out << "ngram-lm\n"
      << "order " << order_ << '\n'
      << "k " << kbuf << '\n'
      << "direction " << to_string(direction_) << '\n'
      << "alphabet " << alphabet_ << '\n'
      << "records " << joint_.size() << '\n';
  const auto width = static_cast<std::size_t>(order_ - 1);
  std::vector<std::tuple<std::uint64_t, TokenId, std::uint64_t>> rows;
  rows.reserve(joint_.size());
  for (const auto& [key, n] : joint_) rows.emplace_back(key.context, key.word, n);
  std::sort(rows.begin(), rows.end());
  for (const auto& [ctx, word, n] : rows) {
    for (std::size_t j = 0; j < width; ++j) {
      const int shift = static_cast<int>((width - 1 - j) * kBitsPerToken);
      out << ((ctx >> shift) & kTokenMask) << ' ';
    }
    out << word << ' ' << n << '\n';
  }
}

NGramLM NGramLM::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open language model " + path.string());
  auto fail = [&](const std::string& why) {
    return std::runtime_error("language model " + path.string() + ": " + why);
  };
  std::string magic;
  std::getline(in, magic);
  if (magic != "ngram-lm") throw fail("bad header");
  auto field = [&](const char* name) {
    std::string line;
    if (!std::getline(in, line)) throw fail(std::string("missing ") + name);
    std::istringstream ss(line);
    std::string key, value;
    ss >> key >> value;
    if (key != name || value.empty()) throw fail(std::string("expected field ") + name);
    return value;
  };
  const int order = std::stoi(field("order"));
  const double k = std::stod(field("k"));
  const Direction direction = parse_direction(field("direction"));
  const auto alphabet = static_cast<std::size_t>(std::stoull(field("alphabet")));
  const auto records = static_cast<std::size_t>(std::stoull(field("records")));
  NGramLM lm(order, k, direction, alphabet);
  const auto width = static_cast<std::size_t>(order - 1);
  std::vector<TokenId> tail(width);
  for (std::size_t r = 0; r < records; ++r) {
    std::string line;
    if (!std::getline(in, line)) throw fail("truncated record list");
    std::istringstream ss(line);
    for (auto& t : tail) {
      if (!(ss >> t)) throw fail("malformed record on line " + std::to_string(r + 7));
    }
    TokenId word = 0;
    std::uint64_t n = 0;
    if (!(ss >> word >> n)) throw fail("malformed record on line " + std::to_string(r + 7));
    lm.add_count(lm.pack(tail), word, n);
  }
  return lm;
}

NGramLM train_ngram(std::span<const Sentence> corpus, int order, double k, Direction direction,
                    const Vocabulary& vocab) {
  if (corpus.empty()) throw std::invalid_argument("train_ngram: empty corpus");
  NGramLM lm(order, k, direction, vocab.size() - kNumSpecials + 1);
  for (const auto& s : corpus) lm.observe(s.ids());
  return lm;
}

double sentence_logprob(const LanguageModel& lm, const Sentence& x) {
  if (lm.direction() != Direction::forward) {
    throw std::invalid_argument("sentence_logprob: direction mismatch (forward model required)");
  }
  const auto ids = x.ids();
  double total = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) total += lm.cond_logprob(ids[i], ids.first(i));
  total += lm.cond_logprob(kEos, ids);
  return total;
}

double perplexity(const LanguageModel& lm, std::span<const Sentence> corpus) {
  if (corpus.empty()) throw std::invalid_argument("perplexity: empty corpus");
  double logprob = 0.0;
  std::size_t events = 0;
  for (const auto& s : corpus) {
    logprob += sentence_logprob(lm, s);
    events += s.size() + 1;
  }
  return std::exp(-logprob / static_cast<double>(events));
}

double sentence_perplexity(const LanguageModel& lm, const Sentence& x) {
  return std::exp(-sentence_logprob(lm, x) / static_cast<double>(x.size() + 1));
}

}  // namespace mha
