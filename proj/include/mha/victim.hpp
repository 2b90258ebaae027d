#ifndef MHA_VICTIM_HPP
#define MHA_VICTIM_HPP

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mha/core.hpp"

namespace mha {

using Distribution = std::vector<double>;

/// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool operator==(const Matrix&) const = default;
};

/// Black-box access: label distributions only. Every predict_proba call is
/// one invocation and bumps an atomic counter.
class ClassifierInterface {
 public:
  ClassifierInterface() = default;
  ClassifierInterface(const ClassifierInterface& other);
  ClassifierInterface& operator=(const ClassifierInterface& other);
  virtual ~ClassifierInterface() = default;

  Distribution predict_proba(const Sentence& x) const;
  virtual std::size_t num_classes() const = 0;

  std::uint64_t invocation_count() const { return invocations_.load(std::memory_order_relaxed); }
  void reset_invocations() { invocations_.store(0, std::memory_order_relaxed); }

 protected:
  virtual Distribution compute_proba(const Sentence& x) const = 0;
  void count_invocation() const { invocations_.fetch_add(1, std::memory_order_relaxed); }

 private:
  mutable std::atomic<std::uint64_t> invocations_{0};
};

/// White-box access: everything above plus parameters and the gradient of
/// the target-label loss with respect to word embeddings.
class WhiteBoxClassifier : public ClassifierInterface {
 public:
  virtual const Matrix& embeddings() const = 0;
  std::size_t embedding_dim() const { return embeddings().cols; }

  /// -log p_target(x). One invocation.
  double target_loss(const Sentence& x, ClassId target) const;

  /// dL/de_m for L = -log p_target(x). One invocation (the forward pass).
  std::vector<double> grad_embedding(const Sentence& x, ClassId target, std::size_t position) const;

  /// Same gradient, given the already-computed distribution of x. Pure; does
  /// not touch the invocation counter.
  virtual std::vector<double> grad_from_proba(std::span<const double> proba, const Sentence& x,
                                              ClassId target, std::size_t position) const = 0;
};

struct ClassifierTrainConfig {
  std::size_t dim = 8;
  std::size_t epochs = 200;
  double learning_rate = 0.3;
  std::uint64_t seed = 1;
  double init_scale = 0.1;
};

/// logits = W * mean(E[w_1..w_n]) + b, softmax output.
class BagEmbedClassifier final : public WhiteBoxClassifier {
 public:
  BagEmbedClassifier(Matrix embeddings, Matrix weights, std::vector<double> bias,
                     std::vector<std::string> labels = {});

  /// Seeded uniform(-s, s) initialisation for E and W, zero bias.
  static BagEmbedClassifier initialise(std::size_t vocab_size, std::size_t num_classes,
                                       const ClassifierTrainConfig& cfg,
                                       std::vector<std::string> labels = {});

  std::size_t num_classes() const override { return weights_.rows; }
  const Matrix& embeddings() const override { return embeddings_; }
  const Matrix& weights() const { return weights_; }
  const std::vector<double>& bias() const { return bias_; }
  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t vocab_size() const { return embeddings_.rows; }

  std::vector<double> grad_from_proba(std::span<const double> proba, const Sentence& x,
                                      ClassId target, std::size_t position) const override;

  /// Forward pass without invocation accounting. Used by training and by
  /// finite-difference checks, never by attackers.
  Distribution proba_uncounted(const Sentence& x) const;
  /// Same, with an explicit embedding table (for finite differences on E).
  Distribution proba_with(const Matrix& embeddings, const Sentence& x) const;

  static BagEmbedClassifier load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  bool same_parameters(const BagEmbedClassifier& other) const;

 protected:
  Distribution compute_proba(const Sentence& x) const override;

 private:
  Matrix embeddings_;
  Matrix weights_;
  std::vector<double> bias_;
  std::vector<std::string> labels_;
};

struct TrainedClassifier {
  BagEmbedClassifier classifier;
  double train_accuracy = 0.0;
  double final_loss = 0.0;
};

/// Full-batch gradient descent on mean cross-entropy over W, b and E.
/// Deterministic given cfg.seed.
TrainedClassifier train_classifier(std::span<const LabeledExample> data, std::size_t num_classes,
                                   std::size_t vocab_size, const ClassifierTrainConfig& cfg,
                                   std::vector<std::string> labels = {});

Distribution softmax(std::span<const double> logits);
ClassId argmax(std::span<const double> values);

/// Fraction of examples whose uncounted argmax equals the label.
double accuracy(const BagEmbedClassifier& clf, std::span<const LabeledExample> data);

/// Counted predictions for a batch; OpenMP-parallel over examples.
std::vector<Distribution> predict_batch(const ClassifierInterface& clf,
                                        std::span<const LabeledExample> data);
/// Serial reference for predict_batch.
std::vector<Distribution> predict_batch_serial(const ClassifierInterface& clf,
                                               std::span<const LabeledExample> data);

}  // namespace mha

#endif  // MHA_VICTIM_HPP
