#include "mha/victim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mha/random.hpp"

namespace mha {

// ------------------------------------------------------------------ helpers

Distribution softmax(std::span<const double> logits) {
  Distribution p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double hi = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (auto& v : p) {
    v = std::exp(v - hi);
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return p;
}

ClassId argmax(std::span<const double> values) {
  return static_cast<ClassId>(std::max_element(values.begin(), values.end()) - values.begin());
}

// ------------------------------------------------------ ClassifierInterface

ClassifierInterface::ClassifierInterface(const ClassifierInterface& other)
    : invocations_(other.invocation_count()) {}

ClassifierInterface& ClassifierInterface::operator=(const ClassifierInterface& other) {
  invocations_.store(other.invocation_count(), std::memory_order_relaxed);
  return *this;
}

Distribution ClassifierInterface::predict_proba(const Sentence& x) const {
  if (x.empty()) throw std::invalid_argument("predict_proba: empty sentence");
  count_invocation();
  return compute_proba(x);
}

double WhiteBoxClassifier::target_loss(const Sentence& x, ClassId target) const {
  if (target >= num_classes()) throw std::out_of_range("target_loss: invalid class index");
  const auto p = predict_proba(x);
  return -std::log(p[target]);
}

std::vector<double> WhiteBoxClassifier::grad_embedding(const Sentence& x, ClassId target,
                                                       std::size_t position) const {
  if (target >= num_classes()) throw std::out_of_range("grad_embedding: invalid class index");
  if (position < 1 || position > x.size()) {
    throw std::out_of_range("grad_embedding: position " + std::to_string(position) +
                            " out of range");
  }
  const auto p = predict_proba(x);
  return grad_from_proba(p, x, target, position);
}

// ------------------------------------------------------- BagEmbedClassifier

BagEmbedClassifier::BagEmbedClassifier(Matrix embeddings, Matrix weights, std::vector<double> bias,
                                       std::vector<std::string> labels)
    : embeddings_(std::move(embeddings)),
      weights_(std::move(weights)),
      bias_(std::move(bias)),
      labels_(std::move(labels)) {
  if (embeddings_.cols < 1) throw std::invalid_argument("classifier: embedding dim must be >= 1");
  if (weights_.rows < 2) throw std::invalid_argument("classifier: need at least two classes");
  if (weights_.cols != embeddings_.cols) throw std::invalid_argument("classifier: W/E dim mismatch");
  if (bias_.size() != weights_.rows) throw std::invalid_argument("classifier: bias size mismatch");
  if (!labels_.empty() && labels_.size() != weights_.rows) {
    throw std::invalid_argument("classifier: label count mismatch");
  }
}

BagEmbedClassifier BagEmbedClassifier::initialise(std::size_t vocab_size, std::size_t num_classes,
                                                  const ClassifierTrainConfig& cfg,
                                                  std::vector<std::string> labels) {
  Rng rng(cfg.seed);
  Matrix e(vocab_size, cfg.dim);
  Matrix w(num_classes, cfg.dim);
  for (auto& v : e.data) v = uniform_range(rng, -cfg.init_scale, cfg.init_scale);
  for (auto& v : w.data) v = uniform_range(rng, -cfg.init_scale, cfg.init_scale);
  return BagEmbedClassifier(std::move(e), std::move(w), std::vector<double>(num_classes, 0.0),
                            std::move(labels));
}

Distribution BagEmbedClassifier::proba_with(const Matrix& embeddings, const Sentence& x) const {
  const std::size_t d = embeddings.cols;
  std::vector<double> h(d, 0.0);
  for (TokenId id : x.ids()) {
    if (id >= embeddings.rows) throw std::out_of_range("classifier: token id outside vocabulary");
    const auto e = embeddings.row(id);
    for (std::size_t j = 0; j < d; ++j) h[j] += e[j];
  }
  const double inv_n = 1.0 / static_cast<double>(x.size());
  for (auto& v : h) v *= inv_n;
  std::vector<double> logits(bias_);
  for (std::size_t k = 0; k < weights_.rows; ++k) {
    const auto wk = weights_.row(k);
    for (std::size_t j = 0; j < d; ++j) logits[k] += wk[j] * h[j];
  }
  return softmax(logits);
}

Distribution BagEmbedClassifier::proba_uncounted(const Sentence& x) const {
  return proba_with(embeddings_, x);
}

Distribution BagEmbedClassifier::compute_proba(const Sentence& x) const { return proba_uncounted(x); }

std::vector<double> BagEmbedClassifier::grad_from_proba(std::span<const double> proba,
                                                        const Sentence& x, ClassId target,
                                                        std::size_t position) const {
  if (target >= num_classes()) throw std::out_of_range("grad_embedding: invalid class index");
  if (proba.size() != num_classes()) throw std::invalid_argument("grad_embedding: bad distribution");
  if (position < 1 || position > x.size()) {
    throw std::out_of_range("grad_embedding: position " + std::to_string(position) +
                            " out of range");
  }
  // Mean pooling makes the gradient identical for every position.
  const double inv_n = 1.0 / static_cast<double>(x.size());
  std::vector<double> g(embedding_dim(), 0.0);
  for (std::size_t k = 0; k < num_classes(); ++k) {
    const double coeff = (proba[k] - (k == target ? 1.0 : 0.0)) * inv_n;
    const auto wk = weights_.row(k);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += coeff * wk[j];
  }
  return g;
}

bool BagEmbedClassifier::same_parameters(const BagEmbedClassifier& other) const {
  return embeddings_ == other.embeddings_ && weights_ == other.weights_ && bias_ == other.bias_;
}

namespace {

void write_row(std::ostream& out, std::span<const double> row) {
  char buf[40];
  for (std::size_t j = 0; j < row.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%.17g", row[j]);
    out << (j ? " " : "") << buf;
  }
  out << '\n';
}

}  // namespace

void BagEmbedClassifier::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write classifier " + path.string());
  out << "bagembed\n"
      << "vocab " << embeddings_.rows << " dim " << embeddings_.cols << " classes " << weights_.rows
      << '\n';
  out << "labels";
  for (const auto& l : labels_) out << ' ' << l;
  out << "\nE\n";
  for (std::size_t r = 0; r < embeddings_.rows; ++r) write_row(out, embeddings_.row(r));
  out << "W\n";
  for (std::size_t r = 0; r < weights_.rows; ++r) write_row(out, weights_.row(r));
  out << "b\n";
  write_row(out, bias_);
}

BagEmbedClassifier BagEmbedClassifier::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open classifier " + path.string());
  auto fail = [&](const std::string& why) {
    return std::runtime_error("classifier " + path.string() + ": " + why);
  };
  std::string tok;
  if (!(in >> tok) || tok != "bagembed") throw fail("bad header");
  std::size_t v = 0, d = 0, c = 0;
  std::string kv, kd, kc;
  if (!(in >> kv >> v >> kd >> d >> kc >> c) || kv != "vocab" || kd != "dim" || kc != "classes") {
    throw fail("bad dimensions line");
  }
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::istringstream ls(line);
  if (!(ls >> tok) || tok != "labels") throw fail("missing labels line");
  std::vector<std::string> labels;
  while (ls >> tok) labels.push_back(tok);
  auto read_matrix = [&](const char* name, std::size_t rows, std::size_t cols) {
    if (!(in >> tok) || tok != name) throw fail(std::string("missing block ") + name);
    Matrix m(rows, cols);
    for (auto& x : m.data) {
      if (!(in >> x)) throw fail(std::string("truncated block ") + name);
    }
    return m;
  };
  Matrix e = read_matrix("E", v, d);
  Matrix w = read_matrix("W", c, d);
  Matrix b = read_matrix("b", 1, c);
  return BagEmbedClassifier(std::move(e), std::move(w), std::move(b.data), std::move(labels));
}

// ----------------------------------------------------------------- training

TrainedClassifier train_classifier(std::span<const LabeledExample> data, std::size_t num_classes,
                                   std::size_t vocab_size, const ClassifierTrainConfig& cfg,
                                   std::vector<std::string> labels) {
  if (data.empty()) throw std::invalid_argument("train_classifier: empty training data");
  if (cfg.dim < 1) throw std::invalid_argument("train_classifier: dim must be >= 1");
  std::vector<std::size_t> seen(num_classes, 0);
  for (const auto& ex : data) {
    if (ex.label >= num_classes) throw std::invalid_argument("train_classifier: label out of range");
    ++seen[ex.label];
  }
  if (std::count_if(seen.begin(), seen.end(), [](std::size_t n) { return n > 0; }) < 2) {
    throw std::invalid_argument("train_classifier: need at least two classes in the data");
  }

  auto model = BagEmbedClassifier::initialise(vocab_size, num_classes, cfg, std::move(labels));
  Matrix e = model.embeddings();
  Matrix w = model.weights();
  std::vector<double> b = model.bias();
  const std::size_t d = cfg.dim;
  const double inv_batch = 1.0 / static_cast<double>(data.size());

  Matrix grad_e(vocab_size, d);
  Matrix grad_w(num_classes, d);
  std::vector<double> grad_b(num_classes);
  std::vector<double> h(d), logits(num_classes), dh(d);

  double loss = 0.0;
  for (std::size_t epoch = 0; epoch <= cfg.epochs; ++epoch) {
    std::fill(grad_e.data.begin(), grad_e.data.end(), 0.0);
    std::fill(grad_w.data.begin(), grad_w.data.end(), 0.0);
    std::fill(grad_b.begin(), grad_b.end(), 0.0);
    loss = 0.0;
    for (const auto& ex : data) {
      const auto ids = ex.sentence.ids();
      const double inv_n = 1.0 / static_cast<double>(ids.size());
      std::fill(h.begin(), h.end(), 0.0);
      for (TokenId id : ids) {
        const auto row = e.row(id);
        for (std::size_t j = 0; j < d; ++j) h[j] += row[j];
      }
      for (auto& v : h) v *= inv_n;
      for (std::size_t k = 0; k < num_classes; ++k) {
        logits[k] = b[k];
        for (std::size_t j = 0; j < d; ++j) logits[k] += w(k, j) * h[j];
      }
      const auto p = softmax(logits);
      loss -= std::log(p[ex.label]) * inv_batch;
      std::fill(dh.begin(), dh.end(), 0.0);
      for (std::size_t k = 0; k < num_classes; ++k) {
        const double dz = (p[k] - (k == ex.label ? 1.0 : 0.0)) * inv_batch;
        grad_b[k] += dz;
        for (std::size_t j = 0; j < d; ++j) {
          grad_w(k, j) += dz * h[j];
          dh[j] += dz * w(k, j);
        }
      }
      for (TokenId id : ids) {
        auto row = grad_e.row(id);
        for (std::size_t j = 0; j < d; ++j) row[j] += dh[j] * inv_n;
      }
    }
    // The last pass only measures the loss of the final parameters.
    if (epoch == cfg.epochs) break;
    for (std::size_t i = 0; i < e.data.size(); ++i) e.data[i] -= cfg.learning_rate * grad_e.data[i];
    for (std::size_t i = 0; i < w.data.size(); ++i) w.data[i] -= cfg.learning_rate * grad_w.data[i];
    for (std::size_t k = 0; k < num_classes; ++k) b[k] -= cfg.learning_rate * grad_b[k];
  }

  TrainedClassifier out{BagEmbedClassifier(std::move(e), std::move(w), std::move(b), model.labels()),
                        0.0, loss};
  out.train_accuracy = accuracy(out.classifier, data);
  return out;
}

double accuracy(const BagEmbedClassifier& clf, std::span<const LabeledExample> data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : data) {
    if (argmax(clf.proba_uncounted(ex.sentence)) == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::vector<Distribution> predict_batch(const ClassifierInterface& clf,
                                        std::span<const LabeledExample> data) {
  std::vector<Distribution> out(data.size());
  const auto n = static_cast<std::ptrdiff_t>(data.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = clf.predict_proba(data[static_cast<std::size_t>(i)].sentence);
  }
  return out;
}

std::vector<Distribution> predict_batch_serial(const ClassifierInterface& clf,
                                               std::span<const LabeledExample> data) {
  std::vector<Distribution> out;
  out.reserve(data.size());
  for (const auto& ex : data) out.push_back(clf.predict_proba(ex.sentence));
  return out;
}

}  // namespace mha
