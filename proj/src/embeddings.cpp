#include "xlre/embeddings.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "xlre/rng.hpp"

namespace xlre {

void CbowConfig::validate() const {
  if (dim < 1) throw ValidationError("embedding dim must be >= 1");
  if (window < 1) throw ValidationError("context window must be >= 1");
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (learning_rate <= 0) throw ValidationError("learning rate must be > 0");
  if (min_count < 1) throw ValidationError("min_count must be >= 1");
}

namespace {

// Offsets -c..-1 map to slots 0..c-1, offsets 1..c to slots c..2c-1.
int offset_slot(int offset, int window) {
  if (offset == 0 || offset < -window || offset > window) {
    throw ValidationError("context offset " + std::to_string(offset) +
                          " outside window " + std::to_string(window));
  }
  return offset < 0 ? offset + window : window + offset - 1;
}

}  // namespace

Eigen::MatrixXd& EmbeddingModel::input_at(int offset) {
  return inputs[offset_slot(offset, window)];
}

const Eigen::MatrixXd& EmbeddingModel::input_at(int offset) const {
  return inputs[offset_slot(offset, window)];
}

Eigen::VectorXd context_vector(const EmbeddingModel& model,
                               const std::vector<int32_t>& sentence, int position) {
  const int n = static_cast<int>(sentence.size());
  Eigen::VectorXd ctx = Eigen::VectorXd::Zero(model.dim);
  for (int offset = -model.window; offset <= model.window; ++offset) {
    if (offset == 0) continue;
    const int neighbor = position + offset;
    if (neighbor < 0 || neighbor >= n) continue;
    ctx += (1.0 / std::abs(offset)) *
           model.input_at(offset).col(sentence[neighbor]);
  }
  return ctx;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double peak = logits.maxCoeff();
  Eigen::VectorXd probs = (logits.array() - peak).exp();
  probs /= probs.sum();
  return probs;
}

Eigen::VectorXd target_probability(const EmbeddingModel& model,
                                   const Eigen::VectorXd& context_vec) {
  return softmax(model.output.transpose() * context_vec);
}

double log_likelihood(const EmbeddingModel& model, const TokenizedCorpus& corpus) {
  double total = 0.0;
  int64_t positions = 0;
  for (const auto& sentence : corpus.sentences) {
    for (int t = 0; t < static_cast<int>(sentence.size()); ++t) {
      const Eigen::VectorXd ctx = context_vector(model, sentence, t);
      const Eigen::VectorXd logits = model.output.transpose() * ctx;
      const double peak = logits.maxCoeff();
      const double log_norm = peak + std::log((logits.array() - peak).exp().sum());
      total += logits[sentence[t]] - log_norm;
      ++positions;
    }
  }
  if (positions == 0) throw ValidationError("corpus is empty");
  return total / static_cast<double>(positions);
}

CbowGradients cbow_gradients(const EmbeddingModel& model,
                             const TokenizedCorpus& corpus) {
  CbowGradients grads;
  grads.output = Eigen::MatrixXd::Zero(model.output.rows(), model.output.cols());
  grads.inputs.assign(model.inputs.size(), grads.output);
  if (corpus.token_total == 0) throw ValidationError("corpus is empty");
  const double scale = 1.0 / static_cast<double>(corpus.token_total);
  for (const auto& sentence : corpus.sentences) {
    const int n = static_cast<int>(sentence.size());
    for (int t = 0; t < n; ++t) {
      const int32_t target = sentence[t];
      const Eigen::VectorXd ctx = context_vector(model, sentence, t);
      const Eigen::VectorXd probs = target_probability(model, ctx);
      // d logP / d output = ctx (e_target - p)^T
      grads.output.noalias() -= (scale * ctx) * probs.transpose();
      grads.output.col(target) += scale * ctx;
      // d logP / d ctx = output (e_target - p)
      Eigen::VectorXd dctx = model.output.col(target) - model.output * probs;
      for (int offset = -model.window; offset <= model.window; ++offset) {
        if (offset == 0) continue;
        const int neighbor = t + offset;
        if (neighbor < 0 || neighbor >= n) continue;
        grads.inputs[offset_slot(offset, model.window)].col(sentence[neighbor]) +=
            (scale / std::abs(offset)) * dctx;
      }
    }
  }
  return grads;
}

EmbeddingModel train_cbow(const TokenizedCorpus& corpus, const Vocabulary& vocab,
                          const CbowConfig& config, CbowTrainStats* stats) {
  config.validate();
  const int vocab_size = vocab.size();
  if (vocab_size < 2) {
    throw ValidationError("vocabulary must contain at least 2 words, got " +
                          std::to_string(vocab_size));
  }
  if (corpus.token_total == 0) throw ValidationError("corpus is empty");

  EmbeddingModel model;
  model.dim = config.dim;
  model.window = config.window;
  Rng rng(config.seed);
  const double half_range = 0.5 / config.dim;
  auto init_matrix = [&](Eigen::MatrixXd& matrix) {
    matrix.resize(config.dim, vocab_size);
    for (Eigen::Index i = 0; i < matrix.size(); ++i) {
      matrix.data()[i] = rng.uniform(-half_range, half_range);
    }
  };
  init_matrix(model.output);
  model.inputs.resize(2 * static_cast<size_t>(config.window));
  for (auto& matrix : model.inputs) init_matrix(matrix);

  const double total_positions =
      static_cast<double>(corpus.token_total) * config.epochs;
  int64_t processed = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& sentence : corpus.sentences) {
      const int n = static_cast<int>(sentence.size());
      for (int t = 0; t < n; ++t) {
        const double lr =
            config.learning_rate *
            std::max(1.0 - static_cast<double>(processed) / total_positions, 1e-4);
        const int32_t target = sentence[t];
        const Eigen::VectorXd ctx = context_vector(model, sentence, t);
        const Eigen::VectorXd probs = target_probability(model, ctx);
        // Both updates use the pre-update parameters.
        Eigen::VectorXd dctx = model.output.col(target) - model.output * probs;
        model.output.noalias() -= (lr * ctx) * probs.transpose();
        model.output.col(target) += lr * ctx;
        for (int offset = -config.window; offset <= config.window; ++offset) {
          if (offset == 0) continue;
          const int neighbor = t + offset;
          if (neighbor < 0 || neighbor >= n) continue;
          model.inputs[offset_slot(offset, config.window)].col(sentence[neighbor]) +=
              (lr / std::abs(offset)) * dctx;
        }
        ++processed;
      }
    }
    if (stats && config.track_likelihood) {
      stats->epoch_log_likelihood.push_back(log_likelihood(model, corpus));
    }
  }
  return model;
}

void save_embeddings(const std::vector<std::string>& words,
                     const Eigen::MatrixXd& vectors, const std::string& path) {
  if (static_cast<Eigen::Index>(words.size()) != vectors.cols()) {
    throw ValidationError("word count does not match embedding column count");
  }
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write embedding file: " + path);
  out << words.size() << ' ' << vectors.rows() << '\n';
  char buffer[64];
  for (size_t i = 0; i < words.size(); ++i) {
    out << words[i];
    for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
      std::snprintf(buffer, sizeof(buffer), " %.9g", vectors(r, static_cast<Eigen::Index>(i)));
      out << buffer;
    }
    out << '\n';
  }
}

void save_embeddings(const EmbeddingSet& embeddings, const std::string& path) {
  save_embeddings(embeddings.vocab.words, embeddings.vectors, path);
}

EmbeddingSet load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open embedding file: " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw ValidationError(path + ": missing header line");
  }
  int64_t word_count = 0;
  int64_t dim = 0;
  {
    std::istringstream header(line);
    std::string extra;
    if (!(header >> word_count >> dim) || (header >> extra) || word_count < 0 ||
        dim < 1) {
      throw ValidationError(path + ":1: header must be two integers 'V d'");
    }
  }
  EmbeddingSet set;
  set.vectors.resize(dim, word_count);
  set.vocab.words.reserve(static_cast<size_t>(word_count));
  int64_t row = 0;
  while (row < word_count) {
    if (!std::getline(in, line)) {
      throw ValidationError(path + ": expected " + std::to_string(word_count) +
                            " embedding rows, found " + std::to_string(row));
    }
    std::istringstream stream(line);
    std::string word;
    if (!(stream >> word)) {
      throw ValidationError(path + ":" + std::to_string(row + 2) + ": empty row");
    }
    for (int64_t r = 0; r < dim; ++r) {
      double value = 0.0;
      if (!(stream >> value)) {
        throw ValidationError(path + ":" + std::to_string(row + 2) +
                              ": expected " + std::to_string(dim) +
                              " values for word '" + word + "'");
      }
      set.vectors(r, row) = value;
    }
    double excess;
    if (stream >> excess) {
      throw ValidationError(path + ":" + std::to_string(row + 2) +
                            ": more than " + std::to_string(dim) +
                            " values for word '" + word + "'");
    }
    set.vocab.words.push_back(std::move(word));
    ++row;
  }
  set.vocab.counts.assign(set.vocab.words.size(), 0);
  set.vocab.reindex();
  return set;
}

}  // namespace xlre
