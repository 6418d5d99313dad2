#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xlre/corpus.hpp"

namespace xlre {

struct CbowConfig {
  int dim = 300;
  int window = 5;
  int epochs = 5;
  double learning_rate = 0.025;  // linearly decayed over all positions
  int64_t min_count = 1;         // threshold callers use to build the vocabulary
  uint64_t seed = 1;
  bool track_likelihood = false;

  void validate() const;
};

// CBOW variant: one output matrix (the exported word embeddings) plus a
// separate input matrix per context offset j in {-c..-1, 1..c}, combined
// with 1/|j| distance-decay weights.
struct EmbeddingModel {
  Eigen::MatrixXd output;                 // d x V, column i = embedding of word i
  std::vector<Eigen::MatrixXd> inputs;    // 2c matrices, see input_at()
  int dim = 0;
  int window = 0;

  Eigen::MatrixXd& input_at(int offset);
  const Eigen::MatrixXd& input_at(int offset) const;
};

// Weighted sum of input-matrix columns over in-window context positions;
// positions outside the sentence are skipped.
Eigen::VectorXd context_vector(const EmbeddingModel& model,
                               const std::vector<int32_t>& sentence, int position);

// Numerically stable softmax.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

// P(word | context) over the whole vocabulary from output-embedding logits.
Eigen::VectorXd target_probability(const EmbeddingModel& model,
                                   const Eigen::VectorXd& context_vec);

// Average per-position log-likelihood of the corpus under the model.
double log_likelihood(const EmbeddingModel& model, const TokenizedCorpus& corpus);

struct CbowGradients {
  Eigen::MatrixXd output;
  std::vector<Eigen::MatrixXd> inputs;
};

// Gradient of the average log-likelihood at the model's current parameters.
// Test oracle hook; training applies the same per-position terms online.
CbowGradients cbow_gradients(const EmbeddingModel& model,
                             const TokenizedCorpus& corpus);

struct CbowTrainStats {
  std::vector<double> epoch_log_likelihood;  // filled when track_likelihood
};

// Stochastic gradient ascent on the average log-likelihood, full softmax.
// Deterministic for a fixed seed.
EmbeddingModel train_cbow(const TokenizedCorpus& corpus, const Vocabulary& vocab,
                          const CbowConfig& config,
                          CbowTrainStats* stats = nullptr);

// A vocabulary bound to a d x V embedding matrix (column i = words[i]).
// Rows of the .vec file are written most-frequent-first, so "top-K by
// frequency" is the first K columns.
struct EmbeddingSet {
  Vocabulary vocab;
  Eigen::MatrixXd vectors;
};

// Text format: header "V d", then V lines "word v_1 ... v_d".
void save_embeddings(const std::vector<std::string>& words,
                     const Eigen::MatrixXd& vectors, const std::string& path);
void save_embeddings(const EmbeddingSet& embeddings, const std::string& path);
EmbeddingSet load_embeddings(const std::string& path);

}  // namespace xlre
