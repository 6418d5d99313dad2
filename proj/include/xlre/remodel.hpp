#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xlre/corpus.hpp"
#include "xlre/embeddings.hpp"

namespace xlre {

enum class ContextKind { pass_through, bilstm, cnn };

std::string to_string(ContextKind kind);
ContextKind context_kind_from_string(const std::string& name);

struct REModelConfig {
  ContextKind context_kind = ContextKind::bilstm;
  int word_dim = 300;         // d
  int entity_label_dim = 50;  // d_m
  int hidden_dim = 0;         // 0 = context-kind default (200 bilstm, 300 cnn)
  int cnn_window = 3;         // k, odd
  double dropout_rate = 0.5;  // inverted dropout on context-layer outputs
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int max_epochs = 100;
  int patience = 10;  // epochs without dev micro-F1 improvement before stopping
  int minibatch_size = 1;
  uint64_t seed = 1;
  std::vector<std::string> label_set;  // relation types plus kNoRelationLabel
  std::vector<std::string> entity_type_set;

  void validate() const;
  int resolved_hidden_dim() const;  // per direction (bilstm) / filters (cnn)
  int context_output_dim() const;   // word_dim | 2*hidden | hidden
  int summary_dim() const { return 5 * context_output_dim(); }
  int num_labels() const { return static_cast<int>(label_set.size()); }
  int num_entity_types() const { return static_cast<int>(entity_type_set.size()); }
  int label_id(const std::string& label) const;           // -1 when absent
  int entity_type_id(const std::string& entity_type) const;  // throws when absent
  int no_relation_id() const;
};

struct LstmWeights {
  Eigen::MatrixXd wx_input, wx_forget, wx_output, wx_cell;  // hidden x word_dim
  Eigen::MatrixXd wh_input, wh_forget, wh_output, wh_cell;  // hidden x hidden
  Eigen::VectorXd b_input, b_forget, b_output, b_cell;      // hidden
};

// All tensors of one RE network. The word embedding table is frozen: train()
// never modifies it.
struct REModelParams {
  REModelConfig config;
  Vocabulary vocab;                        // word -> embedding column
  Eigen::MatrixXd word_embeddings;         // word_dim x V, frozen
  Eigen::MatrixXd entity_label_embeddings;  // entity_label_dim x num types
  LstmWeights forward_lstm, backward_lstm;  // bilstm only
  Eigen::MatrixXd conv_weight;             // hidden x (k * word_dim), cnn only
  Eigen::VectorXd conv_bias;               // hidden
  Eigen::MatrixXd output_sentence;         // labels x summary_dim
  Eigen::MatrixXd output_mention1;         // labels x entity_label_dim
  Eigen::MatrixXd output_mention2;         // labels x entity_label_dim
  Eigen::VectorXd output_bias;             // labels
};

// Trainable tensors only (no word table, no vocab); shapes match the
// corresponding REModelParams members.
struct REGradients {
  Eigen::MatrixXd entity_label_embeddings;
  LstmWeights forward_lstm, backward_lstm;
  Eigen::MatrixXd conv_weight;
  Eigen::VectorXd conv_bias;
  Eigen::MatrixXd output_sentence, output_mention1, output_mention2;
  Eigen::VectorXd output_bias;
};

REModelParams init_params(const REModelConfig& config, const EmbeddingSet& embeddings);
REGradients zero_gradients(const REModelConfig& config);

// Flat views over the trainable tensors, in a fixed order shared between
// params and gradients (drives Adam and the finite-difference checks).
struct TensorView {
  std::string name;
  double* data;
  Eigen::Index size;
};
std::vector<TensorView> trainable_tensors(REModelParams& params);
std::vector<TensorView> gradient_tensors(REGradients& grads, const REModelConfig& config);

struct EmbeddedExample {
  std::vector<Eigen::VectorXd> word_vectors;
  Eigen::VectorXd label1, label2;  // entity label embeddings of the two mentions
};

// Word vectors by table lookup (unknown id -> zero vector) plus the two
// entity label embeddings. Unknown entity types are an error.
EmbeddedExample embed_sentence(const REModelParams& params, const RelationExample& example);

// Context layers. Each maps n word vectors to n context vectors.
std::vector<Eigen::VectorXd> bilstm_forward(const REModelParams& params,
                                            const std::vector<Eigen::VectorXd>& words);
std::vector<Eigen::VectorXd> cnn_forward(const REModelParams& params,
                                         const std::vector<Eigen::VectorXd>& words);
std::vector<Eigen::VectorXd> context_forward(const REModelParams& params,
                                             const std::vector<Eigen::VectorXd>& words);

// Five-group element-wise max pooling: left / mention1 / between / mention2 /
// right. Empty groups contribute zero vectors. Requires mention1 strictly
// left of mention2.
Eigen::VectorXd summarize(const std::vector<Eigen::VectorXd>& hidden,
                          const EntityMention& mention1, const EntityMention& mention2);

// softmax(W_s h_s + W_m1 l_1 + W_m2 l_2 + b).
Eigen::VectorXd output_layer(const REModelParams& params, const Eigen::VectorXd& summary,
                             const Eigen::VectorXd& label1, const Eigen::VectorXd& label2);

struct Prediction {
  int label_id = 0;
  std::string label;
  Eigen::VectorXd probabilities;
};

Prediction predict(const REModelParams& params, const RelationExample& example);

// Same forward pass with caller-supplied word vectors (cross-lingual
// transfer feeds projected vectors here). Entity label embeddings always
// come from `params`.
Prediction predict_with_vectors(const REModelParams& params,
                                const std::vector<Eigen::VectorXd>& word_vectors,
                                const RelationExample& example);

class Rng;

// Mean cross-entropy over the batch; gradients of that mean are accumulated
// into `grads` (caller zeroes them). `dropout_rng` non-null applies inverted
// dropout to the context outputs, drawing masks in example order.
double loss_and_gradients(const REModelParams& params,
                          const std::vector<const RelationExample*>& batch,
                          REGradients& grads, Rng* dropout_rng = nullptr);

// Mean cross-entropy without dropout or gradients.
double average_loss(const REModelParams& params,
                    const std::vector<RelationExample>& examples);

// Micro-averaged F1 over non-"O" labels, in [0, 1].
double micro_f1(const std::vector<int>& predicted, const std::vector<int>& gold,
                int no_relation_id);

struct TrainStats {
  std::vector<double> epoch_train_loss;
  std::vector<double> epoch_dev_f1;
  int best_epoch = -1;  // 0-based index into epoch_dev_f1
};

// Adam on the mean cross-entropy with early stopping on dev micro-F1.
// Returns the parameters of the best dev epoch; with an empty dev set no
// early stopping happens and the final parameters are returned.
REModelParams train(const std::vector<RelationExample>& train_examples,
                    const std::vector<RelationExample>& dev_examples,
                    const REModelConfig& config, const EmbeddingSet& embeddings,
                    TrainStats* stats = nullptr);

// Versioned single-file JSON checkpoint: config, label/entity-type sets,
// vocabulary, and every tensor with its shape.
void save_checkpoint(const REModelParams& params, const std::string& path);
REModelParams load_checkpoint(const std::string& path);

}  // namespace xlre
