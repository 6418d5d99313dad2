#include "xlre/remodel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "xlre/rng.hpp"

namespace xlre {

using nlohmann::json;

std::string to_string(ContextKind kind) {
  switch (kind) {
    case ContextKind::pass_through: return "pass";
    case ContextKind::bilstm: return "bilstm";
    case ContextKind::cnn: return "cnn";
  }
  throw ValidationError("invalid context kind");
}

ContextKind context_kind_from_string(const std::string& name) {
  if (name == "pass" || name == "pass_through") return ContextKind::pass_through;
  if (name == "bilstm") return ContextKind::bilstm;
  if (name == "cnn") return ContextKind::cnn;
  throw ValidationError("unknown context kind: '" + name + "'");
}

void REModelConfig::validate() const {
  if (word_dim < 1) throw ValidationError("word_dim must be >= 1");
  if (entity_label_dim < 1) throw ValidationError("entity_label_dim must be >= 1");
  if (hidden_dim < 0) throw ValidationError("hidden_dim must be >= 0 (0 = default)");
  if (cnn_window < 1 || cnn_window % 2 == 0) {
    throw ValidationError("cnn_window must be odd and >= 1");
  }
  if (dropout_rate < 0 || dropout_rate >= 1) {
    throw ValidationError("dropout_rate must be in [0, 1)");
  }
  if (learning_rate <= 0) throw ValidationError("learning_rate must be > 0");
  if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1) {
    throw ValidationError("adam betas must be in [0, 1)");
  }
  if (adam_epsilon <= 0) throw ValidationError("adam_epsilon must be > 0");
  if (max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
  if (patience < 0) throw ValidationError("patience must be >= 0");
  if (minibatch_size < 1) throw ValidationError("minibatch_size must be >= 1");
  if (label_set.empty()) throw ValidationError("label_set is empty");
  if (std::set<std::string>(label_set.begin(), label_set.end()).size() !=
      label_set.size()) {
    throw ValidationError("label_set contains duplicates");
  }
  if (std::find(label_set.begin(), label_set.end(), kNoRelationLabel) ==
      label_set.end()) {
    throw ValidationError(std::string("label_set must contain '") +
                          kNoRelationLabel + "'");
  }
  if (entity_type_set.empty()) throw ValidationError("entity_type_set is empty");
  if (std::set<std::string>(entity_type_set.begin(), entity_type_set.end()).size() !=
      entity_type_set.size()) {
    throw ValidationError("entity_type_set contains duplicates");
  }
}

int REModelConfig::resolved_hidden_dim() const {
  switch (context_kind) {
    case ContextKind::pass_through: return word_dim;
    case ContextKind::bilstm: return hidden_dim > 0 ? hidden_dim : 200;
    case ContextKind::cnn: return hidden_dim > 0 ? hidden_dim : 300;
  }
  throw ValidationError("invalid context kind");
}

int REModelConfig::context_output_dim() const {
  switch (context_kind) {
    case ContextKind::pass_through: return word_dim;
    case ContextKind::bilstm: return 2 * resolved_hidden_dim();
    case ContextKind::cnn: return resolved_hidden_dim();
  }
  throw ValidationError("invalid context kind");
}

int REModelConfig::label_id(const std::string& label) const {
  auto it = std::find(label_set.begin(), label_set.end(), label);
  return it == label_set.end() ? -1 : static_cast<int>(it - label_set.begin());
}

int REModelConfig::entity_type_id(const std::string& entity_type) const {
  auto it = std::find(entity_type_set.begin(), entity_type_set.end(), entity_type);
  if (it == entity_type_set.end()) {
    throw ValidationError("unknown entity type: '" + entity_type + "'");
  }
  return static_cast<int>(it - entity_type_set.begin());
}

int REModelConfig::no_relation_id() const {
  const int id = label_id(kNoRelationLabel);
  if (id < 0) {
    throw ValidationError(std::string("label_set must contain '") +
                          kNoRelationLabel + "'");
  }
  return id;
}

namespace {

constexpr double kInitRange = 0.08;

void fill_uniform(Eigen::MatrixXd& matrix, Rng& rng) {
  for (Eigen::Index i = 0; i < matrix.size(); ++i) {
    matrix.data()[i] = rng.uniform(-kInitRange, kInitRange);
  }
}

void init_lstm(LstmWeights& w, int hidden, int input, Rng& rng) {
  for (Eigen::MatrixXd* m : {&w.wx_input, &w.wx_forget, &w.wx_output, &w.wx_cell}) {
    m->resize(hidden, input);
    fill_uniform(*m, rng);
  }
  for (Eigen::MatrixXd* m : {&w.wh_input, &w.wh_forget, &w.wh_output, &w.wh_cell}) {
    m->resize(hidden, hidden);
    fill_uniform(*m, rng);
  }
  w.b_input = Eigen::VectorXd::Zero(hidden);
  w.b_forget = Eigen::VectorXd::Ones(hidden);  // standard forget-gate bias
  w.b_output = Eigen::VectorXd::Zero(hidden);
  w.b_cell = Eigen::VectorXd::Zero(hidden);
}

void zero_lstm(LstmWeights& w, int hidden, int input) {
  for (Eigen::MatrixXd* m : {&w.wx_input, &w.wx_forget, &w.wx_output, &w.wx_cell}) {
    *m = Eigen::MatrixXd::Zero(hidden, input);
  }
  for (Eigen::MatrixXd* m : {&w.wh_input, &w.wh_forget, &w.wh_output, &w.wh_cell}) {
    *m = Eigen::MatrixXd::Zero(hidden, hidden);
  }
  for (Eigen::VectorXd* v : {&w.b_input, &w.b_forget, &w.b_output, &w.b_cell}) {
    *v = Eigen::VectorXd::Zero(hidden);
  }
}

template <typename T>
void collect_tensors(T& t, const REModelConfig& config,
                     std::vector<TensorView>& out) {
  auto add = [&out](const std::string& name, auto& tensor) {
    out.push_back({name, tensor.data(), tensor.size()});
  };
  add("entity_label_embeddings", t.entity_label_embeddings);
  if (config.context_kind == ContextKind::bilstm) {
    const std::array<std::pair<std::string, LstmWeights*>, 2> dirs = {
        std::make_pair(std::string("forward_lstm."), &t.forward_lstm),
        std::make_pair(std::string("backward_lstm."), &t.backward_lstm)};
    for (const auto& [prefix, w] : dirs) {
      add(prefix + "wx_input", w->wx_input);
      add(prefix + "wx_forget", w->wx_forget);
      add(prefix + "wx_output", w->wx_output);
      add(prefix + "wx_cell", w->wx_cell);
      add(prefix + "wh_input", w->wh_input);
      add(prefix + "wh_forget", w->wh_forget);
      add(prefix + "wh_output", w->wh_output);
      add(prefix + "wh_cell", w->wh_cell);
      add(prefix + "b_input", w->b_input);
      add(prefix + "b_forget", w->b_forget);
      add(prefix + "b_output", w->b_output);
      add(prefix + "b_cell", w->b_cell);
    }
  } else if (config.context_kind == ContextKind::cnn) {
    add("conv_weight", t.conv_weight);
    add("conv_bias", t.conv_bias);
  }
  add("output_sentence", t.output_sentence);
  add("output_mention1", t.output_mention1);
  add("output_mention2", t.output_mention2);
  add("output_bias", t.output_bias);
}

Eigen::VectorXd sigmoid(const Eigen::VectorXd& x) {
  return (1.0 + (-x.array()).exp()).inverse().matrix();
}

}  // namespace

REModelParams init_params(const REModelConfig& config, const EmbeddingSet& embeddings) {
  config.validate();
  if (embeddings.vectors.rows() != config.word_dim) {
    throw ValidationError("embedding dimension " +
                          std::to_string(embeddings.vectors.rows()) +
                          " does not match configured word_dim " +
                          std::to_string(config.word_dim));
  }
  REModelParams params;
  params.config = config;
  params.vocab = embeddings.vocab;
  params.word_embeddings = embeddings.vectors;
  Rng rng(config.seed);

  params.entity_label_embeddings.resize(config.entity_label_dim,
                                        config.num_entity_types());
  fill_uniform(params.entity_label_embeddings, rng);

  const int hidden = config.resolved_hidden_dim();
  if (config.context_kind == ContextKind::bilstm) {
    init_lstm(params.forward_lstm, hidden, config.word_dim, rng);
    init_lstm(params.backward_lstm, hidden, config.word_dim, rng);
  } else if (config.context_kind == ContextKind::cnn) {
    params.conv_weight.resize(hidden, config.cnn_window * config.word_dim);
    fill_uniform(params.conv_weight, rng);
    params.conv_bias = Eigen::VectorXd::Zero(hidden);
  }

  params.output_sentence.resize(config.num_labels(), config.summary_dim());
  fill_uniform(params.output_sentence, rng);
  params.output_mention1.resize(config.num_labels(), config.entity_label_dim);
  fill_uniform(params.output_mention1, rng);
  params.output_mention2.resize(config.num_labels(), config.entity_label_dim);
  fill_uniform(params.output_mention2, rng);
  params.output_bias = Eigen::VectorXd::Zero(config.num_labels());
  return params;
}

REGradients zero_gradients(const REModelConfig& config) {
  REGradients grads;
  grads.entity_label_embeddings =
      Eigen::MatrixXd::Zero(config.entity_label_dim, config.num_entity_types());
  const int hidden = config.resolved_hidden_dim();
  if (config.context_kind == ContextKind::bilstm) {
    zero_lstm(grads.forward_lstm, hidden, config.word_dim);
    zero_lstm(grads.backward_lstm, hidden, config.word_dim);
  } else if (config.context_kind == ContextKind::cnn) {
    grads.conv_weight =
        Eigen::MatrixXd::Zero(hidden, config.cnn_window * config.word_dim);
    grads.conv_bias = Eigen::VectorXd::Zero(hidden);
  }
  grads.output_sentence =
      Eigen::MatrixXd::Zero(config.num_labels(), config.summary_dim());
  grads.output_mention1 =
      Eigen::MatrixXd::Zero(config.num_labels(), config.entity_label_dim);
  grads.output_mention2 =
      Eigen::MatrixXd::Zero(config.num_labels(), config.entity_label_dim);
  grads.output_bias = Eigen::VectorXd::Zero(config.num_labels());
  return grads;
}

std::vector<TensorView> trainable_tensors(REModelParams& params) {
  std::vector<TensorView> out;
  collect_tensors(params, params.config, out);
  return out;
}

std::vector<TensorView> gradient_tensors(REGradients& grads,
                                         const REModelConfig& config) {
  std::vector<TensorView> out;
  collect_tensors(grads, config, out);
  return out;
}

EmbeddedExample embed_sentence(const REModelParams& params,
                               const RelationExample& example) {
  EmbeddedExample embedded;
  embedded.word_vectors.reserve(example.token_ids.size());
  const Eigen::Index vocab_size = params.word_embeddings.cols();
  for (int32_t id : example.token_ids) {
    if (id >= 0 && id < vocab_size) {
      embedded.word_vectors.push_back(params.word_embeddings.col(id));
    } else {
      embedded.word_vectors.push_back(
          Eigen::VectorXd::Zero(params.config.word_dim));
    }
  }
  embedded.label1 = params.entity_label_embeddings.col(
      params.config.entity_type_id(example.mention1.entity_type));
  embedded.label2 = params.entity_label_embeddings.col(
      params.config.entity_type_id(example.mention2.entity_type));
  return embedded;
}

namespace {

// One LSTM direction. Step s consumes position n-1-s when reversed; caches
// are indexed by step.
struct LstmCache {
  std::vector<Eigen::VectorXd> gate_i, gate_f, gate_o, cand, cell, tanh_cell, hidden;
};

LstmCache lstm_run(const LstmWeights& w, const std::vector<Eigen::VectorXd>& words,
                   bool reversed) {
  const int n = static_cast<int>(words.size());
  const Eigen::Index hidden_dim = w.b_input.size();
  LstmCache cache;
  cache.gate_i.reserve(n);
  cache.gate_f.reserve(n);
  cache.gate_o.reserve(n);
  cache.cand.reserve(n);
  cache.cell.reserve(n);
  cache.tanh_cell.reserve(n);
  cache.hidden.reserve(n);
  Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(hidden_dim);
  Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(hidden_dim);
  for (int s = 0; s < n; ++s) {
    const Eigen::VectorXd& x = words[reversed ? n - 1 - s : s];
    Eigen::VectorXd i = sigmoid(w.wx_input * x + w.wh_input * h_prev + w.b_input);
    Eigen::VectorXd f = sigmoid(w.wx_forget * x + w.wh_forget * h_prev + w.b_forget);
    Eigen::VectorXd o = sigmoid(w.wx_output * x + w.wh_output * h_prev + w.b_output);
    Eigen::VectorXd g =
        (w.wx_cell * x + w.wh_cell * h_prev + w.b_cell).array().tanh();
    Eigen::VectorXd c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
    Eigen::VectorXd tanh_c = c.array().tanh();
    Eigen::VectorXd h = o.cwiseProduct(tanh_c);
    h_prev = h;
    c_prev = c;
    cache.gate_i.push_back(std::move(i));
    cache.gate_f.push_back(std::move(f));
    cache.gate_o.push_back(std::move(o));
    cache.cand.push_back(std::move(g));
    cache.cell.push_back(std::move(c));
    cache.tanh_cell.push_back(std::move(tanh_c));
    cache.hidden.push_back(std::move(h));
  }
  return cache;
}

// Backpropagation through one direction. dh_by_position holds the gradient
// w.r.t. this direction's hidden state at each position; contributions are
// scaled by `scale` before accumulation into `grads`.
void lstm_backprop(const LstmWeights& w, const std::vector<Eigen::VectorXd>& words,
                   const LstmCache& cache,
                   const std::vector<Eigen::VectorXd>& dh_by_position, bool reversed,
                   double scale, LstmWeights& grads) {
  const int n = static_cast<int>(words.size());
  const Eigen::Index hidden_dim = w.b_input.size();
  Eigen::VectorXd dh_carry = Eigen::VectorXd::Zero(hidden_dim);
  Eigen::VectorXd dc_carry = Eigen::VectorXd::Zero(hidden_dim);
  for (int s = n - 1; s >= 0; --s) {
    const int position = reversed ? n - 1 - s : s;
    const Eigen::VectorXd dh = dh_by_position[position] + dh_carry;
    const Eigen::VectorXd& i = cache.gate_i[s];
    const Eigen::VectorXd& f = cache.gate_f[s];
    const Eigen::VectorXd& o = cache.gate_o[s];
    const Eigen::VectorXd& g = cache.cand[s];
    const Eigen::VectorXd& tanh_c = cache.tanh_cell[s];

    const Eigen::VectorXd d_o = dh.cwiseProduct(tanh_c);
    const Eigen::VectorXd dc =
        dc_carry +
        dh.cwiseProduct(o).cwiseProduct(
            (1.0 - tanh_c.array().square()).matrix());
    Eigen::VectorXd df = Eigen::VectorXd::Zero(hidden_dim);
    if (s > 0) df = dc.cwiseProduct(cache.cell[s - 1]);
    const Eigen::VectorXd di = dc.cwiseProduct(g);
    const Eigen::VectorXd dg = dc.cwiseProduct(i);

    const Eigen::VectorXd da_i =
        di.cwiseProduct(i).cwiseProduct((1.0 - i.array()).matrix());
    const Eigen::VectorXd da_f =
        df.cwiseProduct(f).cwiseProduct((1.0 - f.array()).matrix());
    const Eigen::VectorXd da_o =
        d_o.cwiseProduct(o).cwiseProduct((1.0 - o.array()).matrix());
    const Eigen::VectorXd da_g = dg.cwiseProduct((1.0 - g.array().square()).matrix());

    const Eigen::VectorXd& x = words[position];
    grads.wx_input.noalias() += (scale * da_i) * x.transpose();
    grads.wx_forget.noalias() += (scale * da_f) * x.transpose();
    grads.wx_output.noalias() += (scale * da_o) * x.transpose();
    grads.wx_cell.noalias() += (scale * da_g) * x.transpose();
    if (s > 0) {
      const Eigen::VectorXd& h_prev = cache.hidden[s - 1];
      grads.wh_input.noalias() += (scale * da_i) * h_prev.transpose();
      grads.wh_forget.noalias() += (scale * da_f) * h_prev.transpose();
      grads.wh_output.noalias() += (scale * da_o) * h_prev.transpose();
      grads.wh_cell.noalias() += (scale * da_g) * h_prev.transpose();
    }
    grads.b_input += scale * da_i;
    grads.b_forget += scale * da_f;
    grads.b_output += scale * da_o;
    grads.b_cell += scale * da_g;

    dh_carry = w.wh_input.transpose() * da_i + w.wh_forget.transpose() * da_f +
               w.wh_output.transpose() * da_o + w.wh_cell.transpose() * da_g;
    dc_carry = dc.cwiseProduct(f);
  }
}

Eigen::VectorXd conv_window(const std::vector<Eigen::VectorXd>& words, int center,
                            int window, int word_dim) {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(window * word_dim);
  const int half = (window - 1) / 2;
  const int n = static_cast<int>(words.size());
  for (int slot = 0; slot < window; ++slot) {
    const int position = center - half + slot;
    if (position < 0 || position >= n) continue;  // zero padding
    z.segment(static_cast<Eigen::Index>(slot) * word_dim, word_dim) = words[position];
  }
  return z;
}

struct GroupBounds {
  std::array<std::pair<int, int>, 5> half_open;  // [begin, end) per group
};

GroupBounds group_bounds(int sentence_length, const EntityMention& mention1,
                         const EntityMention& mention2) {
  const int n = sentence_length;
  auto check_span = [n](const EntityMention& m, const char* which) {
    if (m.begin < 0 || m.begin > m.end || m.end >= n) {
      throw ValidationError(std::string(which) + " span [" +
                            std::to_string(m.begin) + ", " + std::to_string(m.end) +
                            "] out of range for " + std::to_string(n) + " tokens");
    }
  };
  check_span(mention1, "mention1");
  check_span(mention2, "mention2");
  if (mention1.end >= mention2.begin) {
    throw ValidationError("mentions overlap or are out of order: mention1 ends at " +
                          std::to_string(mention1.end) + ", mention2 begins at " +
                          std::to_string(mention2.begin));
  }
  GroupBounds bounds;
  bounds.half_open = {{{0, mention1.begin},
                       {mention1.begin, mention1.end + 1},
                       {mention1.end + 1, mention2.begin},
                       {mention2.begin, mention2.end + 1},
                       {mention2.end + 1, n}}};
  return bounds;
}

}  // namespace

std::vector<Eigen::VectorXd> bilstm_forward(const REModelParams& params,
                                            const std::vector<Eigen::VectorXd>& words) {
  if (words.empty()) throw ValidationError("cannot run the context layer on an empty sentence");
  const LstmCache fwd = lstm_run(params.forward_lstm, words, false);
  const LstmCache bwd = lstm_run(params.backward_lstm, words, true);
  const int n = static_cast<int>(words.size());
  const Eigen::Index hidden_dim = params.forward_lstm.b_input.size();
  std::vector<Eigen::VectorXd> out;
  out.reserve(n);
  for (int t = 0; t < n; ++t) {
    Eigen::VectorXd h(2 * hidden_dim);
    h.head(hidden_dim) = fwd.hidden[t];
    h.tail(hidden_dim) = bwd.hidden[n - 1 - t];  // step n-1-t covers position t
    out.push_back(std::move(h));
  }
  return out;
}

std::vector<Eigen::VectorXd> cnn_forward(const REModelParams& params,
                                         const std::vector<Eigen::VectorXd>& words) {
  if (words.empty()) throw ValidationError("cannot run the context layer on an empty sentence");
  const int n = static_cast<int>(words.size());
  std::vector<Eigen::VectorXd> out;
  out.reserve(n);
  for (int t = 0; t < n; ++t) {
    const Eigen::VectorXd z =
        conv_window(words, t, params.config.cnn_window, params.config.word_dim);
    out.push_back((params.conv_weight * z + params.conv_bias).array().tanh());
  }
  return out;
}

std::vector<Eigen::VectorXd> context_forward(const REModelParams& params,
                                             const std::vector<Eigen::VectorXd>& words) {
  switch (params.config.context_kind) {
    case ContextKind::pass_through: return words;
    case ContextKind::bilstm: return bilstm_forward(params, words);
    case ContextKind::cnn: return cnn_forward(params, words);
  }
  throw ValidationError("invalid context kind");
}

Eigen::VectorXd summarize(const std::vector<Eigen::VectorXd>& hidden,
                          const EntityMention& mention1,
                          const EntityMention& mention2) {
  if (hidden.empty()) throw ValidationError("cannot summarize an empty sentence");
  const GroupBounds bounds =
      group_bounds(static_cast<int>(hidden.size()), mention1, mention2);
  const Eigen::Index dim = hidden[0].size();
  Eigen::VectorXd summary = Eigen::VectorXd::Zero(5 * dim);
  for (int group = 0; group < 5; ++group) {
    const auto [begin, end] = bounds.half_open[static_cast<size_t>(group)];
    if (begin >= end) continue;  // empty group stays zero
    auto block = summary.segment(group * dim, dim);
    block = hidden[begin];
    for (int t = begin + 1; t < end; ++t) {
      block = block.cwiseMax(hidden[t]);
    }
  }
  return summary;
}

Eigen::VectorXd output_layer(const REModelParams& params, const Eigen::VectorXd& summary,
                             const Eigen::VectorXd& label1,
                             const Eigen::VectorXd& label2) {
  return softmax(params.output_sentence * summary + params.output_mention1 * label1 +
                 params.output_mention2 * label2 + params.output_bias);
}

namespace {

int argmax_lowest(const Eigen::VectorXd& values) {
  int best = 0;
  for (int i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace

Prediction predict_with_vectors(const REModelParams& params,
                                const std::vector<Eigen::VectorXd>& word_vectors,
                                const RelationExample& example) {
  const std::vector<Eigen::VectorXd> hidden = context_forward(params, word_vectors);
  const Eigen::VectorXd summary = summarize(hidden, example.mention1, example.mention2);
  const Eigen::VectorXd label1 = params.entity_label_embeddings.col(
      params.config.entity_type_id(example.mention1.entity_type));
  const Eigen::VectorXd label2 = params.entity_label_embeddings.col(
      params.config.entity_type_id(example.mention2.entity_type));
  Prediction prediction;
  prediction.probabilities = output_layer(params, summary, label1, label2);
  prediction.label_id = argmax_lowest(prediction.probabilities);
  prediction.label = params.config.label_set[static_cast<size_t>(prediction.label_id)];
  return prediction;
}

Prediction predict(const REModelParams& params, const RelationExample& example) {
  const EmbeddedExample embedded = embed_sentence(params, example);
  return predict_with_vectors(params, embedded.word_vectors, example);
}

double loss_and_gradients(const REModelParams& params,
                          const std::vector<const RelationExample*>& batch,
                          REGradients& grads, Rng* dropout_rng) {
  if (batch.empty()) throw ValidationError("empty minibatch");
  const REModelConfig& config = params.config;
  const double scale = 1.0 / static_cast<double>(batch.size());
  const double keep_prob = 1.0 - config.dropout_rate;
  double total_loss = 0.0;

  for (const RelationExample* example : batch) {
    const int gold = config.label_id(example->label);
    if (gold < 0) {
      throw ValidationError("example label '" + example->label +
                            "' is outside the configured label set");
    }
    const EmbeddedExample embedded = embed_sentence(params, *example);
    const int n = static_cast<int>(embedded.word_vectors.size());
    if (n == 0) throw ValidationError("example has no tokens");

    // Forward with caches.
    LstmCache fwd_cache, bwd_cache;
    std::vector<Eigen::VectorXd> context(static_cast<size_t>(n));
    const int hidden_dim = config.resolved_hidden_dim();
    std::vector<Eigen::VectorXd> conv_inputs;
    if (config.context_kind == ContextKind::bilstm) {
      fwd_cache = lstm_run(params.forward_lstm, embedded.word_vectors, false);
      bwd_cache = lstm_run(params.backward_lstm, embedded.word_vectors, true);
      for (int t = 0; t < n; ++t) {
        Eigen::VectorXd h(2 * hidden_dim);
        h.head(hidden_dim) = fwd_cache.hidden[t];
        h.tail(hidden_dim) = bwd_cache.hidden[n - 1 - t];
        context[static_cast<size_t>(t)] = std::move(h);
      }
    } else if (config.context_kind == ContextKind::cnn) {
      conv_inputs.reserve(static_cast<size_t>(n));
      for (int t = 0; t < n; ++t) {
        conv_inputs.push_back(conv_window(embedded.word_vectors, t,
                                          config.cnn_window, config.word_dim));
        context[static_cast<size_t>(t)] =
            (params.conv_weight * conv_inputs.back() + params.conv_bias)
                .array()
                .tanh();
      }
    } else {
      context = embedded.word_vectors;
    }

    // Inverted dropout on the context outputs, training only.
    std::vector<Eigen::VectorXd> masks;
    if (dropout_rng && config.dropout_rate > 0) {
      masks.resize(static_cast<size_t>(n));
      for (int t = 0; t < n; ++t) {
        Eigen::VectorXd mask(context[static_cast<size_t>(t)].size());
        for (Eigen::Index j = 0; j < mask.size(); ++j) {
          mask[j] = dropout_rng->uniform() < keep_prob ? 1.0 / keep_prob : 0.0;
        }
        context[static_cast<size_t>(t)] =
            context[static_cast<size_t>(t)].cwiseProduct(mask);
        masks[static_cast<size_t>(t)] = std::move(mask);
      }
    }

    // Summarization with argmax bookkeeping.
    const GroupBounds bounds = group_bounds(n, example->mention1, example->mention2);
    const Eigen::Index context_dim = context[0].size();
    Eigen::VectorXd summary = Eigen::VectorXd::Zero(5 * context_dim);
    std::array<std::vector<int>, 5> argmax;
    for (int group = 0; group < 5; ++group) {
      const auto [begin, end] = bounds.half_open[static_cast<size_t>(group)];
      auto& winners = argmax[static_cast<size_t>(group)];
      winners.assign(static_cast<size_t>(context_dim), -1);
      if (begin >= end) continue;
      auto block = summary.segment(group * context_dim, context_dim);
      block = context[static_cast<size_t>(begin)];
      std::fill(winners.begin(), winners.end(), begin);
      for (int t = begin + 1; t < end; ++t) {
        const Eigen::VectorXd& h = context[static_cast<size_t>(t)];
        for (Eigen::Index j = 0; j < context_dim; ++j) {
          if (h[j] > block[j]) {
            block[j] = h[j];
            winners[static_cast<size_t>(j)] = t;
          }
        }
      }
    }

    const Eigen::VectorXd logits = params.output_sentence * summary +
                                   params.output_mention1 * embedded.label1 +
                                   params.output_mention2 * embedded.label2 +
                                   params.output_bias;
    const double peak = logits.maxCoeff();
    const Eigen::VectorXd shifted_exp = (logits.array() - peak).exp();
    const double log_norm = peak + std::log(shifted_exp.sum());
    total_loss -= scale * (logits[gold] - log_norm);
    const Eigen::VectorXd probs = shifted_exp / shifted_exp.sum();

    // Backward: softmax cross-entropy.
    Eigen::VectorXd dlogits = probs;
    dlogits[gold] -= 1.0;

    grads.output_sentence.noalias() += (scale * dlogits) * summary.transpose();
    grads.output_mention1.noalias() += (scale * dlogits) * embedded.label1.transpose();
    grads.output_mention2.noalias() += (scale * dlogits) * embedded.label2.transpose();
    grads.output_bias += scale * dlogits;

    const int type1 = config.entity_type_id(example->mention1.entity_type);
    const int type2 = config.entity_type_id(example->mention2.entity_type);
    grads.entity_label_embeddings.col(type1) +=
        scale * (params.output_mention1.transpose() * dlogits);
    grads.entity_label_embeddings.col(type2) +=
        scale * (params.output_mention2.transpose() * dlogits);

    const Eigen::VectorXd dsummary = params.output_sentence.transpose() * dlogits;

    // Max pooling routes each coordinate's gradient to its winning token.
    std::vector<Eigen::VectorXd> dcontext(
        static_cast<size_t>(n), Eigen::VectorXd::Zero(context_dim));
    for (int group = 0; group < 5; ++group) {
      const auto& winners = argmax[static_cast<size_t>(group)];
      for (Eigen::Index j = 0; j < context_dim; ++j) {
        const int winner = winners[static_cast<size_t>(j)];
        if (winner >= 0) {
          dcontext[static_cast<size_t>(winner)][j] +=
              dsummary[group * context_dim + j];
        }
      }
    }

    if (!masks.empty()) {
      for (int t = 0; t < n; ++t) {
        dcontext[static_cast<size_t>(t)] =
            dcontext[static_cast<size_t>(t)].cwiseProduct(masks[static_cast<size_t>(t)]);
      }
    }

    if (config.context_kind == ContextKind::bilstm) {
      std::vector<Eigen::VectorXd> dh_fwd(static_cast<size_t>(n)),
          dh_bwd(static_cast<size_t>(n));
      for (int t = 0; t < n; ++t) {
        dh_fwd[static_cast<size_t>(t)] =
            dcontext[static_cast<size_t>(t)].head(hidden_dim);
        dh_bwd[static_cast<size_t>(t)] =
            dcontext[static_cast<size_t>(t)].tail(hidden_dim);
      }
      lstm_backprop(params.forward_lstm, embedded.word_vectors, fwd_cache, dh_fwd,
                    false, scale, grads.forward_lstm);
      lstm_backprop(params.backward_lstm, embedded.word_vectors, bwd_cache, dh_bwd,
                    true, scale, grads.backward_lstm);
    } else if (config.context_kind == ContextKind::cnn) {
      for (int t = 0; t < n; ++t) {
        // tanh' needs the pre-dropout activation; recompute it from z_t.
        const Eigen::VectorXd activation =
            (params.conv_weight * conv_inputs[static_cast<size_t>(t)] +
             params.conv_bias)
                .array()
                .tanh();
        const Eigen::VectorXd da = dcontext[static_cast<size_t>(t)].cwiseProduct(
            (1.0 - activation.array().square()).matrix());
        grads.conv_weight.noalias() +=
            (scale * da) * conv_inputs[static_cast<size_t>(t)].transpose();
        grads.conv_bias += scale * da;
      }
    }
    // pass_through: gradients stop at the frozen word embeddings.
  }
  return total_loss;
}

double average_loss(const REModelParams& params,
                    const std::vector<RelationExample>& examples) {
  if (examples.empty()) throw ValidationError("no examples");
  REGradients scratch = zero_gradients(params.config);
  double total = 0.0;
  for (const RelationExample& example : examples) {
    std::vector<const RelationExample*> batch = {&example};
    // Reuse the gradient path with batch scale 1; gradients are discarded.
    total += loss_and_gradients(params, batch, scratch, nullptr);
  }
  return total / static_cast<double>(examples.size());
}

double micro_f1(const std::vector<int>& predicted, const std::vector<int>& gold,
                int no_relation_id) {
  if (predicted.size() != gold.size()) {
    throw ValidationError("prediction/gold length mismatch");
  }
  int64_t tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    const bool pred_rel = predicted[i] != no_relation_id;
    const bool gold_rel = gold[i] != no_relation_id;
    if (pred_rel && gold_rel && predicted[i] == gold[i]) {
      ++tp;
    } else {
      if (pred_rel) ++fp;
      if (gold_rel) ++fn;
    }
  }
  const double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  const double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

namespace {

struct AdamState {
  std::vector<Eigen::ArrayXd> first_moment, second_moment;
  int64_t step = 0;
};

AdamState make_adam_state(const std::vector<TensorView>& tensors) {
  AdamState state;
  state.first_moment.reserve(tensors.size());
  state.second_moment.reserve(tensors.size());
  for (const TensorView& view : tensors) {
    state.first_moment.emplace_back(Eigen::ArrayXd::Zero(view.size));
    state.second_moment.emplace_back(Eigen::ArrayXd::Zero(view.size));
  }
  return state;
}

void adam_step(const std::vector<TensorView>& params,
               const std::vector<TensorView>& grads, AdamState& state,
               const REModelConfig& config) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(state.step));
  for (size_t k = 0; k < params.size(); ++k) {
    Eigen::Map<Eigen::ArrayXd> theta(params[k].data, params[k].size);
    Eigen::Map<const Eigen::ArrayXd> g(grads[k].data, grads[k].size);
    Eigen::ArrayXd& m = state.first_moment[k];
    Eigen::ArrayXd& v = state.second_moment[k];
    m = config.adam_beta1 * m + (1.0 - config.adam_beta1) * g;
    v = config.adam_beta2 * v + (1.0 - config.adam_beta2) * g.square();
    theta -= config.learning_rate * (m / bc1) /
             ((v / bc2).sqrt() + config.adam_epsilon);
  }
}

std::vector<int> predict_ids(const REModelParams& params,
                             const std::vector<RelationExample>& examples) {
  std::vector<int> out;
  out.reserve(examples.size());
  for (const RelationExample& example : examples) {
    out.push_back(predict(params, example).label_id);
  }
  return out;
}

}  // namespace

REModelParams train(const std::vector<RelationExample>& train_examples,
                    const std::vector<RelationExample>& dev_examples,
                    const REModelConfig& config, const EmbeddingSet& embeddings,
                    TrainStats* stats) {
  config.validate();
  if (train_examples.empty()) throw ValidationError("training set is empty");
  auto check_examples = [&config](const std::vector<RelationExample>& examples) {
    for (const RelationExample& example : examples) {
      if (config.label_id(example.label) < 0) {
        throw ValidationError("example label '" + example.label +
                              "' is outside the configured label set");
      }
      config.entity_type_id(example.mention1.entity_type);
      config.entity_type_id(example.mention2.entity_type);
    }
  };
  check_examples(train_examples);
  check_examples(dev_examples);

  REModelParams params = init_params(config, embeddings);
  std::vector<TensorView> param_views = trainable_tensors(params);
  REGradients grads = zero_gradients(config);
  std::vector<TensorView> grad_views = gradient_tensors(grads, config);
  AdamState adam = make_adam_state(param_views);
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ull);

  std::vector<int> gold_dev;
  gold_dev.reserve(dev_examples.size());
  for (const RelationExample& example : dev_examples) {
    gold_dev.push_back(config.label_id(example.label));
  }
  const int no_rel = config.no_relation_id();

  std::vector<size_t> order(train_examples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  REModelParams best = params;
  double best_f1 = -1.0;
  int best_epoch = -1;
  int epochs_without_improvement = 0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(config.minibatch_size)) {
      const size_t stop =
          std::min(order.size(), start + static_cast<size_t>(config.minibatch_size));
      std::vector<const RelationExample*> batch;
      batch.reserve(stop - start);
      for (size_t k = start; k < stop; ++k) {
        batch.push_back(&train_examples[order[k]]);
      }
      for (const TensorView& view : grad_views) {
        Eigen::Map<Eigen::ArrayXd>(view.data, view.size).setZero();
      }
      const double batch_loss = loss_and_gradients(params, batch, grads, &rng);
      epoch_loss += batch_loss * static_cast<double>(batch.size());
      adam_step(param_views, grad_views, adam, config);
    }
    if (stats) {
      stats->epoch_train_loss.push_back(epoch_loss /
                                        static_cast<double>(order.size()));
    }

    if (!dev_examples.empty()) {
      const double dev_f1 = micro_f1(predict_ids(params, dev_examples), gold_dev, no_rel);
      if (stats) stats->epoch_dev_f1.push_back(dev_f1);
      if (dev_f1 > best_f1) {
        best_f1 = dev_f1;
        best = params;
        best_epoch = epoch;
        epochs_without_improvement = 0;
      } else if (++epochs_without_improvement >= config.patience) {
        break;
      }
    }
  }
  if (stats) stats->best_epoch = best_epoch;
  return dev_examples.empty() ? params : best;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& matrix) {
  json data = json::array();
  for (Eigen::Index i = 0; i < matrix.size(); ++i) data.push_back(matrix.data()[i]);
  return json{{"rows", matrix.rows()}, {"cols", matrix.cols()}, {"data", std::move(data)}};
}

void matrix_from_json(const json& j, Eigen::MatrixXd& matrix, const std::string& name) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ValidationError("checkpoint tensor '" + name + "' has " +
                          std::to_string(data.size()) + " values for shape " +
                          std::to_string(rows) + "x" + std::to_string(cols));
  }
  matrix.resize(rows, cols);
  for (Eigen::Index i = 0; i < matrix.size(); ++i) {
    matrix.data()[i] = data[static_cast<size_t>(i)].get<double>();
  }
}

constexpr const char* kCheckpointFormat = "xlre-re-model";
constexpr int kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const REModelParams& params, const std::string& path) {
  json config{{"context_kind", to_string(params.config.context_kind)},
              {"word_dim", params.config.word_dim},
              {"entity_label_dim", params.config.entity_label_dim},
              {"hidden_dim", params.config.hidden_dim},
              {"cnn_window", params.config.cnn_window},
              {"dropout_rate", params.config.dropout_rate},
              {"learning_rate", params.config.learning_rate},
              {"adam_beta1", params.config.adam_beta1},
              {"adam_beta2", params.config.adam_beta2},
              {"adam_epsilon", params.config.adam_epsilon},
              {"max_epochs", params.config.max_epochs},
              {"patience", params.config.patience},
              {"minibatch_size", params.config.minibatch_size},
              {"seed", params.config.seed},
              {"label_set", params.config.label_set},
              {"entity_type_set", params.config.entity_type_set}};

  json tensors;
  tensors["word_embeddings"] = matrix_to_json(params.word_embeddings);
  REModelParams& mutable_params = const_cast<REModelParams&>(params);
  for (const TensorView& view : trainable_tensors(mutable_params)) {
    json data = json::array();
    for (Eigen::Index i = 0; i < view.size; ++i) data.push_back(view.data[i]);
    tensors[view.name] = json{{"rows", view.size}, {"cols", 1}, {"data", std::move(data)}};
  }

  json checkpoint{{"format", kCheckpointFormat},
                  {"version", kCheckpointVersion},
                  {"config", std::move(config)},
                  {"vocab", params.vocab.words},
                  {"tensors", std::move(tensors)}};
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write checkpoint file: " + path);
  out << checkpoint.dump() << '\n';
}

REModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint file: " + path);
  json checkpoint;
  try {
    in >> checkpoint;
  } catch (const json::exception& e) {
    throw ValidationError(path + ": malformed checkpoint: " + e.what());
  }
  try {
    if (checkpoint.at("format").get<std::string>() != kCheckpointFormat) {
      throw ValidationError(path + ": not an RE model checkpoint");
    }
    if (checkpoint.at("version").get<int>() != kCheckpointVersion) {
      throw ValidationError(path + ": unsupported checkpoint version " +
                            std::to_string(checkpoint.at("version").get<int>()));
    }
    const json& config_json = checkpoint.at("config");
    REModelConfig config;
    config.context_kind =
        context_kind_from_string(config_json.at("context_kind").get<std::string>());
    config.word_dim = config_json.at("word_dim").get<int>();
    config.entity_label_dim = config_json.at("entity_label_dim").get<int>();
    config.hidden_dim = config_json.at("hidden_dim").get<int>();
    config.cnn_window = config_json.at("cnn_window").get<int>();
    config.dropout_rate = config_json.at("dropout_rate").get<double>();
    config.learning_rate = config_json.at("learning_rate").get<double>();
    config.adam_beta1 = config_json.at("adam_beta1").get<double>();
    config.adam_beta2 = config_json.at("adam_beta2").get<double>();
    config.adam_epsilon = config_json.at("adam_epsilon").get<double>();
    config.max_epochs = config_json.at("max_epochs").get<int>();
    config.patience = config_json.at("patience").get<int>();
    config.minibatch_size = config_json.at("minibatch_size").get<int>();
    config.seed = config_json.at("seed").get<uint64_t>();
    config.label_set = config_json.at("label_set").get<std::vector<std::string>>();
    config.entity_type_set =
        config_json.at("entity_type_set").get<std::vector<std::string>>();
    config.validate();

    REModelParams params;
    params.config = config;
    params.vocab.words = checkpoint.at("vocab").get<std::vector<std::string>>();
    params.vocab.counts.assign(params.vocab.words.size(), 0);
    params.vocab.reindex();

    const json& tensors = checkpoint.at("tensors");
    matrix_from_json(tensors.at("word_embeddings"), params.word_embeddings,
                     "word_embeddings");
    if (params.word_embeddings.rows() != config.word_dim ||
        params.word_embeddings.cols() !=
            static_cast<Eigen::Index>(params.vocab.words.size())) {
      throw ValidationError(path + ": word embedding shape does not match config/vocab");
    }

    // Shape the trainable tensors from the config, then fill by name.
    REModelParams shaped = init_params(config, {params.vocab, params.word_embeddings});
    for (const TensorView& view : trainable_tensors(shaped)) {
      const json& entry = tensors.at(view.name);
      const auto& data = entry.at("data");
      if (static_cast<Eigen::Index>(data.size()) != view.size) {
        throw ValidationError("checkpoint tensor '" + view.name + "' has " +
                              std::to_string(data.size()) + " values, expected " +
                              std::to_string(view.size));
      }
      for (Eigen::Index i = 0; i < view.size; ++i) {
        view.data[i] = data[static_cast<size_t>(i)].get<double>();
      }
    }
    return shaped;
  } catch (const json::exception& e) {
    throw ValidationError(path + ": malformed checkpoint: " + e.what());
  }
}

}  // namespace xlre
