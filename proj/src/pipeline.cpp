#include "xlre/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xlre/rng.hpp"

namespace xlre {

using nlohmann::json;

EvalReport evaluate(const std::vector<std::string>& predictions,
                    const std::vector<std::string>& gold,
                    const std::vector<std::string>& label_set) {
  if (predictions.size() != gold.size()) {
    throw ValidationError("prediction count " + std::to_string(predictions.size()) +
                          " does not match gold count " + std::to_string(gold.size()));
  }
  const std::set<std::string> known(label_set.begin(), label_set.end());
  auto check = [&known](const std::string& label, const char* which) {
    if (!known.count(label)) {
      throw ValidationError(std::string(which) + " label '" + label +
                            "' is outside the label set");
    }
  };

  EvalReport report;
  for (const std::string& label : label_set) {
    if (label != kNoRelationLabel) report.per_label[label];  // stable row set
  }
  for (size_t i = 0; i < predictions.size(); ++i) {
    const std::string& pred = predictions[i];
    const std::string& truth = gold[i];
    check(pred, "predicted");
    check(truth, "gold");
    const bool pred_rel = pred != kNoRelationLabel;
    const bool gold_rel = truth != kNoRelationLabel;
    if (pred_rel && gold_rel && pred == truth) {
      ++report.tp;
      ++report.per_label[pred].tp;
    } else {
      if (pred_rel) {
        ++report.fp;
        ++report.per_label[pred].fp;
      }
      if (gold_rel) {
        ++report.fn;
        ++report.per_label[truth].fn;
      }
    }
  }
  report.precision =
      report.tp + report.fp > 0
          ? 100.0 * static_cast<double>(report.tp) / (report.tp + report.fp)
          : 0.0;
  report.recall =
      report.tp + report.fn > 0
          ? 100.0 * static_cast<double>(report.tp) / (report.tp + report.fn)
          : 0.0;
  report.f1 = report.precision + report.recall > 0
                  ? 2.0 * report.precision * report.recall /
                        (report.precision + report.recall)
                  : 0.0;
  return report;
}

std::string report_to_json(const EvalReport& report) {
  json per_label;
  for (const auto& [label, counts] : report.per_label) {
    per_label[label] = {{"tp", counts.tp}, {"fp", counts.fp}, {"fn", counts.fn}};
  }
  const json j{{"precision", report.precision},
               {"recall", report.recall},
               {"f1", report.f1},
               {"tp", report.tp},
               {"fp", report.fp},
               {"fn", report.fn},
               {"per_label", std::move(per_label)}};
  return j.dump();
}

std::string report_table(const EvalReport& report, const std::string& title) {
  std::ostringstream out;
  char line[160];
  out << title << '\n';
  std::snprintf(line, sizeof(line), "  %-18s %10s %10s %10s\n", "", "P", "R", "F1");
  out << line;
  std::snprintf(line, sizeof(line), "  %-18s %10.2f %10.2f %10.2f\n", "micro",
                report.precision, report.recall, report.f1);
  out << line;
  std::snprintf(line, sizeof(line), "  %-18s %10s %10s %10s\n", "label", "TP", "FP",
                "FN");
  out << line;
  for (const auto& [label, counts] : report.per_label) {
    std::snprintf(line, sizeof(line), "  %-18s %10lld %10lld %10lld\n", label.c_str(),
                  static_cast<long long>(counts.tp), static_cast<long long>(counts.fp),
                  static_cast<long long>(counts.fn));
    out << line;
  }
  return out.str();
}

Prediction transfer_predict(const MappingMatrix& mapping,
                            const REModelParams& source_params,
                            const RelationExample& target_example,
                            const EmbeddingSet& target_embeddings) {
  if (mapping.dim() != source_params.config.word_dim) {
    throw ValidationError("mapping dimension " + std::to_string(mapping.dim()) +
                          " does not match model word_dim " +
                          std::to_string(source_params.config.word_dim));
  }
  if (target_embeddings.vectors.rows() != mapping.matrix.cols()) {
    throw ValidationError("target embedding dimension " +
                          std::to_string(target_embeddings.vectors.rows()) +
                          " does not match mapping dimension " +
                          std::to_string(mapping.dim()));
  }
  const Eigen::Index vocab_size = target_embeddings.vectors.cols();
  std::vector<Eigen::VectorXd> projected;
  projected.reserve(target_example.token_ids.size());
  for (int32_t id : target_example.token_ids) {
    if (id >= 0 && id < vocab_size) {
      projected.push_back(mapping.matrix * target_embeddings.vectors.col(id));
    } else {
      projected.push_back(Eigen::VectorXd::Zero(source_params.config.word_dim));
    }
  }
  // Entity label embeddings are language independent: predict_with_vectors
  // reads them from the source model as-is.
  return predict_with_vectors(source_params, projected, target_example);
}

namespace {

Prediction combine_predictions(const std::vector<Eigen::VectorXd>& model_probs,
                               const REModelConfig& config, EnsembleRule rule) {
  Eigen::VectorXd combined = model_probs[0];
  for (size_t k = 1; k < model_probs.size(); ++k) {
    if (rule == EnsembleRule::max_probability) {
      combined = combined.cwiseMax(model_probs[k]);
    } else {
      combined += model_probs[k];
    }
  }
  if (rule == EnsembleRule::average_probability) {
    combined /= static_cast<double>(model_probs.size());
  }
  Prediction prediction;
  prediction.probabilities = combined;
  int best = 0;
  for (int i = 1; i < combined.size(); ++i) {
    if (combined[i] > combined[best]) best = i;
  }
  prediction.label_id = best;
  prediction.label = config.label_set[static_cast<size_t>(best)];
  return prediction;
}

void check_ensemble(const std::vector<const REModelParams*>& models) {
  if (models.empty()) throw ValidationError("ensemble needs at least one model");
  for (const REModelParams* model : models) {
    if (model->config.label_set != models[0]->config.label_set) {
      throw ValidationError("ensemble models must share one label set");
    }
  }
}

}  // namespace

Prediction ensemble_predict(const std::vector<const REModelParams*>& models,
                            const RelationExample& example, EnsembleRule rule) {
  check_ensemble(models);
  std::vector<Eigen::VectorXd> probs;
  probs.reserve(models.size());
  for (const REModelParams* model : models) {
    probs.push_back(predict(*model, example).probabilities);
  }
  return combine_predictions(probs, models[0]->config, rule);
}

Prediction ensemble_transfer_predict(const std::vector<const REModelParams*>& models,
                                     const MappingMatrix& mapping,
                                     const RelationExample& target_example,
                                     const EmbeddingSet& target_embeddings,
                                     EnsembleRule rule) {
  check_ensemble(models);
  std::vector<Eigen::VectorXd> probs;
  probs.reserve(models.size());
  for (const REModelParams* model : models) {
    probs.push_back(
        transfer_predict(mapping, *model, target_example, target_embeddings)
            .probabilities);
  }
  return combine_predictions(probs, models[0]->config, rule);
}

std::string sweep_to_csv(const SweepResult& result) {
  std::ostringstream out;
  out << "size,f1\n";
  char line[64];
  for (const auto& [size, f1] : result.rows) {
    std::snprintf(line, sizeof(line), "%d,%.4f\n", size, f1);
    out << line;
  }
  return out.str();
}

SweepResult dictionary_sweep(const std::vector<int>& sizes,
                             const BilingualDictionary& full_dictionary,
                             const EmbeddingSet& source_embeddings,
                             const EmbeddingSet& target_embeddings,
                             const REModelParams& source_params,
                             const std::vector<RelationExample>& target_dev) {
  if (sizes.empty()) throw ValidationError("no sweep sizes given");
  if (target_dev.empty()) throw ValidationError("target dev set is empty");
  for (size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] < 1) {
      throw ValidationError("sweep size must be >= 1, got " +
                            std::to_string(sizes[i]));
    }
    if (i > 0 && sizes[i] <= sizes[i - 1]) {
      throw ValidationError("sweep sizes must be strictly increasing");
    }
    if (static_cast<size_t>(sizes[i]) > full_dictionary.pairs.size()) {
      throw ValidationError("sweep size " + std::to_string(sizes[i]) +
                            " exceeds dictionary size " +
                            std::to_string(full_dictionary.pairs.size()));
    }
  }

  std::vector<std::string> gold;
  gold.reserve(target_dev.size());
  for (const RelationExample& example : target_dev) gold.push_back(example.label);

  SweepResult result;
  for (int size : sizes) {
    BilingualDictionary subset;
    subset.pairs.assign(full_dictionary.pairs.begin(),
                        full_dictionary.pairs.begin() + size);
    const AlignedPairSet pairs =
        align_pairs(subset, source_embeddings, target_embeddings);
    const MappingMatrix mapping = learn_regular(pairs);
    std::vector<std::string> predictions;
    predictions.reserve(target_dev.size());
    for (const RelationExample& example : target_dev) {
      predictions.push_back(
          transfer_predict(mapping, source_params, example, target_embeddings).label);
    }
    const EvalReport report =
        evaluate(predictions, gold, source_params.config.label_set);
    result.rows.emplace_back(size, report.f1);
  }
  return result;
}

BilingualDictionary frequency_ordered_dictionary(const BilingualDictionary& lexicon,
                                                 const Vocabulary& target_vocab) {
  // Vocabulary ids are assigned most-frequent-first, and embedding files
  // keep that row order, so ascending id equals descending frequency.
  std::vector<std::pair<int32_t, std::pair<std::string, std::string>>> keyed;
  keyed.reserve(lexicon.pairs.size());
  for (const auto& pair : lexicon.pairs) {
    const int32_t id = target_vocab.id_of(pair.second);
    if (id == Vocabulary::kUnknownId) continue;
    keyed.emplace_back(id, pair);
  }
  std::sort(keyed.begin(), keyed.end());
  BilingualDictionary ordered;
  ordered.pairs.reserve(keyed.size());
  for (auto& [id, pair] : keyed) ordered.pairs.push_back(std::move(pair));
  return ordered;
}

std::vector<MappingComparisonRow> compare_mappings(
    const MappingComparisonInputs& inputs) {
  if (!inputs.raw_model || !inputs.normalized_model) {
    throw ValidationError("mapping comparison needs both source models");
  }
  if (inputs.dictionary_size < 1 ||
      static_cast<size_t>(inputs.dictionary_size) > inputs.dictionary.pairs.size()) {
    throw ValidationError("dictionary_size out of range for the dictionary");
  }
  if (inputs.target_dev.empty()) throw ValidationError("target dev set is empty");

  BilingualDictionary subset;
  subset.pairs.assign(inputs.dictionary.pairs.begin(),
                      inputs.dictionary.pairs.begin() + inputs.dictionary_size);
  const EmbeddingSet source_unit = normalize_lengths(inputs.source_embeddings);
  const EmbeddingSet target_unit = normalize_lengths(inputs.target_embeddings);

  std::vector<std::string> gold;
  gold.reserve(inputs.target_dev.size());
  for (const RelationExample& example : inputs.target_dev) {
    gold.push_back(example.label);
  }
  auto evaluate_mapping = [&](const MappingMatrix& mapping,
                              const REModelParams& model,
                              const EmbeddingSet& target) {
    std::vector<std::string> predictions;
    predictions.reserve(inputs.target_dev.size());
    for (const RelationExample& example : inputs.target_dev) {
      predictions.push_back(transfer_predict(mapping, model, example, target).label);
    }
    return evaluate(predictions, gold, model.config.label_set);
  };

  std::vector<MappingComparisonRow> rows;
  {
    const MappingMatrix mapping = learn_regular(
        align_pairs(subset, inputs.source_embeddings, inputs.target_embeddings));
    rows.push_back({"regular", inputs.language,
                    evaluate_mapping(mapping, *inputs.raw_model,
                                     inputs.target_embeddings)});
  }
  {
    const MappingMatrix mapping =
        learn_orthogonal(align_pairs(subset, source_unit, target_unit));
    rows.push_back({"orthogonal", inputs.language,
                    evaluate_mapping(mapping, *inputs.normalized_model, target_unit)});
  }
  {
    const SelfLearnResult learned =
        self_learn(subset, source_unit, target_unit, inputs.self_learn_iters,
                   inputs.induce_top_k);
    rows.push_back({"self-learn", inputs.language,
                    evaluate_mapping(learned.mapping, *inputs.normalized_model,
                                     target_unit)});
  }
  return rows;
}

std::string comparison_table(const std::vector<MappingComparisonRow>& rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-12s %-16s %8s %8s %8s\n", "mapping",
                "language", "P", "R", "F1");
  out << line;
  for (const MappingComparisonRow& row : rows) {
    std::snprintf(line, sizeof(line), "%-12s %-16s %8.2f %8.2f %8.2f\n",
                  row.mapping.c_str(), row.language.c_str(), row.report.precision,
                  row.report.recall, row.report.f1);
    out << line;
  }
  return out.str();
}

void SyntheticConfig::validate() const {
  if (vocab_size < 100) {
    throw ValidationError("synthetic vocab_size must be >= 100, got " +
                          std::to_string(vocab_size));
  }
  if (corpus_tokens < 10LL * vocab_size) {
    throw ValidationError("synthetic corpus_tokens must be >= 10 * vocab_size");
  }
  if (annotated_sentences < 1) {
    throw ValidationError("synthetic annotated_sentences must be >= 1");
  }
  if (3LL * annotated_sentences > corpus_tokens) {
    throw ValidationError(
        "inconsistent synthetic config: annotated sentences do not fit the "
        "token budget");
  }
}

namespace {

// Entity classes and the relation grammar. Every relation sentence contains
// exactly one trigger token between the two mentions; the trigger decides
// the relation label, so labels are recoverable from the text alone.
enum EntityClass { kPerson = 0, kOrg = 1, kLoc = 2 };

constexpr std::array<const char*, 3> kEntityTypeNames = {"PER", "ORG", "LOC"};
constexpr std::array<const char*, 3> kRelationNames = {"EmployedBy", "BasedIn",
                                                       "BornIn"};
constexpr int kRelationArgs[3][2] = {{kPerson, kOrg}, {kOrg, kLoc}, {kPerson, kLoc}};
constexpr int kTriggersPerRelation = 6;
constexpr int kConnectorCount = 6;

class ZipfSampler {
 public:
  ZipfSampler(size_t n, double exponent) : cumulative_(n) {
    double total = 0.0;
    for (size_t r = 0; r < n; ++r) {
      total += 1.0 / std::pow(static_cast<double>(r) + 2.0, exponent);
      cumulative_[r] = total;
    }
    for (double& c : cumulative_) c /= total;
  }

  size_t sample(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), u);
    return std::min<size_t>(static_cast<size_t>(it - cumulative_.begin()),
                            cumulative_.size() - 1);
  }

 private:
  std::vector<double> cumulative_;
};

struct GrammarWords {
  std::array<std::vector<std::string>, 3> entities;  // by EntityClass
  std::array<std::vector<std::string>, 3> triggers;  // by relation
  std::vector<std::string> connectors;
  std::vector<std::string> fillers;
  std::vector<std::string> all;  // every surface word once
};

std::string padded(const std::string& prefix, int i) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%s%04d", prefix.c_str(), i);
  return buffer;
}

GrammarWords make_grammar_words(int vocab_size) {
  GrammarWords words;
  const int per_entity_class = std::max(8, vocab_size * 12 / 100);
  const std::array<std::string, 3> entity_prefix = {"per", "org", "loc"};
  for (int cls = 0; cls < 3; ++cls) {
    for (int i = 0; i < per_entity_class; ++i) {
      words.entities[static_cast<size_t>(cls)].push_back(
          padded(entity_prefix[static_cast<size_t>(cls)], i));
    }
  }
  const std::array<std::string, 3> trigger_prefix = {"vemp", "vbas", "vbrn"};
  for (int rel = 0; rel < 3; ++rel) {
    for (int i = 0; i < kTriggersPerRelation; ++i) {
      words.triggers[static_cast<size_t>(rel)].push_back(
          padded(trigger_prefix[static_cast<size_t>(rel)], i));
    }
  }
  for (int i = 0; i < kConnectorCount; ++i) {
    words.connectors.push_back(padded("and", i));
  }
  const int used = 3 * per_entity_class + 3 * kTriggersPerRelation + kConnectorCount;
  for (int i = 0; i < vocab_size - used; ++i) {
    words.fillers.push_back(padded("fil", i));
  }
  for (int cls = 0; cls < 3; ++cls) {
    for (const auto& w : words.entities[static_cast<size_t>(cls)]) words.all.push_back(w);
  }
  for (int rel = 0; rel < 3; ++rel) {
    for (const auto& w : words.triggers[static_cast<size_t>(rel)]) words.all.push_back(w);
  }
  for (const auto& w : words.connectors) words.all.push_back(w);
  for (const auto& w : words.fillers) words.all.push_back(w);
  return words;
}

struct SentenceDraw {
  std::vector<std::string> tokens;
  std::vector<EntityMention> mentions;
  std::vector<Relation> relations;
};

class GrammarSampler {
 public:
  GrammarSampler(const GrammarWords& words, Rng& rng)
      : words_(words),
        rng_(rng),
        entity_sampler_(words.entities[0].size(), 0.8),
        filler_sampler_(words.fillers.size(), 0.9) {}

  SentenceDraw relation_sentence() {
    SentenceDraw draw;
    const int rel = static_cast<int>(rng_.below(3));
    append_fillers(draw.tokens, rng_.below(3));
    append_entity(draw, kRelationArgs[rel][0]);
    append_fillers(draw.tokens, rng_.below(2));
    draw.tokens.push_back(
        words_.triggers[static_cast<size_t>(rel)]
                       [rng_.below(words_.triggers[static_cast<size_t>(rel)].size())]);
    append_fillers(draw.tokens, rng_.below(2));
    append_entity(draw, kRelationArgs[rel][1]);
    append_fillers(draw.tokens, rng_.below(3));
    draw.relations.push_back({0, 1, kRelationNames[static_cast<size_t>(rel)]});
    return draw;
  }

  SentenceDraw unrelated_pair_sentence() {
    SentenceDraw draw;
    append_fillers(draw.tokens, rng_.below(3));
    append_entity(draw, static_cast<int>(rng_.below(3)));
    append_fillers(draw.tokens, rng_.below(2));
    draw.tokens.push_back(words_.connectors[rng_.below(words_.connectors.size())]);
    append_fillers(draw.tokens, rng_.below(2));
    append_entity(draw, static_cast<int>(rng_.below(3)));
    append_fillers(draw.tokens, rng_.below(3));
    return draw;
  }

  SentenceDraw triple_entity_sentence() {
    SentenceDraw draw;
    append_fillers(draw.tokens, rng_.below(2));
    append_entity(draw, static_cast<int>(rng_.below(3)));
    draw.tokens.push_back(words_.connectors[rng_.below(words_.connectors.size())]);
    append_entity(draw, static_cast<int>(rng_.below(3)));
    draw.tokens.push_back(words_.connectors[rng_.below(words_.connectors.size())]);
    append_entity(draw, static_cast<int>(rng_.below(3)));
    append_fillers(draw.tokens, rng_.below(2));
    return draw;
  }

  SentenceDraw annotated_sentence() {
    const double u = rng_.uniform();
    if (u < 0.55) return relation_sentence();
    if (u < 0.85) return unrelated_pair_sentence();
    return triple_entity_sentence();
  }

  std::vector<std::string> filler_sentence() {
    std::vector<std::string> tokens;
    append_fillers(tokens, 5 + rng_.below(8));
    return tokens;
  }

 private:
  void append_fillers(std::vector<std::string>& tokens, uint64_t count) {
    for (uint64_t i = 0; i < count; ++i) {
      tokens.push_back(words_.fillers[filler_sampler_.sample(rng_)]);
    }
  }

  void append_entity(SentenceDraw& draw, int cls) {
    const auto& pool = words_.entities[static_cast<size_t>(cls)];
    const int32_t begin = static_cast<int32_t>(draw.tokens.size());
    draw.tokens.push_back(pool[entity_sampler_.sample(rng_)]);
    if (rng_.uniform() < 0.25) {
      draw.tokens.push_back(pool[entity_sampler_.sample(rng_)]);  // two-token span
    }
    const int32_t end = static_cast<int32_t>(draw.tokens.size()) - 1;
    draw.mentions.push_back({begin, end, kEntityTypeNames[static_cast<size_t>(cls)]});
  }

  const GrammarWords& words_;
  Rng& rng_;
  ZipfSampler entity_sampler_;
  ZipfSampler filler_sampler_;
};

}  // namespace

SyntheticBenchmark generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const GrammarWords words = make_grammar_words(config.vocab_size);

  SyntheticBenchmark benchmark;
  benchmark.label_set = {kRelationNames.begin(), kRelationNames.end()};
  std::sort(benchmark.label_set.begin(), benchmark.label_set.end());
  benchmark.label_set.push_back(kNoRelationLabel);
  benchmark.entity_type_set = {kEntityTypeNames.begin(), kEntityTypeNames.end()};
  std::sort(benchmark.entity_type_set.begin(), benchmark.entity_type_set.end());

  // Planted lexicon: bijection onto permuted target surface forms.
  std::vector<size_t> permutation(words.all.size());
  for (size_t i = 0; i < permutation.size(); ++i) permutation[i] = i;
  rng.shuffle(permutation);
  std::unordered_map<std::string, std::string> to_target;
  to_target.reserve(words.all.size());
  for (size_t i = 0; i < words.all.size(); ++i) {
    const std::string target_word = padded("w", static_cast<int>(permutation[i]));
    benchmark.lexicon.pairs.emplace_back(words.all[i], target_word);
    to_target.emplace(words.all[i], target_word);
  }

  int64_t token_total = 0;
  auto push_sentence = [&](std::vector<std::string> tokens) {
    token_total += static_cast<int64_t>(tokens.size());
    benchmark.source_corpus.push_back(std::move(tokens));
  };

  // Coverage pass: every surface form occurs at least three times so both
  // trained vocabularies span the full lexicon.
  for (int pass = 0; pass < 3; ++pass) {
    std::vector<size_t> order(words.all.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<std::string> sentence;
    for (size_t idx : order) {
      sentence.push_back(words.all[idx]);
      if (sentence.size() == 10) {
        push_sentence(std::move(sentence));
        sentence.clear();
      }
    }
    if (!sentence.empty()) push_sentence(std::move(sentence));
  }

  GrammarSampler sampler(words, rng);
  for (int i = 0; i < config.annotated_sentences; ++i) {
    SentenceDraw draw = sampler.annotated_sentence();
    AnnotatedSentence sentence;
    sentence.tokens = draw.tokens;
    sentence.mentions = std::move(draw.mentions);
    sentence.relations = std::move(draw.relations);
    validate_sentence(sentence);
    benchmark.source_annotated.push_back(std::move(sentence));
    push_sentence(std::move(draw.tokens));
  }

  while (token_total < config.corpus_tokens) {
    if (rng.uniform() < 0.5) {
      push_sentence(sampler.annotated_sentence().tokens);
    } else {
      push_sentence(sampler.filler_sentence());
    }
  }

  // Target side: token-wise image of the source under the lexicon.
  benchmark.target_corpus.reserve(benchmark.source_corpus.size());
  for (const auto& sentence : benchmark.source_corpus) {
    std::vector<std::string> mapped;
    mapped.reserve(sentence.size());
    for (const std::string& token : sentence) mapped.push_back(to_target.at(token));
    benchmark.target_corpus.push_back(std::move(mapped));
  }
  benchmark.target_annotated.reserve(benchmark.source_annotated.size());
  for (const AnnotatedSentence& sentence : benchmark.source_annotated) {
    AnnotatedSentence mapped = sentence;
    for (std::string& token : mapped.tokens) token = to_target.at(token);
    benchmark.target_annotated.push_back(std::move(mapped));
  }
  return benchmark;
}

}  // namespace xlre
