#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "xlre/corpus.hpp"
#include "xlre/embeddings.hpp"
#include "xlre/mapping.hpp"
#include "xlre/remodel.hpp"

namespace xlre {

struct LabelCounts {
  int64_t tp = 0, fp = 0, fn = 0;
};

// Micro-averaged precision/recall/F1 over non-"O" candidates, as percentages.
struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int64_t tp = 0, fp = 0, fn = 0;
  std::map<std::string, LabelCounts> per_label;  // non-"O" labels only
};

EvalReport evaluate(const std::vector<std::string>& predictions,
                    const std::vector<std::string>& gold,
                    const std::vector<std::string>& label_set);

std::string report_to_json(const EvalReport& report);
std::string report_table(const EvalReport& report, const std::string& title);

// Applies a source-language model to a target-language example: target word
// vectors are projected through the mapping, entity label embeddings come
// from the model unchanged (they are language independent).
Prediction transfer_predict(const MappingMatrix& mapping,
                            const REModelParams& source_params,
                            const RelationExample& target_example,
                            const EmbeddingSet& target_embeddings);

enum class EnsembleRule { max_probability, average_probability };

inline constexpr int kDefaultEnsembleSize = 5;

// Combined prediction over models sharing one label set. max_probability
// picks the label whose best per-model probability is highest; ties break to
// the lower label id. `probabilities` holds the combined per-label scores.
Prediction ensemble_predict(const std::vector<const REModelParams*>& models,
                            const RelationExample& example,
                            EnsembleRule rule = EnsembleRule::max_probability);

// Ensemble combination of transfer predictions (one shared mapping).
Prediction ensemble_transfer_predict(const std::vector<const REModelParams*>& models,
                                     const MappingMatrix& mapping,
                                     const RelationExample& target_example,
                                     const EmbeddingSet& target_embeddings,
                                     EnsembleRule rule = EnsembleRule::max_probability);

struct SweepResult {
  std::vector<std::pair<int, double>> rows;  // (dictionary size, dev F1), sizes increasing
};

std::string sweep_to_csv(const SweepResult& result);

// Re-learns a regular mapping on the top-`size` pairs of the
// frequency-ordered dictionary for each requested size and records the
// transfer F1 on the target dev candidates (which carry gold labels).
SweepResult dictionary_sweep(const std::vector<int>& sizes,
                             const BilingualDictionary& full_dictionary,
                             const EmbeddingSet& source_embeddings,
                             const EmbeddingSet& target_embeddings,
                             const REModelParams& source_params,
                             const std::vector<RelationExample>& target_dev);

// Reorders lexicon pairs by descending target-word frequency (ties by word),
// dropping pairs whose target word is missing from the vocabulary.
BilingualDictionary frequency_ordered_dictionary(const BilingualDictionary& lexicon,
                                                 const Vocabulary& target_vocab);

// Side-by-side transfer evaluation of the three supervised mapping kinds.
// Orthogonal and self-learned mappings pair with a model trained on
// length-normalized source embeddings and project normalized target
// embeddings; the regular mapping uses the raw-embedding model.
struct MappingComparisonInputs {
  EmbeddingSet source_embeddings;  // raw
  EmbeddingSet target_embeddings;  // raw
  BilingualDictionary dictionary;  // frequency-ordered
  int dictionary_size = 1000;
  const REModelParams* raw_model = nullptr;
  const REModelParams* normalized_model = nullptr;
  std::vector<RelationExample> target_dev;
  std::string language = "target";
  int self_learn_iters = 10;
  int induce_top_k = kDefaultInduceTopK;
};

struct MappingComparisonRow {
  std::string mapping;  // "regular" | "orthogonal" | "self-learn"
  std::string language;
  EvalReport report;
};

std::vector<MappingComparisonRow> compare_mappings(const MappingComparisonInputs& inputs);
std::string comparison_table(const std::vector<MappingComparisonRow>& rows);

struct SyntheticConfig {
  int vocab_size = 2000;         // >= 100
  int64_t corpus_tokens = 200000;  // >= 10 * vocab_size
  int annotated_sentences = 3000;
  uint64_t seed = 1;

  void validate() const;
};

// Two-language benchmark with a planted bijective lexicon: the target corpus
// is the token-wise image of the source corpus, relation labels are decided
// by trigger tokens between the mentions, and gold annotations coincide
// across languages.
struct SyntheticBenchmark {
  std::vector<std::vector<std::string>> source_corpus;
  std::vector<std::vector<std::string>> target_corpus;
  BilingualDictionary lexicon;  // (source word, target word), bijective
  std::vector<AnnotatedSentence> source_annotated;
  std::vector<AnnotatedSentence> target_annotated;
  std::vector<std::string> label_set;        // relation labels plus "O"
  std::vector<std::string> entity_type_set;
};

SyntheticBenchmark generate_synthetic(const SyntheticConfig& config);

}  // namespace xlre
