#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "xlre/errors.hpp"

namespace xlre {

// Label assigned to candidate entity pairs that have no gold relation.
inline constexpr const char* kNoRelationLabel = "O";

// Bijective word <-> id map with occurrence counts. Ids are dense in
// [0, size()) and ordered by descending count, lexicographic tie-break.
struct Vocabulary {
  static constexpr int32_t kUnknownId = -1;

  std::vector<std::string> words;   // id -> word
  std::vector<int64_t> counts;      // id -> occurrence count
  std::unordered_map<std::string, int32_t> index;  // word -> id

  int32_t size() const { return static_cast<int32_t>(words.size()); }

  int32_t id_of(const std::string& word) const {
    auto it = index.find(word);
    return it == index.end() ? kUnknownId : it->second;
  }

  bool contains(const std::string& word) const { return index.count(word) != 0; }

  // Rebuilds `index` from `words`. Throws ValidationError on duplicates.
  void reindex();
};

// Keeps exactly the words occurring at least min_count times.
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& sentences,
                            int64_t min_count);

struct TokenizedCorpus {
  std::vector<std::vector<int32_t>> sentences;
  int64_t token_total = 0;
};

// Maps words to vocabulary ids. Out-of-vocabulary tokens are dropped, as are
// sentences left empty by the filtering.
TokenizedCorpus tokenize(const std::vector<std::vector<std::string>>& sentences,
                         const Vocabulary& vocab);

// One sentence per line, tokens separated by whitespace. Lowercasing is
// ASCII-only; multi-byte UTF-8 sequences pass through untouched.
std::vector<std::vector<std::string>> read_corpus_file(const std::string& path,
                                                       bool lowercase = false);

struct EntityMention {
  int32_t begin = 0;  // token index, inclusive
  int32_t end = 0;    // token index, inclusive
  std::string entity_type;
};

// Gold relation between two mentions of a sentence; mentions[m1] must lie
// strictly left of mentions[m2].
struct Relation {
  int32_t m1 = 0;
  int32_t m2 = 0;
  std::string label;
};

struct AnnotatedSentence {
  std::vector<std::string> tokens;
  std::vector<EntityMention> mentions;
  std::vector<Relation> relations;
};

struct RelationExample {
  std::vector<int32_t> token_ids;
  EntityMention mention1;  // mention1.end < mention2.begin
  EntityMention mention2;
  std::string label;  // relation type or kNoRelationLabel
};

// Aligned (source word, target word) translation pairs. Target words are
// unique; each target word has exactly one entry.
struct BilingualDictionary {
  std::vector<std::pair<std::string, std::string>> pairs;
};

// Throws ValidationError if spans, relation indices, mention order, or
// pair uniqueness are violated.
void validate_sentence(const AnnotatedSentence& sentence);

// One JSON record per line: {"tokens": [...], "mentions": [{"begin", "end",
// "type"}...], "relations": [{"m1", "m2", "label"}...]}. Errors carry the
// offending line number.
std::vector<AnnotatedSentence> load_annotated(const std::string& path);
void save_annotated(const std::vector<AnnotatedSentence>& sentences,
                    const std::string& path);

// One candidate per unordered mention pair, reordered so mention1 is left of
// mention2. Pairs whose spans overlap are skipped. Candidates are returned
// sorted by span positions; prediction files align with this order.
std::vector<RelationExample> generate_candidates(const AnnotatedSentence& sentence,
                                                 const Vocabulary& vocab);

struct SplitIndices {
  std::vector<size_t> train, dev, test;
};

// Deterministic partition of [0, count) into rounded ratio shares.
SplitIndices split_indices(size_t count, double train_ratio, double dev_ratio,
                           double test_ratio, uint64_t seed);

template <typename T>
struct DatasetSplit {
  std::vector<T> train, dev, test;
};

template <typename T>
DatasetSplit<T> split_dataset(const std::vector<T>& documents, double train_ratio,
                              double dev_ratio, double test_ratio, uint64_t seed) {
  const SplitIndices idx =
      split_indices(documents.size(), train_ratio, dev_ratio, test_ratio, seed);
  DatasetSplit<T> out;
  out.train.reserve(idx.train.size());
  out.dev.reserve(idx.dev.size());
  out.test.reserve(idx.test.size());
  for (size_t i : idx.train) out.train.push_back(documents[i]);
  for (size_t i : idx.dev) out.dev.push_back(documents[i]);
  for (size_t i : idx.test) out.test.push_back(documents[i]);
  return out;
}

// Two-column tab-separated file: source word, target word. Later entries
// for an already-seen target word are dropped; the count of dropped lines is
// reported through `duplicates_dropped` when non-null.
BilingualDictionary load_dictionary(const std::string& path,
                                    int64_t* duplicates_dropped = nullptr);
void save_dictionary(const BilingualDictionary& dict, const std::string& path);

}  // namespace xlre
