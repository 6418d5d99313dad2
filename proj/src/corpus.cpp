#include "xlre/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xlre/rng.hpp"

namespace xlre {

using nlohmann::json;

void Vocabulary::reindex() {
  index.clear();
  index.reserve(words.size());
  for (size_t i = 0; i < words.size(); ++i) {
    auto [it, inserted] = index.emplace(words[i], static_cast<int32_t>(i));
    (void)it;
    if (!inserted) {
      throw ValidationError("duplicate word in vocabulary: '" + words[i] + "'");
    }
  }
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& sentences,
                            int64_t min_count) {
  if (min_count < 1) throw ValidationError("min_count must be >= 1");
  std::unordered_map<std::string, int64_t> counts;
  for (const auto& sentence : sentences) {
    for (const auto& token : sentence) ++counts[token];
  }
  std::vector<std::pair<std::string, int64_t>> kept;
  kept.reserve(counts.size());
  for (auto& [word, count] : counts) {
    if (count >= min_count) kept.emplace_back(word, count);
  }
  // Descending count, lexicographic tie-break.
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary vocab;
  vocab.words.reserve(kept.size());
  vocab.counts.reserve(kept.size());
  for (auto& [word, count] : kept) {
    vocab.words.push_back(word);
    vocab.counts.push_back(count);
  }
  vocab.reindex();
  return vocab;
}

TokenizedCorpus tokenize(const std::vector<std::vector<std::string>>& sentences,
                         const Vocabulary& vocab) {
  TokenizedCorpus corpus;
  corpus.sentences.reserve(sentences.size());
  for (const auto& sentence : sentences) {
    std::vector<int32_t> ids;
    ids.reserve(sentence.size());
    for (const auto& token : sentence) {
      const int32_t id = vocab.id_of(token);
      if (id != Vocabulary::kUnknownId) ids.push_back(id);
    }
    if (ids.empty()) continue;
    corpus.token_total += static_cast<int64_t>(ids.size());
    corpus.sentences.push_back(std::move(ids));
  }
  return corpus;
}

std::vector<std::vector<std::string>> read_corpus_file(const std::string& path,
                                                       bool lowercase) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open corpus file: " + path);
  std::vector<std::vector<std::string>> sentences;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> tokens;
    std::istringstream stream(line);
    std::string token;
    while (stream >> token) {
      if (lowercase) {
        for (char& ch : token) {
          ch = static_cast<char>(
              std::tolower(static_cast<unsigned char>(ch)));
        }
      }
      tokens.push_back(std::move(token));
    }
    if (!tokens.empty()) sentences.push_back(std::move(tokens));
  }
  return sentences;
}

void validate_sentence(const AnnotatedSentence& sentence) {
  const int32_t n = static_cast<int32_t>(sentence.tokens.size());
  for (size_t i = 0; i < sentence.mentions.size(); ++i) {
    const EntityMention& m = sentence.mentions[i];
    if (m.begin < 0 || m.begin > m.end || m.end >= n) {
      throw ValidationError("mention " + std::to_string(i) + " span [" +
                            std::to_string(m.begin) + ", " + std::to_string(m.end) +
                            "] out of range for " + std::to_string(n) + " tokens");
    }
  }
  const int32_t mention_count = static_cast<int32_t>(sentence.mentions.size());
  std::set<std::pair<int32_t, int32_t>> seen_pairs;
  for (const Relation& rel : sentence.relations) {
    if (rel.m1 < 0 || rel.m1 >= mention_count || rel.m2 < 0 ||
        rel.m2 >= mention_count) {
      throw ValidationError("relation references mention index " +
                            std::to_string(std::max(rel.m1, rel.m2)) + " of " +
                            std::to_string(mention_count));
    }
    if (rel.m1 == rel.m2) {
      throw ValidationError("relation references the same mention twice");
    }
    if (sentence.mentions[rel.m1].end >= sentence.mentions[rel.m2].begin) {
      throw ValidationError(
          "relation mention " + std::to_string(rel.m1) +
          " must lie strictly left of mention " + std::to_string(rel.m2));
    }
    const auto key = std::minmax(rel.m1, rel.m2);
    if (!seen_pairs.insert(key).second) {
      throw ValidationError("multiple gold labels for mention pair (" +
                            std::to_string(key.first) + ", " +
                            std::to_string(key.second) + ")");
    }
  }
}

namespace {

AnnotatedSentence sentence_from_json(const json& record) {
  AnnotatedSentence sentence;
  sentence.tokens = record.at("tokens").get<std::vector<std::string>>();
  for (const json& m : record.at("mentions")) {
    EntityMention mention;
    mention.begin = m.at("begin").get<int32_t>();
    mention.end = m.at("end").get<int32_t>();
    mention.entity_type = m.at("type").get<std::string>();
    sentence.mentions.push_back(std::move(mention));
  }
  for (const json& r : record.at("relations")) {
    Relation relation;
    relation.m1 = r.at("m1").get<int32_t>();
    relation.m2 = r.at("m2").get<int32_t>();
    relation.label = r.at("label").get<std::string>();
    sentence.relations.push_back(std::move(relation));
  }
  return sentence;
}

json sentence_to_json(const AnnotatedSentence& sentence) {
  json mentions = json::array();
  for (const EntityMention& m : sentence.mentions) {
    mentions.push_back({{"begin", m.begin}, {"end", m.end}, {"type", m.entity_type}});
  }
  json relations = json::array();
  for (const Relation& r : sentence.relations) {
    relations.push_back({{"m1", r.m1}, {"m2", r.m2}, {"label", r.label}});
  }
  return json{{"tokens", sentence.tokens},
              {"mentions", std::move(mentions)},
              {"relations", std::move(relations)}};
}

}  // namespace

std::vector<AnnotatedSentence> load_annotated(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open annotated data file: " + path);
  std::vector<AnnotatedSentence> sentences;
  std::string line;
  int64_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    AnnotatedSentence sentence;
    try {
      sentence = sentence_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(line_number) +
                            ": malformed record: " + e.what());
    }
    try {
      validate_sentence(sentence);
    } catch (const ValidationError& e) {
      throw ValidationError(path + ":" + std::to_string(line_number) + ": " +
                            e.what());
    }
    sentences.push_back(std::move(sentence));
  }
  return sentences;
}

void save_annotated(const std::vector<AnnotatedSentence>& sentences,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write annotated data file: " + path);
  for (const AnnotatedSentence& sentence : sentences) {
    validate_sentence(sentence);
    out << sentence_to_json(sentence).dump() << '\n';
  }
}

std::vector<RelationExample> generate_candidates(const AnnotatedSentence& sentence,
                                                 const Vocabulary& vocab) {
  validate_sentence(sentence);
  std::vector<int32_t> ids;
  ids.reserve(sentence.tokens.size());
  for (const std::string& token : sentence.tokens) ids.push_back(vocab.id_of(token));

  std::map<std::pair<int32_t, int32_t>, std::string> gold;
  for (const Relation& rel : sentence.relations) {
    gold[std::minmax(rel.m1, rel.m2)] = rel.label;
  }

  std::vector<RelationExample> candidates;
  const int32_t k = static_cast<int32_t>(sentence.mentions.size());
  for (int32_t i = 0; i < k; ++i) {
    for (int32_t j = i + 1; j < k; ++j) {
      const EntityMention& a = sentence.mentions[i];
      const EntityMention& b = sentence.mentions[j];
      RelationExample example;
      if (a.end < b.begin) {
        example.mention1 = a;
        example.mention2 = b;
      } else if (b.end < a.begin) {
        example.mention1 = b;
        example.mention2 = a;
      } else {
        continue;  // overlapping spans: no valid left/right grouping
      }
      example.token_ids = ids;
      auto it = gold.find({i, j});
      example.label = it == gold.end() ? kNoRelationLabel : it->second;
      candidates.push_back(std::move(example));
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const RelationExample& a, const RelationExample& b) {
                     return std::tie(a.mention1.begin, a.mention1.end,
                                     a.mention2.begin, a.mention2.end) <
                            std::tie(b.mention1.begin, b.mention1.end,
                                     b.mention2.begin, b.mention2.end);
                   });
  return candidates;
}

SplitIndices split_indices(size_t count, double train_ratio, double dev_ratio,
                           double test_ratio, uint64_t seed) {
  if (train_ratio <= 0 || dev_ratio <= 0 || test_ratio <= 0) {
    throw ValidationError("split ratios must be positive");
  }
  if (std::abs(train_ratio + dev_ratio + test_ratio - 1.0) > 1e-9) {
    throw ValidationError("split ratios must sum to 1");
  }
  if (count < 3) {
    throw ValidationError("need at least 3 documents to split, got " +
                          std::to_string(count));
  }
  std::vector<size_t> order(count);
  for (size_t i = 0; i < count; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  size_t n_train = static_cast<size_t>(
      std::llround(static_cast<double>(count) * train_ratio));
  n_train = std::min(n_train, count);
  size_t n_dev =
      static_cast<size_t>(std::llround(static_cast<double>(count) * dev_ratio));
  n_dev = std::min(n_dev, count - n_train);

  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + n_train);
  out.dev.assign(order.begin() + n_train, order.begin() + n_train + n_dev);
  out.test.assign(order.begin() + n_train + n_dev, order.end());
  return out;
}

BilingualDictionary load_dictionary(const std::string& path,
                                    int64_t* duplicates_dropped) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dictionary file: " + path);
  BilingualDictionary dict;
  std::set<std::string> seen_targets;
  int64_t dropped = 0;
  std::string line;
  int64_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size()) {
      throw ValidationError(path + ":" + std::to_string(line_number) +
                            ": expected two tab-separated columns");
    }
    std::string source = line.substr(0, tab);
    std::string target = line.substr(tab + 1);
    if (!seen_targets.insert(target).second) {
      ++dropped;
      continue;
    }
    dict.pairs.emplace_back(std::move(source), std::move(target));
  }
  if (duplicates_dropped) *duplicates_dropped = dropped;
  return dict;
}

void save_dictionary(const BilingualDictionary& dict, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write dictionary file: " + path);
  for (const auto& [source, target] : dict.pairs) {
    out << source << '\t' << target << '\n';
  }
}

}  // namespace xlre
