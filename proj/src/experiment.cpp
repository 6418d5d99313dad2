#include "xlre/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace xlre {

namespace fs = std::filesystem;
using nlohmann::json;

void RunConfig::validate() const {
  if (output_dir.empty()) throw ValidationError("output_dir is required");
  if (mode != "synthetic" && mode != "files") {
    throw ValidationError("mode must be 'synthetic' or 'files', got '" + mode + "'");
  }
  if (mode == "files") {
    for (const auto& [key, value] :
         {std::make_pair("data.source_corpus", files.source_corpus),
          std::make_pair("data.target_corpus", files.target_corpus),
          std::make_pair("data.source_annotated", files.source_annotated),
          std::make_pair("data.target_annotated", files.target_annotated),
          std::make_pair("data.dictionary", files.dictionary)}) {
      if (value.empty()) {
        throw ValidationError(std::string("files mode requires ") + key);
      }
      if (!fs::exists(value)) {
        throw ValidationError(std::string(key) + " does not exist: " + value);
      }
    }
  }
  if (mapping_kind != "regular" && mapping_kind != "orthogonal" &&
      mapping_kind != "self-learn") {
    throw ValidationError("mapping.kind must be regular, orthogonal or self-learn");
  }
  if (dictionary_size < 1) throw ValidationError("mapping.dictionary_size must be >= 1");
  if (self_learn_iters < 0) throw ValidationError("mapping.self_learn_iters must be >= 0");
  if (induce_top_k < 1) throw ValidationError("mapping.induce_top_k must be >= 1");
  if (ensemble_size < 1) throw ValidationError("ensemble.size must be >= 1");
  embedding.validate();
}

namespace {

int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const int64_t parsed = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return parsed;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': '" + value +
                          "' is not an integer");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double parsed = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return parsed;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': '" + value +
                          "' is not a number");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ValidationError("config key '" + key + "': '" + value +
                        "' is not a boolean");
}

std::string trimmed(const std::string& text) {
  const size_t first = text.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const size_t last = text.find_last_not_of(" \t\r");
  return text.substr(first, last - first + 1);
}

}  // namespace

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  RunConfig config;
  std::string line;
  int64_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const size_t comment = line.find('#');
    if (comment != std::string::npos) line.erase(comment);
    const std::string text = trimmed(line);
    if (text.empty()) continue;
    const size_t eq = text.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(path + ":" + std::to_string(line_number) +
                            ": expected 'key = value'");
    }
    const std::string key = trimmed(text.substr(0, eq));
    const std::string value = trimmed(text.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ValidationError(path + ":" + std::to_string(line_number) +
                            ": expected 'key = value'");
    }

    if (key == "output_dir") config.output_dir = value;
    else if (key == "mode") config.mode = value;
    else if (key == "seed") config.seed = static_cast<uint64_t>(parse_int(key, value));
    else if (key == "synthetic.vocab_size")
      config.synthetic.vocab_size = static_cast<int>(parse_int(key, value));
    else if (key == "synthetic.corpus_tokens")
      config.synthetic.corpus_tokens = parse_int(key, value);
    else if (key == "synthetic.annotated_sentences")
      config.synthetic.annotated_sentences = static_cast<int>(parse_int(key, value));
    else if (key == "data.source_corpus") config.files.source_corpus = value;
    else if (key == "data.target_corpus") config.files.target_corpus = value;
    else if (key == "data.source_annotated") config.files.source_annotated = value;
    else if (key == "data.target_annotated") config.files.target_annotated = value;
    else if (key == "data.dictionary") config.files.dictionary = value;
    else if (key == "data.lowercase") config.files.lowercase = parse_bool(key, value);
    else if (key == "split.train") config.split_train = parse_double(key, value);
    else if (key == "split.dev") config.split_dev = parse_double(key, value);
    else if (key == "split.test") config.split_test = parse_double(key, value);
    else if (key == "embedding.dim")
      config.embedding.dim = static_cast<int>(parse_int(key, value));
    else if (key == "embedding.window")
      config.embedding.window = static_cast<int>(parse_int(key, value));
    else if (key == "embedding.epochs")
      config.embedding.epochs = static_cast<int>(parse_int(key, value));
    else if (key == "embedding.learning_rate")
      config.embedding.learning_rate = parse_double(key, value);
    else if (key == "embedding.min_count")
      config.embedding.min_count = parse_int(key, value);
    else if (key == "mapping.kind") config.mapping_kind = value;
    else if (key == "mapping.dictionary_size")
      config.dictionary_size = static_cast<int>(parse_int(key, value));
    else if (key == "mapping.self_learn_iters")
      config.self_learn_iters = static_cast<int>(parse_int(key, value));
    else if (key == "mapping.induce_top_k")
      config.induce_top_k = static_cast<int>(parse_int(key, value));
    else if (key == "re.context")
      config.re.context_kind = context_kind_from_string(value);
    else if (key == "re.hidden_dim")
      config.re.hidden_dim = static_cast<int>(parse_int(key, value));
    else if (key == "re.entity_label_dim")
      config.re.entity_label_dim = static_cast<int>(parse_int(key, value));
    else if (key == "re.cnn_window")
      config.re.cnn_window = static_cast<int>(parse_int(key, value));
    else if (key == "re.dropout") config.re.dropout_rate = parse_double(key, value);
    else if (key == "re.learning_rate")
      config.re.learning_rate = parse_double(key, value);
    else if (key == "re.max_epochs")
      config.re.max_epochs = static_cast<int>(parse_int(key, value));
    else if (key == "re.patience")
      config.re.patience = static_cast<int>(parse_int(key, value));
    else if (key == "re.minibatch")
      config.re.minibatch_size = static_cast<int>(parse_int(key, value));
    else if (key == "ensemble.size")
      config.ensemble_size = value == "default"
                                 ? kDefaultEnsembleSize
                                 : static_cast<int>(parse_int(key, value));
    else {
      throw ValidationError(path + ":" + std::to_string(line_number) +
                            ": unknown config key '" + key + "'");
    }
  }
  return config;
}

namespace {

template <typename Fn>
void stage(const std::string& name, Fn&& fn) {
  std::cerr << "[xlre] stage " << name << "\n";
  try {
    fn();
  } catch (const ValidationError& e) {
    throw ValidationError("stage '" + name + "': " + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error("stage '" + name + "': " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << content;
}

void write_corpus_file(const std::string& path,
                       const std::vector<std::vector<std::string>>& sentences) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path);
  for (const auto& sentence : sentences) {
    for (size_t i = 0; i < sentence.size(); ++i) {
      if (i) out << ' ';
      out << sentence[i];
    }
    out << '\n';
  }
}

std::vector<RelationExample> all_candidates(
    const std::vector<AnnotatedSentence>& sentences, const Vocabulary& vocab) {
  std::vector<RelationExample> out;
  for (const AnnotatedSentence& sentence : sentences) {
    auto candidates = generate_candidates(sentence, vocab);
    out.insert(out.end(), std::make_move_iterator(candidates.begin()),
               std::make_move_iterator(candidates.end()));
  }
  return out;
}

void derive_label_sets(const std::vector<AnnotatedSentence>& source,
                       const std::vector<AnnotatedSentence>& target,
                       std::vector<std::string>& label_set,
                       std::vector<std::string>& entity_type_set) {
  std::set<std::string> labels;
  std::set<std::string> types;
  for (const auto* sentences : {&source, &target}) {
    for (const AnnotatedSentence& sentence : *sentences) {
      for (const Relation& relation : sentence.relations) labels.insert(relation.label);
      for (const EntityMention& mention : sentence.mentions) {
        types.insert(mention.entity_type);
      }
    }
  }
  labels.erase(kNoRelationLabel);
  label_set.assign(labels.begin(), labels.end());
  label_set.push_back(kNoRelationLabel);
  entity_type_set.assign(types.begin(), types.end());
}

}  // namespace

void run_experiment(const RunConfig& config) {
  config.validate();
  fs::create_directories(config.output_dir);
  const auto artifact = [&config](const std::string& name) {
    return (fs::path(config.output_dir) / name).string();
  };

  std::vector<std::vector<std::string>> source_corpus, target_corpus;
  std::vector<AnnotatedSentence> source_annotated, target_annotated;
  BilingualDictionary lexicon;
  std::vector<std::string> label_set, entity_type_set;
  bool parallel_annotations = false;

  if (config.mode == "synthetic") {
    stage("generate-synthetic", [&] {
      SyntheticConfig synth = config.synthetic;
      synth.seed = config.seed;
      SyntheticBenchmark benchmark = generate_synthetic(synth);
      source_corpus = std::move(benchmark.source_corpus);
      target_corpus = std::move(benchmark.target_corpus);
      source_annotated = std::move(benchmark.source_annotated);
      target_annotated = std::move(benchmark.target_annotated);
      lexicon = std::move(benchmark.lexicon);
      label_set = std::move(benchmark.label_set);
      entity_type_set = std::move(benchmark.entity_type_set);
      parallel_annotations = true;
      write_corpus_file(artifact("source_corpus.txt"), source_corpus);
      write_corpus_file(artifact("target_corpus.txt"), target_corpus);
      save_dictionary(lexicon, artifact("lexicon.tsv"));
      save_annotated(source_annotated, artifact("source_annotated.jsonl"));
      save_annotated(target_annotated, artifact("target_annotated.jsonl"));
    });
  } else {
    stage("load-data", [&] {
      source_corpus = read_corpus_file(config.files.source_corpus,
                                       config.files.lowercase);
      target_corpus = read_corpus_file(config.files.target_corpus,
                                       config.files.lowercase);
      source_annotated = load_annotated(config.files.source_annotated);
      target_annotated = load_annotated(config.files.target_annotated);
      int64_t duplicates = 0;
      lexicon = load_dictionary(config.files.dictionary, &duplicates);
      if (duplicates > 0) {
        std::cerr << "[xlre] dictionary: dropped " << duplicates
                  << " duplicate target entries\n";
      }
      derive_label_sets(source_annotated, target_annotated, label_set,
                        entity_type_set);
    });
  }

  EmbeddingSet source_embeddings, target_embeddings;
  stage("train-embeddings", [&] {
    CbowConfig cbow = config.embedding;
    cbow.seed = config.seed;
    const Vocabulary source_vocab = build_vocabulary(source_corpus, cbow.min_count);
    const TokenizedCorpus source_tokens = tokenize(source_corpus, source_vocab);
    source_embeddings.vocab = source_vocab;
    source_embeddings.vectors = train_cbow(source_tokens, source_vocab, cbow).output;
    save_embeddings(source_embeddings, artifact("source_embeddings.vec"));

    cbow.seed = config.seed + 1;  // independently trained target space
    const Vocabulary target_vocab = build_vocabulary(target_corpus, cbow.min_count);
    const TokenizedCorpus target_tokens = tokenize(target_corpus, target_vocab);
    target_embeddings.vocab = target_vocab;
    target_embeddings.vectors = train_cbow(target_tokens, target_vocab, cbow).output;
    save_embeddings(target_embeddings, artifact("target_embeddings.vec"));
  });

  // Orthogonal and self-learned mappings operate on unit vectors, so the
  // source model is trained on normalized embeddings in those modes.
  const bool normalized_mode = config.mapping_kind != "regular";
  if (normalized_mode) {
    stage("normalize-embeddings", [&] {
      source_embeddings = normalize_lengths(source_embeddings);
      target_embeddings = normalize_lengths(target_embeddings);
    });
  }

  std::vector<RelationExample> source_train, source_dev, source_test;
  std::vector<RelationExample> target_dev, target_test;
  stage("split", [&] {
    const DatasetSplit<AnnotatedSentence> source_split =
        split_dataset(source_annotated, config.split_train, config.split_dev,
                      config.split_test, config.seed);
    source_train = all_candidates(source_split.train, source_embeddings.vocab);
    source_dev = all_candidates(source_split.dev, source_embeddings.vocab);
    source_test = all_candidates(source_split.test, source_embeddings.vocab);
    // Parallel annotations share the split so transfer is scored on the
    // images of the source test sentences.
    const DatasetSplit<AnnotatedSentence> target_split =
        parallel_annotations
            ? split_dataset(target_annotated, config.split_train, config.split_dev,
                            config.split_test, config.seed)
            : split_dataset(target_annotated, config.split_train, config.split_dev,
                            config.split_test, config.seed + 1);
    target_dev = all_candidates(target_split.dev, target_embeddings.vocab);
    target_test = all_candidates(target_split.test, target_embeddings.vocab);
    if (source_train.empty()) {
      throw ValidationError("no training candidates after the split");
    }
  });

  std::vector<REModelParams> models;
  stage("train-source-model", [&] {
    REModelConfig re = config.re;
    re.word_dim = config.embedding.dim;
    re.label_set = label_set;
    re.entity_type_set = entity_type_set;
    for (int k = 0; k < config.ensemble_size; ++k) {
      re.seed = config.seed + static_cast<uint64_t>(k);
      models.push_back(train(source_train, source_dev, re, source_embeddings));
      const std::string name = config.ensemble_size == 1
                                   ? std::string("model.json")
                                   : "model_" + std::to_string(k) + ".json";
      save_checkpoint(models.back(), artifact(name));
    }
  });

  MappingMatrix mapping;
  stage("learn-mapping", [&] {
    const BilingualDictionary ordered =
        frequency_ordered_dictionary(lexicon, target_embeddings.vocab);
    if (static_cast<size_t>(config.dictionary_size) > ordered.pairs.size()) {
      throw ValidationError("mapping.dictionary_size " +
                            std::to_string(config.dictionary_size) +
                            " exceeds usable dictionary size " +
                            std::to_string(ordered.pairs.size()));
    }
    BilingualDictionary subset;
    subset.pairs.assign(ordered.pairs.begin(),
                        ordered.pairs.begin() + config.dictionary_size);
    if (config.mapping_kind == "self-learn") {
      mapping = self_learn(subset, source_embeddings, target_embeddings,
                           config.self_learn_iters, config.induce_top_k)
                    .mapping;
    } else {
      int64_t dropped = 0;
      const AlignedPairSet pairs =
          align_pairs(subset, source_embeddings, target_embeddings, &dropped);
      if (dropped > 0) {
        std::cerr << "[xlre] mapping: dropped " << dropped
                  << " out-of-vocabulary dictionary pairs\n";
      }
      mapping = config.mapping_kind == "regular" ? learn_regular(pairs)
                                                 : learn_orthogonal(pairs);
    }
    save_mapping(mapping, artifact("mapping.map"));
  });

  std::vector<const REModelParams*> model_ptrs;
  for (const REModelParams& model : models) model_ptrs.push_back(&model);

  EvalReport native_report;
  stage("evaluate-native", [&] {
    std::vector<std::string> predictions, gold;
    predictions.reserve(source_test.size());
    gold.reserve(source_test.size());
    for (const RelationExample& example : source_test) {
      predictions.push_back(model_ptrs.size() == 1
                                ? predict(*model_ptrs[0], example).label
                                : ensemble_predict(model_ptrs, example).label);
      gold.push_back(example.label);
    }
    native_report = evaluate(predictions, gold, label_set);
    std::ostringstream lines;
    for (const std::string& label : predictions) lines << label << '\n';
    write_text_file(artifact("native_predictions.txt"), lines.str());
  });

  EvalReport transfer_report;
  stage("transfer", [&] {
    std::vector<std::string> predictions, gold;
    predictions.reserve(target_test.size());
    gold.reserve(target_test.size());
    for (const RelationExample& example : target_test) {
      predictions.push_back(
          model_ptrs.size() == 1
              ? transfer_predict(mapping, *model_ptrs[0], example, target_embeddings)
                    .label
              : ensemble_transfer_predict(model_ptrs, mapping, example,
                                          target_embeddings)
                    .label);
      gold.push_back(example.label);
    }
    transfer_report = evaluate(predictions, gold, label_set);
    std::ostringstream lines;
    for (const std::string& label : predictions) lines << label << '\n';
    write_text_file(artifact("transfer_predictions.txt"), lines.str());
  });

  stage("write-report", [&] {
    json report{
        {"native", json::parse(report_to_json(native_report))},
        {"transfer", json::parse(report_to_json(transfer_report))},
        {"transfer_ratio",
         native_report.f1 > 0 ? transfer_report.f1 / native_report.f1 : 0.0},
        {"settings",
         {{"mode", config.mode},
          {"seed", config.seed},
          {"mapping_kind", config.mapping_kind},
          {"dictionary_size", config.dictionary_size},
          {"ensemble_size", config.ensemble_size},
          {"context", to_string(config.re.context_kind)},
          {"embedding_dim", config.embedding.dim}}}};
    write_text_file(artifact("report.json"), report.dump(2) + "\n");
    std::string table = report_table(native_report, "native (source test)");
    table += "\n";
    table += report_table(transfer_report, "transfer (target test)");
    write_text_file(artifact("report.txt"), table);
  });
}

void run_experiment_file(const std::string& config_path) {
  run_experiment(parse_run_config(config_path));
}

}  // namespace xlre
