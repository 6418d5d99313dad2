#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xlre/corpus.hpp"
#include "xlre/embeddings.hpp"
#include "xlre/experiment.hpp"
#include "xlre/mapping.hpp"
#include "xlre/pipeline.hpp"
#include "xlre/remodel.hpp"

namespace {

using namespace xlre;

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path);
  for (const std::string& line : lines) out << line << '\n';
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::vector<RelationExample> candidates_for(const std::vector<AnnotatedSentence>& data,
                                            const Vocabulary& vocab) {
  std::vector<RelationExample> out;
  for (const AnnotatedSentence& sentence : data) {
    auto sentence_candidates = generate_candidates(sentence, vocab);
    out.insert(out.end(), std::make_move_iterator(sentence_candidates.begin()),
               std::make_move_iterator(sentence_candidates.end()));
  }
  return out;
}

// Sorted relation labels plus "O", and sorted entity types.
void derive_sets(const std::vector<AnnotatedSentence>& data,
                 std::vector<std::string>& label_set,
                 std::vector<std::string>& entity_type_set) {
  std::set<std::string> labels, types;
  for (const AnnotatedSentence& sentence : data) {
    for (const Relation& relation : sentence.relations) labels.insert(relation.label);
    for (const EntityMention& mention : sentence.mentions) {
      types.insert(mention.entity_type);
    }
  }
  labels.erase(kNoRelationLabel);
  label_set.assign(labels.begin(), labels.end());
  label_set.push_back(kNoRelationLabel);
  entity_type_set.assign(types.begin(), types.end());
}

struct TrainEmbeddingsArgs {
  std::string corpus, out;
  CbowConfig config;
  bool lowercase = false;
};

void cmd_train_embeddings(const TrainEmbeddingsArgs& args) {
  const auto sentences = read_corpus_file(args.corpus, args.lowercase);
  const Vocabulary vocab = build_vocabulary(sentences, args.config.min_count);
  const TokenizedCorpus tokens = tokenize(sentences, vocab);
  CbowTrainStats stats;
  const EmbeddingModel model = train_cbow(tokens, vocab, args.config, &stats);
  for (size_t i = 0; i < stats.epoch_log_likelihood.size(); ++i) {
    std::cerr << "[xlre] epoch " << i + 1
              << " log-likelihood " << stats.epoch_log_likelihood[i] << "\n";
  }
  save_embeddings(vocab.words, model.output, args.out);
  std::cerr << "[xlre] wrote " << vocab.size() << " x " << args.config.dim
            << " embeddings to " << args.out << "\n";
}

struct LearnMappingArgs {
  std::string dict, src, tgt, out;
  std::string kind = "regular";
  int self_learn_iters = 10;
  int top_k = kDefaultInduceTopK;
};

void cmd_learn_mapping(const LearnMappingArgs& args) {
  int64_t duplicates = 0;
  const BilingualDictionary dict = load_dictionary(args.dict, &duplicates);
  if (duplicates > 0) {
    std::cerr << "[xlre] dictionary: dropped " << duplicates
              << " duplicate target entries\n";
  }
  const EmbeddingSet source = load_embeddings(args.src);
  const EmbeddingSet target = load_embeddings(args.tgt);
  MappingMatrix mapping;
  if (args.kind == "self-learn") {
    const SelfLearnResult result =
        self_learn(dict, source, target, args.self_learn_iters, args.top_k);
    std::cerr << "[xlre] self-learning ran " << result.objectives.size()
              << " mapping fits; final objective "
              << result.objectives.back() << "\n";
    mapping = result.mapping;
  } else {
    int64_t dropped = 0;
    const AlignedPairSet pairs = align_pairs(dict, source, target, &dropped);
    if (dropped > 0) {
      std::cerr << "[xlre] mapping: dropped " << dropped
                << " out-of-vocabulary dictionary pairs\n";
    }
    if (args.kind == "regular") {
      mapping = learn_regular(pairs);
    } else if (args.kind == "orthogonal") {
      mapping = learn_orthogonal(pairs);
    } else {
      throw ValidationError("unknown mapping kind: '" + args.kind + "'");
    }
  }
  save_mapping(mapping, args.out);
}

struct TrainReArgs {
  std::string train, dev, embeddings, out;
  REModelConfig config;
  bool normalize = false;
};

void cmd_train_re(const TrainReArgs& args) {
  EmbeddingSet embeddings = load_embeddings(args.embeddings);
  if (args.normalize) embeddings = normalize_lengths(embeddings);
  const auto train_sentences = load_annotated(args.train);
  std::vector<AnnotatedSentence> dev_sentences;
  if (!args.dev.empty()) dev_sentences = load_annotated(args.dev);

  REModelConfig config = args.config;
  config.word_dim = static_cast<int>(embeddings.vectors.rows());
  std::vector<AnnotatedSentence> combined = train_sentences;
  combined.insert(combined.end(), dev_sentences.begin(), dev_sentences.end());
  derive_sets(combined, config.label_set, config.entity_type_set);

  const auto train_examples = candidates_for(train_sentences, embeddings.vocab);
  const auto dev_examples = candidates_for(dev_sentences, embeddings.vocab);
  TrainStats stats;
  const REModelParams params =
      train(train_examples, dev_examples, config, embeddings, &stats);
  for (size_t epoch = 0; epoch < stats.epoch_train_loss.size(); ++epoch) {
    std::cerr << "[xlre] epoch " << epoch + 1 << " loss "
              << stats.epoch_train_loss[epoch];
    if (epoch < stats.epoch_dev_f1.size()) {
      std::cerr << " dev-F1 " << 100.0 * stats.epoch_dev_f1[epoch];
    }
    std::cerr << "\n";
  }
  save_checkpoint(params, args.out);
  std::cerr << "[xlre] wrote checkpoint " << args.out << "\n";
}

struct TransferArgs {
  std::vector<std::string> models;
  std::string data, out;
  std::string mapping, embeddings;
  std::string rule = "max";
  bool normalize = false;
};

void cmd_transfer(const TransferArgs& args) {
  if (args.models.empty()) throw ValidationError("at least one --model is required");
  if (args.mapping.empty() != args.embeddings.empty()) {
    throw ValidationError("--mapping and --embeddings must be given together");
  }
  std::vector<REModelParams> models;
  models.reserve(args.models.size());
  for (const std::string& path : args.models) {
    models.push_back(load_checkpoint(path));
  }
  std::vector<const REModelParams*> model_ptrs;
  for (const REModelParams& model : models) model_ptrs.push_back(&model);
  const EnsembleRule rule = args.rule == "average"
                                ? EnsembleRule::average_probability
                                : EnsembleRule::max_probability;
  if (args.rule != "max" && args.rule != "average") {
    throw ValidationError("--rule must be max or average");
  }

  const auto data = load_annotated(args.data);
  std::vector<std::string> predictions;
  if (args.mapping.empty()) {
    // Native mode: examples are bound to the model's own vocabulary.
    const auto examples = candidates_for(data, models[0].vocab);
    predictions.reserve(examples.size());
    for (const RelationExample& example : examples) {
      predictions.push_back(model_ptrs.size() == 1
                                ? predict(models[0], example).label
                                : ensemble_predict(model_ptrs, example, rule).label);
    }
  } else {
    const MappingMatrix mapping = load_mapping(args.mapping);
    EmbeddingSet target = load_embeddings(args.embeddings);
    if (args.normalize) target = normalize_lengths(target);
    const auto examples = candidates_for(data, target.vocab);
    predictions.reserve(examples.size());
    for (const RelationExample& example : examples) {
      predictions.push_back(
          model_ptrs.size() == 1
              ? transfer_predict(mapping, models[0], example, target).label
              : ensemble_transfer_predict(model_ptrs, mapping, example, target, rule)
                    .label);
    }
  }
  write_lines(args.out, predictions);
  std::cerr << "[xlre] wrote " << predictions.size() << " predictions to "
            << args.out << "\n";
}

struct EvaluateArgs {
  std::string pred, data, out;
};

void cmd_evaluate(const EvaluateArgs& args) {
  const auto data = load_annotated(args.data);
  Vocabulary empty_vocab;  // gold labels do not need token ids
  const auto examples = candidates_for(data, empty_vocab);
  std::vector<std::string> gold;
  gold.reserve(examples.size());
  for (const RelationExample& example : examples) gold.push_back(example.label);
  const std::vector<std::string> predictions = read_lines(args.pred);

  std::set<std::string> labels(gold.begin(), gold.end());
  labels.insert(predictions.begin(), predictions.end());
  labels.insert(kNoRelationLabel);
  const std::vector<std::string> label_set(labels.begin(), labels.end());

  const EvalReport report = evaluate(predictions, gold, label_set);
  const std::string record = report_to_json(report) + "\n";
  if (args.out.empty()) {
    std::cout << record;
  } else {
    std::ofstream out(args.out);
    if (!out) throw ValidationError("cannot write file: " + args.out);
    out << record;
  }
  std::cout << report_table(report, "evaluation");
}

struct SweepArgs {
  std::string dict, src, tgt, model, data, out;
  std::vector<int> sizes;
};

void cmd_sweep(const SweepArgs& args) {
  int64_t duplicates = 0;
  const BilingualDictionary dict = load_dictionary(args.dict, &duplicates);
  const EmbeddingSet source = load_embeddings(args.src);
  const EmbeddingSet target = load_embeddings(args.tgt);
  const REModelParams model = load_checkpoint(args.model);
  const auto data = load_annotated(args.data);
  const auto dev = candidates_for(data, target.vocab);
  const BilingualDictionary ordered = frequency_ordered_dictionary(dict, target.vocab);
  const SweepResult result =
      dictionary_sweep(args.sizes, ordered, source, target, model, dev);
  const std::string csv = sweep_to_csv(result);
  if (args.out.empty()) {
    std::cout << csv;
  } else {
    std::ofstream out(args.out);
    if (!out) throw ValidationError("cannot write file: " + args.out);
    out << csv;
  }
}

struct GenSynthArgs {
  SyntheticConfig config;
  std::string out_dir;
};

void cmd_gen_synth(const GenSynthArgs& args) {
  const SyntheticBenchmark benchmark = generate_synthetic(args.config);
  namespace fs = std::filesystem;
  fs::create_directories(args.out_dir);
  const auto path = [&args](const char* name) {
    return (fs::path(args.out_dir) / name).string();
  };
  std::ofstream source_out(path("source_corpus.txt"));
  std::ofstream target_out(path("target_corpus.txt"));
  if (!source_out || !target_out) {
    throw ValidationError("cannot write corpus files under " + args.out_dir);
  }
  for (const auto& sentence : benchmark.source_corpus) {
    for (size_t i = 0; i < sentence.size(); ++i) {
      if (i) source_out << ' ';
      source_out << sentence[i];
    }
    source_out << '\n';
  }
  for (const auto& sentence : benchmark.target_corpus) {
    for (size_t i = 0; i < sentence.size(); ++i) {
      if (i) target_out << ' ';
      target_out << sentence[i];
    }
    target_out << '\n';
  }
  save_dictionary(benchmark.lexicon, path("lexicon.tsv"));
  save_annotated(benchmark.source_annotated, path("source_annotated.jsonl"));
  save_annotated(benchmark.target_annotated, path("target_annotated.jsonl"));
  std::cerr << "[xlre] wrote synthetic benchmark to " << args.out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-lingual relation extraction via bilingual embedding mapping"};
  app.require_subcommand(1);

  TrainEmbeddingsArgs emb_args;
  uint64_t emb_seed = 1;
  auto* emb = app.add_subcommand("train-embeddings",
                                 "Train monolingual word embeddings");
  emb->add_option("--corpus", emb_args.corpus, "Tokenized corpus, one sentence per line")
      ->required();
  emb->add_option("--out", emb_args.out, "Output .vec file")->required();
  emb->add_option("--dim", emb_args.config.dim, "Embedding dimension");
  emb->add_option("--window", emb_args.config.window, "Context window size");
  emb->add_option("--epochs", emb_args.config.epochs, "Training epochs");
  emb->add_option("--lr", emb_args.config.learning_rate, "Initial learning rate");
  emb->add_option("--min-count", emb_args.config.min_count, "Vocabulary threshold");
  emb->add_flag("--lowercase", emb_args.lowercase, "ASCII-lowercase the corpus");
  emb->add_flag("--track-likelihood", emb_args.config.track_likelihood,
                "Log per-epoch log-likelihood (extra pass)");
  emb->add_option("--seed", emb_seed, "Random seed");
  emb->callback([&] {
    emb_args.config.seed = emb_seed;
    cmd_train_embeddings(emb_args);
  });

  LearnMappingArgs map_args;
  uint64_t map_seed = 1;
  auto* map = app.add_subcommand("learn-mapping",
                                 "Learn a target-to-source embedding mapping");
  map->add_option("--dict", map_args.dict, "Bilingual dictionary (TSV)")->required();
  map->add_option("--src", map_args.src, "Source embeddings (.vec)")->required();
  map->add_option("--tgt", map_args.tgt, "Target embeddings (.vec)")->required();
  map->add_option("--out", map_args.out, "Output mapping file")->required();
  map->add_option("--kind", map_args.kind, "regular | orthogonal | self-learn");
  map->add_option("--self-learn-iters", map_args.self_learn_iters,
                  "Max self-learning iterations");
  map->add_option("--top-k", map_args.top_k, "Induction vocabulary cutoff");
  map->add_option("--seed", map_seed, "Random seed (unused; mapping is closed-form)");
  map->callback([&] { cmd_learn_mapping(map_args); });

  TrainReArgs re_args;
  auto* re = app.add_subcommand("train-re", "Train a relation extraction model");
  re->add_option("--train", re_args.train, "Training data (JSONL)")->required();
  re->add_option("--dev", re_args.dev, "Development data (JSONL)");
  re->add_option("--embeddings", re_args.embeddings, "Word embeddings (.vec)")
      ->required();
  re->add_option("--out", re_args.out, "Output checkpoint")->required();
  std::string re_context = "bilstm";
  re->add_option("--context", re_context, "pass | bilstm | cnn");
  re->add_option("--hidden", re_args.config.hidden_dim, "Hidden size (0 = default)");
  re->add_option("--entity-dim", re_args.config.entity_label_dim,
                 "Entity label embedding size");
  re->add_option("--cnn-window", re_args.config.cnn_window, "CNN window (odd)");
  re->add_option("--dropout", re_args.config.dropout_rate, "Dropout rate");
  re->add_option("--lr", re_args.config.learning_rate, "Adam learning rate");
  re->add_option("--epochs", re_args.config.max_epochs, "Max epochs");
  re->add_option("--patience", re_args.config.patience, "Early stopping patience");
  re->add_option("--batch", re_args.config.minibatch_size, "Minibatch size");
  re->add_option("--seed", re_args.config.seed, "Random seed");
  re->add_flag("--normalize-embeddings", re_args.normalize,
               "Length-normalize embeddings (orthogonal mapping pipelines)");
  re->callback([&] {
    re_args.config.context_kind = context_kind_from_string(re_context);
    cmd_train_re(re_args);
  });

  TransferArgs transfer_args;
  uint64_t transfer_seed = 1;
  auto* transfer = app.add_subcommand(
      "transfer", "Predict relations, optionally through a mapping");
  transfer->add_option("--model", transfer_args.models,
                       "Model checkpoint (repeat for an ensemble)")
      ->required();
  transfer->add_option("--data", transfer_args.data, "Annotated data (JSONL)")
      ->required();
  transfer->add_option("--out", transfer_args.out, "Predictions file")->required();
  transfer->add_option("--mapping", transfer_args.mapping, "Mapping file");
  transfer->add_option("--embeddings", transfer_args.embeddings,
                       "Target embeddings (.vec)");
  transfer->add_option("--rule", transfer_args.rule, "Ensemble rule: max | average");
  transfer->add_flag("--normalize-embeddings", transfer_args.normalize,
                     "Length-normalize target embeddings before projecting");
  transfer->add_option("--seed", transfer_seed, "Random seed (unused; inference)");
  transfer->callback([&] { cmd_transfer(transfer_args); });

  EvaluateArgs eval_args;
  uint64_t eval_seed = 1;
  auto* eval = app.add_subcommand("evaluate", "Score predictions against gold data");
  eval->add_option("--pred", eval_args.pred, "Predictions file")->required();
  eval->add_option("--data", eval_args.data, "Gold annotated data (JSONL)")
      ->required();
  eval->add_option("--out", eval_args.out, "Report JSON file (default stdout)");
  eval->add_option("--seed", eval_seed, "Random seed (unused; evaluation)");
  eval->callback([&] { cmd_evaluate(eval_args); });

  SweepArgs sweep_args;
  uint64_t sweep_seed = 1;
  std::string sweep_sizes = "100,500,1000";
  auto* sweep = app.add_subcommand("sweep-dict",
                                   "Dictionary-size sweep of transfer F1");
  sweep->add_option("--dict", sweep_args.dict, "Full dictionary (TSV)")->required();
  sweep->add_option("--src", sweep_args.src, "Source embeddings")->required();
  sweep->add_option("--tgt", sweep_args.tgt, "Target embeddings")->required();
  sweep->add_option("--model", sweep_args.model, "Source model checkpoint")
      ->required();
  sweep->add_option("--data", sweep_args.data, "Target dev data (JSONL)")->required();
  sweep->add_option("--sizes", sweep_sizes, "Comma-separated dictionary sizes");
  sweep->add_option("--out", sweep_args.out, "CSV output (default stdout)");
  sweep->add_option("--seed", sweep_seed, "Random seed (unused; deterministic)");
  sweep->callback([&] {
    sweep_args.sizes.clear();
    std::istringstream stream(sweep_sizes);
    std::string item;
    while (std::getline(stream, item, ',')) {
      if (item.empty()) continue;
      try {
        size_t used = 0;
        sweep_args.sizes.push_back(std::stoi(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw ValidationError("--sizes entry '" + item + "' is not an integer");
      }
    }
    cmd_sweep(sweep_args);
  });

  GenSynthArgs synth_args;
  auto* synth = app.add_subcommand("gen-synth",
                                   "Generate the synthetic bilingual benchmark");
  synth->add_option("--vocab", synth_args.config.vocab_size, "Vocabulary size");
  synth->add_option("--tokens", synth_args.config.corpus_tokens,
                    "Corpus token budget per language");
  synth->add_option("--sentences", synth_args.config.annotated_sentences,
                    "Annotated sentence count");
  synth->add_option("--seed", synth_args.config.seed, "Random seed");
  synth->add_option("--out-dir", synth_args.out_dir, "Output directory")->required();
  synth->callback([&] { cmd_gen_synth(synth_args); });

  std::string experiment_config;
  uint64_t experiment_seed = 0;
  auto* experiment = app.add_subcommand("run-experiment",
                                        "Run the full transfer protocol");
  experiment->add_option("--config", experiment_config, "Experiment config file")
      ->required();
  auto* seed_option =
      experiment->add_option("--seed", experiment_seed, "Override the config file seed");
  experiment->callback([&] {
    RunConfig config = parse_run_config(experiment_config);
    if (seed_option->count() > 0) config.seed = experiment_seed;
    run_experiment(config);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
