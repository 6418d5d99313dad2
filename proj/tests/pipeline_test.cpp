#include "xlre/pipeline.hpp"

#include <algorithm>
#include <set>

#include <doctest.h>
#include <Eigen/Dense>

#include "test_util.hpp"
#include "toy_data.hpp"
#include "xlre/rng.hpp"

using namespace xlre;

namespace {

Eigen::MatrixXd random_rotation(Eigen::Index dim, Rng& rng) {
  Eigen::MatrixXd m(dim, dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1, 1);
  return Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ();
}

std::vector<RelationExample> candidates_for(const std::vector<AnnotatedSentence>& data,
                                            const Vocabulary& vocab) {
  std::vector<RelationExample> out;
  for (const AnnotatedSentence& sentence : data) {
    auto extra = generate_candidates(sentence, vocab);
    out.insert(out.end(), extra.begin(), extra.end());
  }
  return out;
}

EmbeddingSet train_embeddings_for(const std::vector<std::vector<std::string>>& corpus,
                                  int dim, uint64_t seed) {
  CbowConfig config;
  config.dim = dim;
  config.window = 3;
  config.epochs = 3;
  config.seed = seed;
  const Vocabulary vocab = build_vocabulary(corpus, 1);
  const TokenizedCorpus tokens = tokenize(corpus, vocab);
  EmbeddingSet set;
  set.vocab = vocab;
  set.vectors = train_cbow(tokens, vocab, config).output;
  return set;
}

REModelConfig benchmark_re_config(const SyntheticBenchmark& benchmark, int word_dim) {
  REModelConfig config;
  config.context_kind = ContextKind::bilstm;
  config.word_dim = word_dim;
  config.entity_label_dim = 6;
  config.hidden_dim = 16;
  config.dropout_rate = 0.2;
  config.learning_rate = 0.01;
  config.max_epochs = 60;
  config.patience = 10;
  config.seed = 7;
  config.label_set = benchmark.label_set;
  config.entity_type_set = benchmark.entity_type_set;
  return config;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("evaluate perfect predictions") {
  const std::vector<std::string> labels = {"A", "B", "O"};
  const std::vector<std::string> gold = {"A", "B", "O", "A"};
  const EvalReport report = evaluate(gold, gold, labels);
  CHECK(report.precision == doctest::Approx(100.0));
  CHECK(report.recall == doctest::Approx(100.0));
  CHECK(report.f1 == doctest::Approx(100.0));
}

TEST_CASE("evaluate hand-counted case") {
  // 3 non-O predictions, 2 correct, 4 gold non-O:
  // P = 2/3, R = 2/4, F1 = 4/7.
  const std::vector<std::string> labels = {"A", "B", "C", "O"};
  const std::vector<std::string> gold = {"A", "A", "B", "B", "O"};
  const std::vector<std::string> predictions = {"A", "A", "O", "C", "O"};
  const EvalReport report = evaluate(predictions, gold, labels);
  CHECK(report.precision == doctest::Approx(200.0 / 3.0));
  CHECK(report.recall == doctest::Approx(50.0));
  CHECK(report.f1 == doctest::Approx(400.0 / 7.0));
  CHECK(report.tp == 2);
  CHECK(report.fp == 1);
  CHECK(report.fn == 2);
  CHECK(report.per_label.at("A").tp == 2);
  CHECK(report.per_label.at("B").fn == 2);
  CHECK(report.per_label.at("C").fp == 1);
}

TEST_CASE("evaluate all-O predictions") {
  const std::vector<std::string> labels = {"A", "O"};
  const std::vector<std::string> gold = {"A", "O", "A"};
  const std::vector<std::string> predictions = {"O", "O", "O"};
  const EvalReport report = evaluate(predictions, gold, labels);
  CHECK(report.precision == doctest::Approx(0.0));
  CHECK(report.recall == doctest::Approx(0.0));
  CHECK(report.f1 == doctest::Approx(0.0));
}

TEST_CASE("evaluate is permutation invariant") {
  const std::vector<std::string> labels = {"A", "B", "O"};
  std::vector<std::pair<std::string, std::string>> pairs = {
      {"A", "A"}, {"B", "A"}, {"O", "B"}, {"A", "O"}, {"B", "B"}, {"O", "O"}};
  auto report_of = [&labels](
      const std::vector<std::pair<std::string, std::string>>& data) {
    std::vector<std::string> predictions, gold;
    for (const auto& [p, g] : data) {
      predictions.push_back(p);
      gold.push_back(g);
    }
    return evaluate(predictions, gold, labels);
  };
  const EvalReport base = report_of(pairs);
  Rng rng(23);
  for (int round = 0; round < 5; ++round) {
    rng.shuffle(pairs);
    const EvalReport shuffled = report_of(pairs);
    CHECK(shuffled.precision == doctest::Approx(base.precision));
    CHECK(shuffled.recall == doctest::Approx(base.recall));
    CHECK(shuffled.f1 == doctest::Approx(base.f1));
  }
}

TEST_CASE("evaluate rejects length mismatches and unknown labels") {
  const std::vector<std::string> labels = {"A", "O"};
  CHECK_THROWS_AS(evaluate({"A"}, {"A", "O"}, labels), ValidationError);
  CHECK_THROWS_AS(evaluate({"Z"}, {"A"}, labels), ValidationError);
}

TEST_CASE("ensemble of identical models equals the single model") {
  const auto toy = xlre::testing::make_toy_re(31);
  const REModelParams model = init_params(toy.config, toy.embeddings);
  const std::vector<const REModelParams*> five(5, &model);
  const std::vector<const REModelParams*> one(1, &model);
  for (const RelationExample& example : toy.examples) {
    const Prediction single = predict(model, example);
    CHECK(ensemble_predict(one, example).label_id == single.label_id);
    const Prediction combined = ensemble_predict(five, example);
    CHECK(combined.label_id == single.label_id);
    CHECK(combined.probabilities == single.probabilities);
  }
}

TEST_CASE("ensemble max rule hand case") {
  // Two models with probabilities (0.6, 0.4) and (0.3, 0.7): label 1 wins.
  REModelConfig config;
  config.context_kind = ContextKind::pass_through;
  config.word_dim = 2;
  config.entity_label_dim = 2;
  config.label_set = {"A", "O"};
  config.entity_type_set = {"P", "Q"};
  EmbeddingSet embeddings;
  embeddings.vocab.words = {"w0", "w1"};
  embeddings.vocab.counts = {1, 1};
  embeddings.vocab.reindex();
  embeddings.vectors = Eigen::MatrixXd::Zero(2, 2);

  REModelParams first = init_params(config, embeddings);
  first.output_sentence.setZero();
  first.output_mention1.setZero();
  first.output_mention2.setZero();
  first.output_bias << std::log(0.6), std::log(0.4);
  REModelParams second = first;
  second.output_bias << std::log(0.3), std::log(0.7);

  RelationExample example;
  example.token_ids = {0, 1};
  example.mention1 = {0, 0, "P"};
  example.mention2 = {1, 1, "Q"};
  example.label = "A";

  const Prediction combined = ensemble_predict({&first, &second}, example);
  CHECK(combined.label_id == 1);
  CHECK(combined.probabilities[0] == doctest::Approx(0.6));
  CHECK(combined.probabilities[1] == doctest::Approx(0.7));

  const Prediction averaged = ensemble_predict({&first, &second}, example,
                                               EnsembleRule::average_probability);
  CHECK(averaged.label_id == 1);
  CHECK(averaged.probabilities[1] == doctest::Approx(0.55));
}

TEST_CASE("ensemble validates its inputs") {
  CHECK_THROWS_AS(ensemble_predict({}, RelationExample{}), ValidationError);
  CHECK(kDefaultEnsembleSize == 5);
}

TEST_CASE("transfer with the identity mapping equals native prediction") {
  const auto toy = xlre::testing::make_toy_re(32);
  const REModelParams model = init_params(toy.config, toy.embeddings);
  MappingMatrix identity{
      Eigen::MatrixXd::Identity(toy.config.word_dim, toy.config.word_dim),
      MappingKind::regular};
  for (const RelationExample& example : toy.examples) {
    const Prediction native = predict(model, example);
    const Prediction transferred =
        transfer_predict(identity, model, example, toy.embeddings);
    CHECK(transferred.label_id == native.label_id);
    CHECK(transferred.probabilities == native.probabilities);  // exact
  }
}

TEST_CASE("transfer rejects dimension mismatches") {
  const auto toy = xlre::testing::make_toy_re(33);
  const REModelParams model = init_params(toy.config, toy.embeddings);
  MappingMatrix wrong{Eigen::MatrixXd::Identity(3, 3), MappingKind::regular};
  CHECK_THROWS_AS(transfer_predict(wrong, model, toy.examples[0], toy.embeddings),
                  ValidationError);
}

TEST_CASE("planted-rotation transfer matches native predictions") {
  // End-to-end: trained source embeddings, target space an exact rotation of
  // the source space, orthogonal mapping learned from a word-pair subset.
  SyntheticConfig synth;
  synth.vocab_size = 120;
  synth.corpus_tokens = 4000;
  synth.annotated_sentences = 220;
  synth.seed = 5;
  const SyntheticBenchmark benchmark = generate_synthetic(synth);
  const EmbeddingSet source = train_embeddings_for(benchmark.source_corpus, 16, 11);

  Rng rng(41);
  const Eigen::MatrixXd rotation = random_rotation(16, rng);
  std::unordered_map<std::string, std::string> lexicon_map(
      benchmark.lexicon.pairs.begin(), benchmark.lexicon.pairs.end());
  EmbeddingSet target;
  target.vectors = rotation.transpose() * source.vectors;
  for (const std::string& word : source.vocab.words) {
    target.vocab.words.push_back(lexicon_map.at(word));
    target.vocab.counts.push_back(1);
  }
  target.vocab.reindex();

  const auto split = split_indices(benchmark.source_annotated.size(), 0.8, 0.1, 0.1, 3);
  std::vector<AnnotatedSentence> train_docs, test_source_docs, test_target_docs;
  for (size_t i : split.train) train_docs.push_back(benchmark.source_annotated[i]);
  for (size_t i : split.test) {
    test_source_docs.push_back(benchmark.source_annotated[i]);
    test_target_docs.push_back(benchmark.target_annotated[i]);
  }
  REModelConfig config = benchmark_re_config(benchmark, 16);
  config.max_epochs = 40;
  const REModelParams model =
      train(candidates_for(train_docs, source.vocab), {}, config, source);

  // Mapping from 60 frequency-ordered lexicon pairs.
  const BilingualDictionary ordered =
      frequency_ordered_dictionary(benchmark.lexicon, target.vocab);
  BilingualDictionary seed_dict;
  seed_dict.pairs.assign(ordered.pairs.begin(), ordered.pairs.begin() + 60);
  const MappingMatrix mapping =
      learn_orthogonal(align_pairs(seed_dict, source, target));

  const auto native_examples = candidates_for(test_source_docs, source.vocab);
  const auto target_examples = candidates_for(test_target_docs, target.vocab);
  REQUIRE(native_examples.size() == target_examples.size());

  std::vector<int> native_ids, transfer_ids, gold_ids;
  for (size_t i = 0; i < native_examples.size(); ++i) {
    const Prediction native = predict(model, native_examples[i]);
    const Prediction transferred =
        transfer_predict(mapping, model, target_examples[i], target);
    CHECK((native.probabilities - transferred.probabilities).cwiseAbs().maxCoeff() <
          1e-3);
    native_ids.push_back(native.label_id);
    transfer_ids.push_back(transferred.label_id);
    gold_ids.push_back(config.label_id(native_examples[i].label));
  }
  const double native_f1 = micro_f1(native_ids, gold_ids, config.no_relation_id());
  const double transfer_f1 = micro_f1(transfer_ids, gold_ids, config.no_relation_id());
  CHECK(transfer_f1 >= 0.9 * native_f1);
}

TEST_CASE("dictionary_sweep validates sizes") {
  const auto toy = xlre::testing::make_toy_re(34);
  const REModelParams model = init_params(toy.config, toy.embeddings);
  BilingualDictionary dict;
  for (int i = 0; i < 10; ++i) {
    dict.pairs.emplace_back("s" + std::to_string(i), "t" + std::to_string(i));
  }
  const std::vector<RelationExample> dev = {toy.examples[0]};
  CHECK_THROWS_AS(dictionary_sweep({}, dict, toy.embeddings, toy.embeddings, model, dev),
                  ValidationError);
  CHECK_THROWS_AS(
      dictionary_sweep({0, 5}, dict, toy.embeddings, toy.embeddings, model, dev),
      ValidationError);
  CHECK_THROWS_AS(
      dictionary_sweep({3, 3}, dict, toy.embeddings, toy.embeddings, model, dev),
      ValidationError);
  CHECK_THROWS_AS(
      dictionary_sweep({5, 11}, dict, toy.embeddings, toy.embeddings, model, dev),
      ValidationError);
}

TEST_CASE("dictionary_sweep emits one row per size") {
  // Self-transfer setup: target equals source, mapping learned per size.
  const auto toy = xlre::testing::make_toy_re(35);
  REModelConfig config = toy.config;
  config.max_epochs = 30;
  const REModelParams model =
      train(toy.examples, toy.examples, config, toy.embeddings);
  BilingualDictionary dict;
  for (const std::string& word : toy.embeddings.vocab.words) {
    dict.pairs.emplace_back(word, word);
  }
  const SweepResult result = dictionary_sweep({4, 8, 12}, dict, toy.embeddings,
                                              toy.embeddings, model, toy.examples);
  REQUIRE(result.rows.size() == 3);
  CHECK(result.rows[0].first == 4);
  CHECK(result.rows[1].first == 8);
  CHECK(result.rows[2].first == 12);
  const std::string csv = sweep_to_csv(result);
  CHECK(csv.rfind("size,f1\n", 0) == 0);
}

TEST_CASE("generate_synthetic plants a bijective lexicon") {
  SyntheticConfig config;
  config.vocab_size = 100;
  config.corpus_tokens = 1500;
  config.annotated_sentences = 60;
  config.seed = 9;
  const SyntheticBenchmark benchmark = generate_synthetic(config);
  CHECK(benchmark.lexicon.pairs.size() == 100);
  std::set<std::string> sources, targets;
  for (const auto& [s, t] : benchmark.lexicon.pairs) {
    sources.insert(s);
    targets.insert(t);
  }
  CHECK(sources.size() == 100);
  CHECK(targets.size() == 100);  // bijection: image has full size
}

TEST_CASE("generate_synthetic target corpus is the lexicon image of the source") {
  SyntheticConfig config;
  config.vocab_size = 110;
  config.corpus_tokens = 1300;
  config.annotated_sentences = 40;
  config.seed = 10;
  const SyntheticBenchmark benchmark = generate_synthetic(config);
  std::unordered_map<std::string, std::string> to_source;
  for (const auto& [s, t] : benchmark.lexicon.pairs) to_source[t] = s;
  REQUIRE(benchmark.source_corpus.size() == benchmark.target_corpus.size());
  for (size_t i = 0; i < benchmark.source_corpus.size(); ++i) {
    REQUIRE(benchmark.source_corpus[i].size() == benchmark.target_corpus[i].size());
    for (size_t t = 0; t < benchmark.source_corpus[i].size(); ++t) {
      CHECK(to_source.at(benchmark.target_corpus[i][t]) ==
            benchmark.source_corpus[i][t]);
    }
  }
  // Gold annotations coincide across languages.
  REQUIRE(benchmark.source_annotated.size() == benchmark.target_annotated.size());
  for (size_t i = 0; i < benchmark.source_annotated.size(); ++i) {
    const auto& source = benchmark.source_annotated[i];
    const auto& target = benchmark.target_annotated[i];
    REQUIRE(source.relations.size() == target.relations.size());
    for (size_t r = 0; r < source.relations.size(); ++r) {
      CHECK(source.relations[r].label == target.relations[r].label);
    }
  }
}

TEST_CASE("generate_synthetic is deterministic and validates its config") {
  SyntheticConfig config;
  config.vocab_size = 100;
  config.corpus_tokens = 1200;
  config.annotated_sentences = 30;
  config.seed = 12;
  const SyntheticBenchmark a = generate_synthetic(config);
  const SyntheticBenchmark b = generate_synthetic(config);
  CHECK(a.source_corpus == b.source_corpus);
  CHECK(a.lexicon.pairs == b.lexicon.pairs);

  SyntheticConfig bad = config;
  bad.vocab_size = 50;
  CHECK_THROWS_AS(generate_synthetic(bad), ValidationError);
  bad = config;
  bad.corpus_tokens = 500;  // < 10 * vocab
  CHECK_THROWS_AS(generate_synthetic(bad), ValidationError);
  bad = config;
  bad.annotated_sentences = 100000;  // cannot fit the token budget
  CHECK_THROWS_AS(generate_synthetic(bad), ValidationError);
}

TEST_CASE("synthetic source task is learnable to high F1") {
  SyntheticConfig synth;
  synth.vocab_size = 150;
  synth.corpus_tokens = 8000;
  synth.annotated_sentences = 500;
  synth.seed = 21;
  const SyntheticBenchmark benchmark = generate_synthetic(synth);
  const EmbeddingSet source = train_embeddings_for(benchmark.source_corpus, 16, 51);
  const auto split =
      split_dataset(benchmark.source_annotated, 0.8, 0.1, 0.1, 4);
  REModelConfig config = benchmark_re_config(benchmark, 16);
  config.dropout_rate = 0.1;
  const REModelParams model = train(candidates_for(split.train, source.vocab),
                                    candidates_for(split.dev, source.vocab), config,
                                    source);
  const auto test_examples = candidates_for(split.test, source.vocab);
  std::vector<std::string> predictions, gold;
  for (const RelationExample& example : test_examples) {
    predictions.push_back(predict(model, example).label);
    gold.push_back(example.label);
  }
  const EvalReport report = evaluate(predictions, gold, config.label_set);
  CHECK(report.f1 >= 95.0);
}

TEST_CASE("frequency_ordered_dictionary sorts by vocabulary rank") {
  Vocabulary vocab;
  vocab.words = {"common", "middle", "rare"};
  vocab.counts = {100, 10, 1};
  vocab.reindex();
  BilingualDictionary lexicon;
  lexicon.pairs = {{"s_rare", "rare"}, {"s_common", "common"},
                   {"s_gone", "missing"}, {"s_middle", "middle"}};
  const BilingualDictionary ordered = frequency_ordered_dictionary(lexicon, vocab);
  REQUIRE(ordered.pairs.size() == 3);
  CHECK(ordered.pairs[0].second == "common");
  CHECK(ordered.pairs[1].second == "middle");
  CHECK(ordered.pairs[2].second == "rare");
}

TEST_CASE("compare_mappings yields one row per mapping kind") {
  SyntheticConfig synth;
  synth.vocab_size = 100;
  synth.corpus_tokens = 2500;
  synth.annotated_sentences = 150;
  synth.seed = 31;
  const SyntheticBenchmark benchmark = generate_synthetic(synth);
  const EmbeddingSet source = train_embeddings_for(benchmark.source_corpus, 12, 61);
  const EmbeddingSet target = train_embeddings_for(benchmark.target_corpus, 12, 62);

  const auto split = split_indices(benchmark.source_annotated.size(), 0.8, 0.1, 0.1, 5);
  std::vector<AnnotatedSentence> train_docs, dev_source_docs, dev_target_docs;
  for (size_t i : split.train) train_docs.push_back(benchmark.source_annotated[i]);
  for (size_t i : split.dev) {
    dev_source_docs.push_back(benchmark.source_annotated[i]);
    dev_target_docs.push_back(benchmark.target_annotated[i]);
  }
  REModelConfig config = benchmark_re_config(benchmark, 12);
  config.max_epochs = 15;
  const REModelParams raw_model =
      train(candidates_for(train_docs, source.vocab),
            candidates_for(dev_source_docs, source.vocab), config, source);
  const EmbeddingSet source_unit = normalize_lengths(source);
  const REModelParams normalized_model =
      train(candidates_for(train_docs, source_unit.vocab),
            candidates_for(dev_source_docs, source_unit.vocab), config, source_unit);

  MappingComparisonInputs inputs;
  inputs.source_embeddings = source;
  inputs.target_embeddings = target;
  inputs.dictionary = frequency_ordered_dictionary(benchmark.lexicon, target.vocab);
  inputs.dictionary_size = 80;
  inputs.raw_model = &raw_model;
  inputs.normalized_model = &normalized_model;
  inputs.target_dev = candidates_for(dev_target_docs, target.vocab);
  inputs.language = "synthetic-target";
  inputs.self_learn_iters = 2;

  const auto rows = compare_mappings(inputs);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].mapping == "regular");
  CHECK(rows[1].mapping == "orthogonal");
  CHECK(rows[2].mapping == "self-learn");
  for (const auto& row : rows) {
    CHECK(row.language == "synthetic-target");
    CHECK(row.report.f1 >= 0.0);
  }
  const std::string table = comparison_table(rows);
  CHECK(table.find("regular") != std::string::npos);
  CHECK(table.find("self-learn") != std::string::npos);
}

}  // TEST_SUITE
