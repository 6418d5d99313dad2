#include "xlre/embeddings.hpp"

#include <cmath>

#include <doctest.h>

#include "test_util.hpp"
#include "xlre/rng.hpp"

using namespace xlre;
using xlre::testing::TempDir;
using xlre::testing::write_file;

namespace {

EmbeddingModel zero_model(int dim, int window, int vocab_size) {
  EmbeddingModel model;
  model.dim = dim;
  model.window = window;
  model.output = Eigen::MatrixXd::Zero(dim, vocab_size);
  model.inputs.assign(2 * static_cast<size_t>(window), model.output);
  return model;
}

TokenizedCorpus toy_corpus(int length, int vocab_size, uint64_t seed) {
  // ~10-token sentences over a small vocabulary.
  Rng rng(seed);
  TokenizedCorpus corpus;
  std::vector<int32_t> sentence;
  for (int i = 0; i < length; ++i) {
    sentence.push_back(static_cast<int32_t>(rng.below(vocab_size)));
    if (sentence.size() == 10) {
      corpus.sentences.push_back(sentence);
      corpus.token_total += 10;
      sentence.clear();
    }
  }
  if (!sentence.empty()) {
    corpus.token_total += static_cast<int64_t>(sentence.size());
    corpus.sentences.push_back(std::move(sentence));
  }
  return corpus;
}

Vocabulary fake_vocab(int size) {
  Vocabulary vocab;
  for (int i = 0; i < size; ++i) {
    vocab.words.push_back("w" + std::to_string(i));
    vocab.counts.push_back(1);
  }
  vocab.reindex();
  return vocab;
}

}  // namespace

TEST_SUITE("embeddings") {

TEST_CASE("context_vector of a zero model is zero") {
  const auto model = zero_model(3, 2, 5);
  const std::vector<int32_t> sentence = {0, 1, 2, 3, 4};
  CHECK(context_vector(model, sentence, 2).isZero(0.0));
}

TEST_CASE("context_vector applies 1/|j| decay weights") {
  // c=2: offsets -2,-1,+1,+2 weigh 1/2, 1, 1, 1/2.
  auto model = zero_model(1, 2, 5);
  model.input_at(-2).setConstant(1.0);
  model.input_at(-1).setConstant(1.0);
  model.input_at(+1).setConstant(1.0);
  model.input_at(+2).setConstant(1.0);
  const std::vector<int32_t> sentence = {0, 1, 2, 3, 4};
  const Eigen::VectorXd ctx = context_vector(model, sentence, 2);
  CHECK(ctx[0] == doctest::Approx(0.5 + 1.0 + 1.0 + 0.5));
}

TEST_CASE("context_vector hand evaluation") {
  // d=2, c=1: column (1,0) at j=-1 and (0,2) at j=+1 sum to (1,2).
  auto model = zero_model(2, 1, 3);
  model.input_at(-1).col(0) << 1.0, 0.0;
  model.input_at(+1).col(2) << 0.0, 2.0;
  const std::vector<int32_t> sentence = {0, 1, 2};
  const Eigen::VectorXd ctx = context_vector(model, sentence, 1);
  CHECK(ctx[0] == doctest::Approx(1.0));
  CHECK(ctx[1] == doctest::Approx(2.0));
}

TEST_CASE("context_vector truncates at sentence boundaries") {
  auto model = zero_model(1, 3, 4);
  for (int offset = -3; offset <= 3; ++offset) {
    if (offset != 0) model.input_at(offset).setConstant(1.0);
  }
  const std::vector<int32_t> sentence = {0, 1};
  // Position 0 sees only offsets +1 (weight 1); everything else is outside.
  CHECK(context_vector(model, sentence, 0)[0] == doctest::Approx(1.0));
}

TEST_CASE("context_vector is linear in each input matrix") {
  Rng rng(3);
  auto model = zero_model(4, 2, 6);
  for (auto& input : model.inputs) {
    for (Eigen::Index i = 0; i < input.size(); ++i) {
      input.data()[i] = rng.uniform(-1, 1);
    }
  }
  const std::vector<int32_t> sentence = {5, 3, 1, 0, 2, 4};
  const Eigen::VectorXd base = context_vector(model, sentence, 3);
  auto scaled = model;
  scaled.input_at(-1) *= 2.5;
  const Eigen::VectorXd delta = context_vector(scaled, sentence, 3) - base;
  // The change equals 1.5x the original contribution of offset -1.
  const Eigen::VectorXd contribution = model.input_at(-1).col(sentence[2]);
  CHECK((delta - 1.5 * contribution).norm() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("target_probability single word") {
  const auto model = zero_model(2, 1, 1);
  const Eigen::VectorXd probs =
      target_probability(model, Eigen::VectorXd::Zero(2));
  REQUIRE(probs.size() == 1);
  CHECK(probs[0] == doctest::Approx(1.0));
}

TEST_CASE("target_probability uniform for equal logits") {
  const auto model = zero_model(2, 1, 4);
  const Eigen::VectorXd probs =
      target_probability(model, Eigen::VectorXd::Ones(2));
  for (int i = 0; i < 4; ++i) CHECK(probs[i] == doctest::Approx(0.25));
}

TEST_CASE("softmax hand case (0, ln 3)") {
  Eigen::VectorXd logits(2);
  logits << 0.0, std::log(3.0);
  const Eigen::VectorXd probs = softmax(logits);
  CHECK(probs[0] == doctest::Approx(0.25));
  CHECK(probs[1] == doctest::Approx(0.75));
}

TEST_CASE("softmax stays on the simplex for extreme logits") {
  Rng rng(11);
  for (int round = 0; round < 100; ++round) {
    Eigen::VectorXd logits(5);
    for (int i = 0; i < 5; ++i) logits[i] = rng.uniform(-1e3, 1e3);
    const Eigen::VectorXd probs = softmax(logits);
    CHECK(std::abs(probs.sum() - 1.0) < 1e-9);
    CHECK(probs.minCoeff() >= 0.0);
  }
}

TEST_CASE("train_cbow log-likelihood strictly increases on a toy corpus") {
  const auto corpus = toy_corpus(100, 8, 5);
  const auto vocab = fake_vocab(8);
  CbowConfig config;
  config.dim = 8;
  config.window = 2;
  config.epochs = 5;
  config.learning_rate = 0.05;
  config.seed = 1;
  config.track_likelihood = true;
  CbowTrainStats stats;
  train_cbow(corpus, vocab, config, &stats);
  REQUIRE(stats.epoch_log_likelihood.size() == 5);
  for (size_t e = 1; e < stats.epoch_log_likelihood.size(); ++e) {
    CHECK(stats.epoch_log_likelihood[e] > stats.epoch_log_likelihood[e - 1]);
  }
}

TEST_CASE("cbow analytic gradient matches central finite differences") {
  // h = 1e-5, relative error < 1e-4, every parameter of a small model.
  const auto corpus = toy_corpus(60, 12, 9);
  const auto vocab = fake_vocab(12);
  CbowConfig config;
  config.dim = 5;
  config.window = 2;
  config.epochs = 1;
  config.learning_rate = 0.025;
  config.seed = 4;
  EmbeddingModel model = train_cbow(corpus, vocab, config);  // a non-trivial point

  const CbowGradients grads = cbow_gradients(model, corpus);
  const double h = 1e-5;
  double worst = 0.0;
  auto check_matrix = [&](Eigen::MatrixXd& matrix, const Eigen::MatrixXd& grad) {
    for (Eigen::Index i = 0; i < matrix.size(); ++i) {
      const double saved = matrix.data()[i];
      matrix.data()[i] = saved + h;
      const double up = log_likelihood(model, corpus);
      matrix.data()[i] = saved - h;
      const double down = log_likelihood(model, corpus);
      matrix.data()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grad.data()[i];
      // Noise floor: central differences of an O(1) loss carry ~1e-10
      // absolute error, so gradients below 1e-6 are checked absolutely.
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      worst = std::max(worst, std::abs(numeric - analytic) / scale);
    }
  };
  check_matrix(model.output, grads.output);
  for (size_t k = 0; k < model.inputs.size(); ++k) {
    check_matrix(model.inputs[k], grads.inputs[k]);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("train_cbow deterministic for a fixed seed") {
  const auto corpus = toy_corpus(80, 6, 2);
  const auto vocab = fake_vocab(6);
  CbowConfig config;
  config.dim = 4;
  config.window = 2;
  config.epochs = 2;
  config.seed = 77;
  const auto a = train_cbow(corpus, vocab, config);
  const auto b = train_cbow(corpus, vocab, config);
  CHECK(a.output == b.output);  // bitwise
  for (size_t k = 0; k < a.inputs.size(); ++k) CHECK(a.inputs[k] == b.inputs[k]);
}

TEST_CASE("train_cbow rejects degenerate vocabularies") {
  const auto corpus = toy_corpus(10, 1, 1);
  const auto vocab = fake_vocab(1);
  CbowConfig config;
  config.dim = 2;
  CHECK_THROWS_AS(train_cbow(corpus, vocab, config), ValidationError);
}

TEST_CASE("embedding file round trip and header") {
  TempDir dir("embeddings_io");
  const auto vocab = fake_vocab(3);
  Eigen::MatrixXd vectors(2, 3);
  vectors << 0.25, -1.5, 3.125, 0.5, 2.0, -0.0625;
  save_embeddings(vocab.words, vectors, dir.file("e.vec"));

  const std::string content = xlre::testing::read_file(dir.file("e.vec"));
  CHECK(content.substr(0, content.find('\n')) == "3 2");  // header "V d"

  const EmbeddingSet loaded = load_embeddings(dir.file("e.vec"));
  REQUIRE(loaded.vocab.words == vocab.words);
  CHECK((loaded.vectors - vectors).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("embedding file rejects short rows") {
  TempDir dir("embeddings_bad");
  write_file(dir.file("bad.vec"), "2 3\nw0 1.0 2.0 3.0\nw1 1.0 2.0\n");
  CHECK_THROWS_AS(load_embeddings(dir.file("bad.vec")), ValidationError);
}

TEST_CASE("embedding file rejects header/row count mismatch") {
  TempDir dir("embeddings_bad2");
  write_file(dir.file("bad.vec"), "3 2\nw0 1.0 2.0\nw1 1.0 2.0\n");
  CHECK_THROWS_AS(load_embeddings(dir.file("bad.vec")), ValidationError);
}

}  // TEST_SUITE
