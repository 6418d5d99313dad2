#include "xlre/mapping.hpp"

#include <cmath>

#include <doctest.h>
#include <Eigen/Dense>

#include "test_util.hpp"
#include "xlre/rng.hpp"

using namespace xlre;
using xlre::testing::TempDir;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng,
                              double range = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-range, range);
  return m;
}

// Random orthogonal matrix via QR of a random square matrix.
Eigen::MatrixXd random_rotation(Eigen::Index dim, Rng& rng) {
  const Eigen::MatrixXd gaussian_ish = random_matrix(dim, dim, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian_ish);
  Eigen::MatrixXd q = qr.householderQ();
  // Fix signs so the factorization is unique-ish; orthogonality is all we need.
  return q;
}

EmbeddingSet embedding_set(const Eigen::MatrixXd& vectors, const std::string& prefix) {
  EmbeddingSet set;
  set.vectors = vectors;
  for (Eigen::Index i = 0; i < vectors.cols(); ++i) {
    set.vocab.words.push_back(prefix + std::to_string(i));
    set.vocab.counts.push_back(vectors.cols() - i);  // descending frequency
  }
  set.vocab.reindex();
  return set;
}

}  // namespace

TEST_SUITE("mapping") {

TEST_CASE("normalize_lengths leaves unit vectors unchanged") {
  Eigen::MatrixXd m(2, 1);
  m << 1.0, 0.0;
  CHECK((normalize_lengths(m) - m).norm() == doctest::Approx(0.0));
}

TEST_CASE("normalize_lengths hand case (3,4)") {
  Eigen::MatrixXd m(2, 1);
  m << 3.0, 4.0;
  const Eigen::MatrixXd unit = normalize_lengths(m);
  CHECK(unit(0, 0) == doctest::Approx(0.6));
  CHECK(unit(1, 0) == doctest::Approx(0.8));
}

TEST_CASE("normalize_lengths rejects zero columns naming the word") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
  m(0, 0) = 1.0;
  const std::vector<std::string> words = {"ok", "ghost"};
  CHECK_THROWS_WITH_AS(normalize_lengths(m, &words),
                       doctest::Contains("ghost"), ValidationError);
}

TEST_CASE("learn_regular identity fit") {
  Rng rng(1);
  const Eigen::MatrixXd x = random_matrix(6, 12, rng);
  const AlignedPairSet pairs{x, x};
  const MappingMatrix mapping = learn_regular(pairs);
  CHECK((mapping.matrix - Eigen::MatrixXd::Identity(6, 6)).norm() < 1e-10);
  CHECK(mapping.kind == MappingKind::regular);
}

TEST_CASE("learn_regular recovers a planted full-rank map") {
  Rng rng(2);
  const int d = 20;
  const Eigen::MatrixXd planted = random_matrix(d, d, rng);
  const Eigen::MatrixXd y = random_matrix(d, 2 * d, rng);
  const AlignedPairSet pairs{planted * y, y};
  const MappingMatrix mapping = learn_regular(pairs);
  CHECK((mapping.matrix - planted).norm() < 1e-8);
}

TEST_CASE("learn_regular satisfies the normal equations on noisy data") {
  Rng rng(3);
  const int d = 12;
  const Eigen::MatrixXd planted = random_matrix(d, d, rng);
  const Eigen::MatrixXd y = random_matrix(d, 6 * d, rng);
  const Eigen::MatrixXd noise = random_matrix(d, 6 * d, rng, 0.05);
  const AlignedPairSet pairs{planted * y + noise, y};
  const MappingMatrix mapping = learn_regular(pairs);

  // Independent oracle: normal-equations solve M (Y Y^T) = X Y^T.
  const Eigen::MatrixXd gram = pairs.target * pairs.target.transpose();
  const Eigen::MatrixXd cross = pairs.source * pairs.target.transpose();
  const double residual = (mapping.matrix * gram - cross).norm() / cross.norm();
  CHECK(residual < 1e-8);
  const Eigen::MatrixXd oracle = gram.ldlt().solve(cross.transpose()).transpose();
  CHECK((mapping.matrix - oracle).norm() / oracle.norm() < 1e-8);
}

TEST_CASE("learn_regular local optimality against perturbations") {
  Rng rng(4);
  const int d = 8;
  const Eigen::MatrixXd planted = random_matrix(d, d, rng);
  const Eigen::MatrixXd y = random_matrix(d, 4 * d, rng);
  const Eigen::MatrixXd noise = random_matrix(d, 4 * d, rng, 0.1);
  const AlignedPairSet pairs{planted * y + noise, y};
  const MappingMatrix mapping = learn_regular(pairs);
  auto objective = [&pairs](const Eigen::MatrixXd& m) {
    return (pairs.source - m * pairs.target).squaredNorm();
  };
  const double fitted = objective(mapping.matrix);
  for (int round = 0; round < 100; ++round) {
    Eigen::MatrixXd direction = random_matrix(d, d, rng);
    direction *= 1e-3 / direction.norm();
    CHECK(fitted <= objective(planted + direction));
  }
}

TEST_CASE("learn_regular rank-deficient data returns the minimum-norm solution") {
  Rng rng(5);
  const int d = 6;
  Eigen::MatrixXd y = random_matrix(d, 10, rng);
  y.row(d - 1).setZero();  // all target vectors lie in a subspace
  const Eigen::MatrixXd x = random_matrix(d, 10, rng);
  const AlignedPairSet pairs{x, y};
  const MappingMatrix mapping = learn_regular(pairs);
  // Oracle: explicit SVD pseudoinverse solution M = X pinv(Y).
  const Eigen::MatrixXd pinv =
      y.completeOrthogonalDecomposition().pseudoInverse();
  const Eigen::MatrixXd oracle = x * pinv;
  CHECK((mapping.matrix - oracle).norm() < 1e-8);
}

TEST_CASE("learn_orthogonal identity alignment") {
  Rng rng(6);
  const Eigen::MatrixXd x = random_matrix(5, 20, rng);
  const MappingMatrix mapping = learn_orthogonal({x, x});
  CHECK((mapping.matrix - Eigen::MatrixXd::Identity(5, 5)).norm() < 1e-10);
  CHECK(mapping.kind == MappingKind::orthogonal);
}

TEST_CASE("learn_orthogonal recovers a planted rotation") {
  Rng rng(7);
  const int d = 50;
  const Eigen::MatrixXd rotation = random_rotation(d, rng);
  const Eigen::MatrixXd x = random_matrix(d, 500, rng);
  const AlignedPairSet pairs{x, rotation.transpose() * x};
  const MappingMatrix mapping = learn_orthogonal(pairs);
  CHECK((mapping.matrix - rotation).norm() < 1e-6);
}

TEST_CASE("learn_orthogonal output is orthogonal for any input") {
  Rng rng(8);
  for (int round = 0; round < 10; ++round) {
    const int d = 3 + static_cast<int>(rng.below(6));
    const int pair_count = 1 + static_cast<int>(rng.below(30));
    Eigen::MatrixXd x = random_matrix(d, pair_count, rng);
    Eigen::MatrixXd y = random_matrix(d, pair_count, rng);
    const MappingMatrix mapping = learn_orthogonal({x, y});
    const double drift = (mapping.matrix.transpose() * mapping.matrix -
                          Eigen::MatrixXd::Identity(d, d))
                             .norm();
    CHECK(drift < 1e-10);
  }
}

TEST_CASE("orthogonal mapping preserves norms") {
  Rng rng(9);
  const Eigen::MatrixXd x = random_matrix(7, 30, rng);
  const Eigen::MatrixXd y = random_matrix(7, 30, rng);
  const MappingMatrix mapping = learn_orthogonal({x, y});
  for (int round = 0; round < 20; ++round) {
    const Eigen::VectorXd v = random_matrix(7, 1, rng).col(0);
    CHECK(std::abs(project(mapping, v).norm() - v.norm()) < 1e-10);
  }
}

TEST_CASE("project identity and hand case") {
  MappingMatrix identity{Eigen::MatrixXd::Identity(2, 2), MappingKind::regular};
  Eigen::VectorXd v(2);
  v << 2.0, 3.0;
  CHECK((project(identity, v) - v).norm() == doctest::Approx(0.0));

  MappingMatrix swap{Eigen::MatrixXd(2, 2), MappingKind::regular};
  swap.matrix << 0, 1, 1, 0;
  const Eigen::VectorXd swapped = project(swap, v);
  CHECK(swapped[0] == doctest::Approx(3.0));
  CHECK(swapped[1] == doctest::Approx(2.0));
}

TEST_CASE("project is linear") {
  Rng rng(10);
  MappingMatrix mapping{random_matrix(4, 4, rng), MappingKind::regular};
  const Eigen::VectorXd y = random_matrix(4, 1, rng).col(0);
  const Eigen::VectorXd z = random_matrix(4, 1, rng).col(0);
  const Eigen::VectorXd lhs = project(mapping, 2.0 * y + 3.0 * z);
  const Eigen::VectorXd rhs = 2.0 * project(mapping, y) + 3.0 * project(mapping, z);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("project rejects dimension mismatch") {
  MappingMatrix mapping{Eigen::MatrixXd::Identity(3, 3), MappingKind::regular};
  CHECK_THROWS_AS(project(mapping, Eigen::VectorXd::Zero(4)), ValidationError);
}

TEST_CASE("induce_dictionary self-retrieval under identity") {
  Rng rng(11);
  const Eigen::MatrixXd vectors = random_matrix(6, 9, rng);
  const EmbeddingSet source = embedding_set(vectors, "s");
  const EmbeddingSet target = embedding_set(vectors, "t");
  MappingMatrix identity{Eigen::MatrixXd::Identity(6, 6), MappingKind::regular};
  const BilingualDictionary dict = induce_dictionary(identity, source, target);
  REQUIRE(dict.pairs.size() == 9);  // one pair per target word
  for (size_t i = 0; i < dict.pairs.size(); ++i) {
    CHECK(dict.pairs[i].first == "s" + std::to_string(i));
    CHECK(dict.pairs[i].second == "t" + std::to_string(i));
  }
}

TEST_CASE("induce_dictionary matches a brute-force cosine oracle") {
  Rng rng(12);
  const EmbeddingSet source = embedding_set(random_matrix(5, 14, rng), "s");
  const EmbeddingSet target = embedding_set(random_matrix(5, 11, rng), "t");
  MappingMatrix mapping{random_matrix(5, 5, rng), MappingKind::regular};
  const BilingualDictionary dict = induce_dictionary(mapping, source, target);
  REQUIRE(dict.pairs.size() == 11);
  for (Eigen::Index j = 0; j < 11; ++j) {
    const Eigen::VectorXd projected = mapping.matrix * target.vectors.col(j);
    int best = -1;
    double best_cos = -2.0;
    for (Eigen::Index i = 0; i < 14; ++i) {
      const double cos = projected.dot(source.vectors.col(i)) /
                         (projected.norm() * source.vectors.col(i).norm());
      if (cos > best_cos) {
        best_cos = cos;
        best = static_cast<int>(i);
      }
    }
    CHECK(dict.pairs[static_cast<size_t>(j)].first == "s" + std::to_string(best));
  }
}

TEST_CASE("induce_dictionary breaks ties toward the lower source id") {
  EmbeddingSet source;
  Eigen::MatrixXd sv(2, 3);
  sv.col(0) << 1, 0;
  sv.col(1) << 1, 0;  // duplicate of column 0
  sv.col(2) << 0, 1;
  source = embedding_set(sv, "s");
  EmbeddingSet target = embedding_set(Eigen::MatrixXd(sv.leftCols(1)), "t");
  MappingMatrix identity{Eigen::MatrixXd::Identity(2, 2), MappingKind::regular};
  const BilingualDictionary dict = induce_dictionary(identity, source, target);
  REQUIRE(dict.pairs.size() == 1);
  CHECK(dict.pairs[0].first == "s0");
}

TEST_CASE("induce_dictionary rejects empty vocabularies") {
  MappingMatrix identity{Eigen::MatrixXd::Identity(2, 2), MappingKind::regular};
  EmbeddingSet empty;
  empty.vectors.resize(2, 0);
  Rng rng(13);
  const EmbeddingSet other = embedding_set(random_matrix(2, 3, rng), "x");
  CHECK_THROWS_AS(induce_dictionary(identity, empty, other), ValidationError);
}

TEST_CASE("align_pairs drops out-of-vocabulary entries") {
  Rng rng(14);
  const EmbeddingSet source = embedding_set(random_matrix(3, 4, rng), "s");
  const EmbeddingSet target = embedding_set(random_matrix(3, 4, rng), "t");
  BilingualDictionary dict;
  dict.pairs = {{"s0", "t1"}, {"s9", "t2"}, {"s2", "missing"}, {"s3", "t3"}};
  int64_t dropped = 0;
  const AlignedPairSet pairs = align_pairs(dict, source, target, &dropped);
  CHECK(dropped == 2);
  CHECK(pairs.source.cols() == 2);
  CHECK((pairs.source.col(0) - source.vectors.col(0)).norm() == doctest::Approx(0.0));
  CHECK((pairs.target.col(0) - target.vectors.col(1)).norm() == doctest::Approx(0.0));
}

TEST_CASE("self_learn with max_iters 0 equals learn_orthogonal on the seed") {
  Rng rng(15);
  const EmbeddingSet source = embedding_set(random_matrix(4, 12, rng), "s");
  const EmbeddingSet target = embedding_set(random_matrix(4, 12, rng), "t");
  BilingualDictionary seed;
  for (int i = 0; i < 6; ++i) {
    seed.pairs.emplace_back("s" + std::to_string(i), "t" + std::to_string(i));
  }
  const SelfLearnResult result = self_learn(seed, source, target, 0);
  const MappingMatrix direct = learn_orthogonal(align_pairs(seed, source, target));
  CHECK((result.mapping.matrix - direct.matrix).norm() == doctest::Approx(0.0));
  CHECK(result.objectives.size() == 1);
}

TEST_CASE("self_learn stops at a fixed point") {
  // Identical embedding sets: the identity mapping induces the identity
  // dictionary over the full vocabulary, which then reproduces itself.
  Rng rng(16);
  const Eigen::MatrixXd vectors = random_matrix(4, 8, rng);
  const EmbeddingSet source = embedding_set(vectors, "s");
  const EmbeddingSet target = embedding_set(vectors, "t");
  BilingualDictionary seed;
  for (int i = 0; i < 8; ++i) {
    seed.pairs.emplace_back("s" + std::to_string(i), "t" + std::to_string(i));
  }
  const SelfLearnResult result = self_learn(seed, source, target, 10);
  CHECK(result.objectives.size() == 1);  // one fit, induction repeated the seed
  CHECK((result.mapping.matrix - Eigen::MatrixXd::Identity(4, 4)).norm() < 1e-8);
  CHECK(result.dictionary.pairs.size() == 8);
}

TEST_CASE("self_learn rejects negative max_iters and empty seeds") {
  Rng rng(17);
  const EmbeddingSet source = embedding_set(random_matrix(3, 3, rng), "s");
  const EmbeddingSet target = embedding_set(random_matrix(3, 3, rng), "t");
  BilingualDictionary seed;
  seed.pairs = {{"s0", "t0"}};
  CHECK_THROWS_AS(self_learn(seed, source, target, -1), ValidationError);
  CHECK_THROWS_AS(self_learn(BilingualDictionary{}, source, target, 2),
                  ValidationError);
}

TEST_CASE("self_learn improves dictionary precision on planted rotations") {
  // Planted lexicon: target word i translates source word i, with target
  // vectors rotated. A 50-pair seed must not lose induced precision after
  // self-learning.
  Rng rng(18);
  const int d = 16;
  const int vocab = 300;
  const Eigen::MatrixXd rotation = random_rotation(d, rng);
  const Eigen::MatrixXd x = random_matrix(d, vocab, rng);
  const EmbeddingSet source = embedding_set(x, "s");
  const EmbeddingSet target = embedding_set(rotation.transpose() * x, "t");

  BilingualDictionary seed;
  for (int i = 0; i < 50; ++i) {
    seed.pairs.emplace_back("s" + std::to_string(i), "t" + std::to_string(i));
  }
  auto precision = [&](const MappingMatrix& mapping) {
    const BilingualDictionary induced = induce_dictionary(mapping, source, target);
    int correct = 0;
    for (const auto& [source_word, target_word] : induced.pairs) {
      if (source_word.substr(1) == target_word.substr(1)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(induced.pairs.size());
  };
  const MappingMatrix seed_only = learn_orthogonal(align_pairs(seed, source, target));
  const SelfLearnResult result = self_learn(seed, source, target, 5);
  CHECK(precision(result.mapping) >= precision(seed_only));
  CHECK(result.objectives.size() <= 6);
}

TEST_CASE("mapping file round trip") {
  TempDir dir("mapping_io");
  Rng rng(19);
  const Eigen::MatrixXd x = random_matrix(5, 30, rng);
  const Eigen::MatrixXd y = random_matrix(5, 30, rng);
  const MappingMatrix mapping = learn_orthogonal({x, y});
  save_mapping(mapping, dir.file("m.map"));
  const MappingMatrix loaded = load_mapping(dir.file("m.map"));
  CHECK(loaded.kind == MappingKind::orthogonal);
  CHECK((loaded.matrix - mapping.matrix).norm() == doctest::Approx(0.0));
}

TEST_CASE("mapping loader enforces the declared orthogonality") {
  TempDir dir("mapping_bad");
  xlre::testing::write_file(dir.file("m.map"), "2 orthogonal\n1 0\n0 2\n");
  CHECK_THROWS_AS(load_mapping(dir.file("m.map")), ValidationError);
}

}  // TEST_SUITE
