#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xlre/corpus.hpp"
#include "xlre/embeddings.hpp"

namespace xlre {

enum class MappingKind { regular, orthogonal };

std::string to_string(MappingKind kind);
MappingKind mapping_kind_from_string(const std::string& name);

// d x d linear map from the target embedding space to the source space.
struct MappingMatrix {
  Eigen::MatrixXd matrix;
  MappingKind kind = MappingKind::regular;

  int dim() const { return static_cast<int>(matrix.rows()); }
};

// Position-aligned translation pairs: column i of `source` is the embedding
// of the source word whose translation has embedding column i of `target`.
struct AlignedPairSet {
  Eigen::MatrixXd source;  // d x D
  Eigen::MatrixXd target;  // d x D
};

// Scales every column to unit Euclidean norm. A zero column is an error; the
// optional word list makes the message name the offending word.
Eigen::MatrixXd normalize_lengths(const Eigen::MatrixXd& vectors,
                                  const std::vector<std::string>* words = nullptr);
EmbeddingSet normalize_lengths(const EmbeddingSet& embeddings);

// Selects the dictionary pairs present in both vocabularies; entries with a
// missing word are dropped and counted through `dropped` when non-null.
AlignedPairSet align_pairs(const BilingualDictionary& dict,
                           const EmbeddingSet& source, const EmbeddingSet& target,
                           int64_t* dropped = nullptr);

// Unconstrained least-squares minimizer of sum_i ||x_i - M y_i||^2 via an
// SVD pseudoinverse. Rank-deficient target data yields the minimum-norm
// solution and a warning on stderr.
MappingMatrix learn_regular(const AlignedPairSet& pairs);

// Orthogonality-constrained minimizer after length normalization of both
// sides: M = U V^T from the SVD of X' Y'^T.
MappingMatrix learn_orthogonal(const AlignedPairSet& pairs);

// Objective of the orthogonal problem: sum_i ||x'_i - M y'_i||^2 with both
// sides length-normalized.
double orthogonal_objective(const MappingMatrix& mapping, const AlignedPairSet& pairs);

Eigen::VectorXd project(const MappingMatrix& mapping, const Eigen::VectorXd& vec);
Eigen::MatrixXd project_all(const MappingMatrix& mapping, const Eigen::MatrixXd& vecs);

inline constexpr int kDefaultInduceTopK = 10000;

// Pairs each of the top_k most frequent target words with the source word
// (among the top_k most frequent) whose embedding has the highest cosine
// similarity to the projected target embedding; ties break to the lower
// source id. Embedding columns are assumed most-frequent-first.
BilingualDictionary induce_dictionary(const MappingMatrix& mapping,
                                      const EmbeddingSet& source,
                                      const EmbeddingSet& target,
                                      int top_k = kDefaultInduceTopK);

struct SelfLearnResult {
  MappingMatrix mapping;
  BilingualDictionary dictionary;
  // Orthogonal objective on each successive dictionary, seed first.
  std::vector<double> objectives;
};

// Alternates learn_orthogonal and induce_dictionary until the induced
// dictionary repeats or max_iters induction rounds have run.
SelfLearnResult self_learn(const BilingualDictionary& seed,
                           const EmbeddingSet& source, const EmbeddingSet& target,
                           int max_iters, int top_k = kDefaultInduceTopK);

// Text format: header "d kind", then d rows of d floats.
void save_mapping(const MappingMatrix& mapping, const std::string& path);
MappingMatrix load_mapping(const std::string& path);

}  // namespace xlre
