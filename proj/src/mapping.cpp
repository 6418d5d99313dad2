#include "xlre/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <Eigen/Dense>

namespace xlre {

std::string to_string(MappingKind kind) {
  return kind == MappingKind::regular ? "regular" : "orthogonal";
}

MappingKind mapping_kind_from_string(const std::string& name) {
  if (name == "regular") return MappingKind::regular;
  if (name == "orthogonal") return MappingKind::orthogonal;
  throw ValidationError("unknown mapping kind: '" + name + "'");
}

Eigen::MatrixXd normalize_lengths(const Eigen::MatrixXd& vectors,
                                  const std::vector<std::string>* words) {
  Eigen::MatrixXd normalized(vectors.rows(), vectors.cols());
  for (Eigen::Index i = 0; i < vectors.cols(); ++i) {
    const double norm = vectors.col(i).norm();
    if (norm == 0.0) {
      std::string which = "column " + std::to_string(i);
      if (words && i < static_cast<Eigen::Index>(words->size())) {
        which += " (word '" + (*words)[static_cast<size_t>(i)] + "')";
      }
      throw ValidationError("cannot length-normalize zero vector at " + which);
    }
    normalized.col(i) = vectors.col(i) / norm;
  }
  return normalized;
}

EmbeddingSet normalize_lengths(const EmbeddingSet& embeddings) {
  EmbeddingSet out;
  out.vocab = embeddings.vocab;
  out.vectors = normalize_lengths(embeddings.vectors, &embeddings.vocab.words);
  return out;
}

AlignedPairSet align_pairs(const BilingualDictionary& dict,
                           const EmbeddingSet& source, const EmbeddingSet& target,
                           int64_t* dropped) {
  std::vector<std::pair<int32_t, int32_t>> ids;
  ids.reserve(dict.pairs.size());
  int64_t missing = 0;
  for (const auto& [source_word, target_word] : dict.pairs) {
    const int32_t sid = source.vocab.id_of(source_word);
    const int32_t tid = target.vocab.id_of(target_word);
    if (sid == Vocabulary::kUnknownId || tid == Vocabulary::kUnknownId) {
      ++missing;
      continue;
    }
    ids.emplace_back(sid, tid);
  }
  if (dropped) *dropped = missing;
  if (ids.empty()) {
    throw ValidationError(
        "no dictionary pairs remain after vocabulary filtering (" +
        std::to_string(missing) + " dropped)");
  }
  AlignedPairSet pairs;
  pairs.source.resize(source.vectors.rows(), static_cast<Eigen::Index>(ids.size()));
  pairs.target.resize(target.vectors.rows(), static_cast<Eigen::Index>(ids.size()));
  for (size_t i = 0; i < ids.size(); ++i) {
    pairs.source.col(static_cast<Eigen::Index>(i)) = source.vectors.col(ids[i].first);
    pairs.target.col(static_cast<Eigen::Index>(i)) = target.vectors.col(ids[i].second);
  }
  return pairs;
}

namespace {

void check_pair_shapes(const AlignedPairSet& pairs) {
  if (pairs.source.rows() != pairs.target.rows()) {
    throw ValidationError("source and target embeddings have different dimensions");
  }
  if (pairs.source.cols() != pairs.target.cols()) {
    throw ValidationError("source and target pair counts differ");
  }
  if (pairs.source.cols() < 1) throw ValidationError("need at least one pair");
}

}  // namespace

MappingMatrix learn_regular(const AlignedPairSet& pairs) {
  check_pair_shapes(pairs);
  const Eigen::Index d = pairs.source.rows();
  // min_M ||X - M Y||_F  <=>  M^T solves the least-squares system
  // Y^T M^T = X^T; the SVD solve returns the minimum-norm solution.
  Eigen::BDCSVD<Eigen::MatrixXd> svd(pairs.target.transpose(),
                                     Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.rank() < d) {
    std::cerr << "[xlre] warning: target pair matrix is rank-deficient (rank "
              << svd.rank() << " < " << d
              << "); returning the minimum-norm least-squares mapping\n";
  }
  MappingMatrix mapping;
  mapping.matrix = svd.solve(pairs.source.transpose()).transpose();
  mapping.kind = MappingKind::regular;
  return mapping;
}

MappingMatrix learn_orthogonal(const AlignedPairSet& pairs) {
  check_pair_shapes(pairs);
  const Eigen::MatrixXd source_unit = normalize_lengths(pairs.source);
  const Eigen::MatrixXd target_unit = normalize_lengths(pairs.target);
  const Eigen::MatrixXd cross = source_unit * target_unit.transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  MappingMatrix mapping;
  mapping.matrix = svd.matrixU() * svd.matrixV().transpose();
  mapping.kind = MappingKind::orthogonal;
  return mapping;
}

double orthogonal_objective(const MappingMatrix& mapping,
                            const AlignedPairSet& pairs) {
  check_pair_shapes(pairs);
  const Eigen::MatrixXd source_unit = normalize_lengths(pairs.source);
  const Eigen::MatrixXd target_unit = normalize_lengths(pairs.target);
  return (source_unit - mapping.matrix * target_unit).squaredNorm();
}

Eigen::VectorXd project(const MappingMatrix& mapping, const Eigen::VectorXd& vec) {
  if (vec.size() != mapping.matrix.cols()) {
    throw ValidationError("cannot project a " + std::to_string(vec.size()) +
                          "-dim vector through a " + std::to_string(mapping.dim()) +
                          "x" + std::to_string(mapping.dim()) + " mapping");
  }
  return mapping.matrix * vec;
}

Eigen::MatrixXd project_all(const MappingMatrix& mapping, const Eigen::MatrixXd& vecs) {
  if (vecs.rows() != mapping.matrix.cols()) {
    throw ValidationError("cannot project " + std::to_string(vecs.rows()) +
                          "-dim vectors through a " + std::to_string(mapping.dim()) +
                          "x" + std::to_string(mapping.dim()) + " mapping");
  }
  return mapping.matrix * vecs;
}

BilingualDictionary induce_dictionary(const MappingMatrix& mapping,
                                      const EmbeddingSet& source,
                                      const EmbeddingSet& target, int top_k) {
  if (source.vocab.size() == 0 || target.vocab.size() == 0) {
    throw ValidationError("cannot induce a dictionary from an empty vocabulary");
  }
  if (top_k < 1) throw ValidationError("induction top_k must be >= 1");
  const Eigen::Index n_source =
      std::min<Eigen::Index>(top_k, source.vectors.cols());
  const Eigen::Index n_target =
      std::min<Eigen::Index>(top_k, target.vectors.cols());

  // Cosine similarity: normalize columns, zero vectors stay zero.
  auto unit_columns = [](Eigen::MatrixXd m) {
    for (Eigen::Index i = 0; i < m.cols(); ++i) {
      const double norm = m.col(i).norm();
      if (norm > 0) m.col(i) /= norm;
    }
    return m;
  };
  const Eigen::MatrixXd source_unit = unit_columns(source.vectors.leftCols(n_source));
  const Eigen::MatrixXd projected =
      unit_columns(project_all(mapping, target.vectors.leftCols(n_target)));

  BilingualDictionary dict;
  dict.pairs.reserve(static_cast<size_t>(n_target));
  constexpr Eigen::Index kChunk = 256;
  for (Eigen::Index start = 0; start < n_target; start += kChunk) {
    const Eigen::Index width = std::min(kChunk, n_target - start);
    const Eigen::MatrixXd scores =
        source_unit.transpose() * projected.middleCols(start, width);
    for (Eigen::Index j = 0; j < width; ++j) {
      Eigen::Index best = 0;
      for (Eigen::Index i = 1; i < n_source; ++i) {
        if (scores(i, j) > scores(best, j)) best = i;  // ties keep the lower id
      }
      dict.pairs.emplace_back(source.vocab.words[static_cast<size_t>(best)],
                              target.vocab.words[static_cast<size_t>(start + j)]);
    }
  }
  return dict;
}

namespace {

std::vector<std::pair<std::string, std::string>> sorted_pairs(
    const BilingualDictionary& dict) {
  auto pairs = dict.pairs;
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

}  // namespace

SelfLearnResult self_learn(const BilingualDictionary& seed,
                           const EmbeddingSet& source, const EmbeddingSet& target,
                           int max_iters, int top_k) {
  if (max_iters < 0) throw ValidationError("max_iters must be >= 0");
  if (seed.pairs.empty()) throw ValidationError("seed dictionary is empty");

  SelfLearnResult result;
  result.dictionary = seed;
  AlignedPairSet pairs = align_pairs(seed, source, target);
  result.mapping = learn_orthogonal(pairs);
  result.objectives.push_back(orthogonal_objective(result.mapping, pairs));

  for (int iter = 0; iter < max_iters; ++iter) {
    BilingualDictionary induced = induce_dictionary(result.mapping, source, target, top_k);
    if (sorted_pairs(induced) == sorted_pairs(result.dictionary)) break;
    result.dictionary = std::move(induced);
    pairs = align_pairs(result.dictionary, source, target);
    result.mapping = learn_orthogonal(pairs);
    result.objectives.push_back(orthogonal_objective(result.mapping, pairs));
  }
  return result;
}

void save_mapping(const MappingMatrix& mapping, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write mapping file: " + path);
  out << mapping.dim() << ' ' << to_string(mapping.kind) << '\n';
  char buffer[64];
  for (Eigen::Index r = 0; r < mapping.matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < mapping.matrix.cols(); ++c) {
      std::snprintf(buffer, sizeof(buffer), c == 0 ? "%.17g" : " %.17g",
                    mapping.matrix(r, c));
      out << buffer;
    }
    out << '\n';
  }
}

MappingMatrix load_mapping(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open mapping file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path + ": missing header");
  int64_t dim = 0;
  std::string kind_name;
  {
    std::istringstream header(line);
    std::string extra;
    if (!(header >> dim >> kind_name) || (header >> extra) || dim < 1) {
      throw ValidationError(path + ":1: header must be 'd kind'");
    }
  }
  MappingMatrix mapping;
  mapping.kind = mapping_kind_from_string(kind_name);
  mapping.matrix.resize(dim, dim);
  for (int64_t r = 0; r < dim; ++r) {
    if (!std::getline(in, line)) {
      throw ValidationError(path + ": expected " + std::to_string(dim) +
                            " matrix rows, found " + std::to_string(r));
    }
    std::istringstream stream(line);
    for (int64_t c = 0; c < dim; ++c) {
      if (!(stream >> mapping.matrix(r, c))) {
        throw ValidationError(path + ":" + std::to_string(r + 2) + ": expected " +
                              std::to_string(dim) + " values");
      }
    }
    double excess;
    if (stream >> excess) {
      throw ValidationError(path + ":" + std::to_string(r + 2) + ": more than " +
                            std::to_string(dim) + " values");
    }
  }
  if (mapping.kind == MappingKind::orthogonal) {
    const double drift =
        (mapping.matrix.transpose() * mapping.matrix -
         Eigen::MatrixXd::Identity(dim, dim))
            .norm();
    if (drift >= 1e-8) {
      throw ValidationError(path + ": matrix declared orthogonal but ||M^T M - I|| = " +
                            std::to_string(drift));
    }
  }
  return mapping;
}

}  // namespace xlre
