#pragma once

#include <cstdint>
#include <string>

#include "xlre/embeddings.hpp"
#include "xlre/pipeline.hpp"
#include "xlre/remodel.hpp"

namespace xlre {

// Flat key-value experiment configuration; see parse_run_config for the keys.
struct RunConfig {
  std::string output_dir;
  std::string mode = "synthetic";  // "synthetic" | "files"
  uint64_t seed = 1;

  SyntheticConfig synthetic;

  struct FileInputs {
    std::string source_corpus;
    std::string target_corpus;
    std::string source_annotated;
    std::string target_annotated;
    std::string dictionary;
    bool lowercase = false;
  } files;

  double split_train = 0.8;
  double split_dev = 0.1;
  double split_test = 0.1;

  CbowConfig embedding;  // seed is overwritten from `seed`

  std::string mapping_kind = "regular";  // regular | orthogonal | self-learn
  int dictionary_size = 1000;
  int self_learn_iters = 10;
  int induce_top_k = kDefaultInduceTopK;

  REModelConfig re;  // label/entity sets are derived from the data
  int ensemble_size = 1;

  void validate() const;
};

// Parses `key = value` lines; '#' starts a comment; unknown keys are errors.
RunConfig parse_run_config(const std::string& path);

// Executes split -> train embeddings -> train source model -> learn mapping
// -> transfer -> evaluate, writing every artifact under output_dir. Throws
// with the failing stage name in the message.
void run_experiment(const RunConfig& config);
void run_experiment_file(const std::string& config_path);

}  // namespace xlre
