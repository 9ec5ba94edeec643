#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "star/collab.hpp"
#include "star/embed.hpp"
#include "star/rank.hpp"
#include "star/rankers.hpp"
#include "star/retrieval.hpp"

namespace star {

enum class EvalSplit { validation, test };
enum class RetrievalMethod { star, average_pooling };

std::string to_string(EvalSplit split);
EvalSplit eval_split_from_string(const std::string& s);
std::string to_string(RetrievalMethod method);
RetrievalMethod retrieval_method_from_string(const std::string& s);
std::string to_string(CountSplit split);
CountSplit count_split_from_string(const std::string& s);

/// Where stage artifacts live. Relative paths resolve against the cwd.
struct RunPaths {
  std::string data_dir = "dataset";
  std::string embeddings_dir = "embeddings";
  std::string matrices_dir = "matrices";
  std::string out_dir = "runs";
};

/// Every knob of an experiment. Serializes to JSON and back losslessly, so a
/// saved config replays the same run.
struct RunConfig {
  RunPaths paths;
  EmbeddingProviderSpec embedding;
  std::optional<std::size_t> semantic_top_k;
  CountSplit count_split = CountSplit::train;

  RetrievalMethod method = RetrievalMethod::star;
  RetrievalConfig retrieval;
  std::optional<RankStrategy> ranking;  // nullopt: retrieval only
  PromptInfoFlags prompt;
  RankerSpec ranker;

  std::vector<std::size_t> ks = {5, 10};
  EvalSplit split = EvalSplit::test;
  std::size_t threads = 1;

  /// Throws ConfigError on invalid combinations (e.g. w > k).
  void validate() const;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);

  /// The experiment knobs only (no paths, no thread count).
  nlohmann::json experiment_json() const;
  std::string fingerprint() const;
};

/// Applies one `key=value` override, e.g. "a=0.5", "w=4", "ranker=noisy".
/// Throws ConfigError on an unknown key or unparsable value.
void apply_override(RunConfig& config, const std::string& key, const std::string& value);

/// Cartesian product of `key=v1,v2,...` axes applied on top of `base`.
std::vector<RunConfig> expand_grid(const RunConfig& base,
                                   const std::vector<std::pair<std::string, std::vector<std::string>>>& axes);

/// Parses "key=v1,v2" into an axis.
std::pair<std::string, std::vector<std::string>> parse_axis(const std::string& spec);

}  // namespace star
