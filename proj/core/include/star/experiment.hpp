#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "star/collab.hpp"
#include "star/config.hpp"
#include "star/corpus.hpp"
#include "star/embed.hpp"
#include "star/eval.hpp"
#include "star/rank.hpp"
#include "star/retrieval.hpp"

namespace star {

/// Input events used to predict the split's target: train + validation for
/// test, train only for validation.
std::span<const SequenceEvent> split_input(const SplitDataset& data, UserIndex user, EvalSplit split);
ItemIndex split_target(const SplitDataset& data, UserIndex user, EvalSplit split);

/// One user's candidate list as stored in run files.
struct RunRecord {
  UserIndex user = 0;
  std::vector<ScoredCandidate> candidates;  // current order, best first
  std::vector<ItemIndex> history;           // recent history used for scoring
};

/// Runs `body(i)` for i in [0, count) on up to `threads` workers.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body);

std::vector<RunRecord> run_retrieval(const SplitDataset& data, EvalSplit split,
                                     const RetrievalConfig& config, RetrievalMethod method,
                                     const SimilaritySource* semantic,
                                     const SimilaritySource* collaborative,
                                     const EmbeddingMatrix* embeddings, std::size_t threads = 1);

struct RankingOutput {
  std::vector<RunRecord> records;  // candidates reordered, scores kept
  std::vector<RankAuditRecord> audit;  // grouped by user, in user order
};

/// Reranks every record. Users with fewer candidates than the window get a
/// window clamped to their list; lists shorter than 2 are left alone.
RankingOutput run_ranking(std::span<const RunRecord> records, const SplitDataset& data,
                          EvalSplit split, const RankStrategy& strategy,
                          const PromptInfoFlags& flags, Ranker& ranker,
                          const InteractionCounts* counts, std::size_t threads = 1);

std::vector<EvalTarget> split_targets(const SplitDataset& data, EvalSplit split);
MetricReport evaluate_records(std::span<const RunRecord> records, const SplitDataset& data,
                              EvalSplit split, std::span<const std::size_t> ks);

std::string records_jsonl(std::span<const RunRecord> records, EvalSplit split);
std::vector<RunRecord> parse_records_jsonl(std::string_view text, EvalSplit* split = nullptr);
std::string audit_jsonl(std::span<const RankAuditRecord> audit);

/// Loaded stage artifacts an experiment reads from.
struct ExperimentInputs {
  const SplitDataset* data = nullptr;
  const SimilaritySource* semantic = nullptr;
  const SimilaritySource* collaborative = nullptr;
  const EmbeddingMatrix* embeddings = nullptr;
  const SparseInteractionMatrix* incidence = nullptr;
};

struct ExperimentResult {
  std::vector<RunRecord> retrieved;
  std::optional<RankingOutput> ranked;
  MetricReport retrieval_metrics;
  std::optional<MetricReport> ranking_metrics;

  /// {config, fingerprint, users, retrieval: {...}, ranking: {...}|null}
  nlohmann::json report(const RunConfig& config) const;
};

/// Retrieval, optional ranking and evaluation, all in memory.
ExperimentResult run_experiment(const RunConfig& config, const ExperimentInputs& inputs);

/// Owns the artifacts loaded from `config.paths`.
struct LoadedArtifacts {
  SplitDataset data;
  std::optional<SimilarityMatrix> semantic;
  std::optional<SimilarityMatrix> collaborative;
  std::optional<EmbeddingMatrix> embeddings;
  std::optional<SparseInteractionMatrix> incidence;

  ExperimentInputs inputs() const;
};

/// Loads what `config` needs; throws MissingArtifactError naming the
/// stage to run when something is absent.
LoadedArtifacts load_artifacts(const RunConfig& config);

/// Writes report.json, config.json, retrieval.jsonl and, when ranking ran,
/// ranked.jsonl + ranked.audit.jsonl and users.jsonl into `dir`.
void write_experiment(const std::filesystem::path& dir, const RunConfig& config,
                      const ExperimentResult& result);

namespace artifact_names {
inline constexpr const char* kSemantic = "semantic.bin";
inline constexpr const char* kCollab = "collab.bin";
inline constexpr const char* kCounts = "counts.bin";
inline constexpr const char* kEmbeddings = "embeddings.bin";
}  // namespace artifact_names

}  // namespace star
