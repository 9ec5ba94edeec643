#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "star/corpus.hpp"
#include "star/embed.hpp"
#include "star/similarity.hpp"

namespace star {

struct RetrievalConfig {
  double a = 0.5;        // semantic weight; 1 - a goes to the collaborative term
  double lambda = 0.7;   // recency decay base
  std::optional<std::size_t> history_len = 3;  // nullopt: whole input sequence
  bool use_ratings = false;
  std::size_t k = 20;
  bool exclude_seen = true;
  std::optional<std::uint64_t> shuffle_seed;

  /// Throws ConfigError when a knob is out of range.
  void validate() const;
};

struct ScoredCandidate {
  ItemIndex item = 0;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based position in the returned list
};

/// The last min(l, |history|) events of a chronological history.
std::span<const SequenceEvent> recent_history(std::span<const SequenceEvent> history,
                                              std::optional<std::size_t> history_len);

/// Decayed mix of semantic and collaborative similarity between `candidate`
/// and the user's recent history:
///
///   score = 1/h * sum_j r_j * lambda^t_j * (a * RS[x][s_j] + (1 - a) * RC[x][s_j])
///
/// with t_j = 1 for the most recent item and h the number of summed terms.
/// Throws Error on an empty history.
double score_item(ItemIndex candidate, std::span<const SequenceEvent> history,
                  const RetrievalConfig& config, const SimilaritySource& semantic,
                  const SimilaritySource& collaborative);

/// Scores every item (minus seen ones when `exclude_seen`) and returns the
/// best k, score descending with ties to the lower item index. With a
/// shuffle seed the returned list is permuted deterministically; `salt`
/// (typically the user index) decorrelates permutations across users.
/// With a == 1 the collaborative source is never read, with a == 0 the
/// semantic one.
std::vector<ScoredCandidate> retrieve_top_k(std::span<const SequenceEvent> history,
                                            const RetrievalConfig& config,
                                            const SimilaritySource& semantic,
                                            const SimilaritySource& collaborative,
                                            std::uint64_t salt = 0);

/// Ranks candidates by cosine to the mean embedding of the recent history.
/// Uses history_len, k, exclude_seen and shuffle_seed from `config`.
std::vector<ScoredCandidate> average_pooling_baseline(std::span<const SequenceEvent> history,
                                                      const EmbeddingMatrix& embeddings,
                                                      const RetrievalConfig& config,
                                                      std::uint64_t salt = 0);

}  // namespace star
