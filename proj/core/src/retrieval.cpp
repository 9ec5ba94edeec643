#include "star/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <spdlog/spdlog.h>

#include "star/error.hpp"

namespace star {

namespace {

std::vector<bool> seen_mask(std::span<const SequenceEvent> history, std::size_t n) {
  std::vector<bool> seen(n, false);
  for (const auto& e : history) {
    if (e.item < n) seen[e.item] = true;
  }
  return seen;
}

std::vector<ScoredCandidate> select_top_k(std::span<const double> scores,
                                          const std::vector<bool>& excluded,
                                          const RetrievalConfig& config, std::uint64_t salt) {
  std::vector<ScoredCandidate> pool;
  pool.reserve(scores.size());
  for (ItemIndex x = 0; x < scores.size(); ++x) {
    if (!excluded[x]) pool.push_back({x, scores[x], 0});
  }
  if (pool.empty()) {
    spdlog::warn("retrieval: no candidate items left after excluding the history");
    return pool;
  }
  if (config.k > pool.size()) {
    spdlog::warn("retrieval: k={} exceeds {} available candidates", config.k, pool.size());
  }
  const std::size_t keep = std::min(config.k, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(),
                    [](const ScoredCandidate& l, const ScoredCandidate& r) {
                      if (l.score != r.score) return l.score > r.score;
                      return l.item < r.item;
                    });
  pool.resize(keep);
  if (config.shuffle_seed) {
    std::mt19937_64 rng(*config.shuffle_seed ^ (salt * 0x9E3779B97F4A7C15ull));
    std::shuffle(pool.begin(), pool.end(), rng);
  }
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i].rank = i + 1;
  return pool;
}

}  // namespace

void RetrievalConfig::validate() const {
  if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("retrieval: a must lie in [0, 1]");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("retrieval: lambda must lie in (0, 1]");
  if (history_len && *history_len == 0) throw ConfigError("retrieval: history length must be >= 1");
  if (k == 0) throw ConfigError("retrieval: k must be >= 1");
}

std::span<const SequenceEvent> recent_history(std::span<const SequenceEvent> history,
                                              std::optional<std::size_t> history_len) {
  if (!history_len || *history_len >= history.size()) return history;
  return history.subspan(history.size() - *history_len);
}

double score_item(ItemIndex candidate, std::span<const SequenceEvent> history,
                  const RetrievalConfig& config, const SimilaritySource& semantic,
                  const SimilaritySource& collaborative) {
  const auto recent = recent_history(history, config.history_len);
  if (recent.empty()) throw Error("score_item: empty history");
  const auto h = static_cast<double>(recent.size());
  double total = 0.0;
  double decay = 1.0;
  for (std::size_t back = 0; back < recent.size(); ++back) {
    const auto& event = recent[recent.size() - 1 - back];
    decay *= config.lambda;
    const double r = config.use_ratings ? event.rating : 1.0;
    double mix = 0.0;
    if (config.a > 0.0) mix += config.a * semantic.at(candidate, event.item);
    if (config.a < 1.0) mix += (1.0 - config.a) * collaborative.at(candidate, event.item);
    total += r * decay * mix;
  }
  return total / h;
}

std::vector<ScoredCandidate> retrieve_top_k(std::span<const SequenceEvent> history,
                                            const RetrievalConfig& config,
                                            const SimilaritySource& semantic,
                                            const SimilaritySource& collaborative,
                                            std::uint64_t salt) {
  config.validate();
  const auto recent = recent_history(history, config.history_len);
  if (recent.empty()) throw Error("retrieve_top_k: empty history");
  const std::size_t n = config.a > 0.0 ? semantic.size() : collaborative.size();
  if (config.a > 0.0 && config.a < 1.0 && semantic.size() != collaborative.size()) {
    throw Error("retrieve_top_k: semantic and collaborative matrices differ in size");
  }

  std::vector<double> scores(n, 0.0);
  const auto h = static_cast<double>(recent.size());
  double decay = 1.0;
  for (std::size_t back = 0; back < recent.size(); ++back) {
    const auto& event = recent[recent.size() - 1 - back];
    decay *= config.lambda;
    const double w = (config.use_ratings ? event.rating : 1.0) * decay / h;
    if (config.a > 0.0) semantic.accumulate_column(event.item, w * config.a, scores);
    if (config.a < 1.0) collaborative.accumulate_column(event.item, w * (1.0 - config.a), scores);
  }

  const auto excluded = config.exclude_seen ? seen_mask(history, n) : std::vector<bool>(n, false);
  return select_top_k(scores, excluded, config, salt);
}

std::vector<ScoredCandidate> average_pooling_baseline(std::span<const SequenceEvent> history,
                                                      const EmbeddingMatrix& embeddings,
                                                      const RetrievalConfig& config,
                                                      std::uint64_t salt) {
  config.validate();
  const auto recent = recent_history(history, config.history_len);
  if (recent.empty()) throw Error("average_pooling_baseline: empty history");

  std::vector<double> mean(embeddings.dim(), 0.0);
  for (const auto& e : recent) {
    const auto row = embeddings.row(e.item);
    for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += row[d];
  }
  for (double& v : mean) v /= static_cast<double>(recent.size());

  const std::size_t n = embeddings.rows();
  std::vector<double> scores(n);
  for (std::size_t x = 0; x < n; ++x) scores[x] = cosine(mean, embeddings.row(x));
  const auto excluded = config.exclude_seen ? seen_mask(history, n) : std::vector<bool>(n, false);
  return select_top_k(scores, excluded, config, salt);
}

}  // namespace star
