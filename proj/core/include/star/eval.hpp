#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "star/corpus.hpp"

namespace star {

/// 1 iff the held-out item sits at 1-based `rank` <= k. A miss is nullopt.
int hit_rate_at_k(std::optional<std::size_t> rank, std::size_t k);

/// 1 / log2(rank + 1) when rank <= k, else 0 (single relevant item).
double ndcg_at_k(std::optional<std::size_t> rank, std::size_t k);

struct UserPrediction {
  UserIndex user = 0;
  std::vector<ItemIndex> items;  // final ranked list, best first
};

struct EvalTarget {
  UserIndex user = 0;
  ItemIndex item = 0;
};

struct MetricReport {
  std::vector<std::size_t> ks;
  std::map<std::size_t, double> hit_rate;
  std::map<std::size_t, double> ndcg;
  std::size_t users = 0;
  std::size_t missing_predictions = 0;
  std::vector<std::pair<UserIndex, std::optional<std::size_t>>> ranks;  // per target, input order

  nlohmann::json metrics_json() const;
  /// One JSON line per user: {"user", "rank"} with rank null on a miss.
  std::string detail_jsonl() const;
};

/// Averages HR@K / NDCG@K over every target. Users without a prediction
/// count as misses. Aggregation is exact and independent of user order.
MetricReport evaluate_run(std::span<const UserPrediction> predictions,
                          std::span<const EvalTarget> targets, std::span<const std::size_t> ks);

}  // namespace star
