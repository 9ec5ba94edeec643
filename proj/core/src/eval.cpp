#include "star/eval.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "star/error.hpp"

namespace star {

int hit_rate_at_k(std::optional<std::size_t> rank, std::size_t k) {
  return rank && *rank >= 1 && *rank <= k ? 1 : 0;
}

double ndcg_at_k(std::optional<std::size_t> rank, std::size_t k) {
  if (!hit_rate_at_k(rank, k)) return 0.0;
  return 1.0 / std::log2(static_cast<double>(*rank) + 1.0);
}

nlohmann::json MetricReport::metrics_json() const {
  nlohmann::json out;
  for (std::size_t k : ks) {
    out["HR@" + std::to_string(k)] = hit_rate.at(k);
    out["NDCG@" + std::to_string(k)] = ndcg.at(k);
  }
  return out;
}

std::string MetricReport::detail_jsonl() const {
  std::string out;
  for (const auto& [user, rank] : ranks) {
    nlohmann::json rec;
    rec["user"] = user;
    rec["rank"] = rank ? nlohmann::json(*rank) : nlohmann::json(nullptr);
    out += rec.dump();
    out += '\n';
  }
  return out;
}

MetricReport evaluate_run(std::span<const UserPrediction> predictions,
                          std::span<const EvalTarget> targets, std::span<const std::size_t> ks) {
  if (ks.empty()) throw ConfigError("evaluate: at least one cutoff K is required");
  MetricReport report;
  report.ks.assign(ks.begin(), ks.end());
  std::sort(report.ks.begin(), report.ks.end());
  report.ks.erase(std::unique(report.ks.begin(), report.ks.end()), report.ks.end());
  if (report.ks.front() == 0) throw ConfigError("evaluate: cutoffs must be >= 1");

  std::unordered_map<UserIndex, const UserPrediction*> by_user;
  for (const auto& p : predictions) by_user[p.user] = &p;

  // Histogram of hit positions: summing gain per position in position order
  // keeps the floating-point total independent of user order.
  const std::size_t max_k = report.ks.back();
  std::vector<std::size_t> hits_at(max_k + 1, 0);
  for (const auto& t : targets) {
    std::optional<std::size_t> rank;
    auto it = by_user.find(t.user);
    if (it == by_user.end()) {
      ++report.missing_predictions;
    } else {
      const auto& items = it->second->items;
      auto pos = std::find(items.begin(), items.end(), t.item);
      if (pos != items.end()) rank = static_cast<std::size_t>(pos - items.begin()) + 1;
    }
    if (rank && *rank <= max_k) ++hits_at[*rank];
    report.ranks.emplace_back(t.user, rank);
  }
  if (report.missing_predictions > 0) {
    spdlog::warn("evaluate: {} users have no prediction and count as misses",
                 report.missing_predictions);
  }

  report.users = targets.size();
  const double denom = targets.empty() ? 1.0 : static_cast<double>(targets.size());
  for (std::size_t k : report.ks) {
    std::size_t hits = 0;
    double gain = 0.0;
    for (std::size_t r = 1; r <= k; ++r) {
      hits += hits_at[r];
      gain += static_cast<double>(hits_at[r]) * ndcg_at_k(r, k);
    }
    report.hit_rate[k] = static_cast<double>(hits) / denom;
    report.ndcg[k] = gain / denom;
  }
  return report;
}

}  // namespace star
