#pragma once

#include <algorithm>
#include <atomic>
#include <memory>
#include <functional>
#include <mutex>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "star/embed.hpp"
#include "star/error.hpp"
#include "star/rank.hpp"
#include "star/rankers.hpp"
#include "star/similarity.hpp"

namespace star::testing {

/// Dense matrix given as nested vectors.
class DenseSource final : public SimilaritySource {
 public:
  explicit DenseSource(std::vector<std::vector<double>> m) : m_(std::move(m)) {}
  std::size_t size() const override { return m_.size(); }
  double at(ItemIndex r, ItemIndex c) const override { return m_.at(r).at(c); }
  void accumulate_column(ItemIndex col, double weight, std::span<double> acc) const override {
    for (std::size_t x = 0; x < m_.size(); ++x) acc[x] += weight * m_[x][col];
  }

 private:
  std::vector<std::vector<double>> m_;
};

/// Forwards to another source and counts every read.
class CountingSource final : public SimilaritySource {
 public:
  explicit CountingSource(const SimilaritySource& inner) : inner_(inner) {}
  std::size_t size() const override { return inner_.size(); }
  double at(ItemIndex r, ItemIndex c) const override {
    ++reads;
    return inner_.at(r, c);
  }
  void accumulate_column(ItemIndex col, double weight, std::span<double> acc) const override {
    ++reads;
    inner_.accumulate_column(col, weight, acc);
  }
  mutable std::atomic<std::size_t> reads{0};

 private:
  const SimilaritySource& inner_;
};

/// Embedding provider that records batch sizes and returns a fixed function
/// of each text. Batches whose 0-based call number is in `fail_calls` throw.
class RecordingEmbedder final : public EmbeddingProvider {
 public:
  explicit RecordingEmbedder(std::size_t dim, std::vector<std::size_t> fail_calls = {})
      : dim_(dim), fail_(std::move(fail_calls)) {}

  std::string tag() const override {
    return tag_.empty() ? "recording-d" + std::to_string(dim_) : tag_;
  }
  std::size_t dim() const override { return dim_; }
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override {
    std::size_t call;
    {
      std::lock_guard lock(mu_);
      call = batches.size();
      batches.push_back(texts.size());
    }
    if (std::find(fail_.begin(), fail_.end(), call) != fail_.end()) throw ProviderError("scripted failure");
    std::vector<std::vector<double>> out;
    for (const auto& t : texts) {
      std::vector<double> v(dim_);
      for (std::size_t i = 0; i < dim_; ++i) v[i] = static_cast<double>((t.size() * (i + 3)) % 7) + 1.0;
      out.push_back(v);
    }
    return out;
  }

  std::vector<std::size_t> batches;
  std::string tag_;

 private:
  std::size_t dim_;
  std::vector<std::size_t> fail_;
  std::mutex mu_;
};

/// Ranker driven by a callback; records every request it receives.
class ScriptedRanker final : public Ranker {
 public:
  using Fn = std::function<std::string(const RankRequest&)>;
  explicit ScriptedRanker(Fn fn) : fn_(std::move(fn)) {}
  std::string name() const override { return "scripted"; }
  std::string complete(const RankRequest& req) override {
    {
      std::lock_guard lock(mu_);
      requests.push_back(req);
    }
    return fn_(req);
  }
  std::vector<RankRequest> requests;

 private:
  Fn fn_;
  std::mutex mu_;
};

/// Echoes the incoming order; point-wise gives every item the same score.
inline std::string identity_reply(const RankRequest& req) {
  if (req.task == RankTask::point) return R"({"score": 5})";
  std::vector<std::size_t> ids;
  const std::size_t n = req.task == RankTask::selection ? req.select_count : req.items.size();
  for (std::size_t i = 1; i <= n; ++i) ids.push_back(i);
  return format_rank_reply(ids);
}

/// Ranks by a fixed per-item preference (higher first), ties by position.
inline std::function<std::string(const RankRequest&)> preference_reply(std::vector<double> pref) {
  return [pref = std::move(pref)](const RankRequest& req) {
    if (req.task == RankTask::point) {
      return std::string(R"({"score": )") + std::to_string(static_cast<int>(pref.at(req.items[0]))) + "}";
    }
    std::vector<std::size_t> ids(req.items.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i + 1;
    std::stable_sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
      return pref.at(req.items[a - 1]) > pref.at(req.items[b - 1]);
    });
    if (req.task == RankTask::selection) ids.resize(req.select_count);
    return format_rank_reply(ids);
  };
}

/// Replies with malformed, partial, duplicated, out-of-range or valid
/// rankings, or throws, chosen by a seeded generator.
inline std::function<std::string(const RankRequest&)> garbage_reply(std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  auto mu = std::make_shared<std::mutex>();
  return [rng, mu](const RankRequest& req) -> std::string {
    std::lock_guard lock(*mu);
    const std::size_t n = req.items.size();
    switch ((*rng)() % 9) {
      case 0: return "";
      case 1: return "I think item two is best.";
      case 2: return R"({"rank": "[1] > [1]"})";
      case 3: return format_rank_reply({n + 1, 1});
      case 4: return format_rank_reply({1});
      case 5: return R"({"rank": 42})";
      case 6: throw ProviderError("scripted outage");
      case 7: return R"({"score": 99})";
      default: {
        std::vector<std::size_t> ids(n);
        for (std::size_t i = 0; i < n; ++i) ids[i] = i + 1;
        std::shuffle(ids.begin(), ids.end(), *rng);
        if (req.task == RankTask::selection) ids.resize(req.select_count);
        if (req.task == RankTask::point) return R"({"score": )" + std::to_string((*rng)() % 11) + "}";
        return format_rank_reply(ids);
      }
    }
  };
}

}  // namespace star::testing
