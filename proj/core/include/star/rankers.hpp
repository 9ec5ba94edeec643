#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "star/corpus.hpp"
#include "star/rank.hpp"

namespace star {

/// Formats a preference order over 1-based ids as `{"rank": "[a] > [b]"}`.
std::string format_rank_reply(const std::vector<std::size_t>& ids);

/// Knows the held-out item and always puts it first; everything else keeps
/// its incoming order. Point-wise: 10 for the held-out item, 0 otherwise.
class OracleRanker final : public Ranker {
 public:
  std::string name() const override { return "oracle"; }
  std::string complete(const RankRequest& request) override;
};

/// Oracle whose answer is inverted with probability p. The coin for each
/// call is a pure function of (seed, user, call_index), so runs are
/// reproducible and, for a fixed seed, the flipped calls at a smaller p
/// are a subset of those at a larger p.
class NoisyOracleRanker final : public Ranker {
 public:
  NoisyOracleRanker(double p, std::uint64_t seed);

  std::string name() const override { return "noisy"; }
  std::string complete(const RankRequest& request) override;

  bool flips(UserIndex user, std::size_t call_index) const;

 private:
  double p_;
  std::uint64_t seed_;
};

/// Deterministic metadata heuristic: prefers candidates whose title,
/// category and brand tokens overlap most with the user's history.
class LexicalRanker final : public Ranker {
 public:
  explicit LexicalRanker(const std::vector<ItemMeta>& catalog);

  std::string name() const override { return "lexical"; }
  std::string complete(const RankRequest& request) override;

  double affinity(ItemIndex candidate, const std::vector<ItemIndex>& history) const;

 private:
  std::vector<std::set<std::string>> tokens_;
};

/// OpenAI-compatible `/v1/chat/completions` client.
class HttpChatRanker final : public Ranker {
 public:
  struct Options {
    std::string endpoint;
    std::string model;
    std::string token;
    double temperature = 0.0;
    int max_retries = 3;
    int timeout_seconds = 120;
    int backoff_ms = 1000;
  };

  explicit HttpChatRanker(Options options);

  std::string name() const override { return "http"; }
  std::string complete(const RankRequest& request) override;

 private:
  Options options_;
};

struct RankerSpec {
  enum class Kind { remote_chat, mock_oracle, mock_lexical, mock_noisy };
  Kind kind = Kind::mock_oracle;
  std::string endpoint;
  std::string model;
  std::string token_env = "STAR_RANKER_TOKEN";
  double temperature = 0.0;
  int max_retries = 3;
  int timeout_seconds = 120;
  double p = 0.0;
  std::uint64_t seed = 0;
};

std::string to_string(RankerSpec::Kind kind);
RankerSpec::Kind ranker_kind_from_string(const std::string& s);

/// Throws ConfigError on an invalid spec (e.g. noisy p outside [0, 1]).
std::unique_ptr<Ranker> make_ranker(const RankerSpec& spec, const std::vector<ItemMeta>& catalog);

}  // namespace star
