#include "star/rankers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "http_client.hpp"
#include "star/error.hpp"

namespace star {

using nlohmann::json;

std::string format_rank_reply(const std::vector<std::size_t>& ids) {
  std::string rank;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) rank += " > ";
    rank += "[" + std::to_string(ids[i]) + "]";
  }
  json reply;
  reply["rank"] = rank;
  return reply.dump();
}

namespace {

std::string format_score_reply(int score) {
  json reply;
  reply["score"] = score;
  return reply.dump();
}

// 1-based ids with the held-out item first, the rest in incoming order.
std::vector<std::size_t> oracle_order(const RankRequest& req) {
  std::vector<std::size_t> ids;
  ids.reserve(req.items.size());
  for (std::size_t i = 0; i < req.items.size(); ++i) {
    if (req.ground_truth && req.items[i] == *req.ground_truth) ids.push_back(i + 1);
  }
  for (std::size_t i = 0; i < req.items.size(); ++i) {
    if (!(req.ground_truth && req.items[i] == *req.ground_truth)) ids.push_back(i + 1);
  }
  return ids;
}

std::string reply_for_order(const RankRequest& req, std::vector<std::size_t> ids) {
  if (req.task == RankTask::selection) ids.resize(std::min(ids.size(), req.select_count));
  return format_rank_reply(ids);
}

std::set<std::string> tokenize(const ItemMeta& meta) {
  std::string text;
  if (meta.title) text += *meta.title + " ";
  for (const auto& path : meta.categories) {
    for (const auto& c : path) text += c + " ";
  }
  if (meta.brand) text += *meta.brand;
  std::set<std::string> tokens;
  std::string tok;
  auto flush = [&] {
    if (tok.size() >= 2) tokens.insert(tok);
    tok.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) != 0) tok.push_back(static_cast<char>(std::tolower(c)));
    else flush();
  }
  flush();
  return tokens;
}

}  // namespace

std::string OracleRanker::complete(const RankRequest& request) {
  if (request.task == RankTask::point) {
    const bool hit = request.ground_truth && request.items.front() == *request.ground_truth;
    return format_score_reply(hit ? 10 : 0);
  }
  return reply_for_order(request, oracle_order(request));
}

NoisyOracleRanker::NoisyOracleRanker(double p, std::uint64_t seed) : p_(p), seed_(seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("noisy ranker: p must lie in [0, 1]");
}

bool NoisyOracleRanker::flips(UserIndex user, std::size_t call_index) const {
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(user), static_cast<std::uint32_t>(call_index),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(call_index) >> 32)};
  std::mt19937_64 rng(seq);
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return u < p_;
}

std::string NoisyOracleRanker::complete(const RankRequest& request) {
  const bool flip = flips(request.user, request.call_index);
  if (request.task == RankTask::point) {
    const bool hit = request.ground_truth && request.items.front() == *request.ground_truth;
    const int score = hit ? 10 : 0;
    return format_score_reply(flip ? 10 - score : score);
  }
  auto ids = oracle_order(request);
  if (flip) std::reverse(ids.begin(), ids.end());
  return reply_for_order(request, std::move(ids));
}

LexicalRanker::LexicalRanker(const std::vector<ItemMeta>& catalog) {
  tokens_.reserve(catalog.size());
  for (const auto& m : catalog) tokens_.push_back(tokenize(m));
}

double LexicalRanker::affinity(ItemIndex candidate, const std::vector<ItemIndex>& history) const {
  const auto& cand = tokens_.at(candidate);
  if (cand.empty()) return 0.0;
  std::set<std::string> hist;
  for (ItemIndex h : history) hist.insert(tokens_.at(h).begin(), tokens_.at(h).end());
  std::size_t shared = 0;
  for (const auto& t : cand) shared += hist.count(t);
  return static_cast<double>(shared) / static_cast<double>(cand.size());
}

std::string LexicalRanker::complete(const RankRequest& request) {
  std::vector<double> scores;
  for (ItemIndex item : request.items) scores.push_back(affinity(item, request.history));
  if (request.task == RankTask::point) {
    return format_score_reply(static_cast<int>(std::lround(10.0 * scores.front())));
  }
  std::vector<std::size_t> ids(request.items.size());
  std::iota(ids.begin(), ids.end(), 1);
  std::stable_sort(ids.begin(), ids.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a - 1] > scores[b - 1]; });
  return reply_for_order(request, std::move(ids));
}

HttpChatRanker::HttpChatRanker(Options options) : options_(std::move(options)) {
  if (options_.endpoint.empty()) throw ConfigError("http ranker needs an endpoint");
  if (options_.model.empty()) throw ConfigError("http ranker needs a model name");
}

std::string HttpChatRanker::complete(const RankRequest& request) {
  json body;
  body["model"] = options_.model;
  body["temperature"] = options_.temperature;
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  body["messages"] = std::move(messages);

  const std::string raw = detail::post_json({options_.endpoint, body.dump(), options_.token,
                                             options_.timeout_seconds, options_.max_retries,
                                             options_.backoff_ms});
  const json reply = json::parse(raw, nullptr, false);
  try {
    if (reply.is_discarded()) throw ProviderError("chat response is not JSON");
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed chat response: ") + e.what());
  }
}

std::string to_string(RankerSpec::Kind kind) {
  switch (kind) {
    case RankerSpec::Kind::remote_chat: return "http";
    case RankerSpec::Kind::mock_oracle: return "oracle";
    case RankerSpec::Kind::mock_lexical: return "lexical";
    case RankerSpec::Kind::mock_noisy: return "noisy";
  }
  return "oracle";
}

RankerSpec::Kind ranker_kind_from_string(const std::string& s) {
  if (s == "http") return RankerSpec::Kind::remote_chat;
  if (s == "oracle") return RankerSpec::Kind::mock_oracle;
  if (s == "lexical") return RankerSpec::Kind::mock_lexical;
  if (s == "noisy") return RankerSpec::Kind::mock_noisy;
  throw ConfigError("unknown ranker '" + s + "'");
}

std::unique_ptr<Ranker> make_ranker(const RankerSpec& spec, const std::vector<ItemMeta>& catalog) {
  switch (spec.kind) {
    case RankerSpec::Kind::mock_oracle: return std::make_unique<OracleRanker>();
    case RankerSpec::Kind::mock_noisy: return std::make_unique<NoisyOracleRanker>(spec.p, spec.seed);
    case RankerSpec::Kind::mock_lexical: return std::make_unique<LexicalRanker>(catalog);
    case RankerSpec::Kind::remote_chat: {
      HttpChatRanker::Options opt;
      opt.endpoint = spec.endpoint;
      opt.model = spec.model;
      opt.temperature = spec.temperature;
      opt.max_retries = spec.max_retries;
      opt.timeout_seconds = spec.timeout_seconds;
      if (const char* token = std::getenv(spec.token_env.c_str())) opt.token = token;
      return std::make_unique<HttpChatRanker>(std::move(opt));
    }
  }
  throw ConfigError("unknown ranker kind");
}

}  // namespace star
