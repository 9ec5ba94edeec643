#include "star/config.hpp"

#include <charconv>

#include "star/error.hpp"
#include "star/io.hpp"

namespace star {

using nlohmann::json;

std::string to_string(EvalSplit split) { return split == EvalSplit::test ? "test" : "val"; }

EvalSplit eval_split_from_string(const std::string& s) {
  if (s == "test") return EvalSplit::test;
  if (s == "val" || s == "validation") return EvalSplit::validation;
  throw ConfigError("unknown split '" + s + "' (expected test or val)");
}

std::string to_string(RetrievalMethod method) {
  return method == RetrievalMethod::star ? "star" : "avgpool";
}

RetrievalMethod retrieval_method_from_string(const std::string& s) {
  if (s == "star") return RetrievalMethod::star;
  if (s == "avgpool" || s == "average_pooling") return RetrievalMethod::average_pooling;
  throw ConfigError("unknown retrieval method '" + s + "' (expected star or avgpool)");
}

std::string to_string(CountSplit split) {
  return split == CountSplit::train ? "train" : "train+val";
}

CountSplit count_split_from_string(const std::string& s) {
  if (s == "train") return CountSplit::train;
  if (s == "train+val") return CountSplit::train_and_validation;
  throw ConfigError("unknown count split '" + s + "' (expected train or train+val)");
}

namespace {

template <typename T>
json opt_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

json retrieval_json(const RetrievalConfig& r) {
  return {{"a", r.a},
          {"lambda", r.lambda},
          {"history_len", opt_json(r.history_len)},
          {"use_ratings", r.use_ratings},
          {"k", r.k},
          {"exclude_seen", r.exclude_seen},
          {"shuffle_seed", opt_json(r.shuffle_seed)}};
}

RetrievalConfig retrieval_from(const json& j) {
  RetrievalConfig r;
  r.a = j.value("a", r.a);
  r.lambda = j.value("lambda", r.lambda);
  r.history_len = j.contains("history_len") ? opt_from<std::size_t>(j, "history_len") : r.history_len;
  r.use_ratings = j.value("use_ratings", r.use_ratings);
  r.k = j.value("k", r.k);
  r.exclude_seen = j.value("exclude_seen", r.exclude_seen);
  r.shuffle_seed = opt_from<std::uint64_t>(j, "shuffle_seed");
  return r;
}

json strategy_json(const RankStrategy& s) {
  return {{"kind", to_string(s.kind)}, {"w", s.w}, {"d", s.d}, {"passes", s.passes}, {"k_out", s.k_out}};
}

RankStrategy strategy_from(const json& j) {
  RankStrategy s;
  s.kind = rank_kind_from_string(j.value("kind", std::string("window")));
  s.w = j.value("w", s.w);
  s.d = j.value("d", s.d);
  s.passes = j.value("passes", s.passes);
  s.k_out = j.value("k_out", s.k_out);
  return s;
}

json ranker_json(const RankerSpec& r) {
  return {{"kind", to_string(r.kind)}, {"endpoint", r.endpoint},   {"model", r.model},
          {"token_env", r.token_env},  {"temperature", r.temperature}, {"max_retries", r.max_retries},
          {"timeout_seconds", r.timeout_seconds}, {"p", r.p}, {"seed", r.seed}};
}

RankerSpec ranker_from(const json& j) {
  RankerSpec r;
  r.kind = ranker_kind_from_string(j.value("kind", std::string("oracle")));
  r.endpoint = j.value("endpoint", r.endpoint);
  r.model = j.value("model", r.model);
  r.token_env = j.value("token_env", r.token_env);
  r.temperature = j.value("temperature", r.temperature);
  r.max_retries = j.value("max_retries", r.max_retries);
  r.timeout_seconds = j.value("timeout_seconds", r.timeout_seconds);
  r.p = j.value("p", r.p);
  r.seed = j.value("seed", r.seed);
  return r;
}

json embedding_json(const EmbeddingProviderSpec& e) {
  return {{"kind", e.kind == EmbeddingProviderSpec::Kind::local_deterministic ? "local" : "http"},
          {"endpoint", e.endpoint},
          {"model", e.model},
          {"token_env", e.token_env},
          {"dim", e.dim},
          {"seed", opt_json(e.seed)},
          {"batch_size", e.batch_size},
          {"max_retries", e.max_retries},
          {"timeout_seconds", e.timeout_seconds},
          {"fanout", e.fanout}};
}

EmbeddingProviderSpec embedding_from(const json& j) {
  EmbeddingProviderSpec e;
  const auto kind = j.value("kind", std::string("local"));
  if (kind == "local") e.kind = EmbeddingProviderSpec::Kind::local_deterministic;
  else if (kind == "http") e.kind = EmbeddingProviderSpec::Kind::remote_http;
  else throw ConfigError("unknown embedding provider '" + kind + "'");
  e.endpoint = j.value("endpoint", e.endpoint);
  e.model = j.value("model", e.model);
  e.token_env = j.value("token_env", e.token_env);
  e.dim = j.value("dim", e.dim);
  e.seed = j.contains("seed") ? opt_from<std::uint64_t>(j, "seed") : e.seed;
  e.batch_size = j.value("batch_size", e.batch_size);
  e.max_retries = j.value("max_retries", e.max_retries);
  e.timeout_seconds = j.value("timeout_seconds", e.timeout_seconds);
  e.fanout = j.value("fanout", e.fanout);
  return e;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("invalid value '" + value + "' for '" + key + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw ConfigError("invalid boolean '" + value + "' for '" + key + "'");
}

RankStrategy& ranking_of(RunConfig& c) {
  if (!c.ranking) c.ranking = RankStrategy{};
  return *c.ranking;
}

}  // namespace

void RunConfig::validate() const {
  retrieval.validate();
  if (ks.empty()) throw ConfigError("at least one cutoff K is required");
  for (std::size_t k : ks) {
    if (k == 0) throw ConfigError("cutoffs K must be >= 1");
  }
  if (threads == 0) throw ConfigError("threads must be >= 1");
  if (ranking) ranking->validate(retrieval.k);
  if (ranker.kind == RankerSpec::Kind::mock_noisy && !(ranker.p >= 0.0 && ranker.p <= 1.0)) {
    throw ConfigError("noisy ranker: p must lie in [0, 1]");
  }
}

json RunConfig::experiment_json() const {
  json j;
  j["embedding"] = embedding_json(embedding);
  j["semantic_top_k"] = opt_json(semantic_top_k);
  j["count_split"] = to_string(count_split);
  j["method"] = to_string(method);
  j["retrieval"] = retrieval_json(retrieval);
  j["ranking"] = ranking ? strategy_json(*ranking) : json(nullptr);
  j["prompt"] = {{"include_popularity", prompt.include_popularity},
                 {"include_co_occurrence", prompt.include_co_occurrence}};
  j["ranker"] = ranker_json(ranker);
  j["ks"] = ks;
  j["split"] = to_string(split);
  return j;
}

json RunConfig::to_json() const {
  json j = experiment_json();
  j["paths"] = {{"data_dir", paths.data_dir},
                {"embeddings_dir", paths.embeddings_dir},
                {"matrices_dir", paths.matrices_dir},
                {"out_dir", paths.out_dir}};
  j["threads"] = threads;
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      c.paths.data_dir = p.value("data_dir", c.paths.data_dir);
      c.paths.embeddings_dir = p.value("embeddings_dir", c.paths.embeddings_dir);
      c.paths.matrices_dir = p.value("matrices_dir", c.paths.matrices_dir);
      c.paths.out_dir = p.value("out_dir", c.paths.out_dir);
    }
    if (j.contains("embedding")) c.embedding = embedding_from(j.at("embedding"));
    c.semantic_top_k = opt_from<std::size_t>(j, "semantic_top_k");
    c.count_split = count_split_from_string(j.value("count_split", std::string("train")));
    c.method = retrieval_method_from_string(j.value("method", std::string("star")));
    if (j.contains("retrieval")) c.retrieval = retrieval_from(j.at("retrieval"));
    if (j.contains("ranking") && !j.at("ranking").is_null()) c.ranking = strategy_from(j.at("ranking"));
    if (j.contains("prompt")) {
      c.prompt.include_popularity = j.at("prompt").value("include_popularity", true);
      c.prompt.include_co_occurrence = j.at("prompt").value("include_co_occurrence", true);
    }
    if (j.contains("ranker")) c.ranker = ranker_from(j.at("ranker"));
    c.ks = j.value("ks", c.ks);
    c.split = eval_split_from_string(j.value("split", std::string("test")));
    c.threads = j.value("threads", c.threads);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
  return c;
}

std::string RunConfig::fingerprint() const { return io::fingerprint(experiment_json()); }

void apply_override(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "a") c.retrieval.a = parse_number<double>(key, value);
  else if (key == "lambda") c.retrieval.lambda = parse_number<double>(key, value);
  else if (key == "history" || key == "l") {
    if (value == "inf" || value == "all") c.retrieval.history_len = std::nullopt;
    else c.retrieval.history_len = parse_number<std::size_t>(key, value);
  } else if (key == "k") c.retrieval.k = parse_number<std::size_t>(key, value);
  else if (key == "use_ratings") c.retrieval.use_ratings = parse_bool(key, value);
  else if (key == "exclude_seen") c.retrieval.exclude_seen = parse_bool(key, value);
  else if (key == "shuffle") {
    if (value == "none") c.retrieval.shuffle_seed = std::nullopt;
    else c.retrieval.shuffle_seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "method") c.method = retrieval_method_from_string(value);
  else if (key == "strategy") {
    if (value == "none") c.ranking = std::nullopt;
    else ranking_of(c).kind = rank_kind_from_string(value);
  } else if (key == "w") ranking_of(c).w = parse_number<std::size_t>(key, value);
  else if (key == "d") ranking_of(c).d = parse_number<std::size_t>(key, value);
  else if (key == "passes") ranking_of(c).passes = parse_number<std::size_t>(key, value);
  else if (key == "k_out") ranking_of(c).k_out = parse_number<std::size_t>(key, value);
  else if (key == "ranker") c.ranker.kind = ranker_kind_from_string(value);
  else if (key == "p") c.ranker.p = parse_number<double>(key, value);
  else if (key == "ranker_seed") c.ranker.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "popularity") c.prompt.include_popularity = parse_bool(key, value);
  else if (key == "coocc") c.prompt.include_co_occurrence = parse_bool(key, value);
  else if (key == "split") c.split = eval_split_from_string(value);
  else throw ConfigError("unknown sweep parameter '" + key + "'");
}

std::pair<std::string, std::vector<std::string>> parse_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
    throw ConfigError("grid axis must look like key=v1,v2: '" + spec + "'");
  }
  std::vector<std::string> values;
  std::size_t start = eq + 1;
  while (start <= spec.size()) {
    auto comma = spec.find(',', start);
    if (comma == std::string::npos) comma = spec.size();
    if (comma == start) throw ConfigError("empty value in grid axis '" + spec + "'");
    values.push_back(spec.substr(start, comma - start));
    start = comma + 1;
  }
  return {spec.substr(0, eq), values};
}

std::vector<RunConfig> expand_grid(const RunConfig& base,
                                   const std::vector<std::pair<std::string, std::vector<std::string>>>& axes) {
  std::vector<RunConfig> out{base};
  for (const auto& [key, values] : axes) {
    std::vector<RunConfig> next;
    for (const auto& cfg : out) {
      for (const auto& v : values) {
        RunConfig c = cfg;
        apply_override(c, key, v);
        next.push_back(std::move(c));
      }
    }
    out = std::move(next);
  }
  return out;
}

}  // namespace star
