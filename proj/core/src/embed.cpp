#include "star/embed.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cctype>
#include <cstring>
#include <cstdlib>
#include <thread>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "http_client.hpp"
#include "star/error.hpp"
#include "star/io.hpp"

namespace star {

using nlohmann::json;

namespace {

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

void cut_utf8(std::string& s, std::size_t max_bytes) {
  if (s.size() <= max_bytes) return;
  std::size_t cut = max_bytes;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  s.resize(cut);
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 14695981039346656037ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

ItemPrompt build_item_prompt(ItemIndex item, const ItemMeta& meta, std::size_t max_chars) {
  if (meta.empty()) {
    throw Error("item '" + meta.item_id + "' has no metadata to build a prompt from");
  }
  std::vector<std::string> lines;
  if (meta.description) lines.push_back("description: " + *meta.description);
  if (meta.title) lines.push_back("title: " + *meta.title);
  if (!meta.sales_rank.empty()) {
    std::vector<std::string> parts;
    for (const auto& [cat, rank] : meta.sales_rank) {
      parts.push_back("'" + cat + "': " + std::to_string(rank));
    }
    lines.push_back("salesRank: {" + join(parts, ", ") + "}");
  }
  if (!meta.categories.empty()) {
    std::vector<std::string> paths;
    for (const auto& path : meta.categories) paths.push_back(join(path, " > "));
    lines.push_back("categories: " + join(paths, " | "));
  }
  if (meta.price) lines.push_back("price: " + format_number(*meta.price));
  if (meta.brand) lines.push_back("brand: " + *meta.brand);

  ItemPrompt prompt{item, join(lines, "\n")};
  cut_utf8(prompt.text, max_chars);
  return prompt;
}

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<double> values,
                                 std::string provider_tag)
    : rows_(rows), dim_(dim), values_(std::move(values)), provider_tag_(std::move(provider_tag)) {
  if (values_.size() != rows_ * dim_) throw Error("embedding matrix has wrong number of values");
  for (double v : values_) {
    if (!std::isfinite(v)) throw Error("embedding matrix contains a non-finite value");
  }
}

void EmbeddingMatrix::save(const std::filesystem::path& path) const {
  json header;
  header["kind"] = "embedding";
  header["rows"] = rows_;
  header["dim"] = dim_;
  header["provider_tag"] = provider_tag_;
  io::write_artifact(path, std::move(header), io::as_bytes_of(values_));
}

EmbeddingMatrix EmbeddingMatrix::load(const std::filesystem::path& path) {
  const auto art = io::read_artifact(path);
  const auto rows = art.header.at("rows").get<std::size_t>();
  const auto dim = art.header.at("dim").get<std::size_t>();
  if (art.payload.size() != rows * dim * sizeof(double)) {
    throw IoError("embedding artifact size mismatch in '" + path.string() + "'");
  }
  std::vector<double> values(rows * dim);
  std::memcpy(values.data(), art.payload.data(), art.payload.size());
  return EmbeddingMatrix(rows, dim, std::move(values),
                         art.header.at("provider_tag").get<std::string>());
}

LocalHashEmbedder::LocalHashEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim_ == 0) throw ConfigError("local embedder needs a positive dimension");
}

std::string LocalHashEmbedder::tag() const {
  return "local-d" + std::to_string(dim_) + "-s" + std::to_string(seed_);
}

std::vector<double> LocalHashEmbedder::embed_one(const std::string& text) const {
  std::vector<double> v(dim_, 0.0);
  const std::string seed_bytes = std::to_string(seed_) + ":";
  const std::uint64_t base = fnv1a(seed_bytes);
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    const std::uint64_t h = fnv1a(token, base);
    const double sign = (h >> 63) != 0 ? -1.0 : 1.0;
    v[h % dim_] += sign;
    token.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) != 0 || c >= 0x80) {
      token.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
  return v;
}

std::vector<std::vector<double>> LocalHashEmbedder::embed(std::span<const std::string> texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

HttpEmbedder::HttpEmbedder(Options options) : options_(std::move(options)) {
  if (options_.endpoint.empty()) throw ConfigError("http embedder needs an endpoint");
  if (options_.model.empty()) throw ConfigError("http embedder needs a model name");
}

std::string HttpEmbedder::tag() const {
  std::string tag = "http-";
  for (char c : options_.model) {
    tag.push_back(std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '-' || c == '.' || c == '_'
                      ? c
                      : '_');
  }
  if (options_.dim > 0) tag += "-d" + std::to_string(options_.dim);
  return tag;
}

std::vector<std::vector<double>> HttpEmbedder::embed(std::span<const std::string> texts) {
  json body;
  body["model"] = options_.model;
  body["input"] = std::vector<std::string>(texts.begin(), texts.end());
  if (options_.dim > 0) body["dimensions"] = options_.dim;

  const std::string raw = detail::post_json({options_.endpoint, body.dump(), options_.token,
                                             options_.timeout_seconds, options_.max_retries,
                                             options_.backoff_ms});
  const json reply = json::parse(raw, nullptr, false);
  if (reply.is_discarded()) throw ProviderError("embedding response is not JSON");

  std::vector<std::vector<double>> out;
  try {
    if (reply.contains("data")) {
      out.resize(reply.at("data").size());
      for (const auto& rec : reply.at("data")) {
        const auto idx = rec.at("index").get<std::size_t>();
        if (idx >= out.size()) throw ProviderError("embedding response index out of range");
        out[idx] = rec.at("embedding").get<std::vector<double>>();
      }
    } else {
      out = reply.at("embeddings").get<std::vector<std::vector<double>>>();
    }
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed embedding response: ") + e.what());
  }
  if (out.size() != texts.size()) throw ProviderError("embedding response has wrong vector count");
  for (const auto& v : out) {
    if (v.empty() || v.size() != out.front().size()) {
      throw ProviderError("embedding response vectors have unequal length");
    }
    if (options_.dim > 0 && v.size() != options_.dim) {
      throw ProviderError("embedding response dimension " + std::to_string(v.size()) +
                          " != requested " + std::to_string(options_.dim));
    }
  }
  return out;
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const EmbeddingProviderSpec& spec) {
  if (spec.batch_size == 0) throw ConfigError("embedding batch size must be positive");
  if (spec.kind == EmbeddingProviderSpec::Kind::local_deterministic) {
    if (!spec.seed) throw ConfigError("local embedder requires a seed");
    if (spec.dim == 0) throw ConfigError("local embedder requires a dimension");
    return std::make_unique<LocalHashEmbedder>(spec.dim, *spec.seed);
  }
  HttpEmbedder::Options opt;
  opt.endpoint = spec.endpoint;
  opt.model = spec.model;
  opt.dim = spec.dim;
  opt.max_retries = spec.max_retries;
  opt.timeout_seconds = spec.timeout_seconds;
  if (const char* token = std::getenv(spec.token_env.c_str())) opt.token = token;
  return std::make_unique<HttpEmbedder>(std::move(opt));
}

EmbeddingCache::EmbeddingCache(std::filesystem::path file) : file_(std::move(file)) {
  if (!std::filesystem::exists(*file_)) return;
  const std::string text = io::read_file(*file_);
  for (const auto line : io::split_lines(text)) {
    if (line.empty()) continue;
    const json rec = json::parse(line, nullptr, false);
    try {
      if (rec.is_discarded()) throw std::runtime_error("not JSON");
      auto vec = rec.at("vector").get<std::vector<double>>();
      if (vec.empty() || !std::all_of(vec.begin(), vec.end(), [](double x) { return std::isfinite(x); })) {
        throw std::runtime_error("bad vector");
      }
      entries_[{rec.at("tag").get<std::string>(), rec.at("hash").get<std::string>()}] =
          Entry{rec.at("item").get<ItemIndex>(), std::move(vec)};
    } catch (const std::exception& e) {
      ++dropped_;
      spdlog::warn("embedding cache: dropping corrupt record in '{}': {}", file_->string(), e.what());
    }
  }
}

std::optional<std::vector<double>> EmbeddingCache::find(const std::string& tag,
                                                        const std::string& hash) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find({tag, hash});
  if (it == entries_.end()) return std::nullopt;
  return it->second.vector;
}

void EmbeddingCache::put(const std::string& tag, const std::string& hash, ItemIndex item,
                         std::vector<double> vector) {
  std::lock_guard lock(mu_);
  auto key = std::make_pair(tag, hash);
  const bool fresh = !entries_.contains(key);
  entries_[key] = Entry{item, std::move(vector)};
  if (fresh) pending_.push_back(std::move(key));
}

void EmbeddingCache::flush() {
  std::lock_guard lock(mu_);
  if (!file_ || pending_.empty()) {
    pending_.clear();
    return;
  }
  std::string text = std::filesystem::exists(*file_) ? io::read_file(*file_) : std::string{};
  if (!text.empty() && text.back() != '\n') text += '\n';
  for (const auto& key : pending_) {
    const auto& e = entries_.at(key);
    json rec;
    rec["tag"] = key.first;
    rec["hash"] = key.second;
    rec["item"] = e.item;
    rec["vector"] = e.vector;
    text += rec.dump();
    text += '\n';
  }
  io::write_file(*file_, text);
  pending_.clear();
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

EmbedResult embed_items(EmbeddingProvider& provider, std::span<const ItemPrompt> prompts,
                        EmbeddingCache& cache, EmbedOptions options) {
  if (options.batch_size == 0) throw ConfigError("embedding batch size must be positive");
  const std::string tag = provider.tag();
  EmbedResult result;

  std::vector<std::vector<double>> rows(prompts.size());
  std::vector<std::string> hashes(prompts.size());
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (prompts[i].item != i) throw Error("prompts must be ordered by item index");
    hashes[i] = io::sha256_hex(prompts[i].text);
    if (auto hit = cache.find(tag, hashes[i])) {
      if (provider.dim() != 0 && hit->size() != provider.dim()) {
        throw Error("cached embedding dimension " + std::to_string(hit->size()) +
                    " does not match provider dimension " + std::to_string(provider.dim()) +
                    " for tag '" + tag + "'");
      }
      rows[i] = std::move(*hit);
      ++result.cache_hits;
    } else {
      todo.push_back(i);
    }
  }

  std::vector<std::span<const std::size_t>> batches;
  for (std::size_t at = 0; at < todo.size(); at += options.batch_size) {
    batches.emplace_back(todo.data() + at, std::min(options.batch_size, todo.size() - at));
  }

  struct Outcome {
    std::vector<std::vector<double>> vectors;
    std::string error;
  };
  std::vector<Outcome> outcomes(batches.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t b = next++; b < batches.size(); b = next++) {
      std::vector<std::string> texts;
      for (std::size_t i : batches[b]) texts.push_back(prompts[i].text);
      try {
        outcomes[b].vectors = provider.embed(texts);
        if (outcomes[b].vectors.size() != texts.size()) {
          throw ProviderError("provider returned wrong number of vectors");
        }
      } catch (const std::exception& e) {
        outcomes[b].vectors.clear();
        outcomes[b].error = e.what();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(options.fanout, 1, std::max<std::size_t>(1, batches.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  result.provider_calls = batches.size();

  for (std::size_t b = 0; b < batches.size(); ++b) {
    if (!outcomes[b].error.empty()) {
      result.errors.push_back(outcomes[b].error);
      for (std::size_t i : batches[b]) result.missing.push_back(static_cast<ItemIndex>(i));
      continue;
    }
    for (std::size_t j = 0; j < batches[b].size(); ++j) {
      const std::size_t i = batches[b][j];
      cache.put(tag, hashes[i], static_cast<ItemIndex>(i), outcomes[b].vectors[j]);
      rows[i] = std::move(outcomes[b].vectors[j]);
    }
  }
  cache.flush();
  if (!result.missing.empty()) return result;

  const std::size_t dim = rows.empty() ? provider.dim() : rows.front().size();
  std::vector<double> values;
  values.reserve(rows.size() * dim);
  for (const auto& r : rows) {
    if (r.size() != dim) throw Error("embedding vectors have inconsistent dimensions");
    values.insert(values.end(), r.begin(), r.end());
  }
  result.matrix = EmbeddingMatrix(rows.size(), dim, std::move(values), tag);
  return result;
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw Error("cosine: dimension mismatch (" + std::to_string(u.size()) + " vs " +
                std::to_string(v.size()) + ")");
  }
  double dot = 0.0;
  double nu = 0.0;
  double nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

SimilarityMatrix semantic_similarity(const EmbeddingMatrix& embeddings,
                                     std::optional<std::size_t> top_k) {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto n = static_cast<Eigen::Index>(embeddings.rows());
  const auto d = static_cast<Eigen::Index>(embeddings.dim());

  RowMajor unit = Eigen::Map<const RowMajor>(embeddings.values().data(), n, d);
  std::vector<bool> nonzero(embeddings.rows(), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = unit.row(i).norm();
    if (norm > 0.0) {
      unit.row(i) /= norm;
      nonzero[static_cast<std::size_t>(i)] = true;
    }
  }

  std::vector<double> values(embeddings.rows() * embeddings.rows());
  Eigen::Map<RowMajor> gram(values.data(), n, n);
  gram.noalias() = unit * unit.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    gram(i, i) = nonzero[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = std::clamp(gram(i, j), -1.0, 1.0);
      gram(i, j) = v;
      gram(j, i) = v;
    }
  }
  auto matrix = SimilarityMatrix::dense(embeddings.rows(), SimilarityKind::semantic, std::move(values));
  if (top_k) return matrix.truncate_top_k(*top_k);
  return matrix;
}

}  // namespace star
