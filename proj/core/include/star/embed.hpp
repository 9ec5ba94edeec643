#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "star/corpus.hpp"
#include "star/similarity.hpp"

namespace star {

struct ItemPrompt {
  ItemIndex item = 0;
  std::string text;
};

inline constexpr std::size_t kDefaultPromptCharBudget = 8000;

/// Renders the item-encoding prompt: description, title, salesRank,
/// categories, price, brand, in that order. Ids and URLs never appear.
/// Output is capped at `max_chars` bytes (cut on a UTF-8 boundary).
/// Throws Error when the metadata has no usable field at all.
ItemPrompt build_item_prompt(ItemIndex item, const ItemMeta& meta,
                             std::size_t max_chars = kDefaultPromptCharBudget);

class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<double> values,
                  std::string provider_tag);

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }
  const std::string& provider_tag() const { return provider_tag_; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  const std::vector<double>& values() const { return values_; }

  void save(const std::filesystem::path& path) const;
  static EmbeddingMatrix load(const std::filesystem::path& path);

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
  std::string provider_tag_;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// Stable identifier used to key the cache.
  virtual std::string tag() const = 0;
  virtual std::size_t dim() const = 0;
  /// One vector per text, in order. Implementations must be thread-safe.
  /// Throws ProviderError on failure.
  virtual std::vector<std::vector<double>> embed(std::span<const std::string> texts) = 0;
};

/// Seeded feature-hashing embedder over lowercase alphanumeric tokens.
/// Offline and deterministic; lexically overlapping prompts land closer.
class LocalHashEmbedder final : public EmbeddingProvider {
 public:
  LocalHashEmbedder(std::size_t dim, std::uint64_t seed);

  std::string tag() const override;
  std::size_t dim() const override { return dim_; }
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

  std::vector<double> embed_one(const std::string& text) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// OpenAI-compatible `/v1/embeddings` client.
class HttpEmbedder final : public EmbeddingProvider {
 public:
  struct Options {
    std::string endpoint;  // full URL, e.g. https://api.openai.com/v1/embeddings
    std::string model;
    std::size_t dim = 0;   // 0 = accept whatever the service returns
    std::string token;     // bearer token; empty sends no Authorization header
    int max_retries = 3;
    int timeout_seconds = 60;
    int backoff_ms = 500;
  };

  explicit HttpEmbedder(Options options);

  std::string tag() const override;
  std::size_t dim() const override { return options_.dim; }
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

 private:
  Options options_;
};

struct EmbeddingProviderSpec {
  enum class Kind { remote_http, local_deterministic };
  Kind kind = Kind::local_deterministic;
  std::string endpoint;
  std::string model;
  std::string token_env = "STAR_EMBED_TOKEN";
  std::size_t dim = 256;
  std::optional<std::uint64_t> seed = 17;
  std::size_t batch_size = 32;
  int max_retries = 3;
  int timeout_seconds = 60;
  std::size_t fanout = 4;
};

/// Validates the spec and builds the provider. Throws ConfigError.
std::unique_ptr<EmbeddingProvider> make_embedding_provider(const EmbeddingProviderSpec& spec);

/// JSON-lines cache of embeddings keyed by (provider tag, prompt hash).
/// Corrupt records are dropped with a warning on load.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;  // in-memory only
  explicit EmbeddingCache(std::filesystem::path file);

  std::optional<std::vector<double>> find(const std::string& tag, const std::string& hash) const;
  void put(const std::string& tag, const std::string& hash, ItemIndex item,
           std::vector<double> vector);
  /// Appends records added since the last flush. No-op for in-memory caches.
  void flush();

  std::size_t size() const;
  std::size_t dropped_on_load() const { return dropped_; }

 private:
  struct Entry {
    ItemIndex item = 0;
    std::vector<double> vector;
  };

  std::optional<std::filesystem::path> file_;
  std::map<std::pair<std::string, std::string>, Entry> entries_;
  std::vector<std::pair<std::string, std::string>> pending_;
  std::size_t dropped_ = 0;
  mutable std::mutex mu_;
};

struct EmbedOptions {
  std::size_t batch_size = 32;
  std::size_t fanout = 4;
};

struct EmbedResult {
  std::optional<EmbeddingMatrix> matrix;  // present only when nothing is missing
  std::vector<ItemIndex> missing;
  std::size_t provider_calls = 0;
  std::size_t cache_hits = 0;
  std::vector<std::string> errors;
};

/// Embeds every prompt, consulting the cache first. Failed batches are
/// reported in `missing`; successful ones are still cached so a rerun
/// resumes. Throws Error on a cached vector whose dimension disagrees.
/// `prompts[i].item` must equal i.
EmbedResult embed_items(EmbeddingProvider& provider, std::span<const ItemPrompt> prompts,
                        EmbeddingCache& cache, EmbedOptions options = {});

/// u.v / (|u||v|); 0 when either norm is 0. Throws on dimension mismatch.
double cosine(std::span<const double> u, std::span<const double> v);

/// Exact item-item cosine matrix. With `top_k`, rows are truncated to the
/// diagonal plus the k largest off-diagonal entries.
SimilarityMatrix semantic_similarity(const EmbeddingMatrix& embeddings,
                                     std::optional<std::size_t> top_k = {});

}  // namespace star
