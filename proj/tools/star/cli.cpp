#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <locale>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "star/collab.hpp"
#include "star/config.hpp"
#include "star/corpus.hpp"
#include "star/embed.hpp"
#include "star/error.hpp"
#include "star/eval.hpp"
#include "star/experiment.hpp"
#include "star/io.hpp"
#include "star/rankers.hpp"

namespace star::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kManifest = "manifest.json";

fs::path sidecar_of(fs::path p) { return p.replace_extension(".config.json"); }

fs::path require(const fs::path& p, const char* step) {
  if (!fs::exists(p)) throw MissingArtifactError(p.string(), step);
  return p;
}

void write_sidecar(const fs::path& output, const RunConfig& config) {
  json j;
  j["fingerprint"] = config.fingerprint();
  j["config"] = config.to_json();
  io::write_file(sidecar_of(output), j.dump(2) + "\n");
}

std::optional<RunConfig> read_sidecar(const fs::path& output) {
  const auto path = sidecar_of(output);
  if (!fs::exists(path)) return std::nullopt;
  const auto j = json::parse(io::read_file(path), nullptr, false);
  if (j.is_discarded() || !j.contains("config")) throw ConfigError("malformed config sidecar '" + path.string() + "'");
  return RunConfig::from_json(j.at("config"));
}

// Settings recorded by the embed/build stages so later configs describe
// the matrices they actually read.
void update_manifest(const fs::path& matrices, const json& patch) {
  const auto path = matrices / kManifest;
  json j = json::object();
  if (fs::exists(path)) {
    j = json::parse(io::read_file(path), nullptr, false);
    if (j.is_discarded()) j = json::object();
  }
  j.merge_patch(patch);
  io::write_file(path, j.dump(2) + "\n");
}

RunConfig config_from_manifest(const fs::path& matrices) {
  json j = RunConfig{}.to_json();
  const auto path = matrices / kManifest;
  if (fs::exists(path)) {
    const auto manifest = json::parse(io::read_file(path), nullptr, false);
    if (!manifest.is_discarded()) j.merge_patch(manifest);
  }
  return RunConfig::from_json(j);
}

std::string with_commas(std::size_t n) {
  std::string s = std::to_string(n);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

std::string format_metrics(const MetricReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  for (std::size_t k : report.ks) {
    os << "  HR@" << k << "=" << report.hit_rate.at(k) << "  NDCG@" << k << "=" << report.ndcg.at(k);
  }
  return os.str();
}

// Flags that map onto apply_override keys. Only flags given on the command
// line (or in a config file) are applied, so they layer over a loaded config.
class Overrides {
 public:
  void option(CLI::App& app, const std::string& flag, const std::string& key, const std::string& help) {
    auto& slot = values_[key];
    bindings_.push_back({key, "", app.add_option(flag, slot, help)});
  }
  void flag(CLI::App& app, const std::string& flag, const std::string& key, const std::string& value,
            const std::string& help) {
    bindings_.push_back({key, value, app.add_flag(flag, help)});
  }
  void apply(RunConfig& config) const {
    for (const auto& b : bindings_) {
      if (b.option->count() == 0) continue;
      apply_override(config, b.key, b.fixed.empty() ? values_.at(b.key) : b.fixed);
    }
  }

 private:
  struct Binding {
    std::string key;
    std::string fixed;  // value used by bare flags
    CLI::Option* option;
  };
  std::map<std::string, std::string> values_;
  std::vector<Binding> bindings_;
};

struct PathFlags {
  RunPaths paths;
  void add_data(CLI::App& app) { app.add_option("--data", paths.data_dir, "Prepared dataset directory")->capture_default_str(); }
  void add_matrices(CLI::App& app) {
    app.add_option("--matrices", paths.matrices_dir, "Matrix artifact directory")->capture_default_str();
  }
};

// Loads each artifact at most once across the configs of a sweep.
class ArtifactCache {
 public:
  explicit ArtifactCache(RunPaths paths) : paths_(std::move(paths)) {}

  ExperimentInputs inputs_for(const RunConfig& c) {
    const fs::path m = paths_.matrices_dir;
    if (!data_) data_ = load_dataset(paths_.data_dir);
    ExperimentInputs in;
    in.data = &*data_;
    if (c.method == RetrievalMethod::average_pooling) {
      in.embeddings = &get(embeddings_, m / artifact_names::kEmbeddings, "embed", EmbeddingMatrix::load);
    } else {
      if (c.retrieval.a > 0.0) {
        in.semantic = &get(semantic_, m / artifact_names::kSemantic, "build-semantic", SimilarityMatrix::load);
      }
      if (c.retrieval.a < 1.0) {
        in.collaborative = &get(collab_, m / artifact_names::kCollab, "build-collab", SimilarityMatrix::load);
      }
    }
    if (c.ranking) {
      in.incidence = &get(incidence_, m / artifact_names::kCounts, "build-collab", SparseInteractionMatrix::load);
    }
    return in;
  }

 private:
  template <typename T>
  const T& get(std::optional<T>& slot, const fs::path& path, const char* step,
               T (*load)(const fs::path&)) {
    if (!slot) {
      slot = load(require(path, step));
      std::size_t n = 0;
      if constexpr (std::is_same_v<T, EmbeddingMatrix>) n = slot->rows();
      else if constexpr (std::is_same_v<T, SparseInteractionMatrix>) n = slot->n_items();
      else n = slot->size();
      if (n != data_->item_count()) {
        throw Error(path.string() + " has " + std::to_string(n) + " items but the dataset has " +
                    std::to_string(data_->item_count()) + "; rebuild it");
      }
    }
    return *slot;
  }

  RunPaths paths_;
  std::optional<SplitDataset> data_;
  std::optional<EmbeddingMatrix> embeddings_;
  std::optional<SimilarityMatrix> semantic_;
  std::optional<SimilarityMatrix> collab_;
  std::optional<SparseInteractionMatrix> incidence_;
};

void setup_logging(const std::string& level) {
  static bool installed = false;
  if (!installed) {
    auto logger = std::make_shared<spdlog::logger>("star", std::make_shared<spdlog::sinks::stderr_sink_mt>());
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    installed = true;
  }
  spdlog::set_level(spdlog::level::from_str(level));
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"STAR: training-free sequential recommendation with retrieval and LLM ranking", "star"};
  app.set_config("--config", "", "Read options from a TOML/INI file; command-line flags take precedence");
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}))
      ->capture_default_str();

  std::function<void()> action;

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Parse reviews and metadata, k-core filter, split, save");
  std::string reviews_path, meta_path, prepare_out = "dataset", kcore_mode = "fixpoint";
  int kcore = 5;
  prepare->add_option("--reviews", reviews_path, "Review JSON lines (.json or .json.gz)")->required();
  prepare->add_option("--meta", meta_path, "Item metadata lines (.json or .json.gz)");
  prepare->add_option("--kcore", kcore, "Minimum interactions per user and item")->capture_default_str();
  prepare->add_option("--kcore-mode", kcore_mode, "fixpoint or single-pass")
      ->check(CLI::IsMember({"fixpoint", "single-pass"}))
      ->capture_default_str();
  prepare->add_option("--out", prepare_out, "Output dataset directory")->capture_default_str();
  prepare->callback([&] {
    action = [&] {
      const auto parsed = parse_reviews(io::read_file(reviews_path));
      if (parsed.skipped > 0) spdlog::warn("prepare: skipped {} malformed review lines", parsed.skipped);
      const auto filtered = kcore_filter(parsed.records, kcore,
                                         kcore_mode == "fixpoint" ? KCoreMode::fixpoint : KCoreMode::single_pass);
      auto split = leave_one_out_split(build_sequences(filtered));
      if (!split.rejected_users.empty()) {
        spdlog::warn("prepare: dropped {} users with fewer than 3 interactions", split.rejected_users.size());
      }
      auto& data = split.dataset;
      if (!meta_path.empty()) {
        const auto meta = parse_metadata(io::read_file(meta_path));
        if (meta.skipped > 0) spdlog::warn("prepare: skipped {} malformed metadata lines", meta.skipped);
        auto catalog = align_catalog(data.items(), meta.records);
        const auto absent = std::count_if(catalog.begin(), catalog.end(), [](const ItemMeta& m) { return m.empty(); });
        if (absent > 0) spdlog::warn("prepare: {} items have no metadata", absent);
        data.set_catalog(std::move(catalog));
      } else {
        spdlog::warn("prepare: no --meta given; prompts will carry no item text");
      }
      save_dataset(data, prepare_out);
      json provenance = {{"reviews", reviews_path}, {"meta", meta_path}, {"kcore", kcore}, {"kcore_mode", kcore_mode}};
      io::write_file(fs::path(prepare_out) / "prepare.json", provenance.dump(2) + "\n");
      const auto s = dataset_stats(data);
      out << "prepared " << with_commas(s.users) << " users, " << with_commas(s.items) << " items, "
          << with_commas(s.interactions) << " interactions -> " << prepare_out << "\n";
    };
  });

  // embed
  auto* embed = app.add_subcommand("embed", "Embed item metadata prompts");
  PathFlags embed_paths;
  embed_paths.add_data(*embed);
  embed_paths.add_matrices(*embed);
  EmbeddingProviderSpec embed_spec;
  std::string provider = "local";
  std::size_t max_chars = kDefaultPromptCharBudget;
  std::uint64_t embed_seed = 17;
  embed->add_option("--provider", provider, "http or local")->check(CLI::IsMember({"http", "local"}))->capture_default_str();
  embed->add_option("--model", embed_spec.model, "Remote embedding model name");
  embed->add_option("--endpoint", embed_spec.endpoint, "Embeddings URL, e.g. https://api.openai.com/v1/embeddings");
  embed->add_option("--dim", embed_spec.dim, "Embedding dimension")->capture_default_str();
  embed->add_option("--batch", embed_spec.batch_size, "Texts per provider call")->capture_default_str();
  embed->add_option("--fanout", embed_spec.fanout, "Concurrent provider calls")->capture_default_str();
  embed->add_option("--seed", embed_seed, "Seed of the local embedder")->capture_default_str();
  embed->add_option("--max-retries", embed_spec.max_retries, "Retries per failed call")->capture_default_str();
  embed->add_option("--max-chars", max_chars, "Prompt size cap in bytes")->capture_default_str();
  embed->add_option("--cache-dir", embed_paths.paths.embeddings_dir, "Embedding cache directory")->capture_default_str();
  embed->callback([&] {
    action = [&] {
      embed_spec.kind = provider == "local" ? EmbeddingProviderSpec::Kind::local_deterministic
                                            : EmbeddingProviderSpec::Kind::remote_http;
      embed_spec.seed = embed_spec.kind == EmbeddingProviderSpec::Kind::local_deterministic
                            ? std::optional<std::uint64_t>(embed_seed)
                            : std::nullopt;
      auto engine = make_embedding_provider(embed_spec);
      const auto data = load_dataset(embed_paths.paths.data_dir);
      const std::size_t n = data.item_count();

      // Items without any metadata get a zero vector: cosine 0 to everything.
      std::vector<ItemPrompt> prompts;
      std::vector<ItemIndex> owner;
      for (ItemIndex i = 0; i < n; ++i) {
        const ItemMeta none;
        const ItemMeta& meta = i < data.catalog().size() ? data.catalog()[i] : none;
        if (meta.empty()) continue;
        prompts.push_back({static_cast<ItemIndex>(prompts.size()), build_item_prompt(i, meta, max_chars).text});
        owner.push_back(i);
      }
      if (prompts.size() < n) {
        spdlog::warn("embed: {} items have no metadata and get a zero vector", n - prompts.size());
      }

      EmbeddingCache cache(fs::path(embed_paths.paths.embeddings_dir) / (engine->tag() + ".jsonl"));
      const auto result = embed_items(*engine, prompts, cache,
                                      EmbedOptions{embed_spec.batch_size, embed_spec.fanout});
      if (!result.missing.empty()) {
        for (const auto& e : result.errors) err << "embed: " << e << "\n";
        throw ProviderError(std::to_string(result.missing.size()) +
                            " items could not be embedded; rerun `star embed` to resume from the cache");
      }
      const std::size_t dim = result.matrix ? result.matrix->dim() : engine->dim();
      if (dim == 0) throw Error("embed: no item could be embedded and the provider dimension is unknown");
      std::vector<double> values(n * dim, 0.0);
      for (std::size_t r = 0; r < owner.size(); ++r) {
        const auto row = result.matrix->row(r);
        std::copy(row.begin(), row.end(), values.begin() + static_cast<std::ptrdiff_t>(owner[r] * dim));
      }
      const fs::path matrices = embed_paths.paths.matrices_dir;
      EmbeddingMatrix(n, dim, std::move(values), engine->tag()).save(matrices / artifact_names::kEmbeddings);
      RunConfig recorded;
      recorded.embedding = embed_spec;
      update_manifest(matrices, {{"embedding", recorded.experiment_json().at("embedding")}});
      out << "embedded " << n << " items (dim " << dim << ", " << result.provider_calls << " provider calls, "
          << result.cache_hits << " cache hits) -> " << (matrices / artifact_names::kEmbeddings).string() << "\n";
    };
  });

  // build-semantic
  auto* build_semantic = app.add_subcommand("build-semantic", "Item-item cosine matrix from embeddings");
  PathFlags semantic_paths;
  semantic_paths.add_matrices(*build_semantic);
  std::optional<std::size_t> topk;
  build_semantic->add_option("--topk", topk, "Keep only the K most similar items per row");
  build_semantic->callback([&] {
    action = [&] {
      const fs::path m = semantic_paths.paths.matrices_dir;
      const auto e = EmbeddingMatrix::load(require(m / artifact_names::kEmbeddings, "embed"));
      const auto s = semantic_similarity(e, topk);
      s.save(m / artifact_names::kSemantic);
      update_manifest(m, {{"semantic_top_k", topk ? json(*topk) : json(nullptr)}});
      out << "semantic matrix " << s.size() << "x" << s.size() << ", " << s.stored_entries()
          << " stored entries -> " << (m / artifact_names::kSemantic).string() << "\n";
    };
  });

  // build-collab
  auto* build_collab = app.add_subcommand("build-collab", "Co-occurrence matrix and interaction counts");
  PathFlags collab_paths;
  collab_paths.add_data(*build_collab);
  collab_paths.add_matrices(*build_collab);
  std::string count_split = "train";
  build_collab->add_option("--count-split", count_split, "Interactions to count: train or train+val")
      ->check(CLI::IsMember({"train", "train+val"}))
      ->capture_default_str();
  build_collab->callback([&] {
    action = [&] {
      const fs::path m = collab_paths.paths.matrices_dir;
      const auto data = load_dataset(collab_paths.paths.data_dir);
      const auto incidence = build_interaction_matrix(data, count_split_from_string(count_split));
      incidence.save(m / artifact_names::kCounts);
      const auto c = collaborative_similarity(incidence);
      c.save(m / artifact_names::kCollab);
      update_manifest(m, {{"count_split", count_split}});
      out << "collaborative matrix " << c.size() << "x" << c.size() << ", " << c.stored_entries()
          << " stored entries -> " << (m / artifact_names::kCollab).string() << "\n";
    };
  });

  // retrieve
  auto* retrieve = app.add_subcommand("retrieve", "Score and retrieve the top-k candidates per user");
  PathFlags retrieve_paths;
  retrieve_paths.add_data(*retrieve);
  retrieve_paths.add_matrices(*retrieve);
  Overrides retrieve_flags;
  retrieve_flags.option(*retrieve, "--a", "a", "Semantic weight in [0, 1] (default 0.5)");
  retrieve_flags.option(*retrieve, "--lambda", "lambda", "Recency decay in (0, 1] (default 0.7)");
  retrieve_flags.option(*retrieve, "--history", "history", "Recent items scored against, or 'all' (default 3)");
  retrieve_flags.option(*retrieve, "--k", "k", "Candidates kept per user (default 20)");
  retrieve_flags.flag(*retrieve, "--use-ratings", "use_ratings", "true", "Weight history items by their rating");
  retrieve_flags.flag(*retrieve, "--keep-seen", "exclude_seen", "false", "Allow already seen items as candidates");
  retrieve_flags.option(*retrieve, "--shuffle", "shuffle", "Shuffle each candidate list with this seed");
  retrieve_flags.option(*retrieve, "--method", "method", "star or avgpool (default star)");
  retrieve_flags.option(*retrieve, "--split", "split", "test or val (default test)");
  std::string retrieve_out = "runs/retrieval.jsonl";
  std::size_t retrieve_threads = 1;
  retrieve->add_option("--out", retrieve_out, "Candidate list output")->capture_default_str();
  retrieve->add_option("--threads", retrieve_threads, "Worker threads")->capture_default_str();
  retrieve->callback([&] {
    action = [&] {
      RunConfig config = config_from_manifest(retrieve_paths.paths.matrices_dir);
      config.paths = retrieve_paths.paths;
      config.threads = retrieve_threads;
      retrieve_flags.apply(config);
      config.validate();
      const auto art = load_artifacts(config);
      const auto in = art.inputs();
      const auto records = run_retrieval(*in.data, config.split, config.retrieval, config.method, in.semantic,
                                         in.collaborative, in.embeddings, config.threads);
      io::write_file(retrieve_out, records_jsonl(records, config.split));
      write_sidecar(retrieve_out, config);
      out << "retrieved " << config.retrieval.k << " candidates for " << records.size() << " users (config "
          << config.fingerprint() << ") -> " << retrieve_out << "\n";
    };
  });

  // rank
  auto* rank = app.add_subcommand("rank", "Rerank retrieved candidates with a ranker");
  PathFlags rank_paths;
  rank_paths.add_data(*rank);
  rank_paths.add_matrices(*rank);
  Overrides rank_flags;
  rank_flags.option(*rank, "--strategy", "strategy", "selection, point or window (default window)");
  rank_flags.option(*rank, "--w", "w", "Window size (default 2)");
  rank_flags.option(*rank, "--d", "d", "Window stride (default 1)");
  rank_flags.option(*rank, "--passes", "passes", "Sliding passes (default 1)");
  rank_flags.option(*rank, "--k-out", "k_out", "Items picked by selection (default 10)");
  rank_flags.option(*rank, "--ranker", "ranker", "http, oracle, lexical or noisy (default oracle)");
  rank_flags.option(*rank, "--p", "p", "Flip probability of the noisy ranker");
  rank_flags.option(*rank, "--seed", "ranker_seed", "Seed of the noisy ranker");
  rank_flags.flag(*rank, "--no-coocc", "coocc", "false", "Leave co-occurrence counts out of prompts");
  rank_flags.flag(*rank, "--no-popularity", "popularity", "false", "Leave popularity counts out of prompts");
  std::optional<std::string> chat_endpoint, chat_model;
  std::optional<double> temperature;
  rank->add_option("--endpoint", chat_endpoint, "Chat completions URL for --ranker http");
  rank->add_option("--model", chat_model, "Chat model for --ranker http");
  rank->add_option("--temperature", temperature, "Sampling temperature for --ranker http");
  std::string rank_in = "runs/retrieval.jsonl", rank_out = "runs/ranked.jsonl";
  std::size_t rank_threads = 1;
  rank->add_option("--in", rank_in, "Candidate lists from `star retrieve`")->capture_default_str();
  rank->add_option("--out", rank_out, "Reranked output")->capture_default_str();
  rank->add_option("--threads", rank_threads, "Users ranked concurrently")->capture_default_str();
  rank->callback([&] {
    action = [&] {
      if (!fs::exists(rank_in)) throw MissingArtifactError(rank_in, "retrieve");
      EvalSplit split = EvalSplit::test;
      const auto records = parse_records_jsonl(io::read_file(rank_in), &split);
      RunConfig config;
      if (auto saved = read_sidecar(rank_in)) {
        config = *saved;
      } else {
        std::size_t k = 0;
        for (const auto& r : records) k = std::max(k, r.candidates.size());
        spdlog::warn("rank: no config next to {}; assuming k = {}", rank_in, k);
        config.retrieval.k = std::max<std::size_t>(k, 1);
      }
      config.paths = rank_paths.paths;
      config.split = split;
      config.threads = rank_threads;
      if (!config.ranking) config.ranking = RankStrategy{};
      rank_flags.apply(config);
      if (chat_endpoint) config.ranker.endpoint = *chat_endpoint;
      if (chat_model) config.ranker.model = *chat_model;
      if (temperature) config.ranker.temperature = *temperature;
      config.validate();

      const auto data = load_dataset(config.paths.data_dir);
      std::optional<SparseInteractionMatrix> incidence;
      std::optional<InteractionCounts> counts;
      if (config.prompt.include_popularity || config.prompt.include_co_occurrence) {
        incidence = SparseInteractionMatrix::load(
            require(fs::path(config.paths.matrices_dir) / artifact_names::kCounts, "build-collab"));
        if (incidence->n_items() != data.item_count()) throw Error("interaction counts do not match the dataset; rerun `star build-collab`");
        counts.emplace(*incidence);
      }
      auto ranker = make_ranker(config.ranker, data.catalog());
      const auto ranked = run_ranking(records, data, split, *config.ranking, config.prompt, *ranker,
                                      counts ? &*counts : nullptr, config.threads);
      fs::path audit = rank_out;
      audit.replace_extension(".audit.jsonl");
      io::write_file(rank_out, records_jsonl(ranked.records, split));
      io::write_file(audit, audit_jsonl(ranked.audit));
      write_sidecar(rank_out, config);
      const auto fallbacks = std::count_if(ranked.audit.begin(), ranked.audit.end(),
                                           [](const RankAuditRecord& a) { return a.fallback; });
      out << "ranked " << ranked.records.size() << " users with " << ranker->name() << ": "
          << ranked.audit.size() << " calls, " << fallbacks << " fallbacks -> " << rank_out << "\n";
    };
  });

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "HR@K and NDCG@K of a run file");
  PathFlags eval_paths;
  eval_paths.add_data(*evaluate);
  std::string run_path, report_path, detail_path;
  std::vector<std::size_t> ks{5, 10};
  evaluate->add_option("--run", run_path, "Run file from `star retrieve` or `star rank`")->required();
  evaluate->add_option("--ks", ks, "Cutoffs, comma separated")->delimiter(',')->capture_default_str();
  evaluate->add_option("--out", report_path, "Report JSON output");
  evaluate->add_option("--detail", detail_path, "Per-user rank JSON lines output");
  evaluate->callback([&] {
    action = [&] {
      if (!fs::exists(run_path)) throw MissingArtifactError(run_path, "retrieve");
      EvalSplit split = EvalSplit::test;
      const auto records = parse_records_jsonl(io::read_file(run_path), &split);
      const auto data = load_dataset(eval_paths.paths.data_dir);
      const auto report = evaluate_records(records, data, split, ks);
      json j;
      j["run"] = run_path;
      j["split"] = to_string(split);
      j["users"] = report.users;
      j["missing_predictions"] = report.missing_predictions;
      j["metrics"] = report.metrics_json();
      if (auto config = read_sidecar(run_path)) {
        j["fingerprint"] = config->fingerprint();
        j["config"] = config->experiment_json();
      }
      if (!report_path.empty()) io::write_file(report_path, j.dump(2) + "\n");
      if (!detail_path.empty()) io::write_file(detail_path, report.detail_jsonl());
      out << run_path << " (" << report.users << " users):" << format_metrics(report) << "\n";
    };
  });

  // stats
  auto* stats = app.add_subcommand("stats", "Dataset statistics");
  PathFlags stats_paths;
  stats_paths.add_data(*stats);
  std::string stats_name;
  bool stats_json = false;
  stats->add_option("--name", stats_name, "Row label (default: directory name)");
  stats->add_flag("--json", stats_json, "Print JSON instead of a table row");
  stats->callback([&] {
    action = [&] {
      const auto data = load_dataset(stats_paths.paths.data_dir);
      const auto s = dataset_stats(data);
      if (stats_name.empty()) stats_name = fs::path(stats_paths.paths.data_dir).lexically_normal().filename().string();
      if (stats_json) {
        out << json{{"dataset", stats_name}, {"users", s.users}, {"items", s.items},
                    {"interactions", s.interactions}, {"density_percent", s.density_percent}}.dump()
            << "\n";
        return;
      }
      std::ostringstream density;
      density << std::fixed << std::setprecision(4) << s.density_percent << "%";
      out << "Dataset\t#Users\t#Items\t#Interactions\tDensity\n"
          << stats_name << "\t" << with_commas(s.users) << "\t" << with_commas(s.items) << "\t"
          << with_commas(s.interactions) << "\t" << density.str() << "\n";
    };
  });

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Run retrieval, ranking and evaluation over a parameter grid");
  PathFlags sweep_paths;
  sweep_paths.add_data(*sweep);
  sweep_paths.add_matrices(*sweep);
  std::string base_path, sweep_out = "runs/sweep";
  std::vector<std::string> grid, sets;
  std::size_t sweep_threads = 1;
  sweep->add_option("--base", base_path, "Run config JSON to start from (e.g. a saved config.json)");
  sweep->add_option("--set", sets, "Fixed key=value applied before the grid")->take_all();
  sweep->add_option("--grid", grid, "Axis key=v1,v2,...; repeat for a cartesian product")->take_all();
  sweep->add_option("--out", sweep_out, "Directory receiving one subdirectory per config")->capture_default_str();
  sweep->add_option("--threads", sweep_threads, "Worker threads per run")->capture_default_str();
  sweep->callback([&] {
    action = [&] {
      RunConfig base = config_from_manifest(sweep_paths.paths.matrices_dir);
      if (!base_path.empty()) {
        const auto j = json::parse(io::read_file(base_path), nullptr, false);
        if (j.is_discarded()) throw ConfigError("'" + base_path + "' is not valid JSON");
        base = RunConfig::from_json(j.contains("config") ? j.at("config") : j);
      }
      base.paths = sweep_paths.paths;
      base.paths.out_dir = sweep_out;
      base.threads = sweep_threads;
      for (const auto& s : sets) {
        const auto [key, values] = parse_axis(s);
        if (values.size() != 1) throw ConfigError("--set takes a single value: '" + s + "'");
        apply_override(base, key, values.front());
      }
      std::vector<std::pair<std::string, std::vector<std::string>>> axes;
      for (const auto& g : grid) axes.push_back(parse_axis(g));
      const auto configs = expand_grid(base, axes);
      for (const auto& c : configs) c.validate();

      ArtifactCache cache(base.paths);
      std::string summary;
      for (const auto& c : configs) {
        const auto result = run_experiment(c, cache.inputs_for(c));
        const auto fp = c.fingerprint();
        write_experiment(fs::path(sweep_out) / fp, c, result);
        const auto& final_metrics = result.ranking_metrics ? *result.ranking_metrics : result.retrieval_metrics;
        json line = {{"fingerprint", fp},
                     {"retrieval", result.retrieval_metrics.metrics_json()},
                     {"ranking", result.ranking_metrics ? result.ranking_metrics->metrics_json() : json(nullptr)}};
        summary += line.dump() + "\n";
        out << fp << format_metrics(final_metrics) << "\n";
      }
      io::write_file(fs::path(sweep_out) / "summary.jsonl", summary);
    };
  });

  if (argc <= 1) {
    out << app.help();
    return kExitUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    setup_logging(log_level);
    if (action) action();
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "star: configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "star: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace star::cli
