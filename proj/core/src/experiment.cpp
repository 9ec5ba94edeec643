#include "star/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>

#include "star/error.hpp"
#include "star/io.hpp"
#include "star/rankers.hpp"

namespace star {

using nlohmann::json;

std::span<const SequenceEvent> split_input(const SplitDataset& data, UserIndex user, EvalSplit split) {
  return split == EvalSplit::test ? data.test_input(user) : data.train(user);
}

ItemIndex split_target(const SplitDataset& data, UserIndex user, EvalSplit split) {
  return split == EvalSplit::test ? data.test(user).item : data.validation(user).item;
}

void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& body) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(count, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  if (failure) std::rethrow_exception(failure);
}

std::vector<RunRecord> run_retrieval(const SplitDataset& data, EvalSplit split,
                                     const RetrievalConfig& config, RetrievalMethod method,
                                     const SimilaritySource* semantic,
                                     const SimilaritySource* collaborative,
                                     const EmbeddingMatrix* embeddings, std::size_t threads) {
  config.validate();
  if (method == RetrievalMethod::average_pooling && embeddings == nullptr) {
    throw Error("average pooling needs the embedding matrix");
  }
  if (method == RetrievalMethod::star) {
    if (config.a > 0.0 && semantic == nullptr) throw Error("retrieval needs the semantic matrix");
    if (config.a < 1.0 && collaborative == nullptr) throw Error("retrieval needs the collaborative matrix");
  }
  // Stands in for a matrix the configuration never reads (a == 0 or a == 1).
  struct Absent final : SimilaritySource {
    std::size_t n = 0;
    std::size_t size() const override { return n; }
    double at(ItemIndex, ItemIndex) const override { throw Error("similarity matrix not loaded"); }
    void accumulate_column(ItemIndex, double, std::span<double>) const override {
      throw Error("similarity matrix not loaded");
    }
  } absent;
  absent.n = data.item_count();
  const SimilaritySource& sem = semantic != nullptr ? *semantic : absent;
  const SimilaritySource& col = collaborative != nullptr ? *collaborative : absent;

  std::vector<RunRecord> records(data.user_count());
  parallel_for(data.user_count(), threads, [&](std::size_t i) {
    const auto u = static_cast<UserIndex>(i);
    const auto input = split_input(data, u, split);
    auto& rec = records[i];
    rec.user = u;
    for (const auto& e : recent_history(input, config.history_len)) rec.history.push_back(e.item);
    rec.candidates = method == RetrievalMethod::star
                         ? retrieve_top_k(input, config, sem, col, u)
                         : average_pooling_baseline(input, *embeddings, config, u);
  });
  return records;
}

RankingOutput run_ranking(std::span<const RunRecord> records, const SplitDataset& data,
                          EvalSplit split, const RankStrategy& strategy,
                          const PromptInfoFlags& flags, Ranker& ranker,
                          const InteractionCounts* counts, std::size_t threads) {
  RankingOutput out;
  out.records.assign(records.begin(), records.end());
  std::vector<std::vector<RankAuditRecord>> audits(records.size());

  parallel_for(records.size(), threads, [&](std::size_t i) {
    auto& rec = out.records[i];
    const std::size_t n = rec.candidates.size();
    RankStrategy s = strategy;
    if (s.kind == RankStrategy::Kind::window) {
      if (n < 2) return;
      s.w = std::min(s.w, n);
    } else if (s.kind == RankStrategy::Kind::selection) {
      if (n == 0) return;
      s.k_out = std::min(s.k_out, n);
    } else if (n == 0) {
      return;
    }

    RankContext ctx;
    ctx.user = rec.user;
    ctx.history = rec.history;
    ctx.catalog = &data.catalog();
    ctx.counts = counts;
    ctx.ground_truth = split_target(data, rec.user, split);

    std::vector<ItemIndex> items;
    for (const auto& c : rec.candidates) items.push_back(c.item);
    auto ranked = rank_candidates(items, s, ctx, ranker, flags);

    std::vector<ScoredCandidate> reordered;
    for (ItemIndex item : ranked.items) {
      auto it = std::find_if(rec.candidates.begin(), rec.candidates.end(),
                             [&](const ScoredCandidate& c) { return c.item == item; });
      reordered.push_back(*it);
    }
    for (std::size_t r = 0; r < reordered.size(); ++r) reordered[r].rank = r + 1;
    rec.candidates = std::move(reordered);
    audits[i] = std::move(ranked.audit);
  });

  for (auto& a : audits) {
    std::move(a.begin(), a.end(), std::back_inserter(out.audit));
  }
  return out;
}

std::vector<EvalTarget> split_targets(const SplitDataset& data, EvalSplit split) {
  std::vector<EvalTarget> targets;
  targets.reserve(data.user_count());
  for (UserIndex u = 0; u < data.user_count(); ++u) targets.push_back({u, split_target(data, u, split)});
  return targets;
}

MetricReport evaluate_records(std::span<const RunRecord> records, const SplitDataset& data,
                              EvalSplit split, std::span<const std::size_t> ks) {
  std::vector<UserPrediction> preds;
  preds.reserve(records.size());
  for (const auto& r : records) {
    UserPrediction p{r.user, {}};
    for (const auto& c : r.candidates) p.items.push_back(c.item);
    preds.push_back(std::move(p));
  }
  const auto targets = split_targets(data, split);
  return evaluate_run(preds, targets, ks);
}

std::string records_jsonl(std::span<const RunRecord> records, EvalSplit split) {
  std::string out;
  for (const auto& r : records) {
    json rec;
    rec["user"] = r.user;
    rec["split"] = to_string(split);
    json cands = json::array();
    for (const auto& c : r.candidates) cands.push_back({{"item", c.item}, {"score", c.score}});
    rec["candidates"] = std::move(cands);
    rec["history"] = r.history;
    out += rec.dump();
    out += '\n';
  }
  return out;
}

std::vector<RunRecord> parse_records_jsonl(std::string_view text, EvalSplit* split) {
  std::vector<RunRecord> records;
  std::optional<EvalSplit> seen;
  std::size_t line_no = 0;
  for (const auto line : io::split_lines(text)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      RunRecord r;
      r.user = rec.at("user").get<UserIndex>();
      for (const auto& c : rec.at("candidates")) {
        r.candidates.push_back({c.at("item").get<ItemIndex>(), c.at("score").get<double>(),
                                r.candidates.size() + 1});
      }
      r.history = rec.value("history", std::vector<ItemIndex>{});
      const auto s = eval_split_from_string(rec.value("split", std::string("test")));
      if (seen && *seen != s) throw ConfigError("run file mixes splits");
      seen = s;
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw IoError("malformed run record on line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (split != nullptr) *split = seen.value_or(EvalSplit::test);
  return records;
}

std::string audit_jsonl(std::span<const RankAuditRecord> audit) {
  std::string out;
  for (const auto& a : audit) {
    json rec;
    rec["user"] = a.user;
    rec["call"] = a.call_index;
    rec["pass"] = a.pass;
    rec["task"] = to_string(a.task);
    rec["span"] = {a.span_begin, a.span_end};
    rec["prompt_hash"] = a.prompt_hash;
    rec["response"] = a.response;
    rec["parsed"] = a.parsed ? json(*a.parsed) : json(nullptr);
    rec["fallback"] = a.fallback;
    rec["error"] = a.error;
    out += rec.dump();
    out += '\n';
  }
  return out;
}

json ExperimentResult::report(const RunConfig& config) const {
  json r;
  r["config"] = config.experiment_json();
  r["fingerprint"] = config.fingerprint();
  r["users"] = retrieval_metrics.users;
  r["retrieval"] = retrieval_metrics.metrics_json();
  r["ranking"] = ranking_metrics ? ranking_metrics->metrics_json() : json(nullptr);
  if (ranked) {
    std::size_t fallbacks = 0;
    for (const auto& a : ranked->audit) fallbacks += a.fallback ? 1 : 0;
    r["ranker_calls"] = ranked->audit.size();
    r["ranker_fallbacks"] = fallbacks;
  }
  return r;
}

ExperimentResult run_experiment(const RunConfig& config, const ExperimentInputs& inputs) {
  config.validate();
  if (inputs.data == nullptr) throw Error("experiment needs a dataset");
  const auto& data = *inputs.data;

  ExperimentResult result;
  result.retrieved = run_retrieval(data, config.split, config.retrieval, config.method,
                                   inputs.semantic, inputs.collaborative, inputs.embeddings,
                                   config.threads);
  result.retrieval_metrics = evaluate_records(result.retrieved, data, config.split, config.ks);

  if (config.ranking) {
    auto ranker = make_ranker(config.ranker, data.catalog());
    std::optional<InteractionCounts> counts;
    if (inputs.incidence != nullptr) counts.emplace(*inputs.incidence);
    result.ranked = run_ranking(result.retrieved, data, config.split, *config.ranking, config.prompt,
                                *ranker, counts ? &*counts : nullptr, config.threads);
    result.ranking_metrics = evaluate_records(result.ranked->records, data, config.split, config.ks);
  }
  return result;
}

ExperimentInputs LoadedArtifacts::inputs() const {
  ExperimentInputs in;
  in.data = &data;
  in.semantic = semantic ? &*semantic : nullptr;
  in.collaborative = collaborative ? &*collaborative : nullptr;
  in.embeddings = embeddings ? &*embeddings : nullptr;
  in.incidence = incidence ? &*incidence : nullptr;
  return in;
}

LoadedArtifacts load_artifacts(const RunConfig& config) {
  namespace fs = std::filesystem;
  const fs::path matrices = config.paths.matrices_dir;
  auto require = [](const fs::path& p, const char* step) {
    if (!fs::exists(p)) throw MissingArtifactError(p.string(), step);
    return p;
  };

  LoadedArtifacts art;
  art.data = load_dataset(config.paths.data_dir);
  if (config.method == RetrievalMethod::average_pooling) {
    art.embeddings = EmbeddingMatrix::load(require(matrices / artifact_names::kEmbeddings, "embed"));
  } else {
    if (config.retrieval.a > 0.0) {
      art.semantic = SimilarityMatrix::load(require(matrices / artifact_names::kSemantic, "build-semantic"));
    }
    if (config.retrieval.a < 1.0) {
      art.collaborative = SimilarityMatrix::load(require(matrices / artifact_names::kCollab, "build-collab"));
    }
  }
  if (config.ranking) {
    art.incidence = SparseInteractionMatrix::load(require(matrices / artifact_names::kCounts, "build-collab"));
  }
  const auto n = art.data.item_count();
  auto check = [&](std::size_t size, const char* what) {
    if (size != n) {
      throw Error(std::string(what) + " has " + std::to_string(size) + " items but the dataset has " +
                  std::to_string(n) + "; rebuild it");
    }
  };
  if (art.semantic) check(art.semantic->size(), "semantic matrix");
  if (art.collaborative) check(art.collaborative->size(), "collaborative matrix");
  if (art.embeddings) check(art.embeddings->rows(), "embedding matrix");
  if (art.incidence) check(art.incidence->n_items(), "interaction counts");
  return art;
}

void write_experiment(const std::filesystem::path& dir, const RunConfig& config,
                      const ExperimentResult& result) {
  io::write_file(dir / "config.json", config.to_json().dump(2) + "\n");
  io::write_file(dir / "report.json", result.report(config).dump(2) + "\n");
  io::write_file(dir / "retrieval.jsonl", records_jsonl(result.retrieved, config.split));
  const auto& final_metrics = result.ranking_metrics ? *result.ranking_metrics : result.retrieval_metrics;
  io::write_file(dir / "users.jsonl", final_metrics.detail_jsonl());
  if (result.ranked) {
    io::write_file(dir / "ranked.jsonl", records_jsonl(result.ranked->records, config.split));
    io::write_file(dir / "ranked.audit.jsonl", audit_jsonl(result.ranked->audit));
  }
}

}  // namespace star
