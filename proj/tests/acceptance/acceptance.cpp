// Acceptance suite: one PASS/FAIL/SKIP line per criterion. Exits non-zero
// when any criterion fails.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cli.hpp"
#include "fakes.hpp"
#include "generators.hpp"
#include "oracles.hpp"
#include "star/error.hpp"
#include "star/experiment.hpp"
#include "star/io.hpp"
#include "star/rankers.hpp"

using namespace star;
using star::testing::Gen;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Status { pass, fail, skip };

struct Outcome {
  Status status = Status::pass;
  std::string detail;
};

// Collects the first failure; later checks still run so the detail stays
// specific.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && first_failure_.empty()) first_failure_ = what;
    ++checks_;
  }
  Outcome result(const std::string& summary) const {
    if (!first_failure_.empty()) return {Status::fail, first_failure_};
    return {Status::pass, summary + " (" + std::to_string(checks_) + " checks)"};
  }

 private:
  std::string first_failure_;
  std::size_t checks_ = 0;
};

std::vector<ItemIndex> items_of(const std::vector<ScoredCandidate>& v) {
  std::vector<ItemIndex> out;
  for (const auto& c : v) out.push_back(c.item);
  return out;
}

std::vector<ItemIndex> items_of(const RunRecord& r) { return items_of(r.candidates); }

// ---------------------------------------------------------------------------

struct CorpusSpec {
  const char* name;
  std::size_t users, items, interactions;
  double density;
};

std::optional<fs::path> find_reviews(const fs::path& dir, const std::string& name) {
  for (const char* suffix : {"_5.json.gz", "_5.json", ".json.gz", ".json"}) {
    const auto p = dir / ("reviews_" + name + suffix);
    if (fs::exists(p)) return p;
  }
  return std::nullopt;
}

Outcome dataset_protocol() {
  const char* root = std::getenv("STAR_AMAZON_DIR");
  if (root == nullptr) {
    return {Status::skip, "set STAR_AMAZON_DIR to a directory holding the 2014 Amazon review files"};
  }
  const CorpusSpec specs[] = {{"Beauty", 22363, 12101, 198502, 0.0734},
                              {"Toys_and_Games", 19412, 11924, 167597, 0.0724},
                              {"Sports_and_Outdoors", 35598, 18357, 296337, 0.0453}};
  Checker c;
  std::string modes;
  for (const auto& spec : specs) {
    const auto path = find_reviews(root, spec.name);
    if (!path) return {Status::fail, std::string("no review file for ") + spec.name + " in " + root};
    const auto parsed = parse_reviews(io::read_file(*path));
    bool matched = false;
    std::string seen;
    for (auto mode : {KCoreMode::fixpoint, KCoreMode::single_pass}) {
      auto split = leave_one_out_split(build_sequences(kcore_filter(parsed.records, 5, mode)));
      const auto s = dataset_stats(split.dataset);
      seen += " " + std::to_string(s.users) + "/" + std::to_string(s.items) + "/" +
              std::to_string(s.interactions);
      if (s.users == spec.users && s.items == spec.items && s.interactions == spec.interactions &&
          std::abs(s.density_percent - spec.density) <= 0.0001 + 5e-5) {
        matched = true;
        modes += std::string(" ") + spec.name + ":" + (mode == KCoreMode::fixpoint ? "fixpoint" : "single-pass");
        break;
      }
    }
    c.expect(matched, std::string(spec.name) + " stats mismatch, got" + seen);
  }
  return c.result("published dataset counts reproduced;" + modes);
}

// ---------------------------------------------------------------------------

Outcome scoring_oracle() {
  Gen g(2024);
  Checker c;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = g.size(2, 100);
    const std::size_t m = g.size(1, 50);
    const auto emb = g.embeddings(n, g.size(1, 16), 0.05);
    const auto rs = semantic_similarity(emb);
    const auto rc = collaborative_similarity(g.incidence(n, m, g.real(0.02, 0.4)));
    const auto drs = star::testing::to_dense(rs);
    const auto drc = star::testing::to_dense(rc);

    RetrievalConfig cfg;
    cfg.a = g.real(0, 1);
    cfg.lambda = g.real(0.05, 1.0);
    cfg.history_len = g.coin(0.2) ? std::nullopt : std::optional<std::size_t>(g.size(1, 8));
    cfg.use_ratings = g.coin(0.5);
    cfg.k = g.size(1, n);
    cfg.exclude_seen = g.coin(0.8);
    const auto hist = g.history(n, g.size(1, 12));

    const auto got = retrieve_top_k(hist, cfg, rs, rc);
    const auto want = star::testing::retrieve_oracle(hist, cfg, drs, drc, n);
    const std::string tag = "instance " + std::to_string(trial);
    c.expect(got.size() == want.size(), tag + ": length differs");
    for (std::size_t i = 0; i < std::min(got.size(), want.size()); ++i) {
      c.expect(got[i].item == want[i].item, tag + ": ordering differs at position " + std::to_string(i));
      c.expect(std::abs(got[i].score - want[i].score) <= 1e-9, tag + ": score differs by more than 1e-9");
    }
  }
  return c.result("200 random instances match brute force");
}

// ---------------------------------------------------------------------------

Outcome matrix_properties() {
  Gen g(3033);
  Checker c;
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = g.size(1, 50);
    const auto emb = g.embeddings(n, g.size(1, 12), 0.1);
    const auto rs = semantic_similarity(emb);
    const auto inc = g.incidence(n, g.size(1, 50), g.real(0.02, 0.5));
    const auto rc = collaborative_similarity(inc);
    const auto oracle = star::testing::collab_oracle(inc);
    const InteractionCounts counts(inc);
    const std::string tag = "instance " + std::to_string(trial);
    for (ItemIndex i = 0; i < n; ++i) {
      bool zero_row = true;
      for (double v : emb.row(i)) zero_row = zero_row && v == 0.0;
      c.expect(rs.at(i, i) == (zero_row ? 0.0 : 1.0) || std::abs(rs.at(i, i) - 1.0) <= 1e-9,
               tag + ": R_S diagonal");
      const bool has_users = counts.popularity(i) > 0;
      c.expect(std::abs(rc.at(i, i) - (has_users ? 1.0 : 0.0)) <= 1e-9, tag + ": R_C diagonal");
      for (ItemIndex j = 0; j < n; ++j) {
        const double s = rs.at(i, j), r = rc.at(i, j);
        c.expect(std::abs(s - rs.at(j, i)) <= 1e-9, tag + ": R_S not symmetric");
        c.expect(std::abs(r - rc.at(j, i)) <= 1e-9, tag + ": R_C not symmetric");
        c.expect(s >= -1.0 - 1e-12 && s <= 1.0 + 1e-12, tag + ": R_S out of range");
        c.expect(r >= 0.0 && r <= 1.0 + 1e-12, tag + ": R_C out of range");
        c.expect(std::abs(r - oracle[i][j]) <= 1e-9, tag + ": R_C differs from the product oracle");
        const double co = static_cast<double>(counts.co_count(i, j));
        const double rhs = r * r * static_cast<double>(counts.popularity(i) * counts.popularity(j));
        c.expect(std::abs(co * co - rhs) <= 1e-9 * std::max(1.0, co * co), tag + ": co_count cross-check");
      }
    }
  }
  return c.result("symmetry, range, diagonal and oracle agreement hold");
}

// ---------------------------------------------------------------------------

Outcome collapse_checks() {
  Gen g(4044);
  Checker c;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = g.size(5, 80);
    const auto emb = g.embeddings(n, g.size(2, 16));
    const auto rs = semantic_similarity(emb);
    const auto inc = g.incidence(n, g.size(1, 40), 0.2);
    const auto rc = collaborative_similarity(inc);
    auto hist = g.history(n, g.size(1, 8));
    for (auto& e : hist) e.rating = 1;
    const std::string tag = "instance " + std::to_string(trial);

    // Nearest neighbours of the most recent item.
    RetrievalConfig nn;
    nn.a = 1.0;
    nn.lambda = 1.0;
    nn.history_len = 1;
    nn.k = n;
    const auto got = items_of(retrieve_top_k(hist, nn, rs, rc));
    std::set<ItemIndex> seen;
    for (const auto& e : hist) seen.insert(e.item);
    const auto anchor = emb.row(hist.back().item);
    const std::vector<double> a(anchor.begin(), anchor.end());
    std::vector<std::pair<double, ItemIndex>> ref;
    for (ItemIndex x = 0; x < n; ++x) {
      if (seen.count(x)) continue;
      const auto row = emb.row(x);
      ref.emplace_back(star::testing::scalar_cosine(a, {row.begin(), row.end()}), x);
    }
    std::sort(ref.begin(), ref.end(), [](const auto& l, const auto& r) {
      return l.first != r.first ? l.first > r.first : l.second < r.second;
    });
    std::vector<ItemIndex> want;
    for (const auto& [s, x] : ref) want.push_back(x);
    c.expect(got == want, tag + ": a=1, lambda=1, l=1 differs from nearest neighbours");

    // a = 0 never reads R_S.
    star::testing::CountingSource counted(rs);
    RetrievalConfig collab_only;
    collab_only.a = 0.0;
    retrieve_top_k(hist, collab_only, counted, rc);
    c.expect(counted.reads == 0, tag + ": a=0 read the semantic matrix");

    // Scaling every rating by c > 0 keeps the ordering.
    auto rated = g.history(n, g.size(1, 8));
    RetrievalConfig with_ratings;
    with_ratings.use_ratings = true;
    with_ratings.a = g.real(0, 1);
    with_ratings.k = n;
    const auto base = retrieve_top_k(rated, with_ratings, rs, rc);
    const int scale = g.integer(2, 9);
    for (auto& e : rated) e.rating *= scale;
    const auto scaled = retrieve_top_k(rated, with_ratings, rs, rc);
    bool same = base.size() == scaled.size();
    for (std::size_t i = 0; same && i < base.size(); ++i) {
      // Positions may only differ between candidates whose scores tie.
      same = base[i].item == scaled[i].item || std::abs(base[i].score - scaled[i].score / scale) <= 1e-12;
    }
    c.expect(same, tag + ": rating scaling changed the ordering");
  }
  return c.result("nearest-neighbour collapse, a=0 isolation and rating scaling hold");
}

// ---------------------------------------------------------------------------

struct RankWorld {
  std::vector<ItemMeta> catalog;
  SparseInteractionMatrix incidence;
  InteractionCounts counts;

  explicit RankWorld(std::size_t n)
      : catalog(n), incidence(n, 1, std::vector<std::vector<UserIndex>>(n)), counts(incidence) {
    for (std::size_t i = 0; i < n; ++i) catalog[i].title = "item " + std::to_string(i);
  }
  RankContext context(UserIndex user, std::optional<ItemIndex> truth) const {
    RankContext ctx;
    ctx.user = user;
    ctx.history = {0, 1, 2};
    ctx.catalog = &catalog;
    ctx.counts = &counts;
    ctx.ground_truth = truth;
    return ctx;
  }
};

Outcome ranking_algebra() {
  Gen g(5055);
  Checker c;
  const RankWorld world(80);
  const PromptInfoFlags flags{true, true};

  for (int trial = 0; trial < 500; ++trial) {
    std::vector<ItemIndex> items(g.size(2, 20));
    std::iota(items.begin(), items.end(), 10);
    g.shuffle(items);
    const auto ctx = world.context(static_cast<UserIndex>(trial), items[g.size(0, items.size() - 1)]);
    const auto seed = g.engine()();
    const std::string tag = "instance " + std::to_string(trial);
    // Alternate between the adversarial ranker and the oracle.
    auto make = [&]() -> star::testing::ScriptedRanker::Fn {
      if (trial % 2 == 0) return star::testing::garbage_reply(seed);
      return [](const RankRequest& r) { return OracleRanker().complete(r); };
    };
    star::testing::ScriptedRanker a(make()), b(make());
    std::vector<star::testing::BubbleCall> calls;
    const auto want = star::testing::bubble_oracle(items, ctx, b, flags, &calls);
    const auto got = sliding_window_rank(items, RankStrategy::pair_wise(), ctx, a, flags);
    c.expect(got.items == want, tag + ": pair-wise output differs from bubble pass");
    c.expect(a.requests.size() == calls.size(), tag + ": call count differs from bubble pass");
    for (std::size_t i = 0; i < std::min(a.requests.size(), calls.size()); ++i) {
      c.expect(a.requests[i].items == calls[i].items && a.requests[i].call_index == calls[i].call_index,
               tag + ": call sequence differs from bubble pass");
      c.expect(a.requests[i].messages == b.requests[i].messages, tag + ": prompts differ from bubble pass");
    }
  }

  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = g.size(2, 30);
    std::vector<ItemIndex> in(k);
    std::iota(in.begin(), in.end(), 10);
    g.shuffle(in);
    RankStrategy s;
    switch (trial % 3) {
      case 0: s.kind = RankStrategy::Kind::point_wise; break;
      case 1:
        s.kind = RankStrategy::Kind::selection;
        s.k_out = g.size(1, k);
        break;
      default:
        s.w = g.size(2, k);
        s.d = g.size(1, s.w);
        s.passes = g.size(1, 3);
    }
    star::testing::ScriptedRanker garbage(star::testing::garbage_reply(g.engine()()));
    const auto out = rank_candidates(in, s, world.context(0, in[0]), garbage, flags);
    auto x = out.items, y = in;
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    c.expect(x == y, "garbage ranker broke the permutation (" + to_string(s.kind) + ")");
  }

  std::vector<ItemIndex> twenty(20);
  std::iota(twenty.begin(), twenty.end(), 10);
  const std::pair<std::size_t, std::size_t> grid[] = {{2, 1}, {4, 2}, {8, 4}, {10, 5}, {20, 1}, {20, 5}, {20, 20}};
  for (const auto& [w, d] : grid) {
    for (std::size_t passes = 1; passes <= 3; ++passes) {
      star::testing::ScriptedRanker r(star::testing::identity_reply);
      RankStrategy s = RankStrategy::list_wise(w, d);
      s.passes = passes;
      sliding_window_rank(twenty, s, world.context(0, std::nullopt), r, flags);
      const std::size_t want = passes * ((20 - w + d - 1) / d + 1);
      c.expect(r.requests.size() == want, "call count for (20," + std::to_string(w) + "," +
                                              std::to_string(d) + ") x" + std::to_string(passes));
    }
  }
  return c.result("bubble equivalence on 500 instances, permutation safety, call counts");
}

// ---------------------------------------------------------------------------

struct SyntheticWorld {
  SplitDataset data;
  SimilarityMatrix rs, rc;
  SparseInteractionMatrix inc;

  SyntheticWorld(std::uint64_t seed, std::size_t users, std::size_t items) {
    Gen g(seed);
    data = g.dataset(users, items, 4, 10);
    rs = semantic_similarity(g.embeddings(data.item_count(), 12));
    inc = build_interaction_matrix(data);
    rc = collaborative_similarity(inc);
  }
};

Outcome oracle_convergence() {
  Checker c;
  const std::vector<std::size_t> ks = {1, 20};
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const SyntheticWorld w(600 + seed, 120, 40 + 10 * seed);
    RetrievalConfig cfg;
    cfg.k = 20;
    const auto recs = run_retrieval(w.data, EvalSplit::test, cfg, RetrievalMethod::star, &w.rs, &w.rc, nullptr);
    const auto before = evaluate_records(recs, w.data, EvalSplit::test, ks);
    OracleRanker oracle;
    NoisyOracleRanker clean(0.0, seed);
    const auto a = run_ranking(recs, w.data, EvalSplit::test, RankStrategy::pair_wise(), {false, false}, oracle, nullptr);
    const auto b = run_ranking(recs, w.data, EvalSplit::test, RankStrategy::pair_wise(), {false, false}, clean, nullptr);
    const auto after = evaluate_records(a.records, w.data, EvalSplit::test, ks);
    const std::string tag = "dataset " + std::to_string(seed);
    c.expect(before.hit_rate.at(20) > 0.0, tag + ": no ground truth retrieved");
    c.expect(after.hit_rate.at(1) == before.hit_rate.at(20), tag + ": oracle HR@1 != retrieval HR@20");
    bool identical = a.records.size() == b.records.size();
    for (std::size_t u = 0; identical && u < a.records.size(); ++u) {
      identical = items_of(a.records[u]) == items_of(b.records[u]);
    }
    c.expect(identical, tag + ": noisy p=0 differs from the oracle");
  }

  const SyntheticWorld big(6060, 1000, 60);
  RetrievalConfig cfg;
  cfg.k = 20;
  const auto recs = run_retrieval(big.data, EvalSplit::test, cfg, RetrievalMethod::star, &big.rs, &big.rc, nullptr, 4);
  std::ostringstream detail;
  for (std::uint64_t seed : {11, 12, 13}) {
    double prev = 2.0;
    for (double p : {0.0, 0.1, 0.3}) {
      NoisyOracleRanker noisy(p, seed);
      const auto out = run_ranking(recs, big.data, EvalSplit::test, RankStrategy::pair_wise(), {false, false}, noisy, nullptr, 4);
      const double hr1 = evaluate_records(out.records, big.data, EvalSplit::test, ks).hit_rate.at(1);
      c.expect(hr1 <= prev, "HR@1 increased with p=" + std::to_string(p) + " (seed " + std::to_string(seed) + ")");
      if (seed == 11) detail << " p=" << p << ":" << hr1;
      prev = hr1;
    }
  }
  return c.result("oracle reaches HR@20 at rank 1; noisy HR@1 over 1000 users" + detail.str());
}

// ---------------------------------------------------------------------------

Outcome metric_suite() {
  Checker c;
  c.expect(hit_rate_at_k(1, 1) == 1 && hit_rate_at_k(10, 10) == 1 && hit_rate_at_k(11, 10) == 0 &&
               hit_rate_at_k(std::nullopt, 10) == 0,
           "hit rate closed forms");
  c.expect(ndcg_at_k(1, 10) == 1.0, "NDCG at rank 1");
  c.expect(ndcg_at_k(3, 10) == 0.5, "NDCG at rank 3");
  c.expect(ndcg_at_k(7, 10) == 1.0 / 3.0, "NDCG at rank 7");
  c.expect(ndcg_at_k(11, 10) == 0.0 && ndcg_at_k(std::nullopt, 5) == 0.0, "NDCG outside the cutoff");
  {
    const std::vector<UserPrediction> preds = {{0, {4}}, {1, {5}}};
    const std::vector<EvalTarget> targets = {{0, 4}, {1, 6}};
    const std::vector<std::size_t> ks = {1};
    const auto r = evaluate_run(preds, targets, ks);
    c.expect(r.hit_rate.at(1) == 0.5 && r.ndcg.at(1) == 0.5, "two-user average");
  }

  for (std::uint64_t seed : {7, 8, 9}) {
    const SyntheticWorld w(700 + seed, 150, 50);
    const std::vector<std::size_t> ks = {1, 5, 10, 20};
    RetrievalConfig cfg;
    cfg.k = 20;
    const auto recs = run_retrieval(w.data, EvalSplit::test, cfg, RetrievalMethod::star, &w.rs, &w.rc, nullptr);
    const auto base = evaluate_records(recs, w.data, EvalSplit::test, ks);
    const InteractionCounts counts(w.inc);
    for (auto strategy : {RankStrategy::pair_wise(), RankStrategy::list_wise(4, 2), RankStrategy{RankStrategy::Kind::point_wise},
                          RankStrategy{RankStrategy::Kind::selection, 2, 1, 1, 10}}) {
      star::testing::ScriptedRanker garbage(star::testing::garbage_reply(seed));
      const auto out = run_ranking(recs, w.data, EvalSplit::test, strategy, {}, garbage, &counts);
      const auto r = evaluate_records(out.records, w.data, EvalSplit::test, ks);
      for (auto k : ks) {
        c.expect(r.ndcg.at(k) <= r.hit_rate.at(k) + 1e-12, "NDCG@K > HR@K");
        c.expect(base.ndcg.at(k) <= base.hit_rate.at(k) + 1e-12, "retrieval NDCG@K > HR@K");
      }
      c.expect(r.hit_rate.at(20) == base.hit_rate.at(20), "ranking changed HR@20 (" + to_string(strategy.kind) + ")");
    }
  }
  return c.result("closed forms exact, NDCG <= HR, HR@k_retrieved preserved");
}

// ---------------------------------------------------------------------------

Outcome prompt_conformance() {
  const auto path = fs::path(STAR_TEST_DATA_DIR) / "rank_prompt_w4.txt";
  const std::string golden = io::read_file(path);

  const ItemIndex hist[] = {1069, 2424, 2856};
  const ItemIndex cand[] = {3001, 3002, 3003, 3004};
  std::vector<ItemMeta> catalog(3005);
  auto set = [&](ItemIndex i, const char* title, std::int64_t rank, std::vector<std::string> cats, double price) {
    catalog[i].title = title;
    catalog[i].sales_rank = {{"Beauty", rank}};
    catalog[i].categories = {std::move(cats)};
    catalog[i].price = price;
    catalog[i].brand = "SHANY Cosmetics";
  };
  set(hist[0], "SHANY Professional 13-Piece Cosmetic Brush Set with Pouch, Set of 12 Brushes and 1 Pouch, Red", 248,
      {"Beauty", "Tools & Accessories", "Makeup Brushes & Tools", "Brushes & Applicators"}, 12.95);
  set(hist[1], "SHANY Eyeshadow Palette, Bold and Bright Collection, Vivid, 120 Color", 1612,
      {"Beauty", "Makeup", "Eyes", "Eye Shadow"}, 16.99);
  set(hist[2], "SHANY Studio Quality Natural Cosmetic Brush Set with Leather Pouch, 24 Count", 937,
      {"Beauty", "Tools & Accessories", "Bags & Cases", "Cosmetic Bags"}, 26.99);
  set(cand[0], "SHANY Cosmetics Intense Eyes Palette 72 Color Eyeshadow Palette, 17 Ounce", 181358,
      {"Beauty", "Makeup", "Makeup Sets"}, 26.4);
  set(cand[1], "SHANY Cosmetics Carry All Train Case with Makeup and Reusable Aluminum Case, Cameo", 2439,
      {"Beauty", "Makeup", "Makeup Sets"}, 39.99);
  set(cand[2], "SHANY COSMETICS The Masterpiece 7 Layers All-in-One Makeup Set", 2699,
      {"Beauty", "Makeup", "Makeup Sets"}, 41.89);
  set(cand[3], "SHANY Silver Aluminum Makeup Case, 4 Pounds", 16605,
      {"Beauty", "Tools & Accessories", "Bags & Cases", "Train Cases"}, 59.95);

  const std::size_t co[4][3] = {{18, 0, 16}, {27, 1, 29}, {23, 2, 25}, {32, 1, 40}};
  std::vector<std::vector<UserIndex>> rows(catalog.size());
  UserIndex next = 0;
  for (int ci = 0; ci < 4; ++ci) {
    for (int hi = 0; hi < 3; ++hi) {
      for (std::size_t n = 0; n < co[ci][hi]; ++n) {
        rows[cand[ci]].push_back(next);
        rows[hist[hi]].push_back(next);
        ++next;
      }
    }
  }
  const SparseInteractionMatrix inc(catalog.size(), next, rows);
  const InteractionCounts counts(inc);
  RankContext ctx;
  ctx.user = 1656;
  ctx.history = {hist[0], hist[1], hist[2]};
  ctx.catalog = &catalog;
  ctx.counts = &counts;
  const auto msgs = build_rank_prompt(ctx, cand, {false, true});

  std::string flat;
  for (const auto& m : msgs) flat += "=== " + to_string(m.role) + " ===\n" + m.content + "\n";
  Checker c;
  c.expect(msgs.front().content.rfind("You are an intelligent assistant that can rank items", 0) == 0,
           "system line");
  std::size_t per_candidate = 0;
  for (const auto& m : msgs) {
    if (m.content.find("Number of users who interacted with both this item") != std::string::npos) ++per_candidate;
  }
  c.expect(per_candidate == 4, "co-occurrence lines in every candidate turn");
  c.expect(msgs.back().content.find("\"rank\": \"[] > [] .. > []\"") != std::string::npos, "final instruction");
  if (flat != golden) {
    std::size_t at = 0;
    while (at < flat.size() && at < golden.size() && flat[at] == golden[at]) ++at;
    c.expect(false, "golden file differs at byte " + std::to_string(at));
  }
  return c.result("matches " + path.filename().string());
}

// ---------------------------------------------------------------------------

struct CliRun {
  int code;
  std::string err;
};

CliRun star_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "star");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, err.str()};
}

// Full pipeline in `dir`; returns {report, audit, sweep summary} bytes.
std::vector<std::string> pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto old = fs::current_path();
  fs::current_path(dir);
  struct Restore {
    fs::path p;
    ~Restore() { fs::current_path(p); }
  } restore{old};

  Gen g(9099);
  std::string reviews, meta;
  for (const auto& r : g.reviews(150, 60, 5, 12)) {
    reviews += json{{"reviewerID", r.user_id}, {"asin", r.item_id}, {"overall", r.rating},
                    {"unixReviewTime", r.timestamp}}.dump() + "\n";
  }
  for (std::size_t i = 0; i < 60; ++i) {
    const auto m = g.meta(i);
    json rec{{"asin", "I" + std::to_string(i)}, {"title", *m.title}, {"categories", m.categories}};
    if (m.brand) rec["brand"] = *m.brand;
    if (m.price) rec["price"] = *m.price;
    meta += rec.dump() + "\n";
  }
  io::write_file("reviews.json", reviews);
  io::write_file("meta.json", meta);

  const std::vector<std::vector<std::string>> steps = {
      {"prepare", "--reviews", "reviews.json", "--meta", "meta.json"},
      {"embed", "--provider", "local", "--dim", "32"},
      {"build-semantic"},
      {"build-collab"},
      {"retrieve", "--k", "20", "--shuffle", "3", "--threads", "3"},
      {"rank", "--ranker", "noisy", "--p", "0.2", "--seed", "5", "--w", "4", "--d", "2", "--threads", "3"},
      {"evaluate", "--run", "runs/ranked.jsonl", "--out", "report.json", "--detail", "detail.jsonl"},
      {"sweep", "--grid", "a=0.2,0.8", "--grid", "ranker=oracle,lexical", "--set", "strategy=window", "--out", "sweep"},
  };
  for (const auto& s : steps) {
    const auto r = star_cli(s);
    if (r.code != 0) throw Error("`star " + s.front() + "` exited " + std::to_string(r.code) + ": " + r.err);
  }
  std::vector<std::string> out = {io::read_file("report.json"), io::read_file("detail.jsonl"),
                                  io::read_file("runs/ranked.audit.jsonl"), io::read_file("sweep/summary.jsonl")};
  for (const auto& entry : fs::directory_iterator("sweep")) {
    if (entry.is_directory()) {
      out.push_back(io::read_file(entry.path() / "report.json"));
      out.push_back(io::read_file(entry.path() / "ranked.audit.jsonl"));
    }
  }
  return out;
}

Outcome replay_determinism() {
  const auto base = fs::temp_directory_path() / "star_acceptance_replay";
  const auto a = pipeline(base / "a");
  const auto b = pipeline(base / "b");
  Checker c;
  c.expect(a.size() == b.size(), "different number of artifacts");
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    c.expect(!a[i].empty(), "empty artifact " + std::to_string(i));
    c.expect(a[i] == b[i], "artifact " + std::to_string(i) + " differs between runs");
  }
  return c.result(std::to_string(a.size()) + " reports and audit logs byte-identical");
}

}  // namespace

int main() {
  // Edge-case warnings from the random instances would drown the report.
  spdlog::set_level(spdlog::level::err);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"dataset protocol", dataset_protocol},
      {"scoring oracle", scoring_oracle},
      {"matrix properties", matrix_properties},
      {"formula collapse", collapse_checks},
      {"ranking algebra", ranking_algebra},
      {"oracle convergence", oracle_convergence},
      {"metric suite", metric_suite},
      {"prompt conformance", prompt_conformance},
      {"replay determinism", replay_determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {Status::fail, std::string("threw: ") + e.what()};
    }
    const char* label = o.status == Status::pass ? "PASS" : o.status == Status::fail ? "FAIL" : "SKIP";
    if (o.status == Status::fail) ++failures;
    std::cout << "[" << label << "] " << (i + 1) << " " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
