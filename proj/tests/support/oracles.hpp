#pragma once

// Straightforward re-implementations used as test oracles. They share no
// code with the library beyond its data types.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "star/collab.hpp"
#include "star/corpus.hpp"
#include "star/embed.hpp"
#include "star/rank.hpp"
#include "star/retrieval.hpp"
#include "star/similarity.hpp"

namespace star::testing {

using Dense = std::vector<std::vector<double>>;

inline double scalar_cosine(const std::vector<double>& u, const std::vector<double>& v) {
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0 || nv == 0) return 0.0;
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

inline Dense cosine_oracle(const EmbeddingMatrix& e) {
  Dense out(e.rows(), std::vector<double>(e.rows()));
  for (std::size_t i = 0; i < e.rows(); ++i) {
    const auto ri = e.row(i);
    for (std::size_t j = 0; j < e.rows(); ++j) {
      const auto rj = e.row(j);
      out[i][j] = scalar_cosine({ri.begin(), ri.end()}, {rj.begin(), rj.end()});
    }
  }
  return out;
}

/// Dense C * C^T, then divide by the row norms.
inline Dense collab_oracle(const SparseInteractionMatrix& inc) {
  const std::size_t n = inc.n_items(), m = inc.m_users();
  Dense c(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (UserIndex u : inc.users_of(static_cast<ItemIndex>(i))) c[i][u] = 1.0;
  }
  Dense out(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0, ni = 0, nj = 0;
      for (std::size_t u = 0; u < m; ++u) {
        dot += c[i][u] * c[j][u];
        ni += c[i][u] * c[i][u];
        nj += c[j][u] * c[j][u];
      }
      out[i][j] = ni == 0 || nj == 0 ? 0.0 : dot / std::sqrt(ni * nj);
    }
  }
  return out;
}

inline Dense to_dense(const SimilaritySource& s) {
  Dense out(s.size(), std::vector<double>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) out[i][j] = s.at(static_cast<ItemIndex>(i), static_cast<ItemIndex>(j));
  }
  return out;
}

/// The scoring rule evaluated term by term with std::pow.
inline double score_oracle(std::size_t x, const std::vector<SequenceEvent>& input,
                           const RetrievalConfig& cfg, const Dense& rs, const Dense& rc) {
  const std::size_t n = input.size();
  const std::size_t h = cfg.history_len ? std::min(*cfg.history_len, n) : n;
  double total = 0;
  for (std::size_t t = 1; t <= h; ++t) {
    const auto& e = input[n - t];  // t = 1 is the most recent event
    const double r = cfg.use_ratings ? e.rating : 1.0;
    const double rel = (cfg.a == 0.0 ? 0.0 : cfg.a * rs[x][e.item]) +
                       (cfg.a == 1.0 ? 0.0 : (1.0 - cfg.a) * rc[x][e.item]);
    total += r * std::pow(cfg.lambda, static_cast<double>(t)) * rel;
  }
  return total / static_cast<double>(h);
}

struct OracleHit {
  std::size_t item;
  double score;
};

/// Scores every item, drops seen ones, full sort, keeps k.
inline std::vector<OracleHit> retrieve_oracle(const std::vector<SequenceEvent>& input,
                                              const RetrievalConfig& cfg, const Dense& rs,
                                              const Dense& rc, std::size_t n_items) {
  std::set<std::size_t> seen;
  for (const auto& e : input) seen.insert(e.item);
  std::vector<OracleHit> all;
  for (std::size_t x = 0; x < n_items; ++x) {
    if (cfg.exclude_seen && seen.count(x)) continue;
    all.push_back({x, score_oracle(x, input, cfg, rs, rc)});
  }
  std::sort(all.begin(), all.end(), [](const OracleHit& a, const OracleHit& b) {
    return a.score != b.score ? a.score > b.score : a.item < b.item;
  });
  if (all.size() > cfg.k) all.resize(cfg.k);
  return all;
}

/// k-core by removing one violating user or item at a time and recounting
/// from scratch. Returns surviving (user, item) id pairs, sorted.
inline std::vector<std::pair<std::string, std::string>> kcore_oracle(
    const std::vector<RawReview>& reviews, int k) {
  std::vector<RawReview> live = reviews;
  while (true) {
    std::map<std::string, int> users, items;
    for (const auto& r : live) {
      ++users[r.user_id];
      ++items[r.item_id];
    }
    std::string drop_user, drop_item;
    for (const auto& [u, c] : users) {
      if (c < k) {
        drop_user = u;
        break;
      }
    }
    if (drop_user.empty()) {
      for (const auto& [i, c] : items) {
        if (c < k) {
          drop_item = i;
          break;
        }
      }
    }
    if (drop_user.empty() && drop_item.empty()) break;
    std::erase_if(live, [&](const RawReview& r) {
      return (!drop_user.empty() && r.user_id == drop_user) || (!drop_item.empty() && r.item_id == drop_item);
    });
  }
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& r : live) out.emplace_back(r.user_id, r.item_id);
  std::sort(out.begin(), out.end());
  return out;
}

struct BubbleCall {
  std::size_t call_index;
  std::vector<ItemIndex> items;
};

/// Dedicated pairwise pass: compares adjacent pairs from the bottom up and
/// swaps when the ranker prefers the lower item.
inline std::vector<ItemIndex> bubble_oracle(std::vector<ItemIndex> items, const RankContext& ctx,
                                            Ranker& ranker, const PromptInfoFlags& flags,
                                            std::vector<BubbleCall>* calls) {
  std::size_t call = 0;
  for (std::size_t j = items.size() - 1; j-- > 0;) {
    const std::vector<ItemIndex> pair{items[j], items[j + 1]};
    RankRequest req;
    req.task = RankTask::window;
    req.user = ctx.user;
    req.call_index = call++;
    req.items = pair;
    req.history = ctx.history;
    req.ground_truth = ctx.ground_truth;
    req.messages = build_rank_prompt(ctx, pair, flags);
    if (calls) calls->push_back({req.call_index, pair});
    std::string reply;
    try {
      reply = ranker.complete(req);
    } catch (...) {
      continue;
    }
    // Swap iff the reply is exactly the permutation "[2] > [1]".
    std::vector<std::size_t> ids;
    std::string digits;
    bool in_bracket = false;
    std::string body = reply;
    if (auto p = body.find("\"rank\""); p != std::string::npos) body = body.substr(p + 6);
    for (char c : body) {
      if (c == '[') {
        in_bracket = true;
        digits.clear();
      } else if (c == ']' && in_bracket) {
        in_bracket = false;
        if (digits.empty()) {
          ids.push_back(0);
        } else {
          ids.push_back(digits.size() > 9 ? 0 : std::stoul(digits));
        }
      } else if (in_bracket) {
        if (c >= '0' && c <= '9') digits.push_back(c);
        else if (c != ' ') in_bracket = false;
      }
    }
    if (ids == std::vector<std::size_t>{2, 1}) std::swap(items[j], items[j + 1]);
  }
  return items;
}

}  // namespace star::testing
