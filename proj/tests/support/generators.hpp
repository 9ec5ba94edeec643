#pragma once

// Seeded random instances for property tests.

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "star/collab.hpp"
#include "star/corpus.hpp"
#include "star/embed.hpp"

namespace star::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::mt19937_64& engine() { return rng_; }

  std::size_t size(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool coin(double p) { return std::bernoulli_distribution(p)(rng_); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    std::shuffle(v.begin(), v.end(), rng_);
  }

  std::vector<double> vector(std::size_t d, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(d);
    for (auto& x : v) x = real(lo, hi);
    return v;
  }

  /// Random rows; each row is all zeros with probability `zero_row`.
  EmbeddingMatrix embeddings(std::size_t n, std::size_t d, double zero_row = 0.0) {
    std::vector<double> values;
    values.reserve(n * d);
    for (std::size_t i = 0; i < n; ++i) {
      const bool zero = coin(zero_row);
      for (std::size_t j = 0; j < d; ++j) values.push_back(zero ? 0.0 : real(-1.0, 1.0));
    }
    return EmbeddingMatrix(n, d, std::move(values), "gen");
  }

  SparseInteractionMatrix incidence(std::size_t n, std::size_t m, double density) {
    std::vector<std::vector<UserIndex>> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (UserIndex u = 0; u < m; ++u) {
        if (coin(density)) rows[i].push_back(u);
      }
    }
    return SparseInteractionMatrix(n, m, std::move(rows));
  }

  /// Chronological history over `n_items` items; ratings in 1..5.
  std::vector<SequenceEvent> history(std::size_t n_items, std::size_t len) {
    std::vector<SequenceEvent> h;
    for (std::size_t t = 0; t < len; ++t) {
      h.push_back({static_cast<ItemIndex>(size(0, n_items - 1)), integer(1, 5),
                   static_cast<std::int64_t>(t)});
    }
    return h;
  }

  ItemMeta meta(std::size_t i) {
    static const char* words[] = {"silk", "matte", "rose", "argan", "volume", "shine", "glow",
                                  "repair", "mint", "velvet", "clay", "gold"};
    static const char* cats[] = {"Makeup", "Skin Care", "Hair Care", "Fragrance", "Tools"};
    static const char* brands[] = {"Acme", "Lumen", "Nordic", "Verde"};
    ItemMeta m;
    m.item_id = "I" + std::to_string(i);
    std::string title;
    for (int w = 0, n = integer(2, 4); w < n; ++w) {
      if (w > 0) title += ' ';
      title += words[size(0, 11)];
    }
    m.title = title;
    m.categories = {{"Beauty", cats[size(0, 4)]}};
    if (coin(0.7)) m.brand = brands[size(0, 3)];
    if (coin(0.7)) m.price = static_cast<double>(integer(100, 9999)) / 100.0;
    if (coin(0.5)) m.sales_rank["Beauty"] = integer(1, 200000);
    return m;
  }

  /// Reviews for `users` users with sequence lengths in [min_len, max_len]
  /// over `items` items (distinct within a user).
  std::vector<RawReview> reviews(std::size_t users, std::size_t items, std::size_t min_len,
                                 std::size_t max_len) {
    std::vector<RawReview> out;
    std::vector<std::size_t> pool(items);
    for (std::size_t i = 0; i < items; ++i) pool[i] = i;
    for (std::size_t u = 0; u < users; ++u) {
      shuffle(pool);
      const std::size_t len = std::min(size(min_len, max_len), items);
      std::int64_t t = integer(0, 1000);
      for (std::size_t j = 0; j < len; ++j) {
        t += integer(1, 100);
        out.push_back({"U" + std::to_string(u), "I" + std::to_string(pool[j]), integer(1, 5), t,
                       out.size()});
      }
    }
    return out;
  }

  /// Split dataset with a synthetic catalog. Every item id of the form
  /// "I<j>" gets metadata; indices follow sorted id order.
  SplitDataset dataset(std::size_t users, std::size_t items, std::size_t min_len,
                       std::size_t max_len) {
    auto split = leave_one_out_split(build_sequences(reviews(users, items, min_len, max_len)));
    auto& data = split.dataset;
    std::vector<ItemMeta> catalog;
    for (ItemIndex i = 0; i < data.item_count(); ++i) {
      auto m = meta(i);
      m.item_id = data.items().id(i);
      catalog.push_back(std::move(m));
    }
    data.set_catalog(std::move(catalog));
    return std::move(split.dataset);
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace star::testing
