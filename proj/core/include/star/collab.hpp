#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "star/corpus.hpp"
#include "star/similarity.hpp"

namespace star {

/// Binary item x user incidence. Row i lists the users who interacted with
/// item i, strictly increasing.
class SparseInteractionMatrix {
 public:
  SparseInteractionMatrix() = default;
  SparseInteractionMatrix(std::size_t n_items, std::size_t m_users,
                          std::vector<std::vector<UserIndex>> rows);

  std::size_t n_items() const { return rows_.size(); }
  std::size_t m_users() const { return m_users_; }
  std::span<const UserIndex> users_of(ItemIndex item) const { return rows_.at(item); }

  void save(const std::filesystem::path& path) const;
  static SparseInteractionMatrix load(const std::filesystem::path& path);

 private:
  std::size_t m_users_ = 0;
  std::vector<std::vector<UserIndex>> rows_;
};

/// Which interactions feed the collaborative statistics.
enum class CountSplit { train, train_and_validation };

/// Duplicate (user, item) events collapse to one entry.
SparseInteractionMatrix build_interaction_matrix(const SplitDataset& data,
                                                 CountSplit split = CountSplit::train);

/// R_C[i][j] = |U_i n U_j| / sqrt(|U_i| |U_j|), stored sparse and symmetric.
/// Items without users get an all-zero row.
SimilarityMatrix collaborative_similarity(const SparseInteractionMatrix& incidence);

/// Popularity and pairwise co-occurrence counts, answered straight from the
/// incidence rows by sorted-list intersection.
class InteractionCounts {
 public:
  explicit InteractionCounts(const SparseInteractionMatrix& incidence) : incidence_(&incidence) {}

  std::size_t popularity(ItemIndex item) const;
  std::size_t co_count(ItemIndex a, ItemIndex b) const;

 private:
  const SparseInteractionMatrix* incidence_;
};

}  // namespace star
