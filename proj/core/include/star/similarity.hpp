#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "star/corpus.hpp"

namespace star {

enum class SimilarityKind { semantic, collaborative };

std::string to_string(SimilarityKind kind);
SimilarityKind similarity_kind_from_string(const std::string& s);

/// Read-only view of an n x n item-item relationship matrix. Retrieval only
/// talks to this interface so tests can substitute instrumented fakes.
class SimilaritySource {
 public:
  virtual ~SimilaritySource() = default;

  virtual std::size_t size() const = 0;
  virtual double at(ItemIndex row, ItemIndex col) const = 0;
  /// acc[x] += weight * M[x][col] for every row x.
  virtual void accumulate_column(ItemIndex col, double weight, std::span<double> acc) const = 0;
};

/// Dense row-major or CSR-sparse similarity matrix.
class SimilarityMatrix final : public SimilaritySource {
 public:
  SimilarityMatrix() = default;

  static SimilarityMatrix dense(std::size_t n, SimilarityKind kind, std::vector<double> values);

  /// `cols` must be strictly increasing within each row.
  static SimilarityMatrix sparse(std::size_t n, SimilarityKind kind,
                                 std::vector<std::uint64_t> row_ptr,
                                 std::vector<ItemIndex> cols, std::vector<double> values,
                                 bool symmetric, std::optional<std::size_t> truncation_k = {});

  std::size_t size() const override { return n_; }
  double at(ItemIndex row, ItemIndex col) const override;
  void accumulate_column(ItemIndex col, double weight, std::span<double> acc) const override;

  SimilarityKind kind() const { return kind_; }
  bool is_dense() const { return dense_; }
  bool symmetric() const { return symmetric_; }
  std::optional<std::size_t> truncation_k() const { return truncation_k_; }
  std::size_t stored_entries() const { return values_.size(); }

  std::span<const double> dense_row(ItemIndex row) const;
  std::span<const ItemIndex> row_cols(ItemIndex row) const;
  std::span<const double> row_values(ItemIndex row) const;

  /// Keeps the diagonal plus the `k` largest off-diagonal entries per row
  /// (ties to the lower column). The result is sparse and, in general, no
  /// longer symmetric.
  SimilarityMatrix truncate_top_k(std::size_t k) const;

  void save(const std::filesystem::path& path) const;
  static SimilarityMatrix load(const std::filesystem::path& path);

 private:
  std::size_t n_ = 0;
  SimilarityKind kind_ = SimilarityKind::semantic;
  bool dense_ = true;
  bool symmetric_ = true;
  std::optional<std::size_t> truncation_k_;
  std::vector<double> values_;
  std::vector<std::uint64_t> row_ptr_;
  std::vector<ItemIndex> cols_;
};

}  // namespace star
