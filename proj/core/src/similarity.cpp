#include "star/similarity.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

#include <nlohmann/json.hpp>

#include "star/error.hpp"
#include "star/io.hpp"

namespace star {

std::string to_string(SimilarityKind kind) {
  return kind == SimilarityKind::semantic ? "semantic" : "collaborative";
}

SimilarityKind similarity_kind_from_string(const std::string& s) {
  if (s == "semantic") return SimilarityKind::semantic;
  if (s == "collaborative") return SimilarityKind::collaborative;
  throw Error("unknown similarity kind '" + s + "'");
}

SimilarityMatrix SimilarityMatrix::dense(std::size_t n, SimilarityKind kind,
                                         std::vector<double> values) {
  if (values.size() != n * n) throw Error("dense similarity matrix must have n*n values");
  SimilarityMatrix m;
  m.n_ = n;
  m.kind_ = kind;
  m.dense_ = true;
  m.symmetric_ = true;
  m.values_ = std::move(values);
  return m;
}

SimilarityMatrix SimilarityMatrix::sparse(std::size_t n, SimilarityKind kind,
                                          std::vector<std::uint64_t> row_ptr,
                                          std::vector<ItemIndex> cols, std::vector<double> values,
                                          bool symmetric, std::optional<std::size_t> truncation_k) {
  if (row_ptr.size() != n + 1 || row_ptr.front() != 0 || row_ptr.back() != cols.size() ||
      cols.size() != values.size()) {
    throw Error("inconsistent sparse similarity matrix layout");
  }
  for (std::size_t r = 0; r < n; ++r) {
    if (row_ptr[r] > row_ptr[r + 1]) throw Error("sparse row pointers must be non-decreasing");
    for (auto p = row_ptr[r]; p < row_ptr[r + 1]; ++p) {
      if (cols[p] >= n || (p > row_ptr[r] && cols[p] <= cols[p - 1])) {
        throw Error("sparse row columns must be strictly increasing and in range");
      }
    }
  }
  SimilarityMatrix m;
  m.n_ = n;
  m.kind_ = kind;
  m.dense_ = false;
  m.symmetric_ = symmetric;
  m.truncation_k_ = truncation_k;
  m.row_ptr_ = std::move(row_ptr);
  m.cols_ = std::move(cols);
  m.values_ = std::move(values);
  return m;
}

double SimilarityMatrix::at(ItemIndex row, ItemIndex col) const {
  if (row >= n_ || col >= n_) throw Error("similarity index out of range");
  if (dense_) return values_[static_cast<std::size_t>(row) * n_ + col];
  const auto cols = row_cols(row);
  auto it = std::lower_bound(cols.begin(), cols.end(), col);
  if (it == cols.end() || *it != col) return 0.0;
  return values_[row_ptr_[row] + static_cast<std::size_t>(it - cols.begin())];
}

void SimilarityMatrix::accumulate_column(ItemIndex col, double weight,
                                         std::span<double> acc) const {
  if (acc.size() != n_) throw Error("accumulator size does not match matrix");
  if (col >= n_) throw Error("similarity index out of range");
  if (symmetric_) {
    // M[x][col] == M[col][x]: walk the contiguous row instead of the column.
    if (dense_) {
      const double* row = values_.data() + static_cast<std::size_t>(col) * n_;
      for (std::size_t x = 0; x < n_; ++x) acc[x] += weight * row[x];
    } else {
      for (auto p = row_ptr_[col]; p < row_ptr_[col + 1]; ++p) {
        acc[cols_[p]] += weight * values_[p];
      }
    }
    return;
  }
  for (ItemIndex x = 0; x < n_; ++x) {
    const double v = at(x, col);
    if (v != 0.0) acc[x] += weight * v;
  }
}

std::span<const double> SimilarityMatrix::dense_row(ItemIndex row) const {
  if (!dense_) throw Error("dense_row on a sparse matrix");
  return {values_.data() + static_cast<std::size_t>(row) * n_, n_};
}

std::span<const ItemIndex> SimilarityMatrix::row_cols(ItemIndex row) const {
  if (dense_) throw Error("row_cols on a dense matrix");
  return {cols_.data() + row_ptr_[row], static_cast<std::size_t>(row_ptr_[row + 1] - row_ptr_[row])};
}

std::span<const double> SimilarityMatrix::row_values(ItemIndex row) const {
  if (dense_) throw Error("row_values on a dense matrix");
  return {values_.data() + row_ptr_[row],
          static_cast<std::size_t>(row_ptr_[row + 1] - row_ptr_[row])};
}

SimilarityMatrix SimilarityMatrix::truncate_top_k(std::size_t k) const {
  std::vector<std::uint64_t> row_ptr{0};
  std::vector<ItemIndex> cols;
  std::vector<double> vals;
  std::vector<std::pair<double, ItemIndex>> entries;

  for (ItemIndex r = 0; r < n_; ++r) {
    entries.clear();
    double diag = 0.0;
    if (dense_) {
      const auto row = dense_row(r);
      for (ItemIndex c = 0; c < n_; ++c) {
        if (c == r) diag = row[c];
        else entries.emplace_back(row[c], c);
      }
    } else {
      const auto rc = row_cols(r);
      const auto rv = row_values(r);
      for (std::size_t p = 0; p < rc.size(); ++p) {
        if (rc[p] == r) diag = rv[p];
        else entries.emplace_back(rv[p], rc[p]);
      }
    }
    const std::size_t keep = std::min(k, entries.size());
    std::partial_sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(keep),
                      entries.end(), [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;
                      });
    entries.resize(keep);
    if (diag != 0.0) entries.emplace_back(diag, r);
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });
    for (const auto& [v, c] : entries) {
      if (v == 0.0) continue;
      cols.push_back(c);
      vals.push_back(v);
    }
    row_ptr.push_back(cols.size());
  }
  return sparse(n_, kind_, std::move(row_ptr), std::move(cols), std::move(vals),
                /*symmetric=*/false, k);
}

void SimilarityMatrix::save(const std::filesystem::path& path) const {
  nlohmann::json header;
  header["n"] = n_;
  header["kind"] = to_string(kind_);
  header["layout"] = dense_ ? "dense" : "sparse";
  header["symmetric"] = symmetric_;
  header["truncation_k"] = truncation_k_ ? nlohmann::json(*truncation_k_) : nlohmann::json(nullptr);

  std::vector<std::byte> payload;
  auto append = [&](const auto& vec) {
    const auto bytes = io::as_bytes_of(vec);
    payload.insert(payload.end(), bytes.begin(), bytes.end());
  };
  if (dense_) {
    append(values_);
  } else {
    header["nnz"] = values_.size();
    append(row_ptr_);
    append(cols_);
    append(values_);
  }
  io::write_artifact(path, std::move(header), payload);
}

SimilarityMatrix SimilarityMatrix::load(const std::filesystem::path& path) {
  const auto art = io::read_artifact(path);
  const auto& h = art.header;
  const auto n = h.at("n").get<std::size_t>();
  const auto kind = similarity_kind_from_string(h.at("kind").get<std::string>());
  std::size_t offset = 0;
  auto take = [&]<typename T>(std::vector<T>& out, std::size_t count) {
    const std::size_t bytes = count * sizeof(T);
    if (offset + bytes > art.payload.size()) throw IoError("similarity artifact truncated");
    out.resize(count);
    std::memcpy(out.data(), art.payload.data() + offset, bytes);
    offset += bytes;
  };
  if (h.at("layout").get<std::string>() == "dense") {
    std::vector<double> values;
    take(values, n * n);
    return dense(n, kind, std::move(values));
  }
  const auto nnz = h.at("nnz").get<std::size_t>();
  std::vector<std::uint64_t> row_ptr;
  std::vector<ItemIndex> cols;
  std::vector<double> values;
  take(row_ptr, n + 1);
  take(cols, nnz);
  take(values, nnz);
  std::optional<std::size_t> k;
  if (!h.at("truncation_k").is_null()) k = h.at("truncation_k").get<std::size_t>();
  return sparse(n, kind, std::move(row_ptr), std::move(cols), std::move(values),
                h.at("symmetric").get<bool>(), k);
}

}  // namespace star
