#include "star/collab.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "star/error.hpp"
#include "star/io.hpp"

namespace star {

SparseInteractionMatrix::SparseInteractionMatrix(std::size_t n_items, std::size_t m_users,
                                                 std::vector<std::vector<UserIndex>> rows)
    : m_users_(m_users), rows_(std::move(rows)) {
  if (rows_.size() != n_items) throw Error("interaction matrix row count mismatch");
  for (const auto& row : rows_) {
    for (std::size_t p = 0; p < row.size(); ++p) {
      if (row[p] >= m_users_ || (p > 0 && row[p] <= row[p - 1])) {
        throw Error("interaction rows must hold strictly increasing, in-range user indices");
      }
    }
  }
}

void SparseInteractionMatrix::save(const std::filesystem::path& path) const {
  std::vector<std::uint64_t> row_ptr{0};
  std::vector<UserIndex> users;
  for (const auto& row : rows_) {
    users.insert(users.end(), row.begin(), row.end());
    row_ptr.push_back(users.size());
  }
  nlohmann::json header;
  header["kind"] = "incidence";
  header["n_items"] = rows_.size();
  header["m_users"] = m_users_;
  header["nnz"] = users.size();
  std::vector<std::byte> payload;
  for (auto bytes : {io::as_bytes_of(row_ptr), io::as_bytes_of(users)}) {
    payload.insert(payload.end(), bytes.begin(), bytes.end());
  }
  io::write_artifact(path, std::move(header), payload);
}

SparseInteractionMatrix SparseInteractionMatrix::load(const std::filesystem::path& path) {
  const auto art = io::read_artifact(path);
  const auto n = art.header.at("n_items").get<std::size_t>();
  const auto m = art.header.at("m_users").get<std::size_t>();
  const auto nnz = art.header.at("nnz").get<std::size_t>();
  const std::size_t ptr_bytes = (n + 1) * sizeof(std::uint64_t);
  if (art.payload.size() != ptr_bytes + nnz * sizeof(UserIndex)) {
    throw IoError("incidence artifact size mismatch in '" + path.string() + "'");
  }
  std::vector<std::uint64_t> row_ptr(n + 1);
  std::memcpy(row_ptr.data(), art.payload.data(), ptr_bytes);
  std::vector<UserIndex> users(nnz);
  std::memcpy(users.data(), art.payload.data() + ptr_bytes, nnz * sizeof(UserIndex));
  std::vector<std::vector<UserIndex>> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (row_ptr[i] > row_ptr[i + 1] || row_ptr[i + 1] > nnz) {
      throw IoError("corrupt incidence row pointers in '" + path.string() + "'");
    }
    rows[i].assign(users.begin() + static_cast<std::ptrdiff_t>(row_ptr[i]),
                   users.begin() + static_cast<std::ptrdiff_t>(row_ptr[i + 1]));
  }
  return SparseInteractionMatrix(n, m, std::move(rows));
}

SparseInteractionMatrix build_interaction_matrix(const SplitDataset& data, CountSplit split) {
  std::vector<std::vector<UserIndex>> rows(data.item_count());
  for (UserIndex u = 0; u < data.user_count(); ++u) {
    for (const auto& e : data.train(u)) rows[e.item].push_back(u);
    if (split == CountSplit::train_and_validation) rows[data.validation(u).item].push_back(u);
  }
  for (auto& row : rows) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  return SparseInteractionMatrix(data.item_count(), data.user_count(), std::move(rows));
}

SimilarityMatrix collaborative_similarity(const SparseInteractionMatrix& incidence) {
  const std::size_t n = incidence.n_items();
  std::vector<std::vector<ItemIndex>> items_of(incidence.m_users());
  for (ItemIndex i = 0; i < n; ++i) {
    for (UserIndex u : incidence.users_of(i)) items_of[u].push_back(i);
  }

  std::vector<std::uint64_t> row_ptr{0};
  std::vector<ItemIndex> cols;
  std::vector<double> vals;
  std::vector<std::uint32_t> co(n, 0);
  std::vector<ItemIndex> touched;
  for (ItemIndex i = 0; i < n; ++i) {
    const auto users = incidence.users_of(i);
    for (UserIndex u : users) {
      for (ItemIndex j : items_of[u]) {
        if (co[j]++ == 0) touched.push_back(j);
      }
    }
    std::sort(touched.begin(), touched.end());
    const auto pop_i = static_cast<double>(users.size());
    for (ItemIndex j : touched) {
      const auto pop_j = static_cast<double>(incidence.users_of(j).size());
      cols.push_back(j);
      vals.push_back(std::min(1.0, co[j] / std::sqrt(pop_i * pop_j)));
      co[j] = 0;
    }
    touched.clear();
    row_ptr.push_back(cols.size());
  }
  return SimilarityMatrix::sparse(n, SimilarityKind::collaborative, std::move(row_ptr),
                                  std::move(cols), std::move(vals), /*symmetric=*/true);
}

std::size_t InteractionCounts::popularity(ItemIndex item) const {
  if (item >= incidence_->n_items()) throw Error("popularity: item index out of range");
  return incidence_->users_of(item).size();
}

std::size_t InteractionCounts::co_count(ItemIndex a, ItemIndex b) const {
  if (a >= incidence_->n_items() || b >= incidence_->n_items()) {
    throw Error("co_count: item index out of range");
  }
  const auto ua = incidence_->users_of(a);
  const auto ub = incidence_->users_of(b);
  std::size_t count = 0;
  auto i = ua.begin();
  auto j = ub.begin();
  while (i != ua.end() && j != ub.end()) {
    if (*i < *j) ++i;
    else if (*j < *i) ++j;
    else {
      ++count;
      ++i;
      ++j;
    }
  }
  return count;
}

}  // namespace star
