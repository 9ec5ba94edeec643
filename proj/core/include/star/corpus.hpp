#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace star {

using ItemIndex = std::uint32_t;
using UserIndex = std::uint32_t;

struct RawReview {
  std::string user_id;
  std::string item_id;
  int rating = 0;
  std::int64_t timestamp = 0;
  std::size_t source_line = 0;  // 0-based line number in the input stream
};

struct ParsedReviews {
  std::vector<RawReview> records;
  std::size_t skipped = 0;
};

struct ItemMeta {
  std::string item_id;
  std::optional<std::string> title;
  std::optional<std::string> description;
  std::vector<std::vector<std::string>> categories;
  std::map<std::string, std::int64_t> sales_rank;
  std::optional<double> price;
  std::optional<std::string> brand;

  /// Neither title nor description present.
  bool metadata_poor() const { return !title && !description; }
  bool empty() const {
    return metadata_poor() && categories.empty() && sales_rank.empty() && !price && !brand;
  }
};

struct ParsedMetadata {
  std::vector<ItemMeta> records;
  std::size_t skipped = 0;
  std::size_t metadata_poor = 0;
};

/// Parses review JSON-lines (`reviewerID`, `asin`, `overall`,
/// `unixReviewTime`). Malformed lines are skipped and counted.
ParsedReviews parse_reviews(std::string_view text);

/// Parses metadata lines. Accepts strict JSON and the Python-literal dialect
/// the 2014 Amazon metadata dumps use (single quotes, True/False/None).
ParsedMetadata parse_metadata(std::string_view text);

enum class KCoreMode { fixpoint, single_pass };

/// Removes users and items with fewer than `k` interactions. `fixpoint`
/// iterates until stable; `single_pass` drops users once, then items once.
/// Throws EmptyDatasetError when nothing survives.
std::vector<RawReview> kcore_filter(std::span<const RawReview> reviews, int k,
                                    KCoreMode mode = KCoreMode::fixpoint);

/// String id <-> dense index bijection. Indices follow sorted id order.
class IdMap {
 public:
  IdMap() = default;
  explicit IdMap(std::vector<std::string> ids);

  std::size_t size() const { return ids_.size(); }
  const std::string& id(std::uint32_t index) const { return ids_.at(index); }
  std::optional<std::uint32_t> find(std::string_view id) const;
  std::uint32_t index(std::string_view id) const;  // throws on unknown id
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::uint32_t> lookup_;
};

struct SequenceEvent {
  ItemIndex item = 0;
  int rating = 0;
  std::int64_t timestamp = 0;
};

struct UserSequence {
  UserIndex user = 0;
  std::vector<SequenceEvent> events;
};

struct IndexedSequences {
  IdMap users;
  IdMap items;
  std::vector<UserSequence> sequences;  // sequences[u].user == u
};

/// Groups reviews per user, orders by timestamp with ties broken by
/// source_line, and assigns dense indices.
IndexedSequences build_sequences(std::span<const RawReview> reviews);

/// Leave-one-out split. Each user's full sequence is kept; the last event
/// is the test target, the one before it validation, the rest training.
class SplitDataset {
 public:
  SplitDataset() = default;
  SplitDataset(IdMap users, IdMap items, std::vector<UserSequence> sequences,
               std::vector<ItemMeta> catalog = {});

  const IdMap& users() const { return users_; }
  const IdMap& items() const { return items_; }
  std::size_t user_count() const { return sequences_.size(); }
  std::size_t item_count() const { return items_.size(); }

  const UserSequence& sequence(UserIndex u) const { return sequences_.at(u); }
  const std::vector<UserSequence>& sequences() const { return sequences_; }

  std::span<const SequenceEvent> train(UserIndex u) const;
  const SequenceEvent& validation(UserIndex u) const;
  const SequenceEvent& test(UserIndex u) const;
  /// Train + validation: the input used when predicting the test item.
  std::span<const SequenceEvent> test_input(UserIndex u) const;

  /// Metadata aligned to item indices; empty entries for unknown items.
  const std::vector<ItemMeta>& catalog() const { return catalog_; }
  void set_catalog(std::vector<ItemMeta> catalog);

 private:
  IdMap users_;
  IdMap items_;
  std::vector<UserSequence> sequences_;
  std::vector<ItemMeta> catalog_;
};

struct SplitResult {
  SplitDataset dataset;
  std::vector<std::string> rejected_users;  // sequences shorter than 3
};

SplitResult leave_one_out_split(IndexedSequences sequences);

struct DatasetStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;
  double density_percent = 0.0;
};

/// interactions / (users * items), as a percentage; 0 for an empty grid.
double density_percent(std::size_t interactions, std::size_t users, std::size_t items);

DatasetStats dataset_stats(const SplitDataset& data);

/// Aligns parsed metadata to the dataset's item index.
std::vector<ItemMeta> align_catalog(const IdMap& items, std::span<const ItemMeta> metadata);

/// Writes train/val/test.jsonl, ids.json, stats.json and items.jsonl.
void save_dataset(const SplitDataset& data, const std::filesystem::path& dir);

/// Throws MissingArtifactError when the directory was never prepared.
SplitDataset load_dataset(const std::filesystem::path& dir);

}  // namespace star
