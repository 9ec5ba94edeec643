#include "star/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "star/error.hpp"
#include "star/io.hpp"

namespace star {

using nlohmann::json;

namespace {

std::optional<std::string> non_empty_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) return std::nullopt;
  auto s = it->get<std::string>();
  if (s.empty()) return std::nullopt;
  return s;
}

std::optional<RawReview> review_from_json(const json& obj) {
  if (!obj.is_object()) return std::nullopt;
  auto user = non_empty_string(obj, "reviewerID");
  auto item = non_empty_string(obj, "asin");
  if (!user || !item) return std::nullopt;

  auto rating_it = obj.find("overall");
  if (rating_it == obj.end() || !rating_it->is_number()) return std::nullopt;
  const double rating = rating_it->get<double>();
  if (rating != std::floor(rating) || rating < 1.0 || rating > 5.0) return std::nullopt;

  auto ts_it = obj.find("unixReviewTime");
  if (ts_it == obj.end() || !ts_it->is_number_integer()) return std::nullopt;

  RawReview r;
  r.user_id = std::move(*user);
  r.item_id = std::move(*item);
  r.rating = static_cast<int>(rating);
  r.timestamp = ts_it->get<std::int64_t>();
  return r;
}

// Rewrites one Python-literal dict line (as produced by `str(dict)`) into
// JSON. Only the constructs present in the Amazon dumps are handled.
std::optional<std::string> python_literal_to_json(std::string_view in) {
  std::string out;
  out.reserve(in.size() + 16);
  std::size_t i = 0;
  while (i < in.size()) {
    const char c = in[i];
    if (c == '\'' || c == '"') {
      const char quote = c;
      out.push_back('"');
      ++i;
      bool closed = false;
      while (i < in.size()) {
        const char d = in[i];
        if (d == '\\' && i + 1 < in.size()) {
          const char e = in[i + 1];
          if (e == '\'') {
            out.push_back('\'');
          } else if (e == 'x' && i + 3 < in.size()) {
            out += "\\u00";
            out.push_back(in[i + 2]);
            out.push_back(in[i + 3]);
            i += 2;
          } else {
            out.push_back('\\');
            out.push_back(e);
          }
          i += 2;
          continue;
        }
        if (d == quote) {
          closed = true;
          ++i;
          break;
        }
        if (d == '"') {
          out += "\\\"";
        } else {
          out.push_back(d);
        }
        ++i;
      }
      if (!closed) return std::nullopt;
      out.push_back('"');
      continue;
    }
    auto word_at = [&](std::string_view w) { return in.substr(i, w.size()) == w; };
    if (word_at("True")) {
      out += "true";
      i += 4;
    } else if (word_at("False")) {
      out += "false";
      i += 5;
    } else if (word_at("None")) {
      out += "null";
      i += 4;
    } else {
      out.push_back(c);
      ++i;
    }
  }
  return out;
}

std::optional<json> parse_meta_line(std::string_view line) {
  json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (obj.is_discarded()) {
    auto converted = python_literal_to_json(line);
    if (!converted) return std::nullopt;
    obj = json::parse(*converted, nullptr, false);
    if (obj.is_discarded()) return std::nullopt;
  }
  if (!obj.is_object()) return std::nullopt;
  return obj;
}

std::optional<ItemMeta> meta_from_json(const json& obj) {
  auto id = non_empty_string(obj, "asin");
  if (!id) return std::nullopt;
  ItemMeta m;
  m.item_id = std::move(*id);
  m.title = non_empty_string(obj, "title");
  m.description = non_empty_string(obj, "description");
  m.brand = non_empty_string(obj, "brand");

  if (auto it = obj.find("categories"); it != obj.end() && it->is_array()) {
    for (const auto& path : *it) {
      if (!path.is_array()) continue;
      std::vector<std::string> flat;
      for (const auto& node : path) {
        if (node.is_string()) flat.push_back(node.get<std::string>());
      }
      if (!flat.empty()) m.categories.push_back(std::move(flat));
    }
  }
  if (auto it = obj.find("salesRank"); it != obj.end() && it->is_object()) {
    for (const auto& [cat, rank] : it->items()) {
      if (rank.is_number_integer()) m.sales_rank[cat] = rank.get<std::int64_t>();
    }
  }
  if (auto it = obj.find("price"); it != obj.end() && it->is_number()) {
    m.price = it->get<double>();
  }
  return m;
}

}  // namespace

ParsedReviews parse_reviews(std::string_view text) {
  ParsedReviews out;
  const auto lines = io::split_lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const auto line = lines[n];
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    const json obj = json::parse(line, nullptr, false);
    auto review = obj.is_discarded() ? std::nullopt : review_from_json(obj);
    if (!review) {
      ++out.skipped;
      spdlog::warn("reviews: skipping malformed line {}", n + 1);
      continue;
    }
    review->source_line = n;
    out.records.push_back(std::move(*review));
  }
  return out;
}

ParsedMetadata parse_metadata(std::string_view text) {
  ParsedMetadata out;
  const auto lines = io::split_lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const auto line = lines[n];
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    auto obj = parse_meta_line(line);
    auto meta = obj ? meta_from_json(*obj) : std::nullopt;
    if (!meta) {
      ++out.skipped;
      spdlog::warn("metadata: skipping malformed line {}", n + 1);
      continue;
    }
    if (meta->metadata_poor()) ++out.metadata_poor;
    out.records.push_back(std::move(*meta));
  }
  return out;
}

std::vector<RawReview> kcore_filter(std::span<const RawReview> reviews, int k, KCoreMode mode) {
  if (k < 1) throw ConfigError("k-core threshold must be >= 1");

  std::vector<bool> alive(reviews.size(), true);
  auto count_by = [&](auto key) {
    std::unordered_map<std::string_view, std::size_t> counts;
    for (std::size_t i = 0; i < reviews.size(); ++i) {
      if (alive[i]) ++counts[key(reviews[i])];
    }
    return counts;
  };
  auto drop_below = [&](auto key) {
    const auto counts = count_by(key);
    bool changed = false;
    for (std::size_t i = 0; i < reviews.size(); ++i) {
      if (alive[i] && counts.at(key(reviews[i])) < static_cast<std::size_t>(k)) {
        alive[i] = false;
        changed = true;
      }
    }
    return changed;
  };
  const auto by_user = [](const RawReview& r) -> std::string_view { return r.user_id; };
  const auto by_item = [](const RawReview& r) -> std::string_view { return r.item_id; };

  if (mode == KCoreMode::single_pass) {
    drop_below(by_user);
    drop_below(by_item);
  } else {
    bool changed = true;
    while (changed) {
      const bool users_changed = drop_below(by_user);
      const bool items_changed = drop_below(by_item);
      changed = users_changed || items_changed;
    }
  }

  std::vector<RawReview> kept;
  for (std::size_t i = 0; i < reviews.size(); ++i) {
    if (alive[i]) kept.push_back(reviews[i]);
  }
  if (kept.empty()) {
    throw EmptyDatasetError("k-core filtering (k=" + std::to_string(k) +
                            ") removed every interaction");
  }
  return kept;
}

IdMap::IdMap(std::vector<std::string> ids) : ids_(std::move(ids)) {
  lookup_.reserve(ids_.size());
  for (std::uint32_t i = 0; i < ids_.size(); ++i) {
    if (!lookup_.emplace(ids_[i], i).second) {
      throw Error("duplicate id in index map: '" + ids_[i] + "'");
    }
  }
}

std::optional<std::uint32_t> IdMap::find(std::string_view id) const {
  auto it = lookup_.find(std::string(id));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t IdMap::index(std::string_view id) const {
  auto idx = find(id);
  if (!idx) throw Error("unknown id '" + std::string(id) + "'");
  return *idx;
}

IndexedSequences build_sequences(std::span<const RawReview> reviews) {
  std::set<std::string> user_ids;
  std::set<std::string> item_ids;
  for (const auto& r : reviews) {
    user_ids.insert(r.user_id);
    item_ids.insert(r.item_id);
  }
  IndexedSequences out{IdMap({user_ids.begin(), user_ids.end()}),
                       IdMap({item_ids.begin(), item_ids.end()}),
                       {}};

  std::vector<std::vector<const RawReview*>> grouped(out.users.size());
  for (const auto& r : reviews) grouped[out.users.index(r.user_id)].push_back(&r);

  out.sequences.resize(grouped.size());
  for (UserIndex u = 0; u < grouped.size(); ++u) {
    auto& group = grouped[u];
    std::sort(group.begin(), group.end(), [](const RawReview* a, const RawReview* b) {
      if (a->timestamp != b->timestamp) return a->timestamp < b->timestamp;
      return a->source_line < b->source_line;
    });
    auto& seq = out.sequences[u];
    seq.user = u;
    seq.events.reserve(group.size());
    for (const RawReview* r : group) {
      seq.events.push_back({out.items.index(r->item_id), r->rating, r->timestamp});
    }
  }
  return out;
}

SplitDataset::SplitDataset(IdMap users, IdMap items, std::vector<UserSequence> sequences,
                           std::vector<ItemMeta> catalog)
    : users_(std::move(users)), items_(std::move(items)), sequences_(std::move(sequences)) {
  if (users_.size() != sequences_.size()) {
    throw Error("user map and sequence count disagree");
  }
  for (UserIndex u = 0; u < sequences_.size(); ++u) {
    const auto& seq = sequences_[u];
    if (seq.user != u) throw Error("sequence user index out of order");
    if (seq.events.size() < 3) {
      throw Error("user '" + users_.id(u) + "' has fewer than 3 events");
    }
    for (const auto& e : seq.events) {
      if (e.item >= items_.size()) throw Error("sequence references unknown item index");
    }
  }
  set_catalog(std::move(catalog));
}

void SplitDataset::set_catalog(std::vector<ItemMeta> catalog) {
  if (!catalog.empty() && catalog.size() != items_.size()) {
    throw Error("catalog size does not match item count");
  }
  if (catalog.empty()) {
    catalog.resize(items_.size());
    for (ItemIndex i = 0; i < items_.size(); ++i) catalog[i].item_id = items_.id(i);
  }
  catalog_ = std::move(catalog);
}

std::span<const SequenceEvent> SplitDataset::train(UserIndex u) const {
  const auto& ev = sequences_.at(u).events;
  return {ev.data(), ev.size() - 2};
}

const SequenceEvent& SplitDataset::validation(UserIndex u) const {
  const auto& ev = sequences_.at(u).events;
  return ev[ev.size() - 2];
}

const SequenceEvent& SplitDataset::test(UserIndex u) const { return sequences_.at(u).events.back(); }

std::span<const SequenceEvent> SplitDataset::test_input(UserIndex u) const {
  const auto& ev = sequences_.at(u).events;
  return {ev.data(), ev.size() - 1};
}

SplitResult leave_one_out_split(IndexedSequences in) {
  SplitResult out;
  std::vector<std::string> kept_ids;
  std::vector<UserSequence> kept;
  for (auto& seq : in.sequences) {
    const std::string& id = in.users.id(seq.user);
    if (seq.events.size() < 3) {
      spdlog::warn("split: dropping user '{}' with only {} events", id, seq.events.size());
      out.rejected_users.push_back(id);
      continue;
    }
    seq.user = static_cast<UserIndex>(kept.size());
    kept_ids.push_back(id);
    kept.push_back(std::move(seq));
  }
  out.dataset = SplitDataset(IdMap(std::move(kept_ids)), std::move(in.items), std::move(kept));
  return out;
}

double density_percent(std::size_t interactions, std::size_t users, std::size_t items) {
  if (users == 0 || items == 0) return 0.0;
  return 100.0 * static_cast<double>(interactions) /
         (static_cast<double>(users) * static_cast<double>(items));
}

DatasetStats dataset_stats(const SplitDataset& data) {
  DatasetStats s;
  s.users = data.user_count();
  s.items = data.item_count();
  for (const auto& seq : data.sequences()) s.interactions += seq.events.size();
  s.density_percent = density_percent(s.interactions, s.users, s.items);
  return s;
}

std::vector<ItemMeta> align_catalog(const IdMap& items, std::span<const ItemMeta> metadata) {
  std::vector<ItemMeta> catalog(items.size());
  std::vector<bool> seen(items.size(), false);
  for (ItemIndex i = 0; i < items.size(); ++i) catalog[i].item_id = items.id(i);
  for (const auto& m : metadata) {
    auto idx = items.find(m.item_id);
    if (!idx || seen[*idx]) continue;
    catalog[*idx] = m;
    seen[*idx] = true;
  }
  const auto missing = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), false));
  if (missing > 0) spdlog::warn("catalog: {} items have no metadata record", missing);
  return catalog;
}

namespace {

json meta_to_json(const ItemMeta& m) {
  json j;
  j["asin"] = m.item_id;
  if (m.title) j["title"] = *m.title;
  if (m.description) j["description"] = *m.description;
  if (!m.categories.empty()) j["categories"] = m.categories;
  if (!m.sales_rank.empty()) j["salesRank"] = m.sales_rank;
  if (m.price) j["price"] = *m.price;
  if (m.brand) j["brand"] = *m.brand;
  return j;
}

void append_event(std::string& out, UserIndex u, const SequenceEvent& e, std::size_t pos) {
  json rec;
  rec["user"] = u;
  rec["item"] = e.item;
  rec["rating"] = e.rating;
  rec["ts"] = e.timestamp;
  rec["pos"] = pos;
  out += rec.dump();
  out += '\n';
}

}  // namespace

void save_dataset(const SplitDataset& data, const std::filesystem::path& dir) {
  std::string train;
  std::string val;
  std::string test;
  for (const auto& seq : data.sequences()) {
    const std::size_t n = seq.events.size();
    for (std::size_t p = 0; p + 2 < n; ++p) append_event(train, seq.user, seq.events[p], p);
    append_event(val, seq.user, seq.events[n - 2], n - 2);
    append_event(test, seq.user, seq.events[n - 1], n - 1);
  }
  io::write_file(dir / "train.jsonl", train);
  io::write_file(dir / "val.jsonl", val);
  io::write_file(dir / "test.jsonl", test);

  json ids;
  ids["users"] = data.users().ids();
  ids["items"] = data.items().ids();
  io::write_file(dir / "ids.json", ids.dump());

  const auto s = dataset_stats(data);
  json stats;
  stats["users"] = s.users;
  stats["items"] = s.items;
  stats["interactions"] = s.interactions;
  stats["density_percent"] = s.density_percent;
  io::write_file(dir / "stats.json", stats.dump(2) + "\n");

  std::string items;
  for (const auto& m : data.catalog()) {
    items += meta_to_json(m).dump();
    items += '\n';
  }
  io::write_file(dir / "items.jsonl", items);
}

SplitDataset load_dataset(const std::filesystem::path& dir) {
  for (const char* name : {"ids.json", "train.jsonl", "val.jsonl", "test.jsonl"}) {
    if (!std::filesystem::exists(dir / name)) {
      throw MissingArtifactError((dir / name).string(), "prepare");
    }
  }
  const json ids = json::parse(io::read_file(dir / "ids.json"));
  IdMap users(ids.at("users").get<std::vector<std::string>>());
  IdMap items(ids.at("items").get<std::vector<std::string>>());

  std::vector<UserSequence> seqs(users.size());
  for (UserIndex u = 0; u < seqs.size(); ++u) seqs[u].user = u;
  for (const char* name : {"train.jsonl", "val.jsonl", "test.jsonl"}) {
    const std::string text = io::read_file(dir / name);
    for (const auto line : io::split_lines(text)) {
      if (line.empty()) continue;
      const json rec = json::parse(line);
      const auto u = rec.at("user").get<UserIndex>();
      const auto pos = rec.at("pos").get<std::size_t>();
      auto& ev = seqs.at(u).events;
      if (ev.size() <= pos) ev.resize(pos + 1);
      ev[pos] = {rec.at("item").get<ItemIndex>(), rec.at("rating").get<int>(),
                 rec.at("ts").get<std::int64_t>()};
    }
  }

  std::vector<ItemMeta> catalog;
  if (std::filesystem::exists(dir / "items.jsonl")) {
    auto parsed = parse_metadata(io::read_file(dir / "items.jsonl"));
    catalog = align_catalog(items, parsed.records);
  }
  return SplitDataset(std::move(users), std::move(items), std::move(seqs), std::move(catalog));
}

}  // namespace star
