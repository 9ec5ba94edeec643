#include "star/rank.hpp"

#include <algorithm>
#include <numeric>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>

#include "star/error.hpp"
#include "star/io.hpp"

namespace star {

using nlohmann::json;

std::string to_string(ChatMessage::Role role) {
  switch (role) {
    case ChatMessage::Role::system: return "system";
    case ChatMessage::Role::user: return "user";
    case ChatMessage::Role::assistant: return "assistant";
  }
  return "user";
}

std::string to_string(RankStrategy::Kind kind) {
  switch (kind) {
    case RankStrategy::Kind::selection: return "selection";
    case RankStrategy::Kind::point_wise: return "point";
    case RankStrategy::Kind::window: return "window";
  }
  return "window";
}

RankStrategy::Kind rank_kind_from_string(const std::string& s) {
  if (s == "selection") return RankStrategy::Kind::selection;
  if (s == "point" || s == "point_wise") return RankStrategy::Kind::point_wise;
  if (s == "window" || s == "list" || s == "pair") return RankStrategy::Kind::window;
  throw ConfigError("unknown ranking strategy '" + s + "'");
}

std::string to_string(RankTask task) {
  switch (task) {
    case RankTask::window: return "window";
    case RankTask::point: return "point";
    case RankTask::selection: return "selection";
  }
  return "window";
}

void RankStrategy::validate(std::size_t k) const {
  if (passes == 0) throw ConfigError("ranking: passes must be >= 1");
  switch (kind) {
    case Kind::window:
      if (w < 2) throw ConfigError("ranking: window size must be >= 2");
      if (d < 1) throw ConfigError("ranking: stride must be >= 1");
      if (w > k) {
        throw ConfigError("ranking: window size " + std::to_string(w) + " exceeds the " +
                          std::to_string(k) + " retrieved candidates");
      }
      break;
    case Kind::selection:
      if (k_out == 0 || k_out > k) {
        throw ConfigError("ranking: selection count must lie in [1, " + std::to_string(k) + "]");
      }
      break;
    case Kind::point_wise:
      break;
  }
}

namespace {

constexpr std::string_view kSystemPrompt =
    "You are an intelligent assistant that can rank items based on the user's preference.";

const ItemMeta& meta_of(const RankContext& ctx, ItemIndex item) {
  if (ctx.catalog == nullptr || item >= ctx.catalog->size()) {
    throw Error("ranking: no catalog entry for item " + std::to_string(item));
  }
  return (*ctx.catalog)[item];
}

const InteractionCounts& counts_of(const RankContext& ctx) {
  if (ctx.counts == nullptr) throw Error("ranking: prompt flags need interaction counts");
  return *ctx.counts;
}

std::string popularity_key() { return "Number of users who interacted with this item"; }

std::string co_occurrence_key(ItemIndex history_item) {
  return "Number of users who interacted with both this item and Item ID " +
         std::to_string(history_item);
}

std::string history_block(const RankContext& ctx, const PromptInfoFlags& flags) {
  std::string out;
  for (std::size_t i = 0; i < ctx.history.size(); ++i) {
    const ItemIndex item = ctx.history[i];
    std::vector<std::pair<std::string, std::size_t>> counts;
    if (flags.include_popularity) counts.emplace_back(popularity_key(), counts_of(ctx).popularity(item));
    if (i > 0) out += ",\n";
    out += render_item_json(meta_of(ctx, item), item, counts);
  }
  return out;
}

std::string candidate_block(const RankContext& ctx, ItemIndex item, const PromptInfoFlags& flags) {
  std::vector<std::pair<std::string, std::size_t>> counts;
  if (flags.include_popularity) counts.emplace_back(popularity_key(), counts_of(ctx).popularity(item));
  if (flags.include_co_occurrence) {
    for (ItemIndex h : ctx.history) counts.emplace_back(co_occurrence_key(h), counts_of(ctx).co_count(item, h));
  }
  return render_item_json(meta_of(ctx, item), std::nullopt, counts);
}

std::string history_turn(const RankContext& ctx, const PromptInfoFlags& flags, std::string_view tail) {
  std::string text = "User " + std::to_string(ctx.user) +
                     " has purchased the following items in this order:\n\n";
  text += history_block(ctx, flags);
  text += "\n";
  text += tail;
  return text;
}

void append_candidates(std::vector<ChatMessage>& msgs, const RankContext& ctx,
                       std::span<const ItemIndex> items, const PromptInfoFlags& flags) {
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string id = "[" + std::to_string(i + 1) + "]";
    msgs.push_back({ChatMessage::Role::user, id + "\n" + candidate_block(ctx, items[i], flags)});
    msgs.push_back({ChatMessage::Role::assistant, "Received item " + id + "."});
  }
}

constexpr std::string_view kRankJsonFormat =
    "Output in the following JSON format:\n"
    "{\n"
    "    \"rank\": \"[] > [] .. > []\"\n"
    "}";

}  // namespace

std::string render_item_json(const ItemMeta& meta, std::optional<ItemIndex> item_id,
                             const std::vector<std::pair<std::string, std::size_t>>& counts) {
  std::vector<std::string> fields;
  auto field = [&](const std::string& key, const std::string& rendered) {
    fields.push_back("    " + json(key).dump() + ": " + rendered);
  };
  if (item_id) field("Item ID", std::to_string(*item_id));
  if (meta.title) field("title", json(*meta.title).dump());
  for (const auto& [cat, rank] : meta.sales_rank) field("salesRank_" + cat, std::to_string(rank));
  if (!meta.categories.empty()) {
    std::string cats = "[\n";
    for (std::size_t p = 0; p < meta.categories.size(); ++p) {
      cats += "        [";
      for (std::size_t i = 0; i < meta.categories[p].size(); ++i) {
        if (i > 0) cats += ", ";
        cats += json(meta.categories[p][i]).dump();
      }
      cats += p + 1 < meta.categories.size() ? "],\n" : "]\n";
    }
    cats += "    ]";
    field("categories", cats);
  }
  if (meta.price) field("price", json(*meta.price).dump());
  if (meta.brand) field("brand", json(*meta.brand).dump());
  for (const auto& [key, value] : counts) field(key, std::to_string(value));

  std::string out = "{\n";
  for (std::size_t i = 0; i < fields.size(); ++i) {
    out += fields[i];
    out += i + 1 < fields.size() ? ",\n" : "\n";
  }
  out += "}";
  return out;
}

std::vector<ChatMessage> build_rank_prompt(const RankContext& context,
                                           std::span<const ItemIndex> window,
                                           const PromptInfoFlags& flags) {
  const std::string n = std::to_string(window.size());
  std::vector<ChatMessage> msgs;
  msgs.push_back({ChatMessage::Role::system, std::string(kSystemPrompt)});
  msgs.push_back({ChatMessage::Role::user,
                  history_turn(context, flags,
                               "I will provide you with " + n +
                                   " items, each indicated by number identifier []. Analyze the "
                                   "user's purchase history to identify preferences and purchase "
                                   "patterns. Then, rank the candidate items based on their "
                                   "alignment with the user's preferences and other contextual "
                                   "factors.")});
  msgs.push_back({ChatMessage::Role::assistant, "Okay, please provide the items."});
  append_candidates(msgs, context, window, flags);
  msgs.push_back(
      {ChatMessage::Role::user,
       "Analyze the user's purchase history to identify user preferences and purchase patterns.\n"
       "Then, rank the " + n +
           " items above based on their alignment with the user's preferences and other "
           "contextual factors.\n"
           "All the items should be included and listed using identifiers, in descending order of "
           "the user's preference.\n"
           "The most preferred recommendation item should be listed first.\n"
           "The output format should be [] > [], where each [] is an identifier, e.g., [1] > [2].\n"
           "Only respond with the ranking results, do not say any word or explain.\n" +
           std::string(kRankJsonFormat)});
  return msgs;
}

std::vector<ChatMessage> build_selection_prompt(const RankContext& context,
                                                std::span<const ItemIndex> candidates,
                                                std::size_t k_out, const PromptInfoFlags& flags) {
  const std::string n = std::to_string(candidates.size());
  const std::string k = std::to_string(k_out);
  std::vector<ChatMessage> msgs;
  msgs.push_back({ChatMessage::Role::system, std::string(kSystemPrompt)});
  msgs.push_back({ChatMessage::Role::user,
                  history_turn(context, flags,
                               "I will provide you with " + n +
                                   " items, each indicated by number identifier []. Analyze the "
                                   "user's purchase history to identify preferences and purchase "
                                   "patterns. Then, select the candidate items that best align "
                                   "with the user's preferences and other contextual factors.")});
  msgs.push_back({ChatMessage::Role::assistant, "Okay, please provide the items."});
  append_candidates(msgs, context, candidates, flags);
  msgs.push_back(
      {ChatMessage::Role::user,
       "Analyze the user's purchase history to identify user preferences and purchase patterns.\n"
       "Then, select the " + k + " items from the " + n +
           " items above that the user is most likely to purchase next.\n"
           "List exactly " + k +
           " distinct identifiers, in descending order of the user's preference.\n"
           "The most preferred recommendation item should be listed first.\n"
           "The output format should be [] > [], where each [] is an identifier, e.g., [1] > [2].\n"
           "Only respond with the ranking results, do not say any word or explain.\n" +
           std::string(kRankJsonFormat)});
  return msgs;
}

std::vector<ChatMessage> build_point_prompt(const RankContext& context, ItemIndex candidate,
                                            const PromptInfoFlags& flags) {
  std::vector<ChatMessage> msgs;
  msgs.push_back({ChatMessage::Role::system, std::string(kSystemPrompt)});
  msgs.push_back({ChatMessage::Role::user,
                  history_turn(context, flags,
                               "I will provide you with 1 item, indicated by number identifier "
                               "[]. Analyze the user's purchase history to identify preferences "
                               "and purchase patterns. Then, judge how well the candidate item "
                               "aligns with the user's preferences and other contextual factors.")});
  msgs.push_back({ChatMessage::Role::assistant, "Okay, please provide the item."});
  const ItemIndex one[] = {candidate};
  append_candidates(msgs, context, one, flags);
  msgs.push_back({ChatMessage::Role::user,
                  "On a scale from 0 to 10, how likely is the user to purchase item [1] next?\n"
                  "0 means the user will certainly not purchase it, 10 means the user will "
                  "certainly purchase it.\n"
                  "Only respond with an integer score, do not say any word or explain.\n"
                  "Output in the following JSON format:\n"
                  "{\n"
                  "    \"score\": 0\n"
                  "}"});
  return msgs;
}

std::string prompt_hash(std::span<const ChatMessage> messages) {
  std::string flat;
  for (const auto& m : messages) {
    flat += to_string(m.role);
    flat += '\x1f';
    flat += m.content;
    flat += '\x1e';
  }
  return io::sha256_hex(flat);
}

namespace {

// Pulls the value of a top-level string/number field out of the first JSON
// object in `text`, falling back to a regex when the object is malformed.
std::optional<json> find_field(std::string_view text, const std::string& key) {
  const auto open = text.find('{');
  const auto close = text.rfind('}');
  if (open != std::string_view::npos && close != std::string_view::npos && close > open) {
    const json obj = json::parse(text.substr(open, close - open + 1), nullptr, false);
    if (!obj.is_discarded() && obj.is_object() && obj.contains(key)) return std::optional<json>(std::in_place, obj.at(key));
  }
  const std::regex loose("\"" + key + "\"\\s*:\\s*(\"([^\"]*)\"|-?\\d+)");
  std::match_results<std::string_view::const_iterator> m;
  if (std::regex_search(text.begin(), text.end(), m, loose)) {
    if (m[2].matched) return std::optional<json>(std::in_place, m[2].str());
    return std::optional<json>(std::in_place, std::stoll(m[1].str()));
  }
  return std::nullopt;
}

}  // namespace

RankParse parse_rank_response(std::string_view text, std::size_t window,
                              std::optional<std::size_t> expected_count) {
  const std::size_t expected = expected_count.value_or(window);
  std::string body(text);
  if (auto rank = find_field(text, "rank")) {
    if (!rank->is_string()) return ParseFailure{"\"rank\" is not a string"};
    body = rank->get<std::string>();
  }

  static const std::regex id_re(R"(\[\s*(\d+)\s*\])");
  std::vector<std::size_t> ids;
  std::set<std::size_t> seen;
  for (auto it = std::sregex_iterator(body.begin(), body.end(), id_re); it != std::sregex_iterator();
       ++it) {
    const std::string digits = (*it)[1].str();
    if (digits.size() > 9) return ParseFailure{"identifier out of range: " + digits};
    const auto id = static_cast<std::size_t>(std::stoul(digits));
    if (id < 1 || id > window) {
      return ParseFailure{"identifier [" + digits + "] outside [1, " + std::to_string(window) + "]"};
    }
    if (!seen.insert(id).second) return ParseFailure{"duplicate identifier [" + digits + "]"};
    ids.push_back(id);
  }
  if (ids.empty()) return ParseFailure{"no identifiers found"};
  if (ids.size() != expected) {
    return ParseFailure{"expected " + std::to_string(expected) + " identifiers, got " +
                        std::to_string(ids.size())};
  }
  return ids;
}

std::variant<int, ParseFailure> parse_point_response(std::string_view text) {
  long long value = 0;
  if (auto score = find_field(text, "score")) {
    if (score->is_number_integer()) {
      value = score->get<long long>();
    } else if (score->is_string()) {
      try {
        value = std::stoll(score->get<std::string>());
      } catch (const std::exception&) {
        return ParseFailure{"\"score\" is not an integer"};
      }
    } else {
      return ParseFailure{"\"score\" is not an integer"};
    }
  } else {
    static const std::regex bare(R"(^\s*(-?\d+)\s*$)");
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_match(text.begin(), text.end(), m, bare)) return ParseFailure{"no score found"};
    value = std::stoll(m[1].str());
  }
  if (value < 0 || value > 10) return ParseFailure{"score outside [0, 10]"};
  return static_cast<int>(value);
}

namespace {

RankRequest make_request(RankTask task, const RankContext& ctx, std::size_t call_index,
                         std::vector<ItemIndex> items, std::vector<ChatMessage> messages) {
  RankRequest req;
  req.task = task;
  req.user = ctx.user;
  req.call_index = call_index;
  req.items = std::move(items);
  req.history = ctx.history;
  req.ground_truth = ctx.ground_truth;
  req.messages = std::move(messages);
  return req;
}

// Calls the ranker, converting any exception into an audit error.
std::optional<std::string> call_ranker(Ranker& ranker, const RankRequest& req,
                                       RankAuditRecord& audit) {
  try {
    return ranker.complete(req);
  } catch (const std::exception& e) {
    audit.fallback = true;
    audit.error = e.what();
    return std::nullopt;
  }
}

RankAuditRecord audit_for(const RankRequest& req, std::size_t pass, std::size_t begin,
                          std::size_t end) {
  RankAuditRecord a;
  a.user = req.user;
  a.call_index = req.call_index;
  a.pass = pass;
  a.task = req.task;
  a.span_begin = begin;
  a.span_end = end;
  a.prompt_hash = prompt_hash(req.messages);
  return a;
}

}  // namespace

RankedList point_wise_rank(std::span<const ItemIndex> candidates, const RankContext& context,
                           Ranker& ranker, const PromptInfoFlags& flags) {
  RankedList out;
  std::vector<double> scores(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto req = make_request(RankTask::point, context, i, {candidates[i]},
                            build_point_prompt(context, candidates[i], flags));
    auto audit = audit_for(req, 0, i, i + 1);
    scores[i] = -static_cast<double>(i + 1);
    if (auto reply = call_ranker(ranker, req, audit)) {
      audit.response = *reply;
      auto parsed = parse_point_response(*reply);
      if (auto* score = std::get_if<int>(&parsed)) {
        scores[i] = *score;
        audit.parsed = std::vector<std::size_t>{static_cast<std::size_t>(*score)};
      } else {
        audit.fallback = true;
        audit.error = std::get<ParseFailure>(parsed).reason;
      }
    }
    out.audit.push_back(std::move(audit));
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  for (std::size_t i : order) out.items.push_back(candidates[i]);
  return out;
}

RankedList sliding_window_rank(std::span<const ItemIndex> candidates, const RankStrategy& strategy,
                               const RankContext& context, Ranker& ranker,
                               const PromptInfoFlags& flags) {
  strategy.validate(candidates.size());
  RankedList out;
  out.items.assign(candidates.begin(), candidates.end());
  const std::size_t n = out.items.size();
  const std::size_t w = strategy.w;
  std::size_t call = 0;

  for (std::size_t pass = 0; pass < strategy.passes; ++pass) {
    std::size_t start = n - w;
    while (true) {
      std::vector<ItemIndex> window(out.items.begin() + static_cast<std::ptrdiff_t>(start),
                                    out.items.begin() + static_cast<std::ptrdiff_t>(start + w));
      auto messages = build_rank_prompt(context, window, flags);
      auto req = make_request(RankTask::window, context, call++, window, std::move(messages));
      auto audit = audit_for(req, pass, start, start + w);
      if (auto reply = call_ranker(ranker, req, audit)) {
        audit.response = *reply;
        auto parsed = parse_rank_response(*reply, w);
        if (auto* perm = std::get_if<std::vector<std::size_t>>(&parsed)) {
          for (std::size_t i = 0; i < w; ++i) out.items[start + i] = window[(*perm)[i] - 1];
          audit.parsed = *perm;
        } else {
          audit.fallback = true;
          audit.error = std::get<ParseFailure>(parsed).reason;
        }
      }
      out.audit.push_back(std::move(audit));
      if (start == 0) break;
      start = start > strategy.d ? start - strategy.d : 0;
    }
  }
  return out;
}

RankedList selection_rank(std::span<const ItemIndex> candidates, const RankContext& context,
                          Ranker& ranker, std::size_t k_out, const PromptInfoFlags& flags) {
  RankStrategy check;
  check.kind = RankStrategy::Kind::selection;
  check.k_out = k_out;
  check.validate(candidates.size());

  RankedList out;
  auto req = make_request(RankTask::selection, context, 0,
                          {candidates.begin(), candidates.end()},
                          build_selection_prompt(context, candidates, k_out, flags));
  req.select_count = k_out;
  auto audit = audit_for(req, 0, 0, candidates.size());
  out.items.assign(candidates.begin(), candidates.end());
  if (auto reply = call_ranker(ranker, req, audit)) {
    audit.response = *reply;
    auto parsed = parse_rank_response(*reply, candidates.size(), k_out);
    if (auto* picks = std::get_if<std::vector<std::size_t>>(&parsed)) {
      std::vector<bool> chosen(candidates.size(), false);
      out.items.clear();
      for (std::size_t id : *picks) {
        out.items.push_back(candidates[id - 1]);
        chosen[id - 1] = true;
      }
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!chosen[i]) out.items.push_back(candidates[i]);
      }
      audit.parsed = *picks;
    } else {
      audit.fallback = true;
      audit.error = std::get<ParseFailure>(parsed).reason;
    }
  }
  out.audit.push_back(std::move(audit));
  return out;
}

RankedList rank_candidates(std::span<const ItemIndex> candidates, const RankStrategy& strategy,
                           const RankContext& context, Ranker& ranker,
                           const PromptInfoFlags& flags) {
  switch (strategy.kind) {
    case RankStrategy::Kind::point_wise: return point_wise_rank(candidates, context, ranker, flags);
    case RankStrategy::Kind::selection:
      return selection_rank(candidates, context, ranker, strategy.k_out, flags);
    case RankStrategy::Kind::window:
      return sliding_window_rank(candidates, strategy, context, ranker, flags);
  }
  throw Error("unknown ranking strategy");
}

}  // namespace star
