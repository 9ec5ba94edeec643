#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "star/collab.hpp"
#include "star/corpus.hpp"

namespace star {

struct ChatMessage {
  enum class Role { system, user, assistant };
  Role role = Role::user;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

std::string to_string(ChatMessage::Role role);

struct RankStrategy {
  enum class Kind { selection, point_wise, window };
  Kind kind = Kind::window;
  std::size_t w = 2;       // window size
  std::size_t d = 1;       // stride
  std::size_t passes = 1;
  std::size_t k_out = 10;  // selection only

  static RankStrategy pair_wise() { return {}; }
  static RankStrategy list_wise(std::size_t w, std::size_t d) { return {Kind::window, w, d, 1, 10}; }

  /// Throws ConfigError when the strategy cannot run on `k` candidates.
  void validate(std::size_t k) const;
};

std::string to_string(RankStrategy::Kind kind);
RankStrategy::Kind rank_kind_from_string(const std::string& s);

struct PromptInfoFlags {
  bool include_popularity = true;
  bool include_co_occurrence = true;
};

/// Everything about one user that ranking prompts draw on.
struct RankContext {
  UserIndex user = 0;
  std::vector<ItemIndex> history;            // chronological, most recent last
  const std::vector<ItemMeta>* catalog = nullptr;
  const InteractionCounts* counts = nullptr;  // required when a flag is on
  std::optional<ItemIndex> ground_truth;      // only mock rankers look at this
};

enum class RankTask { window, point, selection };

std::string to_string(RankTask task);

struct RankRequest {
  RankTask task = RankTask::window;
  UserIndex user = 0;
  std::size_t call_index = 0;  // sequential per user, starting at 0
  std::vector<ItemIndex> items;  // items shown as [1]..[n], in prompt order
  std::vector<ItemIndex> history;
  std::optional<ItemIndex> ground_truth;
  std::size_t select_count = 0;  // selection only
  std::vector<ChatMessage> messages;
};

/// Pluggable ranking model. Returns raw response text; throws ProviderError
/// on failure. Implementations must be safe to call from several threads.
class Ranker {
 public:
  virtual ~Ranker() = default;
  virtual std::string name() const = 0;
  virtual std::string complete(const RankRequest& request) = 0;
};

/// Renders one item as the JSON block used inside ranking prompts.
/// `item_id` adds a leading "Item ID" field (history items only).
std::string render_item_json(const ItemMeta& meta, std::optional<ItemIndex> item_id,
                             const std::vector<std::pair<std::string, std::size_t>>& counts);

/// List-wise prompt: system turn, history turn, one user/assistant pair per
/// window item, then the ordering instruction.
std::vector<ChatMessage> build_rank_prompt(const RankContext& context,
                                           std::span<const ItemIndex> window,
                                           const PromptInfoFlags& flags);

std::vector<ChatMessage> build_selection_prompt(const RankContext& context,
                                                std::span<const ItemIndex> candidates,
                                                std::size_t k_out, const PromptInfoFlags& flags);

/// Asks for a 0-10 integer likelihood for a single candidate.
std::vector<ChatMessage> build_point_prompt(const RankContext& context, ItemIndex candidate,
                                            const PromptInfoFlags& flags);

std::string prompt_hash(std::span<const ChatMessage> messages);

struct ParseFailure {
  std::string reason;
};

/// 1-based identifiers in preference order, or why they were rejected.
using RankParse = std::variant<std::vector<std::size_t>, ParseFailure>;

/// Extracts the `rank` string ("[2] > [1]") from a reply, tolerating a
/// missing JSON wrapper and stray whitespace. Ids must lie in [1, window]
/// and be unique; exactly `expected_count` (default: window) are required.
RankParse parse_rank_response(std::string_view text, std::size_t window,
                              std::optional<std::size_t> expected_count = {});

std::variant<int, ParseFailure> parse_point_response(std::string_view text);

struct RankAuditRecord {
  UserIndex user = 0;
  std::size_t call_index = 0;
  std::size_t pass = 0;
  RankTask task = RankTask::window;
  std::size_t span_begin = 0;  // list positions [begin, end), 0 = top
  std::size_t span_end = 0;
  std::string prompt_hash;
  std::string response;
  std::optional<std::vector<std::size_t>> parsed;
  bool fallback = false;
  std::string error;
};

struct RankedList {
  std::vector<ItemIndex> items;
  std::vector<RankAuditRecord> audit;
};

/// Scores each candidate independently; stable descending sort, so equal
/// scores keep retrieval order. A failed call scores -(incoming rank).
RankedList point_wise_rank(std::span<const ItemIndex> candidates, const RankContext& context,
                           Ranker& ranker, const PromptInfoFlags& flags);

/// Slides a size-w window from the bottom of the list to the top in steps
/// of d, rewriting each window with the ranker's order. The last window is
/// clamped to the top w positions. A failed window keeps its order.
RankedList sliding_window_rank(std::span<const ItemIndex> candidates, const RankStrategy& strategy,
                               const RankContext& context, Ranker& ranker,
                               const PromptInfoFlags& flags);

/// One prompt over all candidates; the ordered picks go first and the rest
/// follow in retrieval order. Any parse failure returns retrieval order.
RankedList selection_rank(std::span<const ItemIndex> candidates, const RankContext& context,
                          Ranker& ranker, std::size_t k_out, const PromptInfoFlags& flags);

/// Dispatches on `strategy.kind`.
RankedList rank_candidates(std::span<const ItemIndex> candidates, const RankStrategy& strategy,
                           const RankContext& context, Ranker& ranker,
                           const PromptInfoFlags& flags);

}  // namespace star
