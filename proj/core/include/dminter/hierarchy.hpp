#pragma once

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dminter {

/// Name of an intent node. The default hierarchy uses the nine names below;
/// configured hierarchies may introduce others.
class IntentId {
 public:
  IntentId() = default;
  explicit IntentId(std::string name) : name_(std::move(name)) {}
  const std::string& name() const { return name_; }
  friend auto operator<=>(const IntentId&, const IntentId&) = default;

 private:
  std::string name_;
};

namespace intents {
inline const IntentId kPublic{"Public"};
inline const IntentId kEmotion{"Emotion"};
inline const IntentId kIndividual{"Individual"};
inline const IntentId kPopularize{"Popularize"};
inline const IntentId kClout{"Clout"};
inline const IntentId kConflict{"Conflict"};
inline const IntentId kSmear{"Smear"};
inline const IntentId kBias{"Bias"};
inline const IntentId kConnect{"Connect"};
/// Sentinel for "no intent affirmed"; never queried.
inline const IntentId kNoIntent{"NoIntent"};
}  // namespace intents

enum class Answer { kNo = 0, kYes = 1 };
enum class Veracity { kReal = 0, kFake = 1 };
enum class Lean { kNone, kReal, kFake };

std::string_view to_string(Answer a);
std::string_view to_string(Veracity v);
std::string_view to_string(Lean l);

struct IntentNode {
  IntentId id;
  /// Parent intent; nullopt for layer-2 nodes hanging off the root.
  std::optional<IntentId> parent;
  std::string query_text;
  Lean veracity_lean = Lean::kNone;

  friend bool operator==(const IntentNode&, const IntentNode&) = default;
};

using AnswerMap = std::map<IntentId, Answer>;

/// Two-level tree of queryable intents below an implicit root.
class IntentHierarchy {
 public:
  /// Validates the node list; throws ConfigError naming the offending node
  /// (duplicate id, self/cyclic parent, depth above two, missing query, ...).
  IntentHierarchy(std::vector<IntentNode> nodes, std::vector<IntentId> layer2_order);

  const std::vector<IntentId>& layer2() const { return layer2_; }
  /// Children in declaration order; empty for leaves.
  const std::vector<IntentId>& children(const IntentId& id) const;
  const IntentNode& node(const IntentId& id) const;
  bool contains(const IntentId& id) const { return index_.count(id) != 0; }
  /// Nodes in declaration order.
  const std::vector<IntentNode>& nodes() const { return nodes_; }
  /// Layer-2 nodes in layer2 order, then every child grouped by parent.
  /// This is the fixed query order of the flat-hierarchy ablation.
  std::vector<IntentId> breadth_first_order() const;

  const std::string& query_text(const IntentId& id) const { return node(id).query_text; }
  Lean veracity_lean(const IntentId& id) const { return node(id).veracity_lean; }

  friend bool operator==(const IntentHierarchy& a, const IntentHierarchy& b) {
    return a.nodes_ == b.nodes_ && a.layer2_ == b.layer2_;
  }

 private:
  std::vector<IntentNode> nodes_;
  std::vector<IntentId> layer2_;
  std::map<IntentId, std::size_t> index_;
  std::map<IntentId, std::vector<IntentId>> children_;
};

/// The nine-intent hierarchy: Public -> {Popularize, Clout},
/// Emotion -> {Conflict}, Individual -> {Smear, Bias, Connect}.
IntentHierarchy default_hierarchy();

/// Parses the JSON hierarchy document
/// {"nodes": [{"id", "parent", "query", "lean"}...], "layer2_order": [...]}.
/// A parent of "root" marks a layer-2 node. Unknown keys are rejected.
IntentHierarchy load_hierarchy(std::string_view document);
IntentHierarchy load_hierarchy_file(const std::string& path);
std::string serialize_hierarchy(const IntentHierarchy& h);

/// Breadth-first planner. Returns the unanswered layer-2 intents while any
/// remain; afterwards the unanswered children of yes-answered parents (parent
/// order, then child order); empty when the episode is complete.
std::vector<IntentId> plan_next_queries(const IntentHierarchy& h, const AnswerMap& answers);

}  // namespace dminter
