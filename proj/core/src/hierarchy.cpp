#include "dminter/hierarchy.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dminter/error.hpp"

namespace dminter {

using nlohmann::json;

std::string_view to_string(Answer a) { return a == Answer::kYes ? "yes" : "no"; }
std::string_view to_string(Veracity v) { return v == Veracity::kFake ? "fake" : "real"; }
std::string_view to_string(Lean l) {
  switch (l) {
    case Lean::kReal: return "real";
    case Lean::kFake: return "fake";
    case Lean::kNone: break;
  }
  return "none";
}

namespace {

const std::vector<IntentId> kNoChildren;

std::string quoted(const IntentId& id) { return "'" + id.name() + "'"; }

}  // namespace

IntentHierarchy::IntentHierarchy(std::vector<IntentNode> nodes, std::vector<IntentId> layer2_order)
    : nodes_(std::move(nodes)), layer2_(std::move(layer2_order)) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (n.id.name().empty()) throw ConfigError("hierarchy: node " + std::to_string(i) + " has an empty id");
    if (n.id == intents::kNoIntent) throw ConfigError("hierarchy: 'NoIntent' is reserved and cannot be queried");
    if (!index_.emplace(n.id, i).second) throw ConfigError("hierarchy: duplicate intent id " + quoted(n.id));
  }
  for (const auto& n : nodes_) {
    if (n.query_text.empty()) throw ConfigError("hierarchy: intent " + quoted(n.id) + " is missing its query");
    if (n.query_text.back() != '?') {
      throw ConfigError("hierarchy: query of intent " + quoted(n.id) + " must end with '?'");
    }
    if (n.parent && *n.parent == n.id) throw ConfigError("hierarchy: cycle at intent " + quoted(n.id));
    if (n.parent && !index_.count(*n.parent)) {
      throw ConfigError("hierarchy: intent " + quoted(n.id) + " has unknown parent " + quoted(*n.parent));
    }
  }
  // Walk each node up to the root; revisiting a node means a cycle.
  for (const auto& n : nodes_) {
    std::set<IntentId> seen{n.id};
    std::size_t depth = 1;
    const IntentNode* cur = &n;
    while (cur->parent) {
      if (!seen.insert(*cur->parent).second) throw ConfigError("hierarchy: cycle at intent " + quoted(n.id));
      cur = &nodes_[index_.at(*cur->parent)];
      ++depth;
    }
    if (depth > 2) {
      throw ConfigError("hierarchy: intent " + quoted(n.id) + " is deeper than two layers below the root");
    }
  }
  std::set<IntentId> roots;
  for (const auto& n : nodes_) {
    if (n.parent) {
      children_[*n.parent].push_back(n.id);
    } else {
      roots.insert(n.id);
    }
  }
  std::set<IntentId> listed;
  for (const auto& id : layer2_) {
    if (!roots.count(id)) {
      throw ConfigError("hierarchy: layer2_order entry " + quoted(id) + " is not a layer-2 intent");
    }
    if (!listed.insert(id).second) throw ConfigError("hierarchy: layer2_order repeats " + quoted(id));
  }
  for (const auto& id : roots) {
    if (!listed.count(id)) throw ConfigError("hierarchy: layer-2 intent " + quoted(id) + " missing from layer2_order");
  }
}

const std::vector<IntentId>& IntentHierarchy::children(const IntentId& id) const {
  auto it = children_.find(id);
  return it == children_.end() ? kNoChildren : it->second;
}

const IntentNode& IntentHierarchy::node(const IntentId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ConfigError("hierarchy: unknown intent " + quoted(id));
  return nodes_[it->second];
}

std::vector<IntentId> IntentHierarchy::breadth_first_order() const {
  std::vector<IntentId> order = layer2_;
  for (const auto& parent : layer2_) {
    for (const auto& child : children(parent)) order.push_back(child);
  }
  return order;
}

IntentHierarchy default_hierarchy() {
  using namespace intents;
  std::vector<IntentNode> nodes = {
      {kPublic, std::nullopt, "Is this article aimed at the public?", Lean::kNone},
      {kEmotion, std::nullopt, "Is there any emotional expression in this article?", Lean::kNone},
      {kIndividual, std::nullopt, "Does this article express any personal points?", Lean::kNone},
      {kPopularize, kPublic, "Is this an article aimed at popularization?", Lean::kReal},
      {kClout, kPublic, "Is this an article aimed at pursuing attention?", Lean::kFake},
      {kConflict, kEmotion, "Is this article attempting to create conflict?", Lean::kFake},
      {kSmear, kIndividual, "Is this article smearing others?", Lean::kFake},
      {kBias, kIndividual, "Is there any bias in this article?", Lean::kFake},
      {kConnect, kIndividual, "Is this article just seeking interaction and connection?", Lean::kReal},
  };
  return IntentHierarchy(std::move(nodes), {kPublic, kEmotion, kIndividual});
}

namespace {

Lean parse_lean(const std::string& s, const std::string& id) {
  if (s == "real") return Lean::kReal;
  if (s == "fake") return Lean::kFake;
  if (s == "none") return Lean::kNone;
  throw ConfigError("hierarchy: intent '" + id + "' has invalid lean '" + s + "'");
}

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* key : allowed) ok = ok || it.key() == key;
    if (!ok) throw ConfigError("hierarchy: unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace

IntentHierarchy load_hierarchy(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("hierarchy: document does not parse: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("hierarchy: document must be a JSON object");
  reject_unknown_keys(doc, {"nodes", "layer2_order"}, "document");
  if (!doc.contains("nodes") || !doc["nodes"].is_array()) throw ConfigError("hierarchy: 'nodes' must be a list");
  if (!doc.contains("layer2_order") || !doc["layer2_order"].is_array()) {
    throw ConfigError("hierarchy: 'layer2_order' must be a list");
  }
  std::vector<IntentNode> nodes;
  for (const auto& entry : doc["nodes"]) {
    if (!entry.is_object()) throw ConfigError("hierarchy: every node must be an object");
    if (!entry.contains("id") || !entry["id"].is_string()) throw ConfigError("hierarchy: node without string 'id'");
    const std::string id = entry["id"].get<std::string>();
    reject_unknown_keys(entry, {"id", "parent", "query", "lean"}, "node '" + id + "'");
    IntentNode node;
    node.id = IntentId(id);
    if (!entry.contains("parent") || !entry["parent"].is_string()) {
      throw ConfigError("hierarchy: intent '" + id + "' needs a string 'parent' (\"root\" for layer 2)");
    }
    const std::string parent = entry["parent"].get<std::string>();
    if (parent != "root") node.parent = IntentId(parent);
    if (!entry.contains("query") || !entry["query"].is_string()) {
      throw ConfigError("hierarchy: intent '" + id + "' is missing its query");
    }
    node.query_text = entry["query"].get<std::string>();
    node.veracity_lean = entry.contains("lean") ? parse_lean(entry["lean"].get<std::string>(), id) : Lean::kNone;
    nodes.push_back(std::move(node));
  }
  std::vector<IntentId> order;
  for (const auto& entry : doc["layer2_order"]) {
    if (!entry.is_string()) throw ConfigError("hierarchy: layer2_order entries must be strings");
    order.emplace_back(entry.get<std::string>());
  }
  return IntentHierarchy(std::move(nodes), std::move(order));
}

IntentHierarchy load_hierarchy_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("hierarchy: cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return load_hierarchy(buffer.str());
}

std::string serialize_hierarchy(const IntentHierarchy& h) {
  json doc;
  doc["nodes"] = json::array();
  for (const auto& n : h.nodes()) {
    doc["nodes"].push_back({{"id", n.id.name()},
                            {"parent", n.parent ? n.parent->name() : std::string("root")},
                            {"query", n.query_text},
                            {"lean", std::string(to_string(n.veracity_lean))}});
  }
  doc["layer2_order"] = json::array();
  for (const auto& id : h.layer2()) doc["layer2_order"].push_back(id.name());
  return doc.dump(2) + "\n";
}

std::vector<IntentId> plan_next_queries(const IntentHierarchy& h, const AnswerMap& answers) {
  for (const auto& [id, answer] : answers) {
    const IntentNode& node = h.node(id);  // throws for unknown intents
    if (node.parent) {
      auto parent = answers.find(*node.parent);
      if (parent == answers.end() || parent->second != Answer::kYes) {
        throw ConfigError("planner: intent " + quoted(id) + " answered although its parent " +
                          quoted(*node.parent) + " was not answered yes");
      }
    }
  }
  std::vector<IntentId> plan;
  for (const auto& id : h.layer2()) {
    if (!answers.count(id)) plan.push_back(id);
  }
  if (!plan.empty()) return plan;
  for (const auto& parent : h.layer2()) {
    if (answers.at(parent) != Answer::kYes) continue;
    for (const auto& child : h.children(parent)) {
      if (!answers.count(child)) plan.push_back(child);
    }
  }
  return plan;
}

}  // namespace dminter
