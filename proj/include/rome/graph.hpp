#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rome/error.hpp"

namespace rome {

enum class NodeKind { event, action, object };

inline std::string kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::event: return "event";
    case NodeKind::action: return "action";
    case NodeKind::object: return "object";
  }
  return "?";
}

inline NodeKind kind_from_name(const std::string& s) {
  if (s == "event") return NodeKind::event;
  if (s == "action") return NodeKind::action;
  if (s == "object") return NodeKind::object;
  throw ValueError("unknown node kind '" + s + "'");
}

// Reserved role indices emitted by the fallback parser. Graph files may
// extend the vocabulary beyond these.
inline constexpr int64_t kRoleSelf = 0;      // event gating itself
inline constexpr int64_t kRoleTemporal = 1;  // action -> event
inline constexpr int64_t kRoleArg = 2;       // object -> action

inline std::vector<std::string> default_role_vocab() { return {"self", "temporal", "arg"}; }

struct GraphNode {
  int64_t id = 0;
  NodeKind kind = NodeKind::event;
  int64_t span_begin = 0;  // token range [begin, end)
  int64_t span_end = 0;
};

struct GraphEdge {
  int64_t src = 0;
  int64_t dst = 0;
  int64_t role = 0;
};

/// One caption as a typed role graph over its token list: a single event
/// node for the sentence, action nodes for verbs, object nodes for noun
/// runs, with typed directed edges action->event and object->action.
struct CaptionGraph {
  std::string caption_id;
  std::string clip_id;
  std::vector<std::string> tokens;
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;

  const GraphNode* find_node(int64_t id) const {
    for (const auto& n : nodes)
      if (n.id == id) return &n;
    return nullptr;
  }

  int64_t event_node_id() const {
    for (const auto& n : nodes)
      if (n.kind == NodeKind::event) return n.id;
    throw ValueError("caption '" + caption_id + "': no event node");
  }

  /// Role used to gate a node before graph propagation: the event node
  /// always takes the reserved self role; other nodes take the smallest
  /// role index among their outgoing edges.
  int64_t gating_role(int64_t node_id) const {
    const GraphNode* n = find_node(node_id);
    if (n && n->kind == NodeKind::event) return kRoleSelf;
    int64_t best = -1;
    for (const auto& e : edges)
      if (e.src == node_id && (best < 0 || e.role < best)) best = e.role;
    return best < 0 ? kRoleSelf : best;
  }

  /// Undirected neighbor sets (edges carry roles, not flow restrictions),
  /// deduplicated and sorted by node id so message passing is independent
  /// of storage order.
  std::map<int64_t, std::vector<int64_t>> neighbor_sets() const {
    std::map<int64_t, std::set<int64_t>> nb;
    for (const auto& n : nodes) nb[n.id];
    for (const auto& e : edges) {
      nb[e.src].insert(e.dst);
      nb[e.dst].insert(e.src);
    }
    std::map<int64_t, std::vector<int64_t>> out;
    for (auto& [id, s] : nb) out[id] = std::vector<int64_t>(s.begin(), s.end());
    return out;
  }

  void validate(int64_t role_vocab_size) const {
    const std::string where = "caption '" + caption_id + "': ";
    if (tokens.empty()) throw ValueError(where + "empty token list");
    if (nodes.empty()) throw ValueError(where + "no nodes");
    std::set<int64_t> ids;
    int64_t events = 0;
    const int64_t T = static_cast<int64_t>(tokens.size());
    for (const auto& n : nodes) {
      if (!ids.insert(n.id).second)
        throw ValueError(where + "duplicate node id " + std::to_string(n.id));
      if (n.kind == NodeKind::event) ++events;
      if (n.span_begin >= n.span_end)
        throw ValueError(where + "node " + std::to_string(n.id) + ": empty span");
      if (n.span_begin < 0 || n.span_end > T)
        throw ValueError(where + "node " + std::to_string(n.id) + ": span [" +
                         std::to_string(n.span_begin) + ", " + std::to_string(n.span_end) +
                         ") outside " + std::to_string(T) + " tokens");
    }
    if (events != 1)
      throw ValueError(where + "expected exactly one event node, found " + std::to_string(events));
    for (const auto& e : edges) {
      if (!ids.count(e.src) || !ids.count(e.dst))
        throw ValueError(where + "dangling edge " + std::to_string(e.src) + "->" +
                         std::to_string(e.dst));
      if (e.role < 0 || e.role >= role_vocab_size)
        throw ValueError(where + "edge " + std::to_string(e.src) + "->" + std::to_string(e.dst) +
                         ": role " + std::to_string(e.role) + " outside vocabulary of " +
                         std::to_string(role_vocab_size));
    }
    const int64_t ev = event_node_id();
    for (const auto& n : nodes) {
      if (n.kind == NodeKind::action) {
        bool linked = false;
        for (const auto& e : edges)
          if ((e.src == n.id && e.dst == ev) || (e.src == ev && e.dst == n.id)) linked = true;
        if (!linked)
          throw ValueError(where + "action node " + std::to_string(n.id) +
                           " has no edge to the event node");
      } else if (n.kind == NodeKind::object) {
        bool linked = false;
        for (const auto& e : edges) {
          const GraphNode* other = nullptr;
          if (e.src == n.id) other = find_node(e.dst);
          else if (e.dst == n.id) other = find_node(e.src);
          if (other && other->kind == NodeKind::action) linked = true;
        }
        if (!linked)
          throw ValueError(where + "object node " + std::to_string(n.id) +
                           " has no edge to any action node");
      }
    }
  }
};

/// Deterministic shallow parse for captions that arrive without a graph.
/// Verbs (lexicon members) become action nodes linked to the event node;
/// each maximal non-verb run becomes one object node linked to the nearest
/// preceding verb (the leading run attaches to the first verb). A caption
/// with no verb degenerates to a dummy action spanning all tokens.
inline CaptionGraph rule_parse_caption(const std::vector<std::string>& tokens,
                                       const std::set<std::string>& verb_lexicon) {
  if (tokens.empty()) throw ValueError("rule_parse_caption: empty token list");
  const int64_t T = static_cast<int64_t>(tokens.size());
  CaptionGraph g;
  g.tokens = tokens;
  g.nodes.push_back({0, NodeKind::event, 0, T});

  std::vector<int64_t> verb_pos;
  for (int64_t t = 0; t < T; ++t)
    if (verb_lexicon.count(tokens[static_cast<size_t>(t)])) verb_pos.push_back(t);

  if (verb_pos.empty()) {
    g.nodes.push_back({1, NodeKind::action, 0, T});
    g.nodes.push_back({2, NodeKind::object, 0, T});
    g.edges.push_back({1, 0, kRoleTemporal});
    g.edges.push_back({2, 1, kRoleArg});
    return g;
  }

  int64_t next_id = 1;
  std::map<int64_t, int64_t> action_id_at;  // verb position -> node id
  for (int64_t p : verb_pos) {
    g.nodes.push_back({next_id, NodeKind::action, p, p + 1});
    g.edges.push_back({next_id, 0, kRoleTemporal});
    action_id_at[p] = next_id++;
  }
  // Non-verb runs, left to right.
  int64_t t = 0;
  size_t vi = 0;
  while (t < T) {
    if (vi < verb_pos.size() && t == verb_pos[vi]) {
      ++vi;
      ++t;
      continue;
    }
    int64_t run_begin = t;
    while (t < T && (vi >= verb_pos.size() || t < verb_pos[vi])) ++t;
    const int64_t owner = run_begin < verb_pos.front()
                              ? action_id_at[verb_pos.front()]
                              : action_id_at[verb_pos[vi - 1]];
    g.nodes.push_back({next_id, NodeKind::object, run_begin, t});
    g.edges.push_back({next_id, owner, kRoleArg});
    ++next_id;
  }
  return g;
}

}  // namespace rome
