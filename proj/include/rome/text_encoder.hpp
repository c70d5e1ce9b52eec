#pragma once

#include <cmath>
#include <map>
#include <type_traits>
#include <string>
#include <vector>

#include "rome/error.hpp"
#include "rome/graph.hpp"
#include "rome/tensor.hpp"

namespace rome {

/// Token lookup over a trainable vector table; the last row is reserved
/// for out-of-vocabulary tokens so unknown words stay deterministic.
template <class S>
struct EmbeddingTable {
  std::map<std::string, int64_t> vocab;
  Tensor<S> vectors;  // [V + 1, word_dim]
  int64_t unknown_row = 0;

  int64_t row_of(const std::string& token) const {
    auto it = vocab.find(token);
    return it == vocab.end() ? unknown_row : it->second;
  }
};

template <class S>
struct TextParams {
  Tensor<S> lstm_fwd_w, lstm_fwd_u, lstm_fwd_b;  // [wd,4H], [H,4H], [4H]
  Tensor<S> lstm_bwd_w, lstm_bwd_u, lstm_bwd_b;
  Tensor<S> query;              // [model_dim], sentence-attention probe
  Tensor<S> role_gate;          // [model_dim, R], one gate column per role
  std::vector<Tensor<S>> gcn_w; // [model_dim, model_dim] per propagation layer
};

/// Per-caption encodings at the three semantic levels, all [model_dim].
template <class S>
struct TextLevelEncodings {
  Tensor<S> event;
  Tensor<S> action;
  Tensor<S> object;
};

template <class S>
Tensor<S> embed_tokens(const std::vector<std::string>& tokens, const EmbeddingTable<S>& table,
                       std::type_identity_t<Tape<S>*> tape) {
  if (tokens.empty()) throw ValueError("embed_tokens: empty token list");
  std::vector<int64_t> rows;
  rows.reserve(tokens.size());
  for (const auto& t : tokens) rows.push_back(table.row_of(t));
  return gather_rows(table.vectors, rows, tape);
}

namespace detail {

// One LSTM direction. Gate order inside the fused [1, 4H] preactivation:
// input, forget, output, candidate.
template <class S>
std::vector<Tensor<S>> lstm_direction(const Tensor<S>& E, const Tensor<S>& w, const Tensor<S>& u,
                                      const Tensor<S>& b, bool reversed, std::type_identity_t<Tape<S>*> tape) {
  const int64_t T = E.shape[0];
  const int64_t H = b.shape[0] / 4;
  if (w.shape[1] != 4 * H || u.shape[0] != H || u.shape[1] != 4 * H || w.shape[0] != E.shape[1])
    throw ShapeError("lstm: weight shapes " + shape_str(w.shape) + "/" + shape_str(u.shape) +
                     "/" + shape_str(b.shape) + " do not fit input " + shape_str(E.shape));
  Tensor<S> h({1, H});
  Tensor<S> c({1, H});
  std::vector<Tensor<S>> out(static_cast<size_t>(T));
  for (int64_t step = 0; step < T; ++step) {
    const int64_t t = reversed ? T - 1 - step : step;
    auto x = slice(E, 0, t, t + 1, tape);
    auto pre = add_rowvec(add(matmul(x, w, tape), matmul(h, u, tape), tape),
                          b, tape);
    auto i = sigmoid_t(slice(pre, 1, 0, H, tape), tape);
    auto f = sigmoid_t(slice(pre, 1, H, 2 * H, tape), tape);
    auto o = sigmoid_t(slice(pre, 1, 2 * H, 3 * H, tape), tape);
    auto g = tanh_t(slice(pre, 1, 3 * H, 4 * H, tape), tape);
    c = add(mul(f, c, tape), mul(i, g, tape), tape);
    h = mul(o, tanh_t(c, tape), tape);
    out[static_cast<size_t>(t)] = h;
  }
  return out;
}

}  // namespace detail

/// Bidirectional recurrence over the token embeddings; the two direction
/// states are concatenated per token, giving [T, model_dim].
template <class S>
Tensor<S> contextualize(const Tensor<S>& E, const TextParams<S>& p, std::type_identity_t<Tape<S>*> tape) {
  auto fwd = detail::lstm_direction(E, p.lstm_fwd_w, p.lstm_fwd_u, p.lstm_fwd_b, false, tape);
  auto bwd = detail::lstm_direction(E, p.lstm_bwd_w, p.lstm_bwd_u, p.lstm_bwd_b, true, tape);
  std::vector<Tensor<S>> rows;
  rows.reserve(fwd.size());
  for (size_t t = 0; t < fwd.size(); ++t)
    rows.push_back(concat<S>({fwd[t], bwd[t]}, 1, tape));
  return concat(rows, 0, tape);
}

/// Initial node embeddings from the contextualized tokens: the event node
/// soft-attends over the whole sentence, span nodes max-pool their tokens.
template <class S>
std::map<int64_t, Tensor<S>> init_node_embeddings(const Tensor<S>& H, const CaptionGraph& graph,
                                                  const Tensor<S>& query, std::type_identity_t<Tape<S>*> tape) {
  const int64_t T = H.shape[0];
  const int64_t D = H.shape[1];
  if (query.rank() != 1 || query.shape[0] != D)
    throw ShapeError("init_node_embeddings: query " + shape_str(query.shape) +
                     " vs hidden " + shape_str(H.shape));
  std::map<int64_t, Tensor<S>> out;
  for (const auto& n : graph.nodes) {
    if (n.kind == NodeKind::event) {
      auto scores = matmul(H, reshape(query, {D, 1}), tape);  // [T, 1]
      auto alpha = softmax(scores, 0, tape);
      out[n.id] = matmul(transpose(alpha, tape), H, tape);    // [1, D]
    } else {
      if (n.span_begin < 0 || n.span_end > T || n.span_begin >= n.span_end)
        throw ValueError("init_node_embeddings: node " + std::to_string(n.id) + " span [" +
                         std::to_string(n.span_begin) + ", " + std::to_string(n.span_end) +
                         ") invalid for " + std::to_string(T) + " tokens");
      auto span = slice(H, 0, n.span_begin, n.span_end, tape);
      out[n.id] = reshape(reduce_max(span, 0, tape), {1, D});
    }
  }
  return out;
}

template <class S>
Tensor<S> role_gate_index(const Tensor<S>& g, int64_t role, const Tensor<S>& W_r, std::type_identity_t<Tape<S>*> tape) {
  if (g.rank() != 2 || g.shape[0] != 1 || g.shape[1] != W_r.shape[0])
    throw ShapeError("role_gate: embedding " + shape_str(g.shape) + " vs gate matrix " +
                     shape_str(W_r.shape));
  if (role < 0 || role >= W_r.shape[1])
    throw ValueError("role_gate: role " + std::to_string(role) + " outside " +
                     std::to_string(W_r.shape[1]) + " columns");
  auto col = transpose(slice(W_r, 1, role, role + 1, tape), tape);  // [1, D]
  return mul(g, col, tape);
}

/// g ⊙ (gate column selected by the one-hot role vector).
template <class S>
Tensor<S> role_gate(const Tensor<S>& g, const std::vector<S>& role_onehot, const Tensor<S>& W_r,
                    std::type_identity_t<Tape<S>*> tape) {
  const int64_t R = W_r.shape[1];
  if (static_cast<int64_t>(role_onehot.size()) != R)
    throw ShapeError("role_gate: one-hot length " + std::to_string(role_onehot.size()) + " vs " +
                     std::to_string(R) + " roles");
  int64_t role = -1;
  for (int64_t r = 0; r < R; ++r) {
    const S v = role_onehot[static_cast<size_t>(r)];
    if (v == S(1) && role >= 0) throw ValueError("role_gate: role vector is not one-hot");
    if (v == S(1)) role = r;
    else if (v != S(0)) throw ValueError("role_gate: role vector is not one-hot");
  }
  if (role < 0) throw ValueError("role_gate: role vector is not one-hot");
  return role_gate_index(g, role, W_r, tape);
}

/// One propagation layer: each node attends over its neighbors with scaled
/// dot-product weights and receives a shared-matrix residual update. All
/// updates read the previous layer, so evaluation order cannot leak.
template <class S>
std::map<int64_t, Tensor<S>> graph_attention_layer(
    const std::map<int64_t, Tensor<S>>& nodes,
    const std::map<int64_t, std::vector<int64_t>>& neighbors, const Tensor<S>& W_t,
    std::type_identity_t<Tape<S>*> tape) {
  std::map<int64_t, Tensor<S>> out;
  for (const auto& [id, g] : nodes) {
    auto nb_it = neighbors.find(id);
    if (nb_it == neighbors.end() || nb_it->second.empty()) {
      out[id] = g;
      continue;
    }
    const auto& nb = nb_it->second;  // sorted by node id
    const S inv_sqrt_d = S(1) / std::sqrt(static_cast<S>(g.shape[1]));
    std::vector<Tensor<S>> scores;
    std::vector<Tensor<S>> rows;
    scores.reserve(nb.size());
    rows.reserve(nb.size());
    for (int64_t j : nb) {
      const auto& gj = nodes.at(j);
      scores.push_back(scalar_mul(dot(g, gj, tape), inv_sqrt_d, tape));
      rows.push_back(gj);
    }
    auto beta = softmax(concat(scores, 0, tape), 0, tape);       // [n]
    auto msg = matmul(reshape(beta, {1, static_cast<int64_t>(nb.size())}),
                      concat(rows, 0, tape), tape);              // [1, D]
    out[id] = add(g, matmul(msg, W_t, tape), tape);
  }
  return out;
}

/// Full text pipeline: embed, contextualize, pool nodes, gate by role,
/// propagate, then pool each level (event node; max over action nodes;
/// max over object nodes).
template <class S>
TextLevelEncodings<S> encode_text(const CaptionGraph& graph, const EmbeddingTable<S>& table,
                                  const TextParams<S>& p, std::type_identity_t<Tape<S>*> tape) {
  auto E = embed_tokens(graph.tokens, table, tape);
  auto H = contextualize(E, p, tape);
  auto nodes = init_node_embeddings(H, graph, p.query, tape);
  for (auto& [id, g] : nodes)
    g = role_gate_index(g, graph.gating_role(id), p.role_gate, tape);
  const auto neighbors = graph.neighbor_sets();
  for (const auto& W_t : p.gcn_w) nodes = graph_attention_layer(nodes, neighbors, W_t, tape);

  const int64_t D = H.shape[1];
  auto pool_kind = [&](NodeKind kind) {
    std::vector<Tensor<S>> rows;  // gathered in sorted node-id order
    for (const auto& [id, g] : nodes) {
      const GraphNode* n = graph.find_node(id);
      if (n && n->kind == kind) rows.push_back(g);
    }
    if (rows.empty())
      throw ValueError("encode_text: caption '" + graph.caption_id + "' has no " +
                       kind_name(kind) + " nodes");
    if (rows.size() == 1) return reshape(rows[0], {D});
    return reduce_max(concat(rows, 0, tape), 0, tape);
  };
  TextLevelEncodings<S> enc;
  enc.event = reshape(nodes.at(graph.event_node_id()), {D});
  enc.action = pool_kind(NodeKind::action);
  enc.object = pool_kind(NodeKind::object);
  return enc;
}

}  // namespace rome
