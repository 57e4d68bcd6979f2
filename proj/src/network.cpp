#include "gasflow/network.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>

#include "gasflow/errors.hpp"

namespace gasflow {

int GasNetwork::node_index(const std::string& id) const {
  for (size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return static_cast<int>(i);
  return -1;
}

int GasNetwork::pipe_index(const std::string& id) const {
  for (size_t i = 0; i < pipes.size(); ++i)
    if (pipes[i].id == id) return static_cast<int>(i);
  return -1;
}

void GasNetwork::validate() const {
  constants.validate();
  if (nodes.empty()) throw ValidationError("network has no nodes");
  if (pipes.empty()) throw ValidationError("network has no pipes");

  std::set<std::string> node_ids;
  bool has_slack = false;
  for (const Node& n : nodes) {
    if (n.id.empty()) throw ValidationError("node with empty id");
    if (!node_ids.insert(n.id).second)
      throw ValidationError("duplicate node id: " + n.id);
    if (n.kind == NodeKind::Slack) has_slack = true;
    if (!(n.rho_min < n.rho_max))
      throw ValidationError("node " + n.id + ": rho_min must be below rho_max");
    if (n.rho_min <= 0.0)
      throw ValidationError("node " + n.id + ": rho_min must be positive");
  }
  if (!has_slack) throw ValidationError("network needs at least one slack node");

  std::set<std::string> pipe_ids;
  std::set<std::pair<std::string, std::string>> endpoint_pairs;
  for (const Pipe& p : pipes) {
    if (p.id.empty()) throw ValidationError("pipe with empty id");
    if (!pipe_ids.insert(p.id).second)
      throw ValidationError("duplicate pipe id: " + p.id);
    if (!node_ids.count(p.from) || !node_ids.count(p.to))
      throw ValidationError("pipe " + p.id + ": unknown endpoint");
    if (p.from == p.to) throw ValidationError("pipe " + p.id + ": self loop");
    if (!endpoint_pairs.insert({p.from, p.to}).second ||
        endpoint_pairs.count({p.to, p.from}))
      throw ValidationError("pipe " + p.id + ": duplicate or reverse-duplicate edge");
    if (p.length <= 0.0) throw ValidationError("pipe " + p.id + ": length must be positive");
    if (p.diameter <= 0.0) throw ValidationError("pipe " + p.id + ": diameter must be positive");
    if (p.friction <= 0.0) throw ValidationError("pipe " + p.id + ": friction must be positive");
  }

  // One compressor per pipe end, valid edge references.
  std::set<std::string> comp_ids;
  std::set<std::pair<std::string, Orientation>> comp_slots;
  for (const Compressor& c : compressors) {
    if (c.id.empty()) throw ValidationError("compressor with empty id");
    if (!comp_ids.insert(c.id).second)
      throw ValidationError("duplicate compressor id: " + c.id);
    if (!pipe_ids.count(c.edge))
      throw ValidationError("compressor " + c.id + ": unknown edge " + c.edge);
    if (!comp_slots.insert({c.edge, c.orientation}).second)
      throw ValidationError("compressor " + c.id + ": pipe end already occupied");
    if (c.alpha_max < 1.0)
      throw ValidationError("compressor " + c.id + ": alpha_max must be >= 1");
    if (c.efficiency <= 0.0 || c.efficiency > 1.0)
      throw ValidationError("compressor " + c.id + ": efficiency must lie in (0, 1]");
  }

  // Connectivity over the undirected graph.
  std::unordered_map<std::string, std::vector<std::string>> adj;
  for (const Pipe& p : pipes) {
    adj[p.from].push_back(p.to);
    adj[p.to].push_back(p.from);
  }
  std::set<std::string> seen;
  std::queue<std::string> frontier;
  frontier.push(nodes.front().id);
  seen.insert(nodes.front().id);
  while (!frontier.empty()) {
    std::string u = frontier.front();
    frontier.pop();
    for (const std::string& v : adj[u])
      if (seen.insert(v).second) frontier.push(v);
  }
  if (seen.size() != nodes.size()) throw ValidationError("network graph is disconnected");
}

RefinedNetwork refine(const GasNetwork& net, double segment_max) {
  net.validate();
  if (segment_max <= 0.0)
    throw ValidationError("segment_max must be positive");

  RefinedNetwork r;
  r.constants = net.constants;
  r.segment_max = segment_max;
  r.nodes = net.nodes;

  for (const Pipe& p : net.pipes) {
    const int from = net.node_index(p.from);
    const int to = net.node_index(p.to);
    // A pipe of exactly segment_max stays whole; guard the float division so
    // e.g. 30 km / 10 km does not round up to 4 segments.
    int segments = static_cast<int>(std::ceil(p.length / segment_max - 1e-12));
    segments = std::max(segments, 1);

    // Interior nodes inherit the tighter of the two parent endpoint bounds.
    Node interior;
    interior.kind = NodeKind::Demand;
    interior.rho_min = std::max(net.nodes[from].rho_min, net.nodes[to].rho_min);
    interior.rho_max = std::min(net.nodes[from].rho_max, net.nodes[to].rho_max);
    if (!(interior.rho_min < interior.rho_max))
      throw ValidationError("pipe " + p.id + ": endpoint density bounds do not overlap");

    std::string prev_id = p.from;
    for (int seg = 1; seg <= segments; ++seg) {
      std::string next_id;
      if (seg == segments) {
        next_id = p.to;
      } else {
        interior.id = p.id + "#n" + std::to_string(seg);
        next_id = interior.id;
        r.nodes.push_back(interior);
      }
      Pipe piece = p;
      piece.id = segments == 1 ? p.id : p.id + "#" + std::to_string(seg);
      piece.from = prev_id;
      piece.to = next_id;
      piece.length = p.length / segments;
      r.pipes.push_back(piece);
      prev_id = next_id;
    }

    // Compressors stay attached to their original node: FromSide lands on the
    // first segment, ToSide on the last.
    for (const Compressor& c : net.compressors) {
      if (c.edge != p.id) continue;
      Compressor moved = c;
      if (segments > 1)
        moved.edge = c.orientation == Orientation::FromSide
                         ? p.id + "#1"
                         : p.id + "#" + std::to_string(segments);
      r.compressors.push_back(moved);
    }
  }

  for (size_t i = 0; i < r.nodes.size(); ++i)
    r.node_lookup[r.nodes[i].id] = static_cast<int>(i);
  for (size_t k = 0; k < r.pipes.size(); ++k)
    r.edge_lookup[r.pipes[k].id] = static_cast<int>(k);

  r.edge_from.reserve(r.pipes.size());
  r.edge_to.reserve(r.pipes.size());
  for (const Pipe& p : r.pipes) {
    r.edge_from.push_back(r.node_lookup.at(p.from));
    r.edge_to.push_back(r.node_lookup.at(p.to));
  }

  r.slack_ordinal.assign(r.nodes.size(), -1);
  r.demand_ordinal.assign(r.nodes.size(), -1);
  for (size_t i = 0; i < r.nodes.size(); ++i) {
    if (r.nodes[i].kind == NodeKind::Slack) {
      r.slack_ordinal[i] = static_cast<int>(r.slack_vertices.size());
      r.slack_vertices.push_back(static_cast<int>(i));
    } else {
      r.demand_ordinal[i] = static_cast<int>(r.demand_vertices.size());
      r.demand_vertices.push_back(static_cast<int>(i));
    }
  }
  return r;
}

}  // namespace gasflow
