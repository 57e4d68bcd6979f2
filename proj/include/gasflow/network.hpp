#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "gasflow/units.hpp"

namespace gasflow {

enum class NodeKind { Slack, Demand };

/// A junction. Density bounds are stored non-dimensionally (units of rho0).
struct Node {
  std::string id;
  NodeKind kind = NodeKind::Demand;
  double rho_min = 0.0;
  double rho_max = 0.0;
};

/// A pipe segment, directed from `from` to `to`. Lengths are dimensional
/// metres; the non-dimensional length L/l lives in NetworkMatrices.
struct Pipe {
  std::string id;
  std::string from;
  std::string to;
  double length = 0.0;    ///< [m]
  double diameter = 0.0;  ///< [m]
  double friction = 0.0;  ///< Darcy friction factor lambda
};

/// Which end of its edge a compressor boosts: FromSide multiplies the density
/// entering the edge at `from` ("+"), ToSide the density at `to` ("-").
enum class Orientation { FromSide, ToSide };

struct Compressor {
  std::string id;
  std::string edge;  ///< pipe id it sits on
  Orientation orientation = Orientation::FromSide;
  double alpha_max = 2.0;
  double efficiency = 1.0;
};

/// User-level network description, before spatial refinement.
struct GasNetwork {
  GasConstants constants;
  std::vector<Node> nodes;
  std::vector<Pipe> pipes;
  std::vector<Compressor> compressors;

  int node_index(const std::string& id) const;
  int pipe_index(const std::string& id) const;

  /// Structural checks: unique ids, endpoints exist, connected, at least one
  /// slack node, positive lengths/diameters/frictions, rho_min < rho_max,
  /// no parallel or reverse-parallel duplicate edges, compressors reference
  /// existing pipes (at most one per pipe end), alpha_max >= 1,
  /// efficiency in (0, 1]. Throws ValidationError.
  void validate() const;
};

/// Result of splitting every pipe into segments no longer than segment_max.
/// Vertex order: original nodes first (their input order), then added
/// interior nodes. Edge k runs from vertex edge_from[k] to edge_to[k];
/// segment ids are "<pipe>#<n>". Compressors are remapped onto the boundary
/// segment adjacent to their original node.
struct RefinedNetwork {
  GasConstants constants;
  std::vector<Node> nodes;
  std::vector<Pipe> pipes;
  std::vector<Compressor> compressors;
  double segment_max = 0.0;  ///< [m]

  std::vector<int> edge_from;  ///< vertex index at x = 0 of each edge
  std::vector<int> edge_to;    ///< vertex index at x = L of each edge

  // Partition of vertices into slack and demand sets; the positions in these
  // lists fix the ordering of the s, rho and d vectors everywhere else.
  std::vector<int> slack_vertices;
  std::vector<int> demand_vertices;
  std::vector<int> slack_ordinal;   ///< vertex -> position in slack_vertices or -1
  std::vector<int> demand_ordinal;  ///< vertex -> position in demand_vertices or -1

  std::unordered_map<std::string, int> node_lookup;
  std::unordered_map<std::string, int> edge_lookup;

  int num_vertices() const { return static_cast<int>(nodes.size()); }
  int num_edges() const { return static_cast<int>(pipes.size()); }
  int num_demand() const { return static_cast<int>(demand_vertices.size()); }
  int num_slack() const { return static_cast<int>(slack_vertices.size()); }
  int num_compressors() const { return static_cast<int>(compressors.size()); }
};

/// Split pipes so no segment exceeds segment_max metres (ceil(L/segment_max)
/// equal pieces; a pipe of exactly segment_max stays whole). Added nodes are
/// zero-withdrawal demand nodes inheriting the tighter of the two parent
/// endpoint bounds. Validates the input network first.
RefinedNetwork refine(const GasNetwork& net, double segment_max);

}  // namespace gasflow
