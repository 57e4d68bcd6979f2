#pragma once

#include <Eigen/Sparse>
#include <vector>

#include "gasflow/network.hpp"

namespace gasflow {

/// Placement of one compressor after refinement.
struct CompressorSlot {
  int edge = -1;        ///< edge index it sits on
  bool at_from = true;  ///< true: boosts density entering at x=0
  int vertex = -1;      ///< the vertex whose density it multiplies
  double alpha_max = 2.0;
  double efficiency = 1.0;
};

/// Constant graph operators of the reduced network model, plus the index
/// bookkeeping the flow equations need. Row order of A_s/A_d (and therefore
/// of the s, rho, d vectors) follows RefinedNetwork::slack_/demand_vertices.
struct NetworkMatrices {
  Eigen::SparseMatrix<double> A;    ///< V x E sign incidence (+1 into a node)
  Eigen::SparseMatrix<double> A_s;  ///< slack rows of A
  Eigen::SparseMatrix<double> A_d;  ///< demand rows of A
  Eigen::SparseMatrix<double> A_L;  ///< positive part of A_d (edges entering)
  Eigen::SparseMatrix<double> A_0;  ///< negative part of A_d (edges leaving)

  Eigen::VectorXd lambda;  ///< non-dimensional segment lengths L_k/l
  Eigen::VectorXd kappa;   ///< friction scale l*lambda_k/D_k per edge

  std::vector<std::string> vertex_ids;  ///< node id per vertex
  std::vector<std::string> edge_ids;    ///< segment id per edge
  Eigen::VectorXd rho_min;              ///< density bound per vertex
  Eigen::VectorXd rho_max;

  std::vector<int> edge_from;        ///< vertex at x=0 per edge
  std::vector<int> edge_to;          ///< vertex at x=L per edge
  std::vector<int> slack_ordinal;    ///< vertex -> slack position or -1
  std::vector<int> demand_ordinal;   ///< vertex -> demand position or -1
  std::vector<int> slack_vertices;   ///< slack position -> vertex
  std::vector<int> demand_vertices;  ///< demand position -> vertex

  std::vector<CompressorSlot> compressors;
  std::vector<int> comp_at_edge_from;  ///< edge -> compressor index or -1
  std::vector<int> comp_at_edge_to;    ///< edge -> compressor index or -1

  int num_vertices = 0;
  int num_edges = 0;
  int num_demand = 0;
  int num_slack = 0;
  int num_compressors() const { return static_cast<int>(compressors.size()); }

  /// Compression ratios applied at the two ends of an edge (1 when no
  /// compressor occupies that end). `alpha` is ordered like `compressors`.
  double alpha_at_from(int edge, const Eigen::VectorXd& alpha) const {
    int c = comp_at_edge_from[edge];
    return c < 0 ? 1.0 : alpha[c];
  }
  double alpha_at_to(int edge, const Eigen::VectorXd& alpha) const {
    int c = comp_at_edge_to[edge];
    return c < 0 ? 1.0 : alpha[c];
  }
};

/// Build the constant operators from a refined network.
NetworkMatrices assemble_matrices(const RefinedNetwork& net);

/// Compression-weighted incidence matrix B(alpha): entry (i, k) is +alpha at
/// the boosted end entering node i, -alpha at the boosted end leaving node i,
/// +-1 at plain ends. Also returns the slack/demand row blocks. Throws
/// StateDomainError when alpha leaves [1, alpha_max] beyond a small slack
/// (simulation callers clamp; optimization treats the bound as a constraint).
void weighted_incidence(const NetworkMatrices& mats, const Eigen::VectorXd& alpha,
                        Eigen::SparseMatrix<double>* B,
                        Eigen::SparseMatrix<double>* B_s,
                        Eigen::SparseMatrix<double>* B_d);

}  // namespace gasflow
