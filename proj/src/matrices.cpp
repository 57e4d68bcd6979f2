#include "gasflow/matrices.hpp"

#include <stdexcept>

#include "gasflow/errors.hpp"

namespace gasflow {

NetworkMatrices assemble_matrices(const RefinedNetwork& net) {
  NetworkMatrices m;
  m.num_vertices = net.num_vertices();
  m.num_edges = net.num_edges();
  m.num_demand = net.num_demand();
  m.num_slack = net.num_slack();
  m.edge_from = net.edge_from;
  m.edge_to = net.edge_to;
  m.slack_ordinal = net.slack_ordinal;
  m.demand_ordinal = net.demand_ordinal;
  m.slack_vertices = net.slack_vertices;
  m.demand_vertices = net.demand_vertices;

  const int V = m.num_vertices, E = m.num_edges;
  std::vector<Eigen::Triplet<double>> ta, ts, td, tl, t0;
  for (int k = 0; k < E; ++k) {
    const int u = m.edge_from[k], v = m.edge_to[k];
    ta.emplace_back(u, k, -1.0);  // edge leaves u
    ta.emplace_back(v, k, +1.0);  // edge enters v
    if (m.demand_ordinal[u] >= 0) {
      td.emplace_back(m.demand_ordinal[u], k, -1.0);
      t0.emplace_back(m.demand_ordinal[u], k, -1.0);
    } else {
      ts.emplace_back(m.slack_ordinal[u], k, -1.0);
    }
    if (m.demand_ordinal[v] >= 0) {
      td.emplace_back(m.demand_ordinal[v], k, +1.0);
      tl.emplace_back(m.demand_ordinal[v], k, +1.0);
    } else {
      ts.emplace_back(m.slack_ordinal[v], k, +1.0);
    }
  }
  m.A.resize(V, E);
  m.A.setFromTriplets(ta.begin(), ta.end());
  m.A_s.resize(m.num_slack, E);
  m.A_s.setFromTriplets(ts.begin(), ts.end());
  m.A_d.resize(m.num_demand, E);
  m.A_d.setFromTriplets(td.begin(), td.end());
  m.A_L.resize(m.num_demand, E);
  m.A_L.setFromTriplets(tl.begin(), tl.end());
  m.A_0.resize(m.num_demand, E);
  m.A_0.setFromTriplets(t0.begin(), t0.end());

  m.lambda.resize(E);
  m.kappa.resize(E);
  m.edge_ids.resize(E);
  for (int k = 0; k < E; ++k) {
    const Pipe& p = net.pipes[k];
    m.lambda[k] = p.length / net.constants.nominal_length;
    m.kappa[k] = net.constants.nominal_length * p.friction / p.diameter;
    m.edge_ids[k] = p.id;
  }

  m.vertex_ids.resize(V);
  m.rho_min.resize(V);
  m.rho_max.resize(V);
  for (int v = 0; v < V; ++v) {
    m.vertex_ids[v] = net.nodes[v].id;
    m.rho_min[v] = net.nodes[v].rho_min;
    m.rho_max[v] = net.nodes[v].rho_max;
  }

  m.comp_at_edge_from.assign(E, -1);
  m.comp_at_edge_to.assign(E, -1);
  for (const Compressor& c : net.compressors) {
    CompressorSlot slot;
    slot.edge = net.edge_lookup.at(c.edge);
    slot.at_from = c.orientation == Orientation::FromSide;
    slot.vertex = slot.at_from ? m.edge_from[slot.edge] : m.edge_to[slot.edge];
    slot.alpha_max = c.alpha_max;
    slot.efficiency = c.efficiency;
    const int idx = static_cast<int>(m.compressors.size());
    (slot.at_from ? m.comp_at_edge_from : m.comp_at_edge_to)[slot.edge] = idx;
    m.compressors.push_back(slot);
  }
  return m;
}

void weighted_incidence(const NetworkMatrices& m, const Eigen::VectorXd& alpha,
                        Eigen::SparseMatrix<double>* B,
                        Eigen::SparseMatrix<double>* B_s,
                        Eigen::SparseMatrix<double>* B_d) {
  if (alpha.size() != m.num_compressors())
    throw std::invalid_argument("alpha size does not match compressor count");
  constexpr double slack = 1e-9;
  for (int c = 0; c < alpha.size(); ++c)
    if (alpha[c] < 1.0 - slack || alpha[c] > m.compressors[c].alpha_max + slack)
      throw StateDomainError("compression ratio outside [1, alpha_max]");

  std::vector<Eigen::Triplet<double>> tb, ts, td;
  for (int k = 0; k < m.num_edges; ++k) {
    const int u = m.edge_from[k], v = m.edge_to[k];
    const double au = m.alpha_at_from(k, alpha);
    const double av = m.alpha_at_to(k, alpha);
    tb.emplace_back(u, k, -au);
    tb.emplace_back(v, k, +av);
    if (m.demand_ordinal[u] >= 0)
      td.emplace_back(m.demand_ordinal[u], k, -au);
    else
      ts.emplace_back(m.slack_ordinal[u], k, -au);
    if (m.demand_ordinal[v] >= 0)
      td.emplace_back(m.demand_ordinal[v], k, +av);
    else
      ts.emplace_back(m.slack_ordinal[v], k, +av);
  }
  if (B) {
    B->resize(m.num_vertices, m.num_edges);
    B->setFromTriplets(tb.begin(), tb.end());
  }
  if (B_s) {
    B_s->resize(m.num_slack, m.num_edges);
    B_s->setFromTriplets(ts.begin(), ts.end());
  }
  if (B_d) {
    B_d->resize(m.num_demand, m.num_edges);
    B_d->setFromTriplets(td.begin(), td.end());
  }
}

}  // namespace gasflow
