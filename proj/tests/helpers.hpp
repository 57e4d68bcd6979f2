#pragma once

#include <random>
#include <string>

#include "gasflow/network.hpp"

namespace gasflow::testing {

/// Straight chain n1 - n2 - ... - nk with n1 slack; pipe ids e1..e(k-1).
inline GasNetwork chain_network(int num_nodes, double length_m = 10.0e3,
                                double diameter = 0.9144, double friction = 0.01,
                                double rho_min = 1.0, double rho_max = 1.6) {
  GasNetwork net;
  for (int i = 1; i <= num_nodes; ++i) {
    Node n;
    n.id = "n" + std::to_string(i);
    n.kind = i == 1 ? NodeKind::Slack : NodeKind::Demand;
    n.rho_min = rho_min;
    n.rho_max = rho_max;
    net.nodes.push_back(n);
  }
  for (int i = 1; i < num_nodes; ++i) {
    Pipe p;
    p.id = "e" + std::to_string(i);
    p.from = "n" + std::to_string(i);
    p.to = "n" + std::to_string(i + 1);
    p.length = length_m;
    p.diameter = diameter;
    p.friction = friction;
    net.pipes.push_back(p);
  }
  return net;
}

/// Random tree on `num_nodes` vertices: node i attaches to a random earlier
/// node, random lengths/diameters, `num_slack` slack nodes from the root.
inline GasNetwork random_tree(std::mt19937_64& rng, int num_nodes, int num_slack = 1) {
  std::uniform_real_distribution<double> len(5.0e3, 30.0e3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  GasNetwork net;
  for (int i = 0; i < num_nodes; ++i) {
    Node n;
    n.id = "n" + std::to_string(i + 1);
    n.kind = i < num_slack ? NodeKind::Slack : NodeKind::Demand;
    n.rho_min = 0.5;
    n.rho_max = 2.5;
    net.nodes.push_back(n);
  }
  for (int i = 1; i < num_nodes; ++i) {
    std::uniform_int_distribution<int> parent(0, i - 1);
    Pipe p;
    p.id = "e" + std::to_string(i);
    int j = parent(rng);
    // Random direction so edges do not all point away from the root.
    if (unit(rng) < 0.5) {
      p.from = net.nodes[j].id;
      p.to = net.nodes[i].id;
    } else {
      p.from = net.nodes[i].id;
      p.to = net.nodes[j].id;
    }
    p.length = len(rng);
    p.diameter = unit(rng) < 0.5 ? 0.9144 : 0.635;
    p.friction = 0.01;
    net.pipes.push_back(p);
  }
  return net;
}

}  // namespace gasflow::testing
