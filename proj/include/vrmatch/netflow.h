/*
 * Copyright 2026 The vrmatch Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
// Integer minimum-cost flow by successive shortest augmenting paths.
//
// Node potentials are initialized with Bellman-Ford (arc costs may be
// negative as long as no negative cycle exists) and then maintained so that
// every shortest-path search runs Dijkstra on nonnegative reduced costs.
// With integer data the returned flow is an exact integral optimum.
//
// Example:
//   FlowNetwork net;
//   int s = net.AddNode(1), t = net.AddNode(-1);
//   net.AddArc(s, t, 1, 7);
//   FlowSolution sol = SolveMinCostFlow(net);  // sol.total_cost == 7

#ifndef VRMATCH_NETFLOW_H_
#define VRMATCH_NETFLOW_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace vrmatch {

using FlowQuantity = std::int64_t;
using CostValue = std::int64_t;

// Largest magnitude Integerize will produce; leaves headroom for path sums.
inline constexpr CostValue kMaxIntegerCost = 1'000'000'000'000'000;  // 1e15

struct Arc {
  int from = 0;
  int to = 0;
  FlowQuantity capacity = 0;
  CostValue cost = 0;
};

class FlowNetwork {
 public:
  // Positive supply is a source, negative a sink.
  int AddNode(FlowQuantity supply = 0);
  int AddArc(int from, int to, FlowQuantity capacity, CostValue cost);
  void SetSupply(int node, FlowQuantity supply);

  int num_nodes() const { return static_cast<int>(supplies_.size()); }
  int num_arcs() const { return static_cast<int>(arcs_.size()); }
  const std::vector<FlowQuantity>& supplies() const { return supplies_; }
  const std::vector<Arc>& arcs() const { return arcs_; }

  // Plain-text arc list:
  //   nodes <n> arcs <m>
  //   n <id> <supply>          (one line per node)
  //   a <from> <to> <cap> <cost>  (one line per arc)
  std::string DumpText() const;

 private:
  std::vector<FlowQuantity> supplies_;
  std::vector<Arc> arcs_;
};

struct FlowSolution {
  std::vector<FlowQuantity> flow;  // per arc
  CostValue total_cost = 0;
  bool feasible = false;
  // Dual potentials certifying optimality (empty when infeasible).
  std::vector<CostValue> potentials;
};

// Throws ValidationError when supplies do not sum to zero or an arc has
// negative capacity or an invalid endpoint.
FlowSolution SolveMinCostFlow(const FlowNetwork& net);

// Recomputes potentials for `flow`'s residual graph from scratch. Returns
// nullopt when the residual graph has a negative cycle (i.e. `flow` is not a
// min-cost flow for its supplies) or `flow` violates capacity/conservation.
std::optional<std::vector<CostValue>> OptimalityCertificate(
    const FlowNetwork& net, const std::vector<FlowQuantity>& flow);

using CostMatrix = Eigen::Matrix<CostValue, Eigen::Dynamic, Eigen::Dynamic>;

// round(entry * scale) for each entry. Throws when an entry is negative or
// not finite, or the scaled value exceeds kMaxIntegerCost.
CostMatrix Integerize(const Eigen::MatrixXd& d, CostValue scale = 10'000);

}  // namespace vrmatch

#endif  // VRMATCH_NETFLOW_H_
