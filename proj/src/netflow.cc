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
#include "vrmatch/netflow.h"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <queue>
#include <sstream>

#include "vrmatch/error.h"

namespace vrmatch {

namespace {

constexpr CostValue kUnreachable = std::numeric_limits<CostValue>::max();

// Residual graph with paired edges: edge e and e ^ 1 are mutual reverses.
class Residual {
 public:
  struct Edge {
    int to;
    FlowQuantity cap;
    CostValue cost;
  };

  explicit Residual(int n) : adj_(static_cast<size_t>(n)) {}

  int Add(int from, int to, FlowQuantity cap, CostValue cost) {
    const int id = static_cast<int>(edges_.size());
    edges_.push_back({to, cap, cost});
    edges_.push_back({from, 0, -cost});
    adj_[static_cast<size_t>(from)].push_back(id);
    adj_[static_cast<size_t>(to)].push_back(id + 1);
    return id;
  }

  int size() const { return static_cast<int>(adj_.size()); }
  std::vector<Edge>& edges() { return edges_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<int>& out(int v) const {
    return adj_[static_cast<size_t>(v)];
  }

  // Shortest distances from `source` with Bellman-Ford (queue-based).
  // Returns false on a negative cycle reachable from `source`.
  bool BellmanFord(int source, std::vector<CostValue>& dist) const {
    const int n = size();
    dist.assign(static_cast<size_t>(n), kUnreachable);
    std::vector<int> relaxations(static_cast<size_t>(n), 0);
    std::vector<char> queued(static_cast<size_t>(n), 0);
    std::deque<int> queue;
    dist[static_cast<size_t>(source)] = 0;
    queue.push_back(source);
    queued[static_cast<size_t>(source)] = 1;
    while (!queue.empty()) {
      const int v = queue.front();
      queue.pop_front();
      queued[static_cast<size_t>(v)] = 0;
      for (int e : out(v)) {
        const Edge& edge = edges_[static_cast<size_t>(e)];
        if (edge.cap <= 0) continue;
        const CostValue nd = dist[static_cast<size_t>(v)] + edge.cost;
        if (nd < dist[static_cast<size_t>(edge.to)]) {
          dist[static_cast<size_t>(edge.to)] = nd;
          if (++relaxations[static_cast<size_t>(edge.to)] > n) return false;
          if (!queued[static_cast<size_t>(edge.to)]) {
            queued[static_cast<size_t>(edge.to)] = 1;
            queue.push_back(edge.to);
          }
        }
      }
    }
    return true;
  }

 private:
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adj_;
};

void CheckNetwork(const FlowNetwork& net) {
  FlowQuantity total = 0;
  for (FlowQuantity s : net.supplies()) total += s;
  if (total != 0) {
    throw ValidationError("node supplies sum to " + std::to_string(total) +
                          ", expected 0");
  }
  for (const Arc& a : net.arcs()) {
    if (a.capacity < 0) throw ValidationError("arc with negative capacity");
    if (a.from < 0 || a.from >= net.num_nodes() || a.to < 0 ||
        a.to >= net.num_nodes()) {
      throw ValidationError("arc endpoint out of range");
    }
  }
}

}  // namespace

int FlowNetwork::AddNode(FlowQuantity supply) {
  supplies_.push_back(supply);
  return static_cast<int>(supplies_.size()) - 1;
}

int FlowNetwork::AddArc(int from, int to, FlowQuantity capacity,
                        CostValue cost) {
  arcs_.push_back({from, to, capacity, cost});
  return static_cast<int>(arcs_.size()) - 1;
}

void FlowNetwork::SetSupply(int node, FlowQuantity supply) {
  supplies_.at(static_cast<size_t>(node)) = supply;
}

std::string FlowNetwork::DumpText() const {
  std::ostringstream out;
  out << "nodes " << num_nodes() << " arcs " << num_arcs() << "\n";
  for (int v = 0; v < num_nodes(); ++v) {
    out << "n " << v << " " << supplies_[static_cast<size_t>(v)] << "\n";
  }
  for (const Arc& a : arcs_) {
    out << "a " << a.from << " " << a.to << " " << a.capacity << " " << a.cost
        << "\n";
  }
  return out.str();
}

FlowSolution SolveMinCostFlow(const FlowNetwork& net) {
  CheckNetwork(net);
  const int n = net.num_nodes();
  const int source = n;
  const int sink = n + 1;
  Residual g(n + 2);
  for (const Arc& a : net.arcs()) g.Add(a.from, a.to, a.capacity, a.cost);
  FlowQuantity required = 0;
  for (int v = 0; v < n; ++v) {
    const FlowQuantity s = net.supplies()[static_cast<size_t>(v)];
    if (s > 0) {
      g.Add(source, v, s, 0);
      required += s;
    } else if (s < 0) {
      g.Add(v, sink, -s, 0);
    }
  }

  std::vector<CostValue> pot;
  if (!g.BellmanFord(source, pot)) {
    throw ValidationError("network has a negative-cost cycle");
  }
  for (CostValue& p : pot) {
    if (p == kUnreachable) p = 0;
  }

  auto& edges = g.edges();
  std::vector<CostValue> dist(static_cast<size_t>(n + 2));
  std::vector<int> via(static_cast<size_t>(n + 2));
  std::vector<char> done(static_cast<size_t>(n + 2));
  using Item = std::pair<CostValue, int>;
  FlowQuantity sent = 0;
  while (sent < required) {
    std::fill(dist.begin(), dist.end(), kUnreachable);
    std::fill(via.begin(), via.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    // Min-heap on (distance, node): equal distances settle the lower index
    // first, which fixes the tie-breaking among equal-cost paths.
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
    dist[static_cast<size_t>(source)] = 0;
    heap.emplace(0, source);
    while (!heap.empty()) {
      auto [d, v] = heap.top();
      heap.pop();
      if (done[static_cast<size_t>(v)]) continue;
      done[static_cast<size_t>(v)] = 1;
      for (int e : g.out(v)) {
        const auto& edge = edges[static_cast<size_t>(e)];
        if (edge.cap <= 0 || done[static_cast<size_t>(edge.to)]) continue;
        const CostValue reduced = edge.cost + pot[static_cast<size_t>(v)] -
                                  pot[static_cast<size_t>(edge.to)];
        assert(reduced >= 0);
        const CostValue nd = d + reduced;
        if (nd < dist[static_cast<size_t>(edge.to)]) {
          dist[static_cast<size_t>(edge.to)] = nd;
          via[static_cast<size_t>(edge.to)] = e;
          heap.emplace(nd, edge.to);
        }
      }
    }
    if (dist[static_cast<size_t>(sink)] == kUnreachable) break;
    // Capping at the sink distance keeps every residual reduced cost
    // nonnegative, including arcs out of nodes the search did not settle.
    const CostValue cap = dist[static_cast<size_t>(sink)];
    for (int v = 0; v < n + 2; ++v) {
      pot[static_cast<size_t>(v)] += std::min(dist[static_cast<size_t>(v)], cap);
    }
    FlowQuantity push = required - sent;
    for (int v = sink; v != source;) {
      const int e = via[static_cast<size_t>(v)];
      push = std::min(push, edges[static_cast<size_t>(e)].cap);
      v = edges[static_cast<size_t>(e ^ 1)].to;
    }
    for (int v = sink; v != source;) {
      const int e = via[static_cast<size_t>(v)];
      edges[static_cast<size_t>(e)].cap -= push;
      edges[static_cast<size_t>(e ^ 1)].cap += push;
      v = edges[static_cast<size_t>(e ^ 1)].to;
    }
    sent += push;
  }

  FlowSolution sol;
  sol.feasible = sent == required;
  sol.flow.resize(static_cast<size_t>(net.num_arcs()));
  for (int a = 0; a < net.num_arcs(); ++a) {
    // Flow on a forward edge equals the capacity of its reverse.
    sol.flow[static_cast<size_t>(a)] = edges[static_cast<size_t>(2 * a + 1)].cap;
    sol.total_cost +=
        sol.flow[static_cast<size_t>(a)] * net.arcs()[static_cast<size_t>(a)].cost;
  }
  if (sol.feasible) {
    sol.potentials.assign(pot.begin(), pot.begin() + n);
  }
  return sol;
}

std::optional<std::vector<CostValue>> OptimalityCertificate(
    const FlowNetwork& net, const std::vector<FlowQuantity>& flow) {
  CheckNetwork(net);
  const int n = net.num_nodes();
  if (static_cast<int>(flow.size()) != net.num_arcs()) return std::nullopt;
  std::vector<FlowQuantity> balance(static_cast<size_t>(n), 0);
  for (int a = 0; a < net.num_arcs(); ++a) {
    const Arc& arc = net.arcs()[static_cast<size_t>(a)];
    const FlowQuantity f = flow[static_cast<size_t>(a)];
    if (f < 0 || f > arc.capacity) return std::nullopt;
    balance[static_cast<size_t>(arc.from)] += f;
    balance[static_cast<size_t>(arc.to)] -= f;
  }
  for (int v = 0; v < n; ++v) {
    if (balance[static_cast<size_t>(v)] != net.supplies()[static_cast<size_t>(v)]) {
      return std::nullopt;
    }
  }
  // A virtual root with zero-cost arcs to every node: Bellman-Ford from it
  // succeeds iff the residual graph has no negative cycle.
  const int root = n;
  Residual g(n + 1);
  for (int a = 0; a < net.num_arcs(); ++a) {
    const Arc& arc = net.arcs()[static_cast<size_t>(a)];
    const FlowQuantity f = flow[static_cast<size_t>(a)];
    if (arc.capacity - f > 0) g.Add(arc.from, arc.to, arc.capacity - f, arc.cost);
    if (f > 0) g.Add(arc.to, arc.from, f, -arc.cost);
  }
  for (int v = 0; v < n; ++v) g.Add(root, v, 1, 0);
  std::vector<CostValue> dist;
  if (!g.BellmanFord(root, dist)) return std::nullopt;
  dist.resize(static_cast<size_t>(n));
  // dist is a feasible potential with reduced costs c + d(u) - d(v) >= 0.
  return dist;
}

CostMatrix Integerize(const Eigen::MatrixXd& d, CostValue scale) {
  if (scale <= 0) throw ValidationError("cost scale must be positive");
  CostMatrix out(d.rows(), d.cols());
  const double limit = static_cast<double>(kMaxIntegerCost);
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      const double v = d(i, j);
      if (!std::isfinite(v) || v < 0.0) {
        throw ValidationError("cannot integerize a negative or non-finite cost");
      }
      const double scaled = std::round(v * static_cast<double>(scale));
      if (scaled > limit) {
        throw NumericError("scaled cost " + std::to_string(scaled) +
                           " exceeds the solver range; use a smaller scale");
      }
      out(i, j) = static_cast<CostValue>(scaled);
    }
  }
  return out;
}

}  // namespace vrmatch
