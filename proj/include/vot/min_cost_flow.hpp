#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <queue>
#include <vector>

#include "vot/error.hpp"

namespace vot {

// Min-cost max-flow via successive shortest paths with Johnson potentials.
// Costs must be nonnegative. Arc order is fixed by insertion order and
// Dijkstra breaks ties by (distance, node), so results are deterministic.
class MinCostFlow {
 public:
  explicit MinCostFlow(int num_nodes) : head_(num_nodes, -1) {}

  // Returns the arc id; use flow_on(id) after solve().
  int add_arc(int from, int to, std::int64_t capacity, std::int64_t cost) {
    const int id = static_cast<int>(arcs_.size());
    arcs_.push_back({to, head_[from], capacity, cost});
    head_[from] = id;
    arcs_.push_back({from, head_[to], 0, -cost});
    head_[to] = id + 1;
    return id;
  }

  struct Result {
    std::int64_t flow = 0;
    std::int64_t cost = 0;
  };

  // Pushes flow from s to t until max_flow or no augmenting path remains.
  Result solve(int s, int t, std::int64_t max_flow) {
    const auto n = head_.size();
    std::vector<std::int64_t> potential(n, 0);
    std::vector<std::int64_t> dist(n);
    std::vector<int> parent_arc(n);
    Result res;
    constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;

    while (res.flow < max_flow) {
      std::fill(dist.begin(), dist.end(), kInf);
      std::fill(parent_arc.begin(), parent_arc.end(), -1);
      dist[s] = 0;
      using Item = std::pair<std::int64_t, int>;
      std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
      pq.push({0, s});
      while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d != dist[u]) continue;
        for (int a = head_[u]; a != -1; a = arcs_[a].next) {
          const Arc& arc = arcs_[a];
          if (arc.capacity <= 0) continue;
          const std::int64_t nd = d + arc.cost + potential[u] - potential[arc.to];
          if (nd < dist[arc.to]) {
            dist[arc.to] = nd;
            parent_arc[arc.to] = a;
            pq.push({nd, arc.to});
          }
        }
      }
      if (dist[t] >= kInf) break;  // t unreachable
      for (std::size_t v = 0; v < n; ++v) potential[v] += std::min(dist[v], dist[t]);

      std::int64_t push = max_flow - res.flow;
      for (int v = t; v != s;) {
        const Arc& arc = arcs_[parent_arc[v]];
        push = std::min(push, arc.capacity);
        v = arcs_[parent_arc[v] ^ 1].to;
      }
      for (int v = t; v != s;) {
        const int a = parent_arc[v];
        arcs_[a].capacity -= push;
        arcs_[a ^ 1].capacity += push;
        res.cost += push * arcs_[a].cost;
        v = arcs_[a ^ 1].to;
      }
      res.flow += push;
    }
    return res;
  }

  std::int64_t flow_on(int arc_id) const { return arcs_[arc_id ^ 1].capacity; }

 private:
  struct Arc {
    int to;
    int next;
    std::int64_t capacity;
    std::int64_t cost;
  };
  std::vector<Arc> arcs_;
  std::vector<int> head_;
};

}  // namespace vot
