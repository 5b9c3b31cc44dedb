#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "vot/cohort.hpp"
#include "vot/error.hpp"
#include "vot/mahalanobis.hpp"
#include "vot/min_cost_flow.hpp"

namespace vot {

struct RatioConstraint {
  int max_controls_per_treated = 6;
  int max_treated_per_control = 6;
};

// Distances are scaled by this factor and rounded for the integral flow
// solver; optima are exact up to 1e-6 in distance units.
inline constexpr double kDistanceScale = 1e6;

namespace detail {

// A full match is a disjoint union of stars: each matched set has a singleton
// on one arm, and every within-set treated-control pair involves it. We solve
// the degree relaxation (each treated picks 1..U_T controls, each control is
// picked 1..U_C times) as a min-cost circulation; at a nonnegative-cost
// optimum any edge whose two endpoints both have degree >= 2 costs zero and
// can be dropped, which restores the star structure at equal cost.
struct MatchEdges {
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // (treated row, control col)
  std::int64_t scaled_cost = 0;
};

inline MatchEdges solve_full_match_edges(const DistanceMatrix& dm, const RatioConstraint& r) {
  require(r.max_controls_per_treated >= 1 && r.max_treated_per_control >= 1,
          errc::invalid_input, "ratio bounds must be >= 1");
  const std::size_t nt = dm.rows();
  const std::size_t nc = dm.cols();
  require(nt >= 1 && nc >= 1, errc::infeasible_match,
          "full match needs at least one treated and one control");
  require(nc <= static_cast<std::size_t>(r.max_controls_per_treated) * nt,
          errc::infeasible_match,
          "infeasible ratio: too many controls per treated (" + std::to_string(nc) + " controls, " +
              std::to_string(nt) + " treated, bound 1:" +
              std::to_string(r.max_controls_per_treated) + ")");
  require(nt <= static_cast<std::size_t>(r.max_treated_per_control) * nc,
          errc::infeasible_match,
          "infeasible ratio: too many treated per control (" + std::to_string(nt) + " treated, " +
              std::to_string(nc) + " controls, bound " +
              std::to_string(r.max_treated_per_control) + ":1)");

  // Circulation with lower bounds. Node layout: SS, TT, S, K, treated, controls.
  const int kSS = 0, kTT = 1, kS = 2, kK = 3;
  const auto tnode = [&](std::size_t t) { return 4 + static_cast<int>(t); };
  const auto cnode = [&](std::size_t c) { return 4 + static_cast<int>(nt + c); };
  MinCostFlow mcf(4 + static_cast<int>(nt + nc));

  // S -> treated, bounds [1, U_T]: forced unit becomes SS -> treated.
  for (std::size_t t = 0; t < nt; ++t) {
    mcf.add_arc(kS, tnode(t), r.max_controls_per_treated - 1, 0);
    mcf.add_arc(kSS, tnode(t), 1, 0);
  }
  mcf.add_arc(kS, kTT, static_cast<std::int64_t>(nt), 0);
  // control -> K, bounds [1, U_C].
  for (std::size_t c = 0; c < nc; ++c) {
    mcf.add_arc(cnode(c), kK, r.max_treated_per_control - 1, 0);
    mcf.add_arc(cnode(c), kTT, 1, 0);
  }
  mcf.add_arc(kSS, kK, static_cast<std::int64_t>(nc), 0);
  // K -> S closes the circulation.
  mcf.add_arc(kK, kS, static_cast<std::int64_t>(nt) * r.max_controls_per_treated, 0);

  std::vector<int> pair_arc(nt * nc, -1);
  for (std::size_t t = 0; t < nt; ++t) {
    for (std::size_t c = 0; c < nc; ++c) {
      const double dist = dm.at(t, c);
      if (!std::isfinite(dist)) continue;  // forbidden pair
      const auto cost = static_cast<std::int64_t>(std::llround(dist * kDistanceScale));
      pair_arc[t * nc + c] = mcf.add_arc(tnode(t), cnode(c), 1, cost);
    }
  }

  const std::int64_t demand = static_cast<std::int64_t>(nt + nc);
  const auto res = mcf.solve(kSS, kTT, demand);
  require(res.flow == demand, errc::infeasible_match,
          "no feasible full match: forbidden distances disconnect the problem");

  MatchEdges out;
  std::vector<int> tdeg(nt, 0), cdeg(nc, 0);
  std::vector<std::int64_t> edge_cost;
  for (std::size_t t = 0; t < nt; ++t)
    for (std::size_t c = 0; c < nc; ++c) {
      const int a = pair_arc[t * nc + c];
      if (a >= 0 && mcf.flow_on(a) > 0) {
        out.edges.emplace_back(t, c);
        edge_cost.push_back(
            static_cast<std::int64_t>(std::llround(dm.at(t, c) * kDistanceScale)));
        ++tdeg[t];
        ++cdeg[c];
      }
    }

  // Star cleanup: drop edges whose endpoints both still have other partners.
  // At the optimum such edges have zero scaled cost; drop order is fixed.
  bool changed = true;
  std::vector<bool> dropped(out.edges.size(), false);
  while (changed) {
    changed = false;
    for (std::size_t e = 0; e < out.edges.size(); ++e) {
      if (dropped[e]) continue;
      const auto [t, c] = out.edges[e];
      if (tdeg[t] >= 2 && cdeg[c] >= 2) {
        require(edge_cost[e] == 0, errc::numeric,
                "internal: positive-cost edge in degree-optimal solution");
        dropped[e] = true;
        --tdeg[t];
        --cdeg[c];
        changed = true;
      }
    }
  }
  MatchEdges cleaned;
  for (std::size_t e = 0; e < out.edges.size(); ++e) {
    if (dropped[e]) continue;
    cleaned.edges.push_back(out.edges[e]);
    cleaned.scaled_cost += edge_cost[e];
  }
  return cleaned;
}

}  // namespace detail

// Total within-set treated-control pair distance of a matched cohort.
inline double match_cost(const Cohort& matched, const DistanceMatrix& dm) {
  std::vector<std::size_t> row_of(matched.units.size(), static_cast<std::size_t>(-1));
  std::vector<std::size_t> col_of(matched.units.size(), static_cast<std::size_t>(-1));
  for (std::size_t i = 0; i < dm.treated_index.size(); ++i) row_of[dm.treated_index[i]] = i;
  for (std::size_t j = 0; j < dm.control_index.size(); ++j) col_of[dm.control_index[j]] = j;
  double total = 0.0;
  for (const auto& s : matched.sets)
    for (std::size_t a : s.members) {
      if (!matched.units[a].treated) continue;
      for (std::size_t b : s.members) {
        if (matched.units[b].treated) continue;
        total += dm.at(row_of[a], col_of[b]);
      }
    }
  return total;
}

// Optimal full match: partitions every treated and control unit into sets
// with min(m_i, n_i - m_i) = 1, sizes within the ratio bounds, minimizing the
// total within-set treated-control distance. Ties resolve deterministically
// through fixed arc ordering.
inline Cohort optimal_full_match(const Cohort& c, const DistanceMatrix& dm,
                                 const RatioConstraint& r = {}) {
  const auto edges = detail::solve_full_match_edges(dm, r);

  // Connected components of the star forest become matched sets.
  const std::size_t nt = dm.rows();
  const std::size_t nc = dm.cols();
  std::vector<std::vector<std::size_t>> t_adj(nt), c_adj(nc);
  for (std::size_t e = 0; e < edges.edges.size(); ++e) {
    t_adj[edges.edges[e].first].push_back(e);
    c_adj[edges.edges[e].second].push_back(e);
  }

  Cohort out = c;
  out.sets.clear();
  std::vector<bool> t_seen(nt, false), c_seen(nc, false);
  int next_id = 1;
  for (std::size_t t0 = 0; t0 < nt; ++t0) {
    if (t_seen[t0]) continue;
    MatchedSet s;
    s.set_id = next_id++;
    std::vector<std::size_t> t_stack{t0};
    std::vector<std::size_t> c_stack;
    t_seen[t0] = true;
    while (!t_stack.empty() || !c_stack.empty()) {
      if (!t_stack.empty()) {
        const std::size_t t = t_stack.back();
        t_stack.pop_back();
        s.members.push_back(dm.treated_index[t]);
        ++s.size;
        ++s.treated_count;
        for (std::size_t e : t_adj[t]) {
          const std::size_t cc = edges.edges[e].second;
          if (!c_seen[cc]) {
            c_seen[cc] = true;
            c_stack.push_back(cc);
          }
        }
      } else {
        const std::size_t cc = c_stack.back();
        c_stack.pop_back();
        s.members.push_back(dm.control_index[cc]);
        ++s.size;
        for (std::size_t e : c_adj[cc]) {
          const std::size_t tt = edges.edges[e].first;
          if (!t_seen[tt]) {
            t_seen[tt] = true;
            t_stack.push_back(tt);
          }
        }
      }
    }
    require(s.size - s.treated_count >= 1, errc::infeasible_match,
            "internal: treated unit left unmatched");
    require(std::min(s.treated_count, s.size - s.treated_count) == 1 &&
                s.size - s.treated_count <= r.max_controls_per_treated &&
                s.treated_count <= r.max_treated_per_control,
            errc::infeasible_match, "internal: emitted set violates match constraints");
    out.sets.push_back(std::move(s));
  }
  require(std::all_of(c_seen.begin(), c_seen.end(), [](bool b) { return b; }),
          errc::infeasible_match, "internal: control unit left unmatched");
  validate(out);
  return out;
}

}  // namespace vot
