#pragma once

// Independent reference implementations the library is checked against.

#include <cmath>
#include <vector>

#include "rwdecoy/kb/msg.hpp"

namespace rwtest {

using rwdecoy::kb::MsgGraph;

// Exhaustive injection search: pattern nodes are placed in index order and
// every pattern edge among placed nodes must exist in the observed graph.
inline bool brute_force_match(const MsgGraph& observed, const MsgGraph& pattern) {
  const std::size_t p = pattern.nodes.size();
  const std::size_t n = observed.nodes.size();
  if (p > n) return false;
  std::vector<std::uint32_t> map(p);
  std::vector<bool> used(n, false);

  auto fits = [&](std::size_t pu, std::uint32_t ov) {
    const auto& pc = pattern.nodes[pu].api_class.members;
    const auto& oc = observed.nodes[ov].api_class.members;
    return oc.any() && (oc & ~pc).none();
  };
  auto edges_hold = [&](std::size_t placed) {
    for (const auto& e : pattern.edges) {
      if (e.from >= placed || e.to >= placed) continue;
      if (!observed.has_edge(map[e.from], map[e.to], e.dep)) return false;
    }
    return true;
  };
  auto place = [&](auto&& self, std::size_t pu) -> bool {
    if (pu == p) return true;
    for (std::uint32_t ov = 0; ov < n; ++ov) {
      if (used[ov] || !fits(pu, ov)) continue;
      map[pu] = ov;
      used[ov] = true;
      if (edges_hold(pu + 1) && self(self, pu + 1)) return true;
      used[ov] = false;
    }
    return false;
  };
  return place(place, 0);
}

// H = -sum p_i log2 p_i by direct summation in extended precision.
inline double entropy_oracle(const std::vector<std::uint8_t>& data) {
  long double counts[256] = {};
  for (auto b : data) counts[b] += 1;
  long double h = 0;
  const long double total = static_cast<long double>(data.size());
  for (long double c : counts) {
    if (c == 0) continue;
    const long double q = c / total;
    h -= q * std::log2(q);
  }
  return static_cast<double>(h);
}

}  // namespace rwtest
