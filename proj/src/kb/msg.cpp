#include "rwdecoy/kb/msg.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>
#include <unordered_map>

#include <json.hpp>

namespace rwdecoy::kb {

using simcore::ApiEvent;
using simcore::Buffer;
using simcore::HandleId;

std::string_view to_string(DepKind d) {
  switch (d) {
    case DepKind::handle: return "handle";
    case DepKind::buffer: return "buffer";
    case DepKind::path: return "path";
  }
  return "handle";
}

std::optional<DepKind> dep_from_string(std::string_view s) {
  if (s == "handle") return DepKind::handle;
  if (s == "buffer") return DepKind::buffer;
  if (s == "path") return DepKind::path;
  return std::nullopt;
}

bool MsgGraph::has_edge(std::uint32_t from, std::uint32_t to, DepKind dep) const {
  return std::find(edges.begin(), edges.end(), MsgEdge{from, to, dep}) != edges.end();
}

bool same_structure(const MsgGraph& a, const MsgGraph& b) {
  if (a.nodes.size() != b.nodes.size() || a.terminal != b.terminal) return false;
  for (std::size_t i = 0; i < a.nodes.size(); ++i) {
    if (a.nodes[i].id != b.nodes[i].id || !(a.nodes[i].api_class == b.nodes[i].api_class)) return false;
  }
  auto key = [](const MsgEdge& e) { return std::make_tuple(e.from, e.to, e.dep); };
  std::set<std::tuple<std::uint32_t, std::uint32_t, DepKind>> ea, eb;
  for (const auto& e : a.edges) ea.insert(key(e));
  for (const auto& e : b.edges) eb.insert(key(e));
  return ea == eb;
}

void validate_graph(const MsgGraph& g) {
  if (g.nodes.empty()) throw Error(ErrorCode::format, "field 'nodes': graph has no nodes");
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (g.nodes[i].id != i) throw Error(ErrorCode::format, "field 'nodes[" + std::to_string(i) + "].id': ids must be dense");
    if (g.nodes[i].api_class.members.none()) {
      throw Error(ErrorCode::format, "field 'nodes[" + std::to_string(i) + "].class': empty class");
    }
  }
  const auto n = static_cast<std::uint32_t>(g.nodes.size());
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    if (g.edges[i].from >= n || g.edges[i].to >= n || g.edges[i].from == g.edges[i].to) {
      throw Error(ErrorCode::format, "field 'edges[" + std::to_string(i) + "]': endpoint out of range");
    }
  }
  if (g.terminal >= n) throw Error(ErrorCode::format, "field 'terminal': no such node");
  // Kahn's algorithm for acyclicity.
  std::vector<int> indeg(n, 0);
  std::vector<std::vector<std::uint32_t>> out(n);
  for (const auto& e : g.edges) {
    ++indeg[e.to];
    out[e.from].push_back(e.to);
  }
  std::vector<std::uint32_t> ready;
  for (std::uint32_t i = 0; i < n; ++i)
    if (indeg[i] == 0) ready.push_back(i);
  std::size_t seen = 0;
  while (!ready.empty()) {
    auto u = ready.back();
    ready.pop_back();
    ++seen;
    for (auto v : out[u])
      if (--indeg[v] == 0) ready.push_back(v);
  }
  if (seen != n) throw Error(ErrorCode::format, "field 'edges': graph has a cycle");
}

MsgGraph extract_msg(const std::vector<ApiEvent>& trace) {
  if (trace.empty()) throw Error(ErrorCode::empty_trace, "cannot extract a graph from an empty trace");
  MsgGraph g;
  g.nodes.reserve(trace.size());
  std::unordered_map<std::uint32_t, std::uint32_t> handle_producer;
  std::unordered_map<std::uint64_t, std::uint32_t> buffer_producer;
  std::unordered_map<std::string, std::vector<std::uint32_t>> path_producers;
  std::set<std::tuple<std::uint32_t, std::uint32_t, DepKind>> edges;

  for (std::uint32_t j = 0; j < trace.size(); ++j) {
    const ApiEvent& ev = trace[j];
    g.nodes.push_back({j, simcore::single_class(ev.api), ev.seq, ev.caller_addr});

    for (const auto& [name, v] : ev.args) {
      if (const auto* h = std::get_if<HandleId>(&v)) {
        auto it = handle_producer.find(h->value);
        if (it != handle_producer.end()) edges.emplace(it->second, j, DepKind::handle);
      } else if (const auto* b = std::get_if<Buffer>(&v)) {
        auto link = [&](std::uint64_t tag) {
          auto it = buffer_producer.find(tag);
          if (it != buffer_producer.end()) edges.emplace(it->second, j, DepKind::buffer);
        };
        if (b->tag != 0) link(b->tag);
        for (auto t : b->lineage) link(t);
      } else if (const auto* s = std::get_if<std::string>(&v)) {
        auto it = path_producers.find(simcore::Path(*s).str());
        if (it != path_producers.end()) {
          for (auto i : it->second) edges.emplace(i, j, DepKind::path);
        }
      }
    }

    const auto& out = ev.return_slot;
    if (const auto* h = std::get_if<HandleId>(&out); h && h->valid()) {
      handle_producer[h->value] = j;
    } else if (const auto* b = std::get_if<Buffer>(&out); b && b->tag != 0) {
      buffer_producer[b->tag] = j;
    } else if (const auto* s = std::get_if<std::string>(&out); s && !s->empty()) {
      path_producers[simcore::Path(*s).str()].push_back(j);
    }
  }
  for (const auto& [f, t, d] : edges) g.edges.push_back({f, t, d});
  g.terminal = static_cast<std::uint32_t>(trace.size() - 1);
  return g;
}

MsgGraph extract_msg(const std::vector<ApiEvent>& trace, simcore::ProcessId pid) {
  std::vector<ApiEvent> mine;
  std::copy_if(trace.begin(), trace.end(), std::back_inserter(mine), [pid](const ApiEvent& e) { return e.pid == pid; });
  return extract_msg(mine);
}

namespace {

struct Matcher {
  const MsgGraph& observed;
  const MsgGraph& pattern;
  const std::function<bool(const std::vector<std::uint32_t>&)>& visit;

  // Observed adjacency keyed by (node, kind).
  std::vector<std::vector<std::pair<std::uint32_t, DepKind>>> obs_out, obs_in;
  std::set<std::tuple<std::uint32_t, std::uint32_t, DepKind>> obs_edges;
  std::vector<std::uint32_t> order;
  std::vector<std::uint32_t> map;
  std::vector<bool> used;
  bool stop = false;

  Matcher(const MsgGraph& o, const MsgGraph& p, const std::function<bool(const std::vector<std::uint32_t>&)>& v)
      : observed(o), pattern(p), visit(v) {
    obs_out.resize(o.nodes.size());
    obs_in.resize(o.nodes.size());
    for (const auto& e : o.edges) {
      obs_out[e.from].emplace_back(e.to, e.dep);
      obs_in[e.to].emplace_back(e.from, e.dep);
      obs_edges.emplace(e.from, e.to, e.dep);
    }
    // Connected-first ordering so most nodes get candidates from a mapped
    // neighbor instead of a full scan.
    const auto n = p.nodes.size();
    std::vector<bool> placed(n, false);
    std::vector<std::vector<std::uint32_t>> nbr(n);
    for (const auto& e : p.edges) {
      nbr[e.from].push_back(e.to);
      nbr[e.to].push_back(e.from);
    }
    while (order.size() < n) {
      std::uint32_t best = 0;
      int best_score = -1;
      for (std::uint32_t u = 0; u < n; ++u) {
        if (placed[u]) continue;
        int linked = 0;
        for (auto w : nbr[u]) linked += placed[w] ? 1 : 0;
        int score = linked * 1000 + static_cast<int>(nbr[u].size());
        if (score > best_score) {
          best_score = score;
          best = u;
        }
      }
      placed[best] = true;
      order.push_back(best);
    }
    map.assign(n, 0);
    used.assign(o.nodes.size(), false);
  }

  bool class_ok(std::uint32_t pu, std::uint32_t ov) const {
    const auto& pc = pattern.nodes[pu].api_class.members;
    const auto& oc = observed.nodes[ov].api_class.members;
    return oc.any() && (oc & ~pc).none();
  }

  bool consistent(std::size_t depth, std::uint32_t pu, std::uint32_t ov) const {
    for (const auto& e : pattern.edges) {
      if (e.from == pu || e.to == pu) {
        auto other = e.from == pu ? e.to : e.from;
        bool mapped = other == pu;
        for (std::size_t k = 0; k < depth && !mapped; ++k) mapped = order[k] == other;
        if (!mapped) continue;
        auto of = e.from == pu ? ov : map[e.from];
        auto ot = e.to == pu ? ov : map[e.to];
        if (!obs_edges.contains({of, ot, e.dep})) return false;
      }
    }
    return true;
  }

  void search(std::size_t depth) {
    if (stop) return;
    if (depth == order.size()) {
      if (!visit(map)) stop = true;
      return;
    }
    const std::uint32_t pu = order[depth];
    // Candidate set from the first already-mapped neighbor, if any.
    const std::vector<std::pair<std::uint32_t, DepKind>>* cand = nullptr;
    DepKind want{};
    for (const auto& e : pattern.edges) {
      for (std::size_t k = 0; k < depth && cand == nullptr; ++k) {
        if (e.to == pu && e.from == order[k]) {
          cand = &obs_out[map[e.from]];
          want = e.dep;
        } else if (e.from == pu && e.to == order[k]) {
          cand = &obs_in[map[e.to]];
          want = e.dep;
        }
      }
      if (cand) break;
    }
    auto attempt = [&](std::uint32_t ov) {
      if (used[ov] || !class_ok(pu, ov) || !consistent(depth, pu, ov)) return;
      used[ov] = true;
      map[pu] = ov;
      search(depth + 1);
      used[ov] = false;
    };
    if (cand) {
      std::set<std::uint32_t> seen;
      for (const auto& [ov, dep] : *cand) {
        if (dep == want && seen.insert(ov).second) attempt(ov);
        if (stop) return;
      }
    } else {
      for (std::uint32_t ov = 0; ov < observed.nodes.size() && !stop; ++ov) attempt(ov);
    }
  }
};

}  // namespace

void for_each_embedding(const MsgGraph& observed, const MsgGraph& pattern,
                        const std::function<bool(const std::vector<std::uint32_t>&)>& visit) {
  if (pattern.nodes.empty() || pattern.nodes.size() > observed.nodes.size()) return;
  Matcher m(observed, pattern, visit);
  m.search(0);
}

bool match_msg(const MsgGraph& observed, const MsgGraph& pattern) {
  bool found = false;
  for_each_embedding(observed, pattern, [&](const std::vector<std::uint32_t>&) {
    found = true;
    return false;
  });
  return found;
}

std::vector<std::uint32_t> matched_terminals(const MsgGraph& observed, const MsgGraph& pattern) {
  std::set<std::uint32_t> out;
  for_each_embedding(observed, pattern, [&](const std::vector<std::uint32_t>& m) {
    out.insert(m[pattern.terminal]);
    return true;
  });
  return {out.begin(), out.end()};
}

std::string msg_to_json(const MsgGraph& g) {
  using nlohmann::json;
  json nodes = json::array();
  for (const auto& n : g.nodes) nodes.push_back(json{{"id", n.id}, {"class", n.api_class.name}});
  json edges = json::array();
  for (const auto& e : g.edges) edges.push_back(json{{"from", e.from}, {"to", e.to}, {"dep", std::string(to_string(e.dep))}});
  return json{{"nodes", nodes}, {"edges", edges}, {"terminal", g.terminal}}.dump(2);
}

MsgGraph msg_from_json(std::string_view text, const std::string& source) {
  using nlohmann::json;
  auto fail = [&](const std::string& field) -> Error {
    return Error(ErrorCode::format, source + ": field '" + field + "' is missing or invalid");
  };
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error&) {
    throw Error(ErrorCode::format, source + ": not valid JSON");
  }
  if (!doc.is_object()) throw fail("(root)");
  MsgGraph g;
  if (!doc.contains("nodes") || !doc["nodes"].is_array()) throw fail("nodes");
  for (std::size_t i = 0; i < doc["nodes"].size(); ++i) {
    const json& n = doc["nodes"][i];
    const std::string where = "nodes[" + std::to_string(i) + "]";
    if (!n.contains("id") || !n["id"].is_number_unsigned()) throw fail(where + ".id");
    if (!n.contains("class") || !n["class"].is_string()) throw fail(where + ".class");
    auto cls = simcore::class_from_string(n["class"].get<std::string>());
    if (!cls) throw fail(where + ".class");
    g.nodes.push_back({n["id"].get<std::uint32_t>(), *cls, 0, 0});
  }
  if (!doc.contains("edges") || !doc["edges"].is_array()) throw fail("edges");
  for (std::size_t i = 0; i < doc["edges"].size(); ++i) {
    const json& e = doc["edges"][i];
    const std::string where = "edges[" + std::to_string(i) + "]";
    if (!e.contains("from") || !e["from"].is_number_unsigned()) throw fail(where + ".from");
    if (!e.contains("to") || !e["to"].is_number_unsigned()) throw fail(where + ".to");
    if (!e.contains("dep") || !e["dep"].is_string()) throw fail(where + ".dep");
    auto dep = dep_from_string(e["dep"].get<std::string>());
    if (!dep) throw fail(where + ".dep");
    g.edges.push_back({e["from"].get<std::uint32_t>(), e["to"].get<std::uint32_t>(), *dep});
  }
  if (!doc.contains("terminal") || !doc["terminal"].is_number_unsigned()) throw fail("terminal");
  g.terminal = doc["terminal"].get<std::uint32_t>();
  try {
    validate_graph(g);
  } catch (const Error& e) {
    throw Error(ErrorCode::format, source + ": " + e.what());
  }
  return g;
}

}  // namespace rwdecoy::kb
