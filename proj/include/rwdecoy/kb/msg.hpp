#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rwdecoy/simcore/kernel.hpp"

namespace rwdecoy::kb {

enum class DepKind : std::uint8_t { handle, buffer, path };

std::string_view to_string(DepKind d);
std::optional<DepKind> dep_from_string(std::string_view s);

struct MsgNode {
  std::uint32_t id = 0;
  simcore::ApiClass api_class;
  // Set for graphs extracted from traces; patterns leave them zero.
  std::uint64_t seq = 0;
  simcore::Address caller_addr = 0;
};

struct MsgEdge {
  std::uint32_t from = 0;
  std::uint32_t to = 0;
  DepKind dep = DepKind::handle;
  friend bool operator==(const MsgEdge&, const MsgEdge&) = default;
};

// Malicious-subgraph data-flow graph: API calls as nodes, value
// dependencies as edges. Node ids are dense indices 0..n-1.
struct MsgGraph {
  std::vector<MsgNode> nodes;
  std::vector<MsgEdge> edges;
  std::uint32_t terminal = 0;

  bool has_edge(std::uint32_t from, std::uint32_t to, DepKind dep) const;
};

// Structural equality: classes, edge set and terminal (ignores trace metadata).
bool same_structure(const MsgGraph& a, const MsgGraph& b);

// Throws Error(format) naming the first offending field.
void validate_graph(const MsgGraph& g);

MsgGraph extract_msg(const std::vector<simcore::ApiEvent>& trace);
MsgGraph extract_msg(const std::vector<simcore::ApiEvent>& trace, simcore::ProcessId pid);

// Calls `visit` with the pattern→observed node map of every embedding until
// it returns false.
void for_each_embedding(const MsgGraph& observed, const MsgGraph& pattern,
                        const std::function<bool(const std::vector<std::uint32_t>&)>& visit);

bool match_msg(const MsgGraph& observed, const MsgGraph& pattern);

// Observed node ids that the pattern terminal maps to, over all embeddings,
// sorted ascending.
std::vector<std::uint32_t> matched_terminals(const MsgGraph& observed, const MsgGraph& pattern);

std::string msg_to_json(const MsgGraph& g);
MsgGraph msg_from_json(std::string_view text, const std::string& source);

}  // namespace rwdecoy::kb
