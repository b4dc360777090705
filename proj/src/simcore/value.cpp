#include "rwdecoy/simcore/value.hpp"

#include <algorithm>

namespace rwdecoy::simcore {

bool Buffer::derives_from(std::uint64_t t) const {
  if (t == 0) return false;
  return tag == t || std::find(lineage.begin(), lineage.end(), t) != lineage.end();
}

bool truthy(const Value& v) {
  struct Visitor {
    bool operator()(std::monostate) const { return false; }
    bool operator()(bool b) const { return b; }
    bool operator()(std::int64_t n) const { return n >= 0; }
    bool operator()(const std::string& s) const { return !s.empty(); }
    bool operator()(HandleId h) const { return h.valid(); }
    bool operator()(const Buffer&) const { return true; }
  };
  return std::visit(Visitor{}, v);
}

std::string summarize(const Value& v) {
  struct Visitor {
    std::string operator()(std::monostate) const { return "none"; }
    std::string operator()(bool b) const { return b ? "bool:true" : "bool:false"; }
    std::string operator()(std::int64_t n) const { return "int:" + std::to_string(n); }
    std::string operator()(const std::string& s) const { return "str:" + s; }
    std::string operator()(HandleId h) const { return h.valid() ? "handle:ok" : "handle:invalid"; }
    std::string operator()(const Buffer& b) const { return "buf:" + std::to_string(b.bytes.size()); }
  };
  return std::visit(Visitor{}, v);
}

}  // namespace rwdecoy::simcore
