#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "rwdecoy/common.hpp"

namespace rwdecoy::simcore {

using Address = std::uint64_t;
using ProcessId = std::uint32_t;

struct HandleId {
  std::uint32_t value = 0;
  bool valid() const { return value != 0; }
  friend auto operator<=>(const HandleId&, const HandleId&) = default;
};

// Byte payload with provenance. Every buffer produced by an API call or a
// computing expression gets a fresh tag; `lineage` lists the tags of every
// buffer it was derived from, so data flow survives in-program computation.
struct Buffer {
  Bytes bytes;
  std::uint64_t tag = 0;
  std::vector<std::uint64_t> lineage;

  bool derives_from(std::uint64_t t) const;
  friend bool operator==(const Buffer&, const Buffer&) = default;
};

using Value = std::variant<std::monostate, bool, std::int64_t, std::string, HandleId, Buffer>;

bool truthy(const Value& v);

// Program-visible shape of a value: kind plus scalar or length. Two runs whose
// programs observed the same summaries could not tell their outcomes apart.
std::string summarize(const Value& v);

}  // namespace rwdecoy::simcore
