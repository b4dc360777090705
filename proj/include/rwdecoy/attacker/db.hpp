#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rwdecoy/common.hpp"

namespace rwdecoy::attacker {

using VictimId = std::array<std::uint8_t, 16>;
using KeyBytes = std::array<std::uint8_t, 32>;

struct Registration {
  std::string sample_id;
  VictimId victim_id{};
  KeyBytes key{};
  double sim_timestamp = 0.0;  // seconds

  friend bool operator==(const Registration&, const Registration&) = default;
};

// Builds a registration from wire-sized fields; nullopt if any size is off.
std::optional<Registration> make_registration(std::string sample_id, std::span<const std::uint8_t> victim_id,
                                              std::span<const std::uint8_t> key, double sim_timestamp);

struct Ack {
  std::uint64_t ordinal = 0;
};

std::map<std::string, std::uint32_t> default_entry_sizes();

// Append-only victim table. With `retain_entries` off only per-second
// counters are kept, which is enough for depletion reports at scale.
class AttackerDb {
 public:
  explicit AttackerDb(bool retain_entries = true, std::map<std::string, std::uint32_t> per_entry_bytes = default_entry_sizes());

  Ack register_victim(const Registration& reg);

  std::uint64_t entry_count() const { return count_; }
  std::uint64_t total_bytes() const { return total_bytes_; }
  bool retains_entries() const { return retain_; }
  const std::vector<Registration>& entries() const { return entries_; }
  std::uint32_t entry_bytes(const std::string& sample_id) const;
  const std::map<std::string, std::uint32_t>& per_entry_bytes() const { return per_entry_bytes_; }

  // Cumulative entries and bytes with timestamp <= t.
  std::pair<std::uint64_t, std::uint64_t> cumulative_at(double t_seconds) const;

  friend bool operator==(const AttackerDb& a, const AttackerDb& b) {
    return a.count_ == b.count_ && a.total_bytes_ == b.total_bytes_ && a.entries_ == b.entries_;
  }

 private:
  bool retain_;
  std::map<std::string, std::uint32_t> per_entry_bytes_;
  std::vector<Registration> entries_;
  std::map<std::int64_t, std::pair<std::uint64_t, std::uint64_t>> per_second_;  // ceil(t) -> entries, bytes
  std::uint64_t count_ = 0;
  std::uint64_t total_bytes_ = 0;
};

inline constexpr double kMiB = 1024.0 * 1024.0;

struct DepletionPoint {
  double hours = 0;
  std::uint64_t entries = 0;
  std::uint64_t bytes = 0;
  double mb = 0;
};

std::vector<DepletionPoint> depletion_report(const AttackerDb& db, const std::vector<double>& bucket_hours = {1, 12, 24});

void snapshot_db(const AttackerDb& db, const std::filesystem::path& file);
AttackerDb load_db(const std::filesystem::path& file, std::map<std::string, std::uint32_t> per_entry_bytes = default_entry_sizes());

// Reference depletion figures for one sample: entries (thousands) and MB at
// 1 h, 12 h and 24 h.
struct DepletionTarget {
  std::string sample_id;
  std::array<double, 3> entries_k;
  std::array<double, 3> mb;
  std::uint32_t entry_bytes;
};

const std::vector<DepletionTarget>& depletion_targets();
const DepletionTarget& depletion_target(const std::string& sample_id);

struct RateInterval {
  double lo = 0;  // entries per hour, aggregate over all agents
  double hi = 0;
  double mid() const { return (lo + hi) / 2; }
};

// Constant rates whose linear growth lands within `tolerance` of every
// reference point, entries and MB alike. Throws if the set is empty.
RateInterval feasible_rate(const DepletionTarget& target, double tolerance = 0.05);

}  // namespace rwdecoy::attacker
