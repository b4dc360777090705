#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rwdecoy/attacker/db.hpp"

namespace rwdecoy::scenario {

struct ProcessResult {
  std::string name;
  std::string kind;   // rw | benign | dormant | program
  std::string group;  // detection group for rw, otherwise the kind
  std::uint32_t run = 0;
  std::string verdict;  // Monitoring | Benign | Ransomware
  std::string reason;
  int stage = 0;
  std::uint32_t files_lost = 0;
  std::uint32_t deferred_applied = 0;
  bool whitelisted = false;
  std::string chain;  // reset phase only
  std::uint64_t loop_iterations = 0;
  std::uint64_t loop_unique_ids = 0;
  std::string vfs_hash;

  friend bool operator==(const ProcessResult&, const ProcessResult&) = default;
};

struct Aggregate {
  std::uint32_t rw_total = 0;
  std::uint32_t rw_detected = 0;
  std::uint32_t rw_undetected = 0;
  std::uint32_t benign_total = 0;
  std::uint32_t benign_fp = 0;
  std::uint32_t dormant_total = 0;
  std::uint32_t dormant_monitoring = 0;
  double avg_files_lost = 0;  // over rw runs
  std::uint32_t max_files_lost = 0;

  friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

struct GroupRow {
  std::string group;
  std::uint32_t count = 0;
  std::uint32_t detected = 0;
  std::map<int, std::uint32_t> stages;  // detection stage -> runs
  std::uint32_t files_lost_total = 0;
  std::uint32_t files_lost_max = 0;
  double avg_files_lost = 0;

  friend bool operator==(const GroupRow&, const GroupRow&) = default;
};

struct DepletionRow {
  std::string sample;
  std::uint32_t agents = 0;
  double rate_per_hour = 0;
  std::vector<attacker::DepletionPoint> points;
};

struct TimingRow {
  std::string name;
  std::uint64_t hooked_ns = 0;
  std::uint64_t unhooked_ns = 0;
};

struct RunReport {
  std::uint64_t seed = 0;
  std::string arc;
  std::vector<ProcessResult> processes;
  Aggregate aggregate;
  std::vector<GroupRow> groups;
  std::vector<DepletionRow> depletion;
  std::vector<TimingRow> timing;  // only when timing was requested
};

// Recomputes aggregate and groups from the process list.
void summarize(RunReport& report);

std::string report_to_json(const RunReport& report);
RunReport report_from_json(std::string_view text);
std::string report_to_table(const RunReport& report);

// True iff no benign process was flagged and every rw process was.
bool report_ok(const RunReport& report);

}  // namespace rwdecoy::scenario
