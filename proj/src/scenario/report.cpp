#include "rwdecoy/scenario/report.hpp"

#include <cstdio>
#include <set>
#include <sstream>

#include <json.hpp>

namespace rwdecoy::scenario {

using nlohmann::ordered_json;

void summarize(RunReport& r) {
  Aggregate a;
  std::map<std::string, GroupRow> groups;
  std::uint64_t lost_sum = 0;
  for (const auto& p : r.processes) {
    const bool flagged = p.verdict == "Ransomware";
    if (p.kind == "rw") {
      ++a.rw_total;
      flagged ? ++a.rw_detected : ++a.rw_undetected;
      lost_sum += p.files_lost;
      a.max_files_lost = std::max(a.max_files_lost, p.files_lost);
    } else if (p.kind == "benign") {
      ++a.benign_total;
      if (flagged) ++a.benign_fp;
    } else if (p.kind == "dormant") {
      ++a.dormant_total;
      if (p.verdict == "Monitoring") ++a.dormant_monitoring;
    }
    if (p.kind == "rw" || p.kind == "dormant") {
      auto& g = groups[p.group];
      g.group = p.group;
      ++g.count;
      if (flagged) {
        ++g.detected;
        ++g.stages[p.stage];
      }
      g.files_lost_total += p.files_lost;
      g.files_lost_max = std::max(g.files_lost_max, p.files_lost);
    }
  }
  a.avg_files_lost = a.rw_total == 0 ? 0.0 : static_cast<double>(lost_sum) / a.rw_total;
  r.aggregate = a;
  r.groups.clear();
  for (auto& [name, g] : groups) {
    g.avg_files_lost = g.count == 0 ? 0.0 : static_cast<double>(g.files_lost_total) / g.count;
    r.groups.push_back(g);
  }
}

namespace {

ordered_json depletion_json(const DepletionRow& d) {
  ordered_json pts = ordered_json::array();
  for (const auto& p : d.points) {
    pts.push_back({{"hours", p.hours}, {"entries", p.entries}, {"bytes", p.bytes}, {"mb", p.mb}});
  }
  return {{"sample", d.sample}, {"agents", d.agents}, {"rate_per_hour", d.rate_per_hour}, {"points", pts}};
}

template <class T>
T get(const ordered_json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorCode::format, std::string("report: missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const ordered_json::exception&) {
    throw Error(ErrorCode::format, std::string("report: field '") + key + "' has the wrong type");
  }
}

}  // namespace

std::string report_to_json(const RunReport& r) {
  ordered_json j;
  j["seed"] = r.seed;
  j["arc"] = r.arc;
  ordered_json procs = ordered_json::array();
  for (const auto& p : r.processes) {
    procs.push_back({{"name", p.name},
                     {"kind", p.kind},
                     {"group", p.group},
                     {"run", p.run},
                     {"verdict", p.verdict},
                     {"reason", p.reason},
                     {"stage", p.stage},
                     {"files_lost", p.files_lost},
                     {"deferred_applied", p.deferred_applied},
                     {"whitelisted", p.whitelisted},
                     {"chain", p.chain},
                     {"loop_iterations", p.loop_iterations},
                     {"loop_unique_ids", p.loop_unique_ids},
                     {"vfs_hash", p.vfs_hash}});
  }
  j["processes"] = procs;
  const auto& a = r.aggregate;
  j["aggregate"] = {{"rw_total", a.rw_total},
                    {"rw_detected", a.rw_detected},
                    {"rw_undetected", a.rw_undetected},
                    {"benign_total", a.benign_total},
                    {"benign_fp", a.benign_fp},
                    {"dormant_total", a.dormant_total},
                    {"dormant_monitoring", a.dormant_monitoring},
                    {"avg_files_lost", a.avg_files_lost},
                    {"max_files_lost", a.max_files_lost}};
  ordered_json groups = ordered_json::array();
  for (const auto& g : r.groups) {
    ordered_json stages = ordered_json::object();
    for (const auto& [s, n] : g.stages) stages[std::to_string(s)] = n;
    groups.push_back({{"group", g.group},
                      {"count", g.count},
                      {"detected", g.detected},
                      {"stages", stages},
                      {"files_lost_total", g.files_lost_total},
                      {"files_lost_max", g.files_lost_max},
                      {"avg_files_lost", g.avg_files_lost}});
  }
  j["groups"] = groups;
  ordered_json dep = ordered_json::array();
  for (const auto& d : r.depletion) dep.push_back(depletion_json(d));
  j["depletion"] = dep;
  if (!r.timing.empty()) {
    ordered_json t = ordered_json::array();
    for (const auto& row : r.timing) {
      t.push_back({{"name", row.name}, {"hooked_ns", row.hooked_ns}, {"unhooked_ns", row.unhooked_ns}});
    }
    j["timing"] = t;
  }
  return j.dump(2) + "\n";
}

RunReport report_from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    throw Error(ErrorCode::format, std::string("report: ") + e.what());
  }
  RunReport r;
  r.seed = get<std::uint64_t>(j, "seed");
  r.arc = get<std::string>(j, "arc");
  for (const auto& p : get<ordered_json>(j, "processes")) {
    ProcessResult x;
    x.name = get<std::string>(p, "name");
    x.kind = get<std::string>(p, "kind");
    x.group = get<std::string>(p, "group");
    x.run = get<std::uint32_t>(p, "run");
    x.verdict = get<std::string>(p, "verdict");
    x.reason = get<std::string>(p, "reason");
    x.stage = get<int>(p, "stage");
    x.files_lost = get<std::uint32_t>(p, "files_lost");
    x.deferred_applied = get<std::uint32_t>(p, "deferred_applied");
    x.whitelisted = get<bool>(p, "whitelisted");
    x.chain = get<std::string>(p, "chain");
    x.loop_iterations = get<std::uint64_t>(p, "loop_iterations");
    x.loop_unique_ids = get<std::uint64_t>(p, "loop_unique_ids");
    x.vfs_hash = get<std::string>(p, "vfs_hash");
    r.processes.push_back(std::move(x));
  }
  summarize(r);
  for (const auto& d : get<ordered_json>(j, "depletion")) {
    DepletionRow row;
    row.sample = get<std::string>(d, "sample");
    row.agents = get<std::uint32_t>(d, "agents");
    row.rate_per_hour = get<double>(d, "rate_per_hour");
    for (const auto& p : get<ordered_json>(d, "points")) {
      row.points.push_back({get<double>(p, "hours"), get<std::uint64_t>(p, "entries"), get<std::uint64_t>(p, "bytes"),
                            get<double>(p, "mb")});
    }
    r.depletion.push_back(std::move(row));
  }
  if (j.contains("timing")) {
    for (const auto& t : j["timing"]) {
      r.timing.push_back({get<std::string>(t, "name"), get<std::uint64_t>(t, "hooked_ns"),
                          get<std::uint64_t>(t, "unhooked_ns")});
    }
  }
  return r;
}

namespace {

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

}  // namespace

std::string report_to_table(const RunReport& r) {
  std::ostringstream os;
  const auto& a = r.aggregate;
  os << "seed " << r.seed << ", ARC " << r.arc << "\n";
  if (r.groups.empty()) {
    os << "\nno processes\n";
  } else {
    os << "\n"
       << fmt("%-20s %6s %9s %-22s %10s %9s %9s\n", "group", "count", "detected", "stages", "lost_total",
              "lost_max", "lost_avg");
    for (const auto& g : r.groups) {
      std::string stages;
      for (const auto& [s, n] : g.stages) stages += (stages.empty() ? "" : " ") + fmt("S%d:%u", s, n);
      if (stages.empty()) stages = "-";
      os << fmt("%-20s %6u %9u %-22s %10u %9u %9.2f\n", g.group.c_str(), g.count, g.detected, stages.c_str(),
                g.files_lost_total, g.files_lost_max, g.avg_files_lost);
    }
    os << "\n"
       << fmt("ransomware detected %u/%u, benign false positives %u/%u, dormant still monitoring %u/%u\n",
              a.rw_detected, a.rw_total, a.benign_fp, a.benign_total, a.dormant_monitoring, a.dormant_total)
       << fmt("files lost: avg %.2f, max %u\n", a.avg_files_lost, a.max_files_lost);
  }
  if (!r.depletion.empty()) {
    os << "\n" << fmt("%-8s %7s %12s  %-32s %s\n", "sample", "agents", "rate/h", "entries (1h / 12h / 24h)", "MB");
    for (const auto& d : r.depletion) {
      std::string e;
      std::string m;
      for (const auto& p : d.points) {
        e += (e.empty() ? "" : " / ") + fmt("%.0fK", static_cast<double>(p.entries) / 1000.0);
        m += (m.empty() ? "" : " / ") + fmt("%.1f", p.mb);
      }
      os << fmt("%-8s %7u %12.0f  %-32s %s\n", d.sample.c_str(), d.agents, d.rate_per_hour, e.c_str(), m.c_str());
    }
  }
  if (!r.timing.empty()) {
    os << "\n" << fmt("%-24s %14s %14s %9s\n", "process", "hooked_ns", "unhooked_ns", "overhead");
    for (const auto& t : r.timing) {
      const double ov = t.unhooked_ns == 0 ? 0.0 : static_cast<double>(t.hooked_ns) / t.unhooked_ns - 1.0;
      os << fmt("%-24s %14llu %14llu %8.2f%%\n", t.name.c_str(), static_cast<unsigned long long>(t.hooked_ns),
                static_cast<unsigned long long>(t.unhooked_ns), ov * 100.0);
    }
  }
  return os.str();
}

bool report_ok(const RunReport& r) { return r.aggregate.benign_fp == 0 && r.aggregate.rw_undetected == 0; }

}  // namespace rwdecoy::scenario
