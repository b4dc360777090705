#include "rwdecoy/attacker/db.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace rwdecoy::attacker {

std::optional<Registration> make_registration(std::string sample_id, std::span<const std::uint8_t> victim_id,
                                              std::span<const std::uint8_t> key, double sim_timestamp) {
  Registration r;
  if (victim_id.size() != r.victim_id.size() || key.size() != r.key.size() || sample_id.empty()) return std::nullopt;
  if (!std::isfinite(sim_timestamp) || sim_timestamp < 0) return std::nullopt;
  r.sample_id = std::move(sample_id);
  std::copy(victim_id.begin(), victim_id.end(), r.victim_id.begin());
  std::copy(key.begin(), key.end(), r.key.begin());
  r.sim_timestamp = sim_timestamp;
  return r;
}

std::map<std::string, std::uint32_t> default_entry_sizes() {
  return {{"r1", 160}, {"r2", 131}, {"r3", 135}, {"r4", 131}};
}

AttackerDb::AttackerDb(bool retain_entries, std::map<std::string, std::uint32_t> per_entry_bytes)
    : retain_(retain_entries), per_entry_bytes_(std::move(per_entry_bytes)) {}

std::uint32_t AttackerDb::entry_bytes(const std::string& sample_id) const {
  auto it = per_entry_bytes_.find(sample_id);
  // Unknown samples cost the raw record: id, key and an 8-byte timestamp.
  return it == per_entry_bytes_.end() ? 16 + 32 + 8 : it->second;
}

Ack AttackerDb::register_victim(const Registration& reg) {
  const std::uint32_t b = entry_bytes(reg.sample_id);
  auto& slot = per_second_[static_cast<std::int64_t>(std::ceil(reg.sim_timestamp))];
  ++slot.first;
  slot.second += b;
  total_bytes_ += b;
  if (retain_) entries_.push_back(reg);
  return Ack{count_++};
}

std::pair<std::uint64_t, std::uint64_t> AttackerDb::cumulative_at(double t_seconds) const {
  std::uint64_t n = 0;
  std::uint64_t bytes = 0;
  const auto end = per_second_.upper_bound(static_cast<std::int64_t>(std::floor(t_seconds)));
  for (auto it = per_second_.begin(); it != end; ++it) {
    n += it->second.first;
    bytes += it->second.second;
  }
  return {n, bytes};
}

std::vector<DepletionPoint> depletion_report(const AttackerDb& db, const std::vector<double>& bucket_hours) {
  std::vector<DepletionPoint> out;
  for (double h : bucket_hours) {
    const auto [n, bytes] = db.cumulative_at(h * 3600.0);
    out.push_back({h, n, bytes, static_cast<double>(bytes) / kMiB});
  }
  return out;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

[[noreturn]] void corrupt(const std::filesystem::path& file, std::size_t line, const std::string& why) {
  throw Error(ErrorCode::corrupt, file.string() + ":" + std::to_string(line) + ": " + why);
}

}  // namespace

void snapshot_db(const AttackerDb& db, const std::filesystem::path& file) {
  if (!db.retains_entries()) throw Error(ErrorCode::io, "counts-only database has no entries to write");
  std::ofstream os(file, std::ios::trunc);
  if (!os) throw Error(ErrorCode::io, "cannot write " + file.string());
  std::string line;
  for (const auto& r : db.entries()) {
    line.clear();
    line += r.sample_id;
    line += ',';
    line += to_hex(r.victim_id);
    line += ',';
    line += to_hex(r.key);
    line += ',';
    line += format_double(r.sim_timestamp);
    line += '\n';
    os << line;
  }
  if (!os) throw Error(ErrorCode::io, "short write to " + file.string());
}

AttackerDb load_db(const std::filesystem::path& file, std::map<std::string, std::uint32_t> per_entry_bytes) {
  std::ifstream is(file);
  if (!is) throw Error(ErrorCode::io, "cannot read " + file.string());
  AttackerDb db(true, std::move(per_entry_bytes));
  std::string line;
  std::size_t line_no = 0;
  bool saw_newline_at_end = true;
  while (std::getline(is, line)) {
    ++line_no;
    saw_newline_at_end = !is.eof();
    std::string_view rest(line);
    std::array<std::string_view, 4> f;
    for (int i = 0; i < 4; ++i) {
      const auto comma = rest.find(',');
      if (i < 3 && comma == std::string_view::npos) corrupt(file, line_no, "expected 4 fields");
      f[i] = i < 3 ? rest.substr(0, comma) : rest;
      if (i < 3) rest.remove_prefix(comma + 1);
    }
    if (f[3].find(',') != std::string_view::npos) corrupt(file, line_no, "expected 4 fields");
    Bytes vid;
    Bytes key;
    try {
      vid = from_hex(f[1]);
      key = from_hex(f[2]);
    } catch (const Error&) {
      corrupt(file, line_no, "bad hex field");
    }
    double t = 0;
    auto [ptr, ec] = std::from_chars(f[3].data(), f[3].data() + f[3].size(), t);
    if (ec != std::errc{} || ptr != f[3].data() + f[3].size()) corrupt(file, line_no, "bad timestamp");
    auto reg = make_registration(std::string(f[0]), vid, key, t);
    if (!reg) corrupt(file, line_no, "field sizes");
    db.register_victim(*reg);
  }
  // Every record is newline-terminated; a missing one means a torn write.
  if (line_no > 0 && !saw_newline_at_end) corrupt(file, line_no, "truncated record");
  return db;
}

const std::vector<DepletionTarget>& depletion_targets() {
  static const std::vector<DepletionTarget> targets = {
      {"r1", {290, 3420, 6910}, {43, 527, 1054}, 160},
      {"r2", {131, 1582, 3081}, {15, 189, 385}, 131},
      {"r3", {413, 4829, 9223}, {52.9, 603, 1189}, 135},
      {"r4", {195, 2257, 4357}, {22.7, 272, 544}, 131},
  };
  return targets;
}

const DepletionTarget& depletion_target(const std::string& sample_id) {
  for (const auto& t : depletion_targets())
    if (t.sample_id == sample_id) return t;
  throw Error(ErrorCode::format, "unknown sample '" + sample_id + "'");
}

RateInterval feasible_rate(const DepletionTarget& target, double tolerance) {
  constexpr std::array<double, 3> hours{1, 12, 24};
  RateInterval r{0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < 3; ++i) {
    const double e = target.entries_k[i] * 1000.0;
    r.lo = std::max(r.lo, e * (1 - tolerance) / hours[i]);
    r.hi = std::min(r.hi, e * (1 + tolerance) / hours[i]);
    const double m = target.mb[i] * kMiB / target.entry_bytes;  // entries implied by the MB column
    r.lo = std::max(r.lo, m * (1 - tolerance) / hours[i]);
    r.hi = std::min(r.hi, m * (1 + tolerance) / hours[i]);
  }
  if (!(r.lo <= r.hi)) {
    throw Error(ErrorCode::format, "no constant rate fits every reference point of " + target.sample_id);
  }
  return r;
}

}  // namespace rwdecoy::attacker
