// End-to-end acceptance run: prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>
#include <sstream>
#include <thread>

#include "helpers.hpp"
#include "oracles.hpp"
#include "rwdecoy/cryptodetect/entropy.hpp"
#include "rwdecoy/resetloop/orchestrator.hpp"
#include "rwdecoy/scenario/runner.hpp"

using namespace rwtest;
using namespace rwdecoy::scenario;
namespace rl = rwdecoy::resetloop;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& title, const std::string& detail) {
  std::printf("%s criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Originals whose bytes are missing or changed after the run.
std::size_t damaged(const Snapshot& before, const Snapshot& after) {
  std::size_t n = 0;
  for (const auto& [p, bytes] : before) {
    auto it = after.find(p);
    if (it == after.end() || it->second != bytes) ++n;
  }
  return n;
}

struct Prepared {
  rl::DeceptorConfig cfg;
  SimProgram patched;
  rl::ChainClass chain;
};

Prepared prepare(const std::string& sample, const VirtualFs& fs) {
  const auto prog = generate_reset_sample(sample, 1, fs);
  const auto rep = rl::analyze_program(prog, fs);
  const auto chain = rl::classify_chain(rep, *default_kb());
  const auto cfg = rl::build_config(rep, chain, *default_kb());
  return {cfg, rl::apply_patches(prog, cfg), chain};
}

RunReport criterion_1(std::string& json_out) {
  const auto t0 = std::chrono::steady_clock::now();
  const ScenarioSpec spec = default_scenario(1);
  const RunReport rep = run_scenario(spec);
  const double secs = seconds_since(t0);
  json_out = report_to_json(rep);

  std::set<std::string> variants;
  for (const auto& p : spec.processes)
    if (p.params) variants.insert(variant_name(*p.params));

  bool ok = rep.aggregate.rw_total >= 30 && rep.aggregate.rw_detected == rep.aggregate.rw_total &&
            variants.size() == full_matrix().size() && secs < 60;
  std::ostringstream detail;
  detail << rep.aggregate.rw_detected << "/" << rep.aggregate.rw_total << " detected over " << variants.size()
         << " variants;";
  for (const auto& g : rep.groups) {
    const int stage = g.stages.empty() ? 0 : g.stages.rbegin()->first;
    detail << " " << g.group << ": stage " << stage << ", max lost " << g.files_lost_max << ";";
    if (g.group == "known_extension") {
      ok = ok && g.stages.size() == 1 && g.stages.count(1) == 1 && g.files_lost_max == 0;
    } else if (g.group == "standard_crypto" || g.group == "static_crypto") {
      ok = ok && g.files_lost_max == 0 && g.stages.count(1) == 0;
    } else if (g.group == "custom_crypto") {
      ok = ok && g.files_lost_max <= spec.entropy.consecutive_k && spec.entropy.consecutive_k <= 7;
    }
  }
  detail << " runtime " << fmt("%.2f", secs) << " s";
  report(1, ok, "identification accuracy on the variant matrix", detail.str());
  return rep;
}

void criterion_2(const RunReport& rep) {
  ScenarioSpec spec;
  spec.seed = 1;
  std::size_t identical = 0;
  std::size_t deferred = 0;
  for (const auto& profile : benign_profiles()) {
    const auto prog = generate_benign(profile, spec.seed);
    const auto hooked = run_monitored(prog, spec, default_kb(), default_scanner(), 3);
    const auto plain = run_unmonitored(prog, spec, 3, false);
    if (hooked.vfs == plain.vfs && !hooked.final.verdict.is_ransomware()) ++identical;
    deferred += hooked.final.deferred_applied;
  }
  const bool ok = rep.aggregate.benign_total == 12 && rep.aggregate.benign_fp == 0 &&
                  identical == benign_profiles().size();
  report(2, ok, "zero false positives on benign profiles",
         "benign_fp " + std::to_string(rep.aggregate.benign_fp) + "/" + std::to_string(rep.aggregate.benign_total) +
             ", " + std::to_string(identical) + "/12 final file systems byte-identical to unhooked, " +
             std::to_string(deferred) + " deferred actions replayed");
}

void criterion_3() {
  const auto matrix = full_matrix();
  Rng rng(0x5eed);
  std::size_t runs = 0;
  std::size_t violations = 0;
  std::size_t off_restored = 0;
  std::size_t off_runs = 0;
  std::uint32_t custom_worst = 0;
  ScenarioSpec spec;
  for (std::uint64_t seed = 1; seed <= 120; ++seed) {
    const RwGenParams p = matrix[rng.below(matrix.size())];
    spec.seed = seed;
    spec.arc = seed % 3 == 0 ? deceptor::ArcMode::off : (seed % 3 == 1 ? deceptor::ArcMode::partial : deceptor::ArcMode::full);
    const auto fs = corpus_vfs(seed);
    const auto out = run_monitored(generate_rw(p, seed, fs), spec, default_kb(), default_scanner(), 0);
    ++runs;
    const auto lost = damaged(fs.snapshot(), out.vfs);
    if (!out.final.verdict.is_ransomware()) {
      ++violations;
      continue;
    }
    if (p.crypto == CryptoKind::custom) {
      // The hidden cipher is only recognized after it has written k files.
      custom_worst = std::max<std::uint32_t>(custom_worst, static_cast<std::uint32_t>(lost));
      if (lost > spec.entropy.consecutive_k) ++violations;
      continue;
    }
    if (spec.arc == deceptor::ArcMode::off) {
      // A stage 1 verdict stops the sample before it writes a single file.
      if (p.write_pattern == WritePattern::overwrite && out.final.verdict.stage > 1) {
        ++off_runs;
        if (out.final.originals_restored > 0) ++off_restored;
      }
      if (p.write_pattern == WritePattern::overwrite && lost != 0) ++violations;
    } else if (lost != 0) {
      ++violations;
    }
  }
  report(3, runs >= 100 && violations == 0 && off_restored == off_runs,
         "originals preserved under deception",
         std::to_string(runs) + " seeded runs, " + std::to_string(violations) + " violations, " +
             std::to_string(off_restored) + "/" + std::to_string(off_runs) +
             " unprotected overwrites restored from shadow copies, worst custom-cipher loss " +
             std::to_string(custom_worst));
}

void criterion_4() {
  const auto fs = corpus_vfs(1);
  bool ok = true;
  std::ostringstream detail;
  double wall_max = 0;
  for (const auto& target : attacker::depletion_targets()) {
    const auto prep = prepare(target.sample_id, fs);
    rl::FleetOptions o;
    o.sample_id = target.sample_id;
    o.agents = 50;
    o.rate_per_hour = attacker::feasible_rate(target, 0.05).mid();
    o.sim_hours = 24;
    o.time_scale = 3600;
    o.workers = std::max(1u, std::thread::hardware_concurrency());
    o.seed = 1;
    attacker::AttackerServer server(attacker::AttackerDb(false));
    const auto fleet = rl::run_fleet(prep.patched, prep.cfg, server, o, fs);
    const auto db = server.finish();
    const auto pts = attacker::depletion_report(db);
    bool row_ok = true;
    for (int b = 0; b < 3; ++b) {
      const double e = static_cast<double>(pts[b].entries);
      row_ok = row_ok && std::abs(e - target.entries_k[b] * 1000) <= 0.05 * target.entries_k[b] * 1000;
      row_ok = row_ok && std::abs(pts[b].mb - target.mb[b]) <= 0.05 * target.mb[b];
    }
    const double ratio = static_cast<double>(pts[1].entries) / static_cast<double>(pts[0].entries);
    row_ok = row_ok && std::abs(ratio - 11.79) <= 0.1 * 11.79;
    ok = ok && row_ok;
    wall_max = std::max(wall_max, fleet.wall_seconds);
    detail << target.sample_id << " " << pts[0].entries / 1000 << "K/" << pts[1].entries / 1000 << "K/"
           << pts[2].entries / 1000 << "K " << fmt("%.1f", pts[0].mb) << "/" << fmt("%.0f", pts[1].mb) << "/"
           << fmt("%.0f", pts[2].mb) << " MB ratio " << fmt("%.2f", ratio) << " wall " << fmt("%.1f", fleet.wall_seconds)
           << " s; ";
  }
  report(4, ok, "reset-loop depletion with 50 agents over scaled 24 h", detail.str());
}

void criterion_5() {
  const auto fs = corpus_vfs(1);
  const auto prep = prepare("r3", fs);
  attacker::AttackerDb db(false);
  rl::LoopOptions lo;
  lo.sample_id = "r3";
  const auto rep = rl::run_loop(prep.patched, prep.cfg, db, rl::LoopBudget{100'000}, lo, fs);
  const std::set<attacker::VictimId> ids(rep.victim_ids.begin(), rep.victim_ids.end());
  const std::set<attacker::KeyBytes> keys(rep.keys.begin(), rep.keys.end());
  report(5, rep.iterations == 100'000 && ids.size() == 100'000 && keys.size() == 100'000,
         "unique victim ids and keys per iteration",
         std::to_string(rep.iterations) + " iterations, " + std::to_string(ids.size()) + " distinct ids, " +
             std::to_string(keys.size()) + " distinct keys");
}

void criterion_6() {
  const auto fs = corpus_vfs(1);
  std::ostringstream detail;
  bool ok = true;
  for (const std::string sample : {"r2", "r4"}) {
    const auto prep = prepare(sample, fs);
    rl::LoopAgent agent(prep.patched, prep.cfg, fs, 1, sample);
    std::vector<attacker::Registration> regs;
    auto file_calls = [&] {
      const auto& r = agent.run();
      return r.api_count(Api::CryptEncrypt) + r.api_count(Api::AES_encrypt) + r.api_count(Api::AESxEncryption) +
             r.api_count(Api::WriteFile) + r.api_count(Api::DeleteFile);
    };
    bool ran = agent.iterate(0, regs);
    const auto calls_after_first = file_calls();
    const auto hash = agent.kernel().fs().content_hash();
    std::size_t hash_changes = 0;
    for (int i = 1; i < 1000 && ran; ++i) {
      ran = agent.iterate(i, regs);
      if (agent.kernel().fs().content_hash() != hash) ++hash_changes;
    }
    const bool row_ok = ran && prep.chain == rl::ChainClass::ec2 && prep.cfg.ec2_bypass && file_calls() == calls_after_first &&
                        hash_changes == 0 && agent.iterations() == 1000;
    ok = ok && row_ok;
    detail << sample << ": " << agent.iterations() << " iterations, " << file_calls() - calls_after_first
           << " file-operation calls after iteration 1, " << hash_changes << " file-system changes; ";
  }
  report(6, ok, "EC2 bypass skips the encryption block", detail.str());
}

kb::MsgGraph random_graph(Rng& rng, std::uint32_t n, const std::vector<Api>& apis) {
  kb::MsgGraph g;
  for (std::uint32_t i = 0; i < n; ++i) g.nodes.push_back({i, simcore::single_class(apis[rng.below(apis.size())])});
  for (std::uint32_t a = 0; a < n; ++a)
    for (std::uint32_t b = a + 1; b < n; ++b)
      if (rng.below(100) < 30) g.edges.push_back({a, b, static_cast<kb::DepKind>(rng.below(3))});
  g.terminal = n - 1;
  return g;
}

// A pattern cut out of `g` (so it usually matches), sometimes with a class
// widened to a wildcard or an edge kind flipped.
kb::MsgGraph derived_pattern(Rng& rng, const kb::MsgGraph& g) {
  std::vector<std::uint32_t> pick;
  for (std::uint32_t i = 0; i < g.nodes.size(); ++i)
    if (rng.below(2) == 0) pick.push_back(i);
  if (pick.empty()) pick.push_back(0);
  for (std::size_t i = pick.size(); i > 1; --i) std::swap(pick[i - 1], pick[rng.below(i)]);
  std::map<std::uint32_t, std::uint32_t> to_new;
  kb::MsgGraph p;
  for (std::uint32_t i = 0; i < pick.size(); ++i) {
    to_new[pick[i]] = i;
    auto cls = g.nodes[pick[i]].api_class;
    if (rng.below(4) == 0) cls = simcore::encrypt_class();
    p.nodes.push_back({i, cls});
  }
  for (const auto& e : g.edges) {
    if (!to_new.contains(e.from) || !to_new.contains(e.to)) continue;
    auto dep = e.dep;
    if (rng.below(8) == 0) dep = static_cast<kb::DepKind>((static_cast<int>(dep) + 1) % 3);
    p.edges.push_back({to_new[e.from], to_new[e.to], dep});
  }
  p.terminal = 0;
  return p;
}

void criterion_7() {
  Rng rng(77);
  const std::vector<Api> apis{Api::CreateFile, Api::WriteFile, Api::CryptEncrypt, Api::AES_encrypt, Api::Send};
  std::size_t agree = 0;
  std::size_t positives = 0;
  constexpr std::size_t kPairs = 1000;
  for (std::size_t i = 0; i < kPairs; ++i) {
    const auto observed = random_graph(rng, 1 + static_cast<std::uint32_t>(rng.below(8)), apis);
    const auto pattern = rng.below(2) == 0 ? derived_pattern(rng, observed)
                                           : random_graph(rng, 1 + static_cast<std::uint32_t>(rng.below(8)), apis);
    const bool expect = brute_force_match(observed, pattern);
    positives += expect;
    if (kb::match_msg(observed, pattern) == expect) ++agree;
  }
  report(7, agree == kPairs, "subgraph matcher agrees with exhaustive enumeration",
         std::to_string(agree) + "/" + std::to_string(kPairs) + " pairs agree, " + std::to_string(positives) +
             " embeddings exist");
}

void criterion_8() {
  Rng rng(88);
  std::size_t agree = 0;
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    Bytes b = rng.bytes(1 + rng.below(20000));
    const auto alphabet = 1 + rng.below(256);
    for (auto& x : b) x = static_cast<std::uint8_t>(x % alphabet);
    const double d = std::abs(cryptodetect::shannon_entropy(b) - entropy_oracle(b));
    worst = std::max(worst, d);
    if (d <= 1e-9) ++agree;
  }
  Bytes all(256);
  for (int i = 0; i < 256; ++i) all[i] = static_cast<std::uint8_t>(i);
  const double zeros = cryptodetect::shannon_entropy(Bytes(4096, 0));
  const double full = cryptodetect::shannon_entropy(all);
  report(8, agree == 1000 && zeros == 0.0 && full == 8.0, "entropy matches direct summation",
         std::to_string(agree) + "/1000 within 1e-9 (worst " + fmt("%.3g", worst) + "), zeros " + fmt("%.1f", zeros) +
             ", full alphabet " + fmt("%.1f", full));
}

void criterion_9() {
  ScenarioSpec spec;
  spec.seed = 1;
  for (const auto& profile : benign_profiles())
    spec.processes.push_back({profile, CorpusEntry::Kind::benign, std::nullopt, generate_benign(profile, 1)});
  const double ratio = overhead_ratio(spec, 20);
  report(9, ratio <= 1.10, "monitoring overhead proxy on benign profiles",
         "median hooked/no-op-hooked time ratio " + fmt("%.3f", ratio) + " over 20 runs");
}

void criterion_10(const std::string& first_json) {
  const std::string second = report_to_json(run_scenario(default_scenario(1)));
  ScenarioSpec with_reset = default_scenario(2);
  with_reset.attacker.enabled = true;
  with_reset.attacker.iterations = 50;
  const std::string a = report_to_json(run_scenario(with_reset));
  const std::string b = report_to_json(run_scenario(with_reset));
  report(10, first_json == second && a == b, "same seed gives byte-identical reports",
         std::to_string(first_json.size()) + "-byte corpus report and " + std::to_string(a.size()) +
             "-byte reset-phase report each reproduced exactly");
}

}  // namespace

int main() {
  std::string first_json;
  const RunReport rep = criterion_1(first_json);
  criterion_2(rep);
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10(first_json);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
