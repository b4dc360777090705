#include "rwdecoy/scenario/runner.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "rwdecoy/deceptor/whitelist.hpp"
#include "rwdecoy/resetloop/orchestrator.hpp"

namespace rwdecoy::scenario {

using nlohmann::json;

namespace {

[[noreturn]] void spec_error(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::format, "scenario " + where + ": " + what);
}

template <class T>
T opt(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    spec_error(where, std::string("field '") + key + "' has the wrong type");
  }
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw Error(ErrorCode::io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void add_corpus(std::vector<ProcessSpec>& out, std::uint64_t seed) {
  for (auto& e : generate_corpus(full_matrix(), benign_profiles(), 1, seed)) {
    out.push_back({e.name, e.kind, e.params, std::move(e.program), 1});
  }
}

}  // namespace

ScenarioSpec default_scenario(std::uint64_t seed) {
  ScenarioSpec s;
  s.seed = seed;
  add_corpus(s.processes, seed);
  return s;
}

ScenarioSpec parse_scenario(std::string_view text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    spec_error("", e.what());
  }
  if (!j.is_object()) spec_error("", "top level must be an object");
  ScenarioSpec s;
  if (!j.contains("seed") || !j["seed"].is_number_unsigned()) spec_error("seed", "a non-negative integer seed is required");
  s.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("kb_dir")) s.kb_dir = base_dir / opt<std::string>(j, "kb_dir", "", "kb_dir");
  if (j.contains("arc")) {
    const auto arc = deceptor::arc_from_string(opt<std::string>(j, "arc", "", "arc"));
    if (!arc) spec_error("arc", "expected off, partial or full");
    s.arc = *arc;
  }
  if (j.contains("whitelist")) {
    const json& w = j["whitelist"];
    s.whitelist.n = opt<std::uint32_t>(w, "n", 3, "whitelist");
    s.whitelist.passphrase = opt<std::string>(w, "passphrase", s.whitelist.passphrase, "whitelist");
    if (w.contains("store")) s.whitelist.store = base_dir / opt<std::string>(w, "store", "", "whitelist");
  }
  if (j.contains("entropy")) {
    const json& e = j["entropy"];
    s.entropy.threshold = opt<double>(e, "threshold", s.entropy.threshold, "entropy");
    s.entropy.min_window = opt<std::size_t>(e, "min_window", s.entropy.min_window, "entropy");
    s.entropy.consecutive_k = opt<std::uint32_t>(e, "k", s.entropy.consecutive_k, "entropy");
    try {
      s.entropy.validate();
    } catch (const Error& err) {
      spec_error("entropy", err.what());
    }
  }
  s.max_steps = opt<std::uint64_t>(j, "max_steps", s.max_steps, "max_steps");
  s.workers = std::max<std::uint32_t>(1, opt<std::uint32_t>(j, "workers", 1, "workers"));
  s.timing = opt<bool>(j, "timing", false, "timing");
  s.timing_repeats = opt<std::uint32_t>(j, "timing_repeats", s.timing_repeats, "timing_repeats");
  if (j.contains("attacker")) {
    const json& a = j["attacker"];
    s.attacker.enabled = opt<bool>(a, "enabled", true, "attacker");
    s.attacker.iterations = opt<std::uint64_t>(a, "iterations", s.attacker.iterations, "attacker");
    s.attacker.agents = opt<std::uint32_t>(a, "agents", s.attacker.agents, "attacker");
    if (s.attacker.enabled && s.attacker.agents < 1) spec_error("attacker", "agents must be at least 1");
    if (a.contains("fleet_sample")) s.attacker.fleet_sample = opt<std::string>(a, "fleet_sample", "", "attacker");
    if (a.contains("rate_per_hour")) s.attacker.rate_per_hour = opt<double>(a, "rate_per_hour", 0, "attacker");
    s.attacker.sim_hours = opt<double>(a, "sim_hours", s.attacker.sim_hours, "attacker");
    s.attacker.time_scale = opt<double>(a, "time_scale", s.attacker.time_scale, "attacker");
  }

  const simcore::VirtualFs fs = corpus_vfs(s.seed);
  if (!j.contains("processes") || !j["processes"].is_array()) spec_error("processes", "an array is required");
  std::size_t idx = 0;
  for (const json& p : j["processes"]) {
    const std::string where = "processes[" + std::to_string(idx++) + "]";
    const auto runs = opt<std::uint32_t>(p, "runs", 1, where);
    std::optional<std::string> name;
    if (p.contains("name")) name = opt<std::string>(p, "name", "", where);
    if (p.contains("corpus")) {
      if (opt<std::string>(p, "corpus", "", where) != "full") spec_error(where, "only \"full\" corpus is known");
      add_corpus(s.processes, s.seed);
    } else if (p.contains("rw")) {
      const json& g = p["rw"];
      RwGenParams params = params_from_fields(
          opt<std::string>(g, "write_pattern", "new_file", where), opt<std::string>(g, "chain", "EC1", where),
          opt<std::string>(g, "crypto", "standard_api", where), opt<std::string>(g, "extension", "novel", where),
          opt<std::string>(g, "note_channel", "file", where));
      params.static_evidence_only = opt<bool>(g, "static_evidence_only", false, where);
      params.split_key_send = opt<bool>(g, "split_key_send", false, where);
      params.target_files = opt<std::uint32_t>(g, "target_files", 0, where);
      check_params(params);
      s.processes.push_back({name.value_or(variant_name(params)), CorpusEntry::Kind::rw, params,
                             generate_rw(params, derive_seed(s.seed, 100 + idx), fs), runs});
    } else if (p.contains("benign")) {
      const auto profile = opt<std::string>(p, "benign", "", where);
      s.processes.push_back({name.value_or("benign_" + profile), CorpusEntry::Kind::benign, std::nullopt,
                             generate_benign(profile, s.seed), runs});
    } else if (p.contains("dormant")) {
      s.processes.push_back({name.value_or("dormant_" + std::to_string(idx)), CorpusEntry::Kind::dormant, std::nullopt,
                             generate_dormant(derive_seed(s.seed, 900 + idx)), runs});
    } else if (p.contains("reset_sample")) {
      const auto sample = opt<std::string>(p, "reset_sample", "", where);
      s.processes.push_back({name.value_or(sample), CorpusEntry::Kind::rw, std::nullopt,
                             generate_reset_sample(sample, s.seed, fs), runs});
    } else if (p.contains("program")) {
      const auto file = base_dir / opt<std::string>(p, "program", "", where);
      const auto kind = opt<std::string>(p, "kind", "program", where);
      CorpusEntry::Kind k = CorpusEntry::Kind::program;
      if (kind == "rw") k = CorpusEntry::Kind::rw;
      else if (kind == "benign") k = CorpusEntry::Kind::benign;
      else if (kind == "dormant") k = CorpusEntry::Kind::dormant;
      else if (kind != "program") spec_error(where, "unknown kind '" + kind + "'");
      s.processes.push_back({name.value_or(file.stem().string()), k, std::nullopt,
                             simcore::parse_program(read_text(file)), runs});
    } else {
      spec_error(where, "expected one of corpus, rw, benign, dormant, reset_sample, program");
    }
  }
  return s;
}

namespace {

std::uint64_t elapsed_ns(std::chrono::steady_clock::time_point t0) {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0).count());
}

}  // namespace

ProcessOutcome run_monitored(const SimProgram& program, const ScenarioSpec& spec,
                             const std::shared_ptr<const kb::KnowledgeBase>& kb,
                             const std::shared_ptr<const cryptodetect::CfsScanner>& scanner, std::uint64_t stream,
                             bool record_observations) {
  simcore::Kernel kernel(simcore::KernelOptions{derive_seed(spec.seed, stream)});
  kernel.fs() = corpus_vfs(spec.seed);
  auto run = kernel.launch(program, true, simcore::LaunchOptions{false, record_observations});
  auto monitor = std::make_shared<deceptor::Deceptor>(
      run.pid(), program.code_image, kb, scanner,
      deceptor::DeceptorOptions{spec.arc, spec.entropy, derive_seed(spec.seed, stream + 7)});
  kernel.attach_interposer(run, monitor);
  ProcessOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  kernel.resume(run);
  out.exited = kernel.run(run, spec.max_steps);
  out.final = monitor->finalize_process(kernel, out.exited);
  out.exec_ns = elapsed_ns(t0);
  if (!out.exited) kernel.kill(run);
  out.vfs = kernel.fs().snapshot();
  out.observations = run.observations();
  return out;
}

ProcessOutcome run_unmonitored(const SimProgram& program, const ScenarioSpec& spec, std::uint64_t stream,
                               bool attach_null, bool record_observations) {
  simcore::Kernel kernel(simcore::KernelOptions{derive_seed(spec.seed, stream)});
  kernel.fs() = corpus_vfs(spec.seed);
  auto run = kernel.launch(program, true, simcore::LaunchOptions{false, record_observations});
  if (attach_null) kernel.attach_interposer(run, std::make_shared<simcore::NullInterposer>());
  ProcessOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  kernel.resume(run);
  out.exited = kernel.run(run, spec.max_steps);
  out.exec_ns = elapsed_ns(t0);
  if (!out.exited) kernel.kill(run);
  out.final.verdict = deceptor::Verdict{};
  out.vfs = kernel.fs().snapshot();
  out.observations = run.observations();
  return out;
}

namespace {

std::string group_of(const ProcessSpec& p) {
  if (p.params) return detection_group(*p.params);
  return to_string(p.kind);
}

void run_reset_phase(const ProcessSpec& p, const ScenarioSpec& spec, const kb::KnowledgeBase& kb,
                     std::uint64_t stream, ProcessResult& res) {
  const auto fs = corpus_vfs(spec.seed);
  const auto report = resetloop::analyze_program(p.program, fs, simcore::KernelOptions{derive_seed(spec.seed, stream)},
                                                 spec.max_steps);
  const auto chain = resetloop::classify_chain(report, kb);
  res.chain = std::string(resetloop::to_string(chain));
  if (chain == resetloop::ChainClass::unknown) return;
  const auto cfg = resetloop::build_config(report, chain, kb);
  const auto patched = resetloop::apply_patches(p.program, cfg);
  attacker::AttackerDb db;
  resetloop::LoopOptions lo;
  lo.seed = derive_seed(spec.seed, stream + 11);
  lo.sample_id = p.name;
  const auto loop = resetloop::run_loop(patched, cfg, db, {spec.attacker.iterations}, lo, fs);
  res.loop_iterations = loop.iterations;
  std::set<attacker::VictimId> ids(loop.victim_ids.begin(), loop.victim_ids.end());
  res.loop_unique_ids = ids.size();
}

}  // namespace

RunReport run_scenario(const ScenarioSpec& spec) {
  // Everything that can fail on input is loaded before any process starts.
  auto kb = std::make_shared<const kb::KnowledgeBase>(spec.kb_dir ? kb::load_kb(*spec.kb_dir) : kb::KnowledgeBase::defaults());
  auto scanner = std::make_shared<const cryptodetect::CfsScanner>(kb->cfs);
  spec.entropy.validate();
  for (const auto& p : spec.processes) simcore::validate(p.program);

  bool tampered = false;
  deceptor::WhitelistStore whitelist =
      spec.whitelist.store
          ? deceptor::WhitelistStore::load_or_rebuild(*spec.whitelist.store, spec.whitelist.passphrase, spec.whitelist.n,
                                                      &tampered)
          : deceptor::WhitelistStore(spec.whitelist.n);
  std::mutex whitelist_mutex;

  std::vector<std::vector<ProcessResult>> results(spec.processes.size());
  auto work = [&](std::size_t i) {
    const ProcessSpec& p = spec.processes[i];
    for (std::uint32_t r = 0; r < p.runs; ++r) {
      const std::uint64_t stream = (static_cast<std::uint64_t>(i) << 16) | r;
      ProcessResult res;
      res.name = p.name;
      res.kind = to_string(p.kind);
      res.group = group_of(p);
      res.run = r;
      bool bypass = false;
      {
        std::lock_guard lock(whitelist_mutex);
        bypass = whitelist.check(p.program);
      }
      ProcessOutcome out;
      if (bypass) {
        out = run_unmonitored(p.program, spec, stream, false);
        out.final.verdict = deceptor::Verdict{deceptor::Verdict::Kind::benign, 0, deceptor::Reason::none};
        res.whitelisted = true;
      } else {
        out = run_monitored(p.program, spec, kb, scanner, stream);
        std::lock_guard lock(whitelist_mutex);
        whitelist.update(p.program, out.final.verdict);
      }
      const auto& v = out.final.verdict;
      res.verdict = std::string(deceptor::to_string(v.kind));
      res.reason = std::string(deceptor::to_string(v.reason));
      res.stage = v.stage;
      res.files_lost = out.final.files_lost;
      res.deferred_applied = out.final.deferred_applied;
      res.vfs_hash = to_hex(simcore::snapshot_hash(out.vfs));
      if (spec.attacker.enabled && v.is_ransomware()) run_reset_phase(p, spec, *kb, stream, res);
      results[i].push_back(std::move(res));
    }
  };

  if (spec.workers <= 1) {
    for (std::size_t i = 0; i < spec.processes.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::uint32_t w = 0; w < spec.workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < spec.processes.size(); i = next++) {
          try {
            work(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  RunReport report;
  report.seed = spec.seed;
  report.arc = std::string(deceptor::to_string(spec.arc));
  for (auto& rs : results)
    for (auto& r : rs) report.processes.push_back(std::move(r));
  summarize(report);

  if (spec.whitelist.store) whitelist.save(*spec.whitelist.store, spec.whitelist.passphrase);

  if (spec.attacker.enabled && spec.attacker.fleet_sample) {
    const std::string sample = *spec.attacker.fleet_sample;
    const auto fs = corpus_vfs(spec.seed);
    const SimProgram program = generate_reset_sample(sample, spec.seed, fs);
    const auto sba = resetloop::analyze_program(program, fs, simcore::KernelOptions{spec.seed});
    const auto cfg = resetloop::build_config(sba, resetloop::classify_chain(sba, *kb), *kb);
    resetloop::FleetOptions fo;
    fo.sample_id = sample;
    fo.agents = spec.attacker.agents;
    fo.rate_per_hour = spec.attacker.rate_per_hour.value_or(attacker::feasible_rate(attacker::depletion_target(sample)).mid());
    fo.sim_hours = spec.attacker.sim_hours;
    fo.time_scale = spec.attacker.time_scale;
    fo.seed = derive_seed(spec.seed, 0xf1ee7);
    attacker::AttackerServer server(attacker::AttackerDb(false));
    resetloop::run_fleet(resetloop::apply_patches(program, cfg), cfg, server, fo, fs);
    const attacker::AttackerDb db = server.finish();
    std::vector<double> buckets{1, 12, 24};
    std::erase_if(buckets, [&](double h) { return h > spec.attacker.sim_hours; });
    report.depletion.push_back({sample, fo.agents, fo.rate_per_hour, attacker::depletion_report(db, buckets)});
  }

  if (spec.timing) report.timing = measure_overhead(spec, spec.timing_repeats);
  return report;
}

namespace {

std::uint64_t median(std::vector<std::uint64_t> v) {
  std::sort(v.begin(), v.end());
  return v.empty() ? 0 : v[v.size() / 2];
}


}  // namespace

std::vector<TimingRow> measure_overhead(const ScenarioSpec& spec, std::uint32_t repeats) {
  auto kb = std::make_shared<const kb::KnowledgeBase>(spec.kb_dir ? kb::load_kb(*spec.kb_dir) : kb::KnowledgeBase::defaults());
  auto scanner = std::make_shared<const cryptodetect::CfsScanner>(kb->cfs);
  std::vector<TimingRow> rows;
  for (std::size_t i = 0; i < spec.processes.size(); ++i) {
    const auto& p = spec.processes[i];
    if (p.kind != CorpusEntry::Kind::benign) continue;
    std::vector<std::uint64_t> hooked;
    std::vector<std::uint64_t> plain;
    for (std::uint32_t r = 0; r < repeats; ++r) {
      hooked.push_back(run_monitored(p.program, spec, kb, scanner, i).exec_ns);
      plain.push_back(run_unmonitored(p.program, spec, i).exec_ns);
    }
    rows.push_back({p.name, median(hooked), median(plain)});
  }
  return rows;
}

double overhead_ratio(const ScenarioSpec& spec, std::uint32_t repeats) {
  auto kb = std::make_shared<const kb::KnowledgeBase>(spec.kb_dir ? kb::load_kb(*spec.kb_dir) : kb::KnowledgeBase::defaults());
  auto scanner = std::make_shared<const cryptodetect::CfsScanner>(kb->cfs);
  std::vector<double> ratios;
  for (std::uint32_t r = 0; r < repeats; ++r) {
    std::uint64_t hooked = 0;
    std::uint64_t plain = 0;
    // Alternate which variant runs first so warm-up effects cancel.
    for (int pass = 0; pass < 2; ++pass) {
      const bool hooked_pass = (pass == 0) == (r % 2 == 0);
      for (std::size_t i = 0; i < spec.processes.size(); ++i) {
        const auto& p = spec.processes[i];
        if (p.kind != CorpusEntry::Kind::benign) continue;
        if (hooked_pass) {
          hooked += run_monitored(p.program, spec, kb, scanner, i).exec_ns;
        } else {
          plain += run_unmonitored(p.program, spec, i).exec_ns;
        }
      }
    }
    ratios.push_back(plain == 0 ? 1.0 : static_cast<double>(hooked) / static_cast<double>(plain));
  }
  std::sort(ratios.begin(), ratios.end());
  return ratios.empty() ? 1.0 : ratios[ratios.size() / 2];
}

}  // namespace rwdecoy::scenario
