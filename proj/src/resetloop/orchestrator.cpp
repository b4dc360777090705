#include "rwdecoy/resetloop/orchestrator.hpp"

#include <chrono>
#include <cmath>
#include <thread>

#include <json.hpp>

#include "rwdecoy/kb/msg.hpp"

namespace rwdecoy::resetloop {

using nlohmann::json;

std::string_view to_string(ChainClass c) {
  switch (c) {
    case ChainClass::ec1: return "EC1";
    case ChainClass::ec2: return "EC2";
    case ChainClass::unknown: return "Unknown";
  }
  return "Unknown";
}

namespace {

bool is_file_work(Api api) {
  switch (api) {
    case Api::CreateFile:
    case Api::WriteFile:
    case Api::ReadFile:
    case Api::SetFilePointer:
    case Api::DeleteFile:
    case Api::MoveFile:
    case Api::MoveFileWithProgress:
    case Api::FindFirstFile:
    case Api::FindNextFile: return true;
    default: return simcore::is_encrypt(api);
  }
}

std::optional<std::size_t> first_file_work(const SbaReport& r) {
  for (std::size_t i = 0; i < r.calls.size(); ++i)
    if (is_file_work(r.calls[i].api)) return i;
  return std::nullopt;
}

}  // namespace

std::optional<KeyChain> find_key_chain(const SbaReport& report, const kb::KnowledgeBase& kb) {
  if (report.calls.empty()) return std::nullopt;
  const kb::MsgGraph& pattern = kb.msg(kb::kTransferKey);
  std::optional<std::uint32_t> socket_node;
  for (const auto& n : pattern.nodes) {
    if (n.api_class.contains(Api::Socket)) socket_node = n.id;
  }
  const kb::MsgGraph observed = kb::extract_msg(report.calls);
  std::optional<KeyChain> best;
  kb::for_each_embedding(observed, pattern, [&](const std::vector<std::uint32_t>& map) {
    KeyChain c;
    c.terminal_index = map[pattern.terminal];
    c.socket_index = socket_node ? map[*socket_node] : c.terminal_index;
    if (!best || c.terminal_index > best->terminal_index ||
        (c.terminal_index == best->terminal_index && c.socket_index < best->socket_index)) {
      best = c;
    }
    return true;
  });
  return best;
}

ChainClass classify_chain(const SbaReport& report, const kb::KnowledgeBase& kb) {
  const auto chain = find_key_chain(report, kb);
  if (!chain) return ChainClass::unknown;
  const auto first = first_file_work(report);
  if (!first || chain->terminal_index < *first) return ChainClass::ec1;
  return ChainClass::ec2;
}

Address locate_transfer_key_end(const SbaReport& report, const kb::KnowledgeBase& kb) {
  const auto chain = find_key_chain(report, kb);
  if (!chain) throw Error(ErrorCode::no_transfer_key, "no transfer-key chain in the trace");
  return report.calls[chain->terminal_index].return_addr;
}

DeceptorConfig build_config(const SbaReport& report, ChainClass chain, const kb::KnowledgeBase& kb) {
  if (chain == ChainClass::unknown) throw Error(ErrorCode::no_transfer_key, "chain class is Unknown");
  const auto key_chain = find_key_chain(report, kb);
  if (!key_chain) throw Error(ErrorCode::no_transfer_key, "no transfer-key chain in the trace");

  DeceptorConfig cfg;
  cfg.loop_patch = {report.calls[key_chain->terminal_index].return_addr, report.entry_point};
  cfg.stack_restore = report.stack_snapshot;
  for (const auto& c : report.calls) {
    switch (c.api) {
      case Api::GetMacAddress: cfg.detours[c.api] = {DetourSpec::Kind::bytes, 6}; break;
      case Api::GetSystemTime: cfg.detours[c.api] = {DetourSpec::Kind::time, 0}; break;
      case Api::RandBytes: cfg.detours[c.api] = {DetourSpec::Kind::bytes, 0}; break;
      default: break;
    }
  }

  if (chain == ChainClass::ec2) {
    // Skip from the start of enumeration to just past the last deletion
    // that precedes the key transfer (or the last file operation, for
    // samples that overwrite in place).
    const std::size_t limit = key_chain->socket_index;
    std::optional<std::size_t> from;
    std::optional<std::size_t> last_delete;
    std::optional<std::size_t> last_work;
    for (std::size_t i = 0; i < limit; ++i) {
      const Api api = report.calls[i].api;
      if (!from && api == Api::FindFirstFile) from = i;
      if (api == Api::DeleteFile) last_delete = i;
      if (is_file_work(api) || api == Api::CloseHandle) last_work = i;
    }
    if (!from) from = first_file_work(report);
    const auto to = last_delete ? last_delete : last_work;
    if (from && to && *from <= *to) {
      cfg.ec2_bypass = Ec2Bypass{report.calls[*from].caller_addr, report.calls[*to].return_addr};
    } else {
      throw Error(ErrorCode::no_transfer_key, "EC2 chain without a file-operation block before the key transfer");
    }
  }
  return cfg;
}

namespace {

json regs_json(const StackRegs& r) { return {{"base", r.base}, {"limit", r.limit}}; }

template <class T>
T field(const json& j, const char* name, const char* where) {
  if (!j.is_object() || !j.contains(name)) {
    throw Error(ErrorCode::format, std::string(where) + ": missing field '" + name + "'");
  }
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::format, std::string(where) + ": field '" + name + "' has the wrong type");
  }
}

}  // namespace

std::string config_to_json(const DeceptorConfig& cfg) {
  json j;
  json detours = json::object();
  for (const auto& [api, d] : cfg.detours) {
    detours[std::string(simcore::to_string(api))] = {{"kind", d.kind == DetourSpec::Kind::time ? "time" : "bytes"},
                                                     {"len", d.len}};
  }
  j["detours"] = detours;
  j["loop_patch"] = {{"at", cfg.loop_patch.at}, {"jmp_to", cfg.loop_patch.jmp_to}};
  j["stack_restore"] = regs_json(cfg.stack_restore);
  if (cfg.ec2_bypass) j["ec2_bypass"] = {{"from", cfg.ec2_bypass->from}, {"to", cfg.ec2_bypass->to}};
  return j.dump(2);
}

DeceptorConfig config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::format, std::string("config: ") + e.what());
  }
  DeceptorConfig cfg;
  const json detours = field<json>(j, "detours", "config");
  if (!detours.is_object()) throw Error(ErrorCode::format, "config: detours must be an object");
  for (const auto& [name, d] : detours.items()) {
    const auto api = simcore::api_from_string(name);
    if (!api) throw Error(ErrorCode::format, "config: unknown API '" + name + "' in detours");
    const auto kind = field<std::string>(d, "kind", "config.detours");
    if (kind != "bytes" && kind != "time") throw Error(ErrorCode::format, "config.detours: bad kind '" + kind + "'");
    cfg.detours[*api] = {kind == "time" ? DetourSpec::Kind::time : DetourSpec::Kind::bytes,
                         field<std::uint32_t>(d, "len", "config.detours")};
  }
  const json lp = field<json>(j, "loop_patch", "config");
  cfg.loop_patch = {field<Address>(lp, "at", "config.loop_patch"), field<Address>(lp, "jmp_to", "config.loop_patch")};
  const json sr = field<json>(j, "stack_restore", "config");
  cfg.stack_restore = {field<Address>(sr, "base", "config.stack_restore"),
                       field<Address>(sr, "limit", "config.stack_restore")};
  if (j.contains("ec2_bypass")) {
    const json b = j["ec2_bypass"];
    cfg.ec2_bypass = Ec2Bypass{field<Address>(b, "from", "config.ec2_bypass"), field<Address>(b, "to", "config.ec2_bypass")};
  }
  return cfg;
}

SimProgram apply_patches(const SimProgram& program, const DeceptorConfig& cfg) {
  auto require = [&](Address a, const char* what) {
    if (!program.instructions.contains(a)) {
      throw Error(ErrorCode::bad_patch, std::string(what) + " address " + std::to_string(a) + " is not an instruction");
    }
  };
  require(cfg.loop_patch.at, "loop_patch.at");
  if (cfg.loop_patch.jmp_to != program.entry_point) {
    throw Error(ErrorCode::bad_patch, "loop_patch.jmp_to must be the entry point " + std::to_string(program.entry_point));
  }
  if (cfg.stack_restore.base <= cfg.stack_restore.limit) throw Error(ErrorCode::bad_patch, "stack_restore base <= limit");
  if (cfg.ec2_bypass) {
    require(cfg.ec2_bypass->from, "ec2_bypass.from");
    require(cfg.ec2_bypass->to, "ec2_bypass.to");
    if (cfg.ec2_bypass->from == cfg.loop_patch.at) throw Error(ErrorCode::bad_patch, "bypass and loop patch collide");
  }
  SimProgram out = program;
  out.instructions[cfg.loop_patch.at] = simcore::Jmp{cfg.loop_patch.jmp_to, cfg.stack_restore};
  if (cfg.ec2_bypass) out.instructions[cfg.ec2_bypass->from] = simcore::Jmp{cfg.ec2_bypass->to, std::nullopt};
  return out;
}

DetourInterposer::DetourInterposer(std::map<Api, DetourSpec> detours, std::uint64_t seed)
    : detours_(std::move(detours)), rng_(seed), next_tag_((std::uint64_t{1} << 62) | (seed & 0xffffffffu) << 24) {}

simcore::EventDisposition DetourInterposer::before(const ApiEvent& ev, simcore::Kernel&) {
  auto it = detours_.find(ev.api);
  if (it == detours_.end()) return simcore::EventDisposition::allow();
  if (it->second.kind == DetourSpec::Kind::time) {
    // Anywhere in roughly three years of plausible wall-clock time.
    return simcore::EventDisposition::fake_success(
        static_cast<std::int64_t>(1'600'000'000'000 + rng_.below(100'000'000'000)));
  }
  std::size_t n = it->second.len;
  if (n == 0) n = static_cast<std::size_t>(std::clamp<std::int64_t>(ev.int_arg("len", 16), 0, 1 << 20));
  simcore::Buffer b;
  b.bytes = rng_.bytes(n);
  b.tag = next_tag_++;
  return simcore::EventDisposition::fake_success(std::move(b));
}

LoopAgent::LoopAgent(const SimProgram& patched, const DeceptorConfig& cfg, const simcore::VirtualFs& fs,
                     std::uint64_t seed, std::string sample_id, std::uint64_t max_steps_per_iteration)
    : kernel_(std::make_unique<simcore::Kernel>(simcore::KernelOptions{derive_seed(seed, 1)})),
      sample_id_(std::move(sample_id)),
      max_steps_(max_steps_per_iteration) {
  kernel_->fs() = fs;
  kernel_->set_net_sink([this](simcore::ProcessId, const std::string&, simcore::HandleId sock,
                               std::span<const std::uint8_t> payload) {
    Bytes& acc = pending_[sock.value];
    acc.insert(acc.end(), payload.begin(), payload.end());
    constexpr std::size_t kRecord = 16 + 32;
    std::size_t off = 0;
    while (acc.size() - off >= kRecord) {
      std::span<const std::uint8_t> rec(acc.data() + off, kRecord);
      if (out_ != nullptr) {
        if (auto r = attacker::make_registration(sample_id_, rec.first(16), rec.subspan(16), now_)) {
          out_->push_back(std::move(*r));
        }
      }
      off += kRecord;
    }
    acc.erase(acc.begin(), acc.begin() + static_cast<std::ptrdiff_t>(off));
  });
  run_ = kernel_->launch(patched, true, simcore::LaunchOptions{false, false});
  kernel_->attach_interposer(run_, std::make_shared<DetourInterposer>(cfg.detours, derive_seed(seed, 2)));
  kernel_->resume(run_);
}

bool LoopAgent::iterate(double sim_time, std::vector<attacker::Registration>& out) {
  if (run_.mode() != simcore::RunMode::running) return false;
  now_ = sim_time;
  out_ = &out;
  const std::uint64_t entries = run_.loop_entries();
  for (std::uint64_t i = 0; i < max_steps_ && run_.loop_entries() == entries; ++i) {
    if (kernel_->step(run_) == simcore::StepResult::halted) break;
  }
  out_ = nullptr;
  pending_.clear();  // sockets were released at the loop jump
  if (run_.loop_entries() == entries) return false;
  ++iterations_;
  return true;
}

LoopReport run_loop(const SimProgram& patched, const DeceptorConfig& cfg, attacker::AttackerDb& db, LoopBudget budget,
                    const LoopOptions& options, const simcore::VirtualFs& fs) {
  LoopReport report;
  if (budget.iterations == 0) return report;
  const auto entries0 = db.entry_count();
  const auto bytes0 = db.total_bytes();
  LoopAgent agent(patched, cfg, fs, options.seed, options.sample_id, options.max_steps_per_iteration);
  std::vector<attacker::Registration> regs;
  if (options.collect_ids) {
    report.victim_ids.reserve(budget.iterations);
    report.keys.reserve(budget.iterations);
  }
  for (std::uint64_t k = 0; k < budget.iterations; ++k) {
    regs.clear();
    if (!agent.iterate(options.start_seconds + static_cast<double>(k) * options.interval_seconds, regs)) break;
    ++report.iterations;
    for (const auto& r : regs) {
      db.register_victim(r);
      if (options.collect_ids) {
        report.victim_ids.push_back(r.victim_id);
        report.keys.push_back(r.key);
      }
    }
  }
  report.db_delta_entries = db.entry_count() - entries0;
  report.db_delta_bytes = db.total_bytes() - bytes0;
  return report;
}

namespace {

double fleet_interval(const FleetOptions& o) { return static_cast<double>(o.agents) * 3600.0 / o.rate_per_hour; }

}  // namespace

double fleet_iteration_time(const FleetOptions& o, std::uint32_t agent, std::uint64_t k) {
  const double d = fleet_interval(o);
  return d * static_cast<double>(agent + 1) / static_cast<double>(o.agents) + static_cast<double>(k) * d;
}

std::uint64_t fleet_scheduled_by(const FleetOptions& o, double t) {
  std::uint64_t total = 0;
  const double d = fleet_interval(o);
  for (std::uint32_t a = 0; a < o.agents; ++a) {
    if (fleet_iteration_time(o, a, 0) > t) continue;
    auto k = static_cast<std::uint64_t>(std::floor((t - fleet_iteration_time(o, a, 0)) / d));
    // Settle rounding against the exact schedule formula.
    while (fleet_iteration_time(o, a, k + 1) <= t) ++k;
    while (k > 0 && fleet_iteration_time(o, a, k) > t) --k;
    total += k + 1;
  }
  return total;
}

FleetReport run_fleet(const SimProgram& patched, const DeceptorConfig& cfg, attacker::AttackerServer& server,
                      const FleetOptions& o, const simcore::VirtualFs& fs) {
  if (o.agents == 0) throw Error(ErrorCode::format, "fleet needs at least one agent");
  if (!(o.rate_per_hour > 0)) throw Error(ErrorCode::format, "fleet rate must be positive");
  FleetReport report;
  const double horizon = o.sim_hours * 3600.0;
  report.sim_seconds = horizon;

  std::vector<std::unique_ptr<LoopAgent>> agents;
  agents.reserve(o.agents);
  for (std::uint32_t a = 0; a < o.agents; ++a) {
    agents.push_back(std::make_unique<LoopAgent>(patched, cfg, fs, derive_seed(o.seed, 1000 + a), o.sample_id));
  }
  std::vector<std::uint64_t> next_k(o.agents, 0);
  std::vector<std::uint64_t> done(o.agents, 0);

  auto advance = [&](std::uint32_t first, std::uint32_t last, double slice_end) {
    std::vector<attacker::Registration> batch;
    for (std::uint32_t a = first; a < last; ++a) {
      for (;;) {
        const double t = fleet_iteration_time(o, a, next_k[a]);
        if (t > slice_end) break;
        if (!agents[a]->iterate(t, batch)) {
          throw Error(ErrorCode::malformed_program, "agent " + std::to_string(a) + " left its loop");
        }
        ++next_k[a];
        ++done[a];
      }
    }
    server.submit(std::move(batch));
  };

  const auto start = std::chrono::steady_clock::now();
  const std::uint32_t workers = std::max<std::uint32_t>(1, std::min(o.workers, o.agents));
  for (double slice_start = 0; slice_start < horizon; slice_start += o.slice_seconds) {
    const double slice_end = std::min(slice_start + o.slice_seconds, horizon);
    if (workers == 1) {
      advance(0, o.agents, slice_end);
    } else {
      std::vector<std::thread> pool;
      std::exception_ptr failure;
      std::mutex failure_mutex;
      const std::uint32_t per = (o.agents + workers - 1) / workers;
      for (std::uint32_t w = 0; w < workers; ++w) {
        const std::uint32_t first = w * per;
        const std::uint32_t last = std::min(o.agents, first + per);
        if (first >= last) break;
        pool.emplace_back([&, first, last] {
          try {
            advance(first, last, slice_end);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            failure = std::current_exception();
          }
        });
      }
      for (auto& t : pool) t.join();
      if (failure) std::rethrow_exception(failure);
    }
    if (o.progress) o.progress(slice_end);
    if (o.time_scale > 0) {
      std::this_thread::sleep_until(start + std::chrono::duration<double>(slice_end / o.time_scale));
    }
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (auto n : done) report.iterations += n;
  return report;
}

}  // namespace rwdecoy::resetloop
