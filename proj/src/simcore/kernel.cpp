#include "rwdecoy/simcore/kernel.hpp"

#include <algorithm>
#include <cstring>

namespace rwdecoy::simcore {

const Value* ApiEvent::arg(std::string_view name) const {
  for (const auto& [k, v] : args) {
    if (k == name) return &v;
  }
  return nullptr;
}

Path ApiEvent::path_arg(std::string_view name) const {
  const Value* v = arg(name);
  if (v == nullptr) return {};
  if (const auto* s = std::get_if<std::string>(v)) return Path(*s);
  return {};
}

HandleId ApiEvent::handle_arg(std::string_view name) const {
  const Value* v = arg(name);
  if (v == nullptr) return {};
  if (const auto* h = std::get_if<HandleId>(v)) return *h;
  return {};
}

const Buffer* ApiEvent::buffer_arg(std::string_view name) const {
  const Value* v = arg(name);
  return v == nullptr ? nullptr : std::get_if<Buffer>(v);
}

std::string ApiEvent::text_arg(std::string_view name) const {
  const Value* v = arg(name);
  if (v == nullptr) return {};
  if (const auto* s = std::get_if<std::string>(v)) return *s;
  if (const auto* b = std::get_if<Buffer>(v)) return {b->bytes.begin(), b->bytes.end()};
  return {};
}

std::int64_t ApiEvent::int_arg(std::string_view name, std::int64_t fallback) const {
  const Value* v = arg(name);
  if (v == nullptr) return fallback;
  if (const auto* n = std::get_if<std::int64_t>(v)) return *n;
  return fallback;
}

const Value* ProcessRun::var(const std::string& name) const {
  auto it = vars_.find(name);
  return it == vars_.end() ? nullptr : &it->second;
}

Bytes keyed_stream(std::span<const std::uint8_t> data, std::span<const std::uint8_t> key) {
  const Digest256 k = sha256(key);
  std::uint64_t seed = 0;
  std::memcpy(&seed, k.data(), sizeof(seed));
  Rng ks(seed);
  Bytes out(data.begin(), data.end());
  std::size_t i = 0;
  while (i < out.size()) {
    std::uint64_t w = ks.next();
    for (int b = 0; b < 8 && i < out.size(); ++b, ++i) out[i] ^= static_cast<std::uint8_t>(w >> (8 * b));
  }
  return out;
}

namespace {

// Bytes committed below the stack base by a call into each API family. The
// stack limit only ever grows downward, as with guard-page commits.
Address frame_depth(Api api) {
  if (is_encrypt(api)) return 0x30000;
  switch (api) {
    case Api::Socket:
    case Api::Connect:
    case Api::Send: return 0x24000;
    case Api::FindFirstFile:
    case Api::FindNextFile: return 0x1c000;
    default: return 0x18000;
  }
}

void append_encoding(Bytes& out, const Value& v) {
  struct Visitor {
    Bytes& out;
    void operator()(std::monostate) const {}
    void operator()(bool b) const { out.push_back(b ? 1 : 0); }
    void operator()(std::int64_t n) const {
      for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(n) >> (8 * i)));
    }
    void operator()(const std::string& s) const { out.insert(out.end(), s.begin(), s.end()); }
    void operator()(HandleId h) const {
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(h.value >> (8 * i)));
    }
    void operator()(const Buffer& b) const { out.insert(out.end(), b.bytes.begin(), b.bytes.end()); }
  };
  std::visit(Visitor{out}, v);
}

void collect_lineage(std::vector<std::uint64_t>& lineage, const Value& v) {
  if (const auto* b = std::get_if<Buffer>(&v)) {
    if (b->tag != 0) lineage.push_back(b->tag);
    lineage.insert(lineage.end(), b->lineage.begin(), b->lineage.end());
  }
}

void dedupe(std::vector<std::uint64_t>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

Kernel::Kernel(KernelOptions options) : options_(options), clock_ms_(options.clock_start_ms) {}

ProcessRun Kernel::launch(SimProgram program, bool suspended, LaunchOptions options) {
  validate(program);
  ProcessRun run;
  {
    std::lock_guard lock(mutex_);
    run.pid_ = next_pid_;
    next_pid_ += 4;
  }
  run.program_ = std::move(program);
  run.regs_ = run.program_.stack;
  run.launch_stack_ = run.program_.stack;
  run.pc_ = run.program_.entry_point;
  run.next_tag_ = (static_cast<std::uint64_t>(run.pid_) << 40) | 1;
  run.rng_.reseed(derive_seed(options_.seed, run.pid_));
  run.options_ = options;
  run.mode_ = RunMode::suspended;
  if (!suspended) resume(run);
  return run;
}

void Kernel::attach_interposer(ProcessRun& run, std::shared_ptr<Interposer> interposer) {
  if (run.mode_ != RunMode::suspended) {
    throw Error(ErrorCode::late_attach, "process " + std::to_string(run.pid_) + " is already running");
  }
  run.interposers_.push_back(std::move(interposer));
}

void Kernel::resume(ProcessRun& run) {
  if (run.mode_ == RunMode::suspended) run.mode_ = RunMode::running;
}

void Kernel::finish(ProcessRun& run, ExitReason why) {
  run.mode_ = RunMode::terminated;
  run.exit_reason_ = why;
}

void Kernel::kill(ProcessRun& run) {
  if (run.mode_ != RunMode::terminated) finish(run, ExitReason::killed);
}

bool Kernel::run(ProcessRun& run, std::uint64_t max_steps) {
  for (std::uint64_t i = 0; i < max_steps && run.mode_ == RunMode::running; ++i) {
    if (step(run) == StepResult::halted) break;
  }
  return run.mode_ == RunMode::terminated;
}

const HandleEntry* Kernel::handle(HandleId h) const {
  auto it = handles_.find(h.value);
  return it == handles_.end() ? nullptr : &it->second;
}

HandleId Kernel::open_handle(HandleEntry entry) {
  next_handle_ += 4;
  handles_.emplace(next_handle_, std::move(entry));
  return HandleId{next_handle_};
}

void Kernel::release_handles(ProcessId pid) {
  std::erase_if(handles_, [pid](const auto& kv) { return kv.second.owner == pid; });
}

Buffer Kernel::fresh_buffer(ProcessRun& run, Bytes bytes) {
  Buffer b;
  b.bytes = std::move(bytes);
  b.tag = run.next_tag_++;
  return b;
}

Value Kernel::eval(ProcessRun& run, const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::lit: return e.literal;
    case Expr::Kind::var: {
      auto it = run.vars_.find(e.var);
      return it == run.vars_.end() ? Value{} : it->second;
    }
    case Expr::Kind::concat: {
      std::vector<Value> parts;
      parts.reserve(e.args.size());
      bool all_strings = true;
      for (const auto& a : e.args) {
        parts.push_back(eval(run, a));
        all_strings = all_strings && std::holds_alternative<std::string>(parts.back());
      }
      if (all_strings) {
        std::string s;
        for (const auto& p : parts) s += std::get<std::string>(p);
        return s;
      }
      Bytes bytes;
      std::vector<std::uint64_t> lineage;
      for (const auto& p : parts) {
        append_encoding(bytes, p);
        collect_lineage(lineage, p);
      }
      Buffer b = fresh_buffer(run, std::move(bytes));
      dedupe(lineage);
      b.lineage = std::move(lineage);
      return b;
    }
    case Expr::Kind::digest: {
      Bytes bytes;
      std::vector<std::uint64_t> lineage;
      for (const auto& a : e.args) {
        Value v = eval(run, a);
        append_encoding(bytes, v);
        collect_lineage(lineage, v);
      }
      const Digest256 d = sha256(bytes);
      const std::size_t n = std::min<std::size_t>(e.length == 0 ? d.size() : e.length, d.size());
      Buffer b = fresh_buffer(run, Bytes(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(n)));
      dedupe(lineage);
      b.lineage = std::move(lineage);
      return b;
    }
    case Expr::Kind::xcrypt: {
      Value data = eval(run, e.args.at(0));
      Value key = eval(run, e.args.at(1));
      Bytes plain;
      Bytes key_bytes;
      append_encoding(plain, data);
      append_encoding(key_bytes, key);
      std::vector<std::uint64_t> lineage;
      collect_lineage(lineage, data);
      collect_lineage(lineage, key);
      // A different keystream from the API ciphers: the embedded routine is
      // its own algorithm.
      key_bytes.push_back(0xc5);
      Buffer b = fresh_buffer(run, keyed_stream(plain, key_bytes));
      dedupe(lineage);
      b.lineage = std::move(lineage);
      return b;
    }
  }
  return {};
}

StepResult Kernel::step(ProcessRun& run) {
  if (run.mode_ == RunMode::terminated) return StepResult::halted;
  if (run.mode_ != RunMode::running) {
    throw Error(ErrorCode::not_running, "process " + std::to_string(run.pid_) + " is suspended");
  }
  auto it = run.program_.instructions.find(run.pc_);
  if (it == run.program_.instructions.end()) {
    finish(run, ExitReason::fault);
    throw Error(ErrorCode::segfault_model, "no instruction at address " + std::to_string(run.pc_));
  }
  ++run.steps_;
  const Instruction& ins = it->second;

  if (std::holds_alternative<Halt>(ins)) {
    finish(run, ExitReason::halted);
    return StepResult::halted;
  }
  if (const auto* j = std::get_if<Jmp>(&ins)) {
    if (j->restore) {
      // Locals live on the discarded frames; the handles they named are
      // reclaimed with them.
      run.regs_ = *j->restore;
      run.vars_.clear();
      std::lock_guard lock(mutex_);
      release_handles(run.pid_);
    }
    if (j->target == run.program_.entry_point) ++run.loop_entries_;
    run.pc_ = j->target;
    return StepResult::progressed;
  }
  if (const auto* a = std::get_if<Assign>(&ins)) {
    run.vars_[a->var] = eval(run, a->expr);
    ++run.pc_;
    return StepResult::progressed;
  }

  const auto& call = std::get<CallApi>(ins);
  ApiEvent ev;
  ev.pid = run.pid_;
  ev.seq = run.seq_++;
  ev.api = call.api;
  ev.caller_addr = run.pc_;
  ev.return_addr = run.pc_ + 1;
  ev.args.reserve(call.args.size());
  for (const auto& [name, expr] : call.args) ev.args.emplace_back(name, eval(run, expr));

  const Address depth = frame_depth(call.api);
  if (run.regs_.base > depth) run.regs_.limit = std::min(run.regs_.limit, run.regs_.base - depth);
  ++run.calls_;
  ++run.api_counts_[index_of(call.api)];

  bool terminated = false;
  bool applied = true;
  {
    std::lock_guard lock(mutex_);
    ++clock_ms_;
    EventDisposition disp;
    for (auto& ip : run.interposers_) {
      disp = ip->before(ev, *this);
      if (disp.kind != EventDisposition::Kind::allow) break;
    }
    switch (disp.kind) {
      case EventDisposition::Kind::allow: ev.return_slot = apply_effect(run, ev); break;
      case EventDisposition::Kind::fake_success:
      case EventDisposition::Kind::block:
        applied = false;
        ev.return_slot = std::move(disp.value);
        break;
      case EventDisposition::Kind::terminate:
        applied = false;
        terminated = true;
        break;
    }
    for (auto& ip : run.interposers_) ip->after(ev, applied, *this);
    if (terminated) release_handles(run.pid_);
  }

  if (run.options_.record_observations) {
    run.observations_.push_back(std::string(to_string(ev.api)) + "=" + summarize(ev.return_slot));
  }
  if (terminated) {
    if (run.options_.record_trace) run.trace_.push_back(std::move(ev));
    finish(run, ExitReason::terminated_by_monitor);
    return StepResult::halted;
  }
  if (!call.out.empty()) run.vars_[call.out] = ev.return_slot;
  if (run.options_.record_trace) run.trace_.push_back(std::move(ev));
  run.pc_ = run.pc_ + 1;
  return StepResult::progressed;
}

Value Kernel::apply_effect(ProcessRun& run, const ApiEvent& ev) {
  auto file_handle = [&](HandleId h) -> HandleEntry* {
    auto it = handles_.find(h.value);
    if (it == handles_.end() || it->second.kind != HandleEntry::Kind::file) return nullptr;
    if (!fs_.exists(it->second.path)) return nullptr;
    return &it->second;
  };

  switch (ev.api) {
    case Api::CreateFile: {
      const Path p = ev.path_arg("path");
      const std::string disp = ev.text_arg("disposition");
      if (p.empty()) return HandleId{};
      const bool exists = fs_.exists(p);
      if (disp == "CREATE_NEW") {
        if (exists) return HandleId{};
        fs_.put(p, {}, run.pid_);
      } else if (disp == "CREATE_ALWAYS") {
        if (exists) {
          fs_.truncate(p);
        } else {
          fs_.put(p, {}, run.pid_);
        }
      } else if (!exists) {
        return HandleId{};
      }
      return open_handle(HandleEntry{HandleEntry::Kind::file, run.pid_, p, 0, {}, false});
    }
    case Api::WriteFile: {
      HandleEntry* h = file_handle(ev.handle_arg("handle"));
      if (h == nullptr) return false;
      const Value* v = ev.arg("buffer");
      Bytes data;
      if (v != nullptr) append_encoding(data, *v);
      if (!fs_.write_at(h->path, h->pointer, data)) return false;
      h->pointer += data.size();
      return true;
    }
    case Api::ReadFile: {
      HandleEntry* h = file_handle(ev.handle_arg("handle"));
      if (h == nullptr) return false;
      const auto& content = fs_.find(h->path)->content;
      const std::size_t avail = content.size() - std::min(h->pointer, content.size());
      const std::int64_t want = ev.int_arg("len", static_cast<std::int64_t>(avail));
      const std::size_t n = std::min<std::size_t>(avail, static_cast<std::size_t>(std::max<std::int64_t>(want, 0)));
      auto first = content.begin() + static_cast<std::ptrdiff_t>(h->pointer);
      Bytes out(first, first + static_cast<std::ptrdiff_t>(n));
      h->pointer += n;
      return fresh_buffer(run, std::move(out));
    }
    case Api::SetFilePointer: {
      HandleEntry* h = file_handle(ev.handle_arg("handle"));
      if (h == nullptr) return false;
      const std::int64_t off = ev.int_arg("offset", 0);
      if (off < 0 || static_cast<std::size_t>(off) > fs_.find(h->path)->content.size()) return false;
      h->pointer = static_cast<std::size_t>(off);
      return true;
    }
    case Api::DeleteFile: {
      const Path p = ev.path_arg("path");
      if (!fs_.remove(p)) return false;
      return true;
    }
    case Api::MoveFile:
    case Api::MoveFileWithProgress: {
      const Path src = ev.path_arg("src");
      const Path dst = ev.path_arg("dst");
      if (!fs_.move(src, dst)) return false;
      for (auto& [id, h] : handles_) {
        if (h.kind == HandleEntry::Kind::file && h.path == src) h.path = dst;
      }
      return true;
    }
    case Api::CloseHandle: return handles_.erase(ev.handle_arg("handle").value) > 0;
    case Api::CryptEncrypt:
    case Api::AES_encrypt:
    case Api::AESxEncryption: {
      const Buffer* data = ev.buffer_arg("data");
      if (data == nullptr) return false;
      Bytes key;
      if (const Value* k = ev.arg("key")) append_encoding(key, *k);
      Buffer out = fresh_buffer(run, keyed_stream(data->bytes, key));
      out.lineage = {data->tag};
      return out;
    }
    case Api::FindFirstFile: {
      run.enumeration_ = fs_.list_under(ev.path_arg("dir"));
      run.enumeration_pos_ = 0;
      [[fallthrough]];
    }
    case Api::FindNextFile: {
      if (run.enumeration_pos_ >= run.enumeration_.size()) return std::string{};
      return run.enumeration_[run.enumeration_pos_++].str();
    }
    case Api::GetMacAddress: return fresh_buffer(run, Bytes(options_.mac.begin(), options_.mac.end()));
    case Api::GetSystemTime: return clock_ms_;
    case Api::RandBytes: {
      const std::int64_t n = std::clamp<std::int64_t>(ev.int_arg("len", 16), 0, 1 << 20);
      return fresh_buffer(run, run.rng_.bytes(static_cast<std::size_t>(n)));
    }
    case Api::Socket: return open_handle(HandleEntry{HandleEntry::Kind::socket, run.pid_, {}, 0, {}, false});
    case Api::Connect: {
      auto it = handles_.find(ev.handle_arg("socket").value);
      if (it == handles_.end() || it->second.kind != HandleEntry::Kind::socket) return false;
      it->second.host = ev.text_arg("host");
      it->second.connected = true;
      return true;
    }
    case Api::Send: {
      const HandleId sock = ev.handle_arg("socket");
      auto it = handles_.find(sock.value);
      if (it == handles_.end() || !it->second.connected) return std::int64_t{-1};
      Bytes payload;
      if (const Value* v = ev.arg("buffer")) append_encoding(payload, *v);
      if (net_sink_) net_sink_(run.pid_, it->second.host, sock, payload);
      return static_cast<std::int64_t>(payload.size());
    }
    case Api::SetWallpaper: wallpaper_ = ev.text_arg("text"); return true;
  }
  return {};
}

}  // namespace rwdecoy::simcore
