#pragma once

#include <array>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "rwdecoy/simcore/program.hpp"
#include "rwdecoy/simcore/vfs.hpp"

namespace rwdecoy::simcore {

struct ApiEvent {
  ProcessId pid = 0;
  std::uint64_t seq = 0;
  Api api = Api::CreateFile;
  std::vector<std::pair<std::string, Value>> args;
  Address caller_addr = 0;
  Address return_addr = 0;
  Value return_slot;

  const Value* arg(std::string_view name) const;
  Path path_arg(std::string_view name) const;
  HandleId handle_arg(std::string_view name) const;
  const Buffer* buffer_arg(std::string_view name) const;
  std::string text_arg(std::string_view name) const;  // string, or buffer bytes as text
  std::int64_t int_arg(std::string_view name, std::int64_t fallback) const;
};

struct EventDisposition {
  enum class Kind { allow, fake_success, block, terminate };
  Kind kind = Kind::allow;
  Value value;

  static EventDisposition allow() { return {}; }
  static EventDisposition fake_success(Value v) { return {Kind::fake_success, std::move(v)}; }
  static EventDisposition block(Value v) { return {Kind::block, std::move(v)}; }
  static EventDisposition terminate() { return {Kind::terminate, {}}; }
};

class Kernel;

// Sees every API event of the process it is attached to, before the event's
// effect is applied. The first non-Allow disposition among attached
// interposers wins.
class Interposer {
 public:
  virtual ~Interposer() = default;
  virtual EventDisposition before(const ApiEvent& ev, Kernel& kernel) = 0;
  // `applied` is false when a disposition replaced the effect.
  virtual void after(const ApiEvent& /*ev*/, bool /*applied*/, Kernel& /*kernel*/) {}
};

class NullInterposer final : public Interposer {
 public:
  EventDisposition before(const ApiEvent&, Kernel&) override { return EventDisposition::allow(); }
};

enum class RunMode { suspended, running, terminated };
enum class StepResult { progressed, halted };
enum class ExitReason { none, halted, terminated_by_monitor, fault, killed };

struct LaunchOptions {
  bool record_trace = true;
  bool record_observations = false;
};

class ProcessRun {
 public:
  ProcessId pid() const { return pid_; }
  const SimProgram& program() const { return program_; }
  RunMode mode() const { return mode_; }
  ExitReason exit_reason() const { return exit_reason_; }
  const std::vector<ApiEvent>& trace() const { return trace_; }
  const std::vector<std::string>& observations() const { return observations_; }
  StackRegs registers() const { return regs_; }
  StackRegs launch_stack() const { return launch_stack_; }
  Address pc() const { return pc_; }
  std::uint64_t steps() const { return steps_; }
  std::uint64_t calls() const { return calls_; }
  std::uint64_t api_count(Api api) const { return api_counts_[index_of(api)]; }
  std::uint64_t loop_entries() const { return loop_entries_; }
  const Value* var(const std::string& name) const;

 private:
  friend class Kernel;

  ProcessId pid_ = 0;
  SimProgram program_;
  RunMode mode_ = RunMode::suspended;
  ExitReason exit_reason_ = ExitReason::none;
  std::vector<ApiEvent> trace_;
  std::vector<std::string> observations_;
  StackRegs regs_;
  StackRegs launch_stack_;
  Address pc_ = 0;
  std::uint64_t seq_ = 0;
  std::uint64_t steps_ = 0;
  std::uint64_t calls_ = 0;
  std::uint64_t loop_entries_ = 0;
  std::uint64_t next_tag_ = 1;
  std::array<std::uint64_t, kApiCount> api_counts_{};
  std::unordered_map<std::string, Value> vars_;
  std::vector<std::shared_ptr<Interposer>> interposers_;
  std::vector<Path> enumeration_;
  std::size_t enumeration_pos_ = 0;
  Rng rng_;
  LaunchOptions options_;
};

struct HandleEntry {
  enum class Kind { file, socket };
  Kind kind = Kind::file;
  ProcessId owner = 0;
  Path path;
  std::size_t pointer = 0;
  std::string host;
  bool connected = false;
};

using NetSink = std::function<void(ProcessId pid, const std::string& host, HandleId sock,
                                   std::span<const std::uint8_t> payload)>;

struct KernelOptions {
  std::uint64_t seed = 1;
  std::array<std::uint8_t, 6> mac{0x00, 0x1c, 0x42, 0x5e, 0x10, 0x01};
  std::int64_t clock_start_ms = 1'700'000'000'000;
};

// Keyed stream transform standing in for a block cipher: xor with a keystream
// seeded from SHA-256(key). Output is indistinguishable from random bytes for
// the entropy heuristics, and applying it twice restores the input.
Bytes keyed_stream(std::span<const std::uint8_t> data, std::span<const std::uint8_t> key);

class Kernel {
 public:
  explicit Kernel(KernelOptions options = {});
  Kernel(const Kernel&) = delete;
  Kernel& operator=(const Kernel&) = delete;

  VirtualFs& fs() { return fs_; }
  const VirtualFs& fs() const { return fs_; }

  ProcessRun launch(SimProgram program, bool suspended, LaunchOptions options = {});
  void attach_interposer(ProcessRun& run, std::shared_ptr<Interposer> interposer);
  void resume(ProcessRun& run);
  StepResult step(ProcessRun& run);
  // Steps until halt, termination, or `max_steps`; returns true if halted.
  bool run(ProcessRun& run, std::uint64_t max_steps);
  void kill(ProcessRun& run);

  const HandleEntry* handle(HandleId h) const;
  void set_net_sink(NetSink sink) { net_sink_ = std::move(sink); }
  std::int64_t clock_ms() const { return clock_ms_; }
  void set_clock_ms(std::int64_t t) { clock_ms_ = t; }
  const std::string& wallpaper() const { return wallpaper_; }
  const std::array<std::uint8_t, 6>& mac() const { return options_.mac; }

 private:
  Value eval(ProcessRun& run, const Expr& e);
  Value apply_effect(ProcessRun& run, const ApiEvent& ev);
  Buffer fresh_buffer(ProcessRun& run, Bytes bytes);
  HandleId open_handle(HandleEntry entry);
  void release_handles(ProcessId pid);
  void finish(ProcessRun& run, ExitReason why);

  KernelOptions options_;
  VirtualFs fs_;
  std::mutex mutex_;
  std::unordered_map<std::uint32_t, HandleEntry> handles_;
  std::uint32_t next_handle_ = 0x40;
  ProcessId next_pid_ = 100;
  std::int64_t clock_ms_;
  std::string wallpaper_;
  NetSink net_sink_;
};

}  // namespace rwdecoy::simcore
