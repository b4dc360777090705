#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rwdecoy/attacker/channel.hpp"
#include "rwdecoy/kb/knowledge_base.hpp"
#include "rwdecoy/resetloop/sba.hpp"

namespace rwdecoy::resetloop {

using simcore::Api;
using simcore::SimProgram;

enum class ChainClass { ec1, ec2, unknown };

std::string_view to_string(ChainClass c);

// Where the transfer-key chain sits in a trace, as trace indices.
struct KeyChain {
  std::size_t socket_index = 0;    // first call of the chain proper
  std::size_t terminal_index = 0;  // its final Send
};

// Latest transfer-key match, or nullopt.
std::optional<KeyChain> find_key_chain(const SbaReport& report, const kb::KnowledgeBase& kb);

ChainClass classify_chain(const SbaReport& report, const kb::KnowledgeBase& kb);
// Return address of the final Send of the transfer-key chain.
Address locate_transfer_key_end(const SbaReport& report, const kb::KnowledgeBase& kb);

struct DetourSpec {
  enum class Kind { bytes, time };
  Kind kind = Kind::bytes;
  std::uint32_t len = 0;  // bytes; 0 keeps the length the caller asked for
  friend bool operator==(const DetourSpec&, const DetourSpec&) = default;
};

struct LoopPatch {
  Address at = 0;
  Address jmp_to = 0;
  friend bool operator==(const LoopPatch&, const LoopPatch&) = default;
};

struct Ec2Bypass {
  Address from = 0;
  Address to = 0;
  friend bool operator==(const Ec2Bypass&, const Ec2Bypass&) = default;
};

struct DeceptorConfig {
  std::map<Api, DetourSpec> detours;
  LoopPatch loop_patch;
  StackRegs stack_restore;
  std::optional<Ec2Bypass> ec2_bypass;
  friend bool operator==(const DeceptorConfig&, const DeceptorConfig&) = default;
};

DeceptorConfig build_config(const SbaReport& report, ChainClass chain, const kb::KnowledgeBase& kb);
std::string config_to_json(const DeceptorConfig& cfg);
DeceptorConfig config_from_json(std::string_view text);

// Throws Error(bad_patch) if a configured address is not an instruction.
SimProgram apply_patches(const SimProgram& program, const DeceptorConfig& cfg);

// Answers fingerprint calls with fresh random values.
class DetourInterposer final : public simcore::Interposer {
 public:
  DetourInterposer(std::map<Api, DetourSpec> detours, std::uint64_t seed);
  simcore::EventDisposition before(const ApiEvent& ev, simcore::Kernel& kernel) override;

 private:
  std::map<Api, DetourSpec> detours_;
  Rng rng_;
  std::uint64_t next_tag_;
};

struct LoopBudget {
  std::uint64_t iterations = 0;
};

struct LoopOptions {
  std::uint64_t seed = 1;
  std::string sample_id = "rw";
  bool collect_ids = true;
  double start_seconds = 0.0;
  double interval_seconds = 1.0;  // sim time between iterations
  std::uint64_t max_steps_per_iteration = 100'000;
};

struct LoopReport {
  std::uint64_t iterations = 0;
  std::vector<attacker::VictimId> victim_ids;
  std::vector<attacker::KeyBytes> keys;
  std::uint64_t db_delta_entries = 0;
  std::uint64_t db_delta_bytes = 0;
};

// One looping process: owns its kernel and turns the 48-byte id+key payloads
// it sends into registrations.
class LoopAgent {
 public:
  LoopAgent(const SimProgram& patched, const DeceptorConfig& cfg, const simcore::VirtualFs& fs, std::uint64_t seed,
            std::string sample_id, std::uint64_t max_steps_per_iteration = 100'000);

  // Runs one entry-to-jump pass stamped with `sim_time`; registrations are
  // appended to `out`. Returns false if the process stopped instead.
  bool iterate(double sim_time, std::vector<attacker::Registration>& out);

  simcore::Kernel& kernel() { return *kernel_; }
  const simcore::ProcessRun& run() const { return run_; }
  std::uint64_t iterations() const { return iterations_; }

 private:
  std::unique_ptr<simcore::Kernel> kernel_;
  simcore::ProcessRun run_;
  std::string sample_id_;
  std::uint64_t max_steps_;
  std::uint64_t iterations_ = 0;
  double now_ = 0;
  std::map<std::uint32_t, Bytes> pending_;  // per socket
  std::vector<attacker::Registration>* out_ = nullptr;
};

LoopReport run_loop(const SimProgram& patched, const DeceptorConfig& cfg, attacker::AttackerDb& db, LoopBudget budget,
                    const LoopOptions& options = {}, const simcore::VirtualFs& fs = {});

struct FleetOptions {
  std::string sample_id = "r3";
  std::uint32_t agents = 50;
  double rate_per_hour = 0;  // aggregate registrations per sim hour
  double sim_hours = 24;
  double time_scale = 0;  // sim seconds per wall second; 0 runs unpaced
  double slice_seconds = 60;
  std::uint32_t workers = 1;
  std::uint64_t seed = 1;
  std::function<void(double sim_seconds)> progress;
};

struct FleetReport {
  std::uint64_t iterations = 0;
  double wall_seconds = 0;
  double sim_seconds = 0;
};

// Sim time of iteration k of agent a: the agents are staggered evenly over
// one per-agent interval.
double fleet_iteration_time(const FleetOptions& o, std::uint32_t agent, std::uint64_t k);
// Number of iterations the fleet schedules at or before `t` seconds.
std::uint64_t fleet_scheduled_by(const FleetOptions& o, double t);

FleetReport run_fleet(const SimProgram& patched, const DeceptorConfig& cfg, attacker::AttackerServer& server,
                      const FleetOptions& options, const simcore::VirtualFs& fs = {});

}  // namespace rwdecoy::resetloop
