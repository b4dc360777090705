#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rwdecoy/deceptor/monitor.hpp"
#include "rwdecoy/scenario/corpus.hpp"
#include "rwdecoy/scenario/report.hpp"

namespace rwdecoy::scenario {

struct ProcessSpec {
  std::string name;
  CorpusEntry::Kind kind = CorpusEntry::Kind::program;
  std::optional<RwGenParams> params;
  SimProgram program;
  std::uint32_t runs = 1;
};

struct WhitelistSpec {
  std::uint32_t n = 3;
  std::string passphrase = "rwdecoy";
  std::optional<std::filesystem::path> store;  // persisted between scenarios when set
};

// Reset phase for confirmed samples: a short loop per sample, plus an
// optional scaled fleet run for depletion figures.
struct AttackerSpec {
  bool enabled = false;
  std::uint64_t iterations = 100;
  std::optional<std::string> fleet_sample;
  std::uint32_t agents = 50;
  std::optional<double> rate_per_hour;  // default: calibrated for the sample
  double sim_hours = 24;
  double time_scale = 0;
};

struct ScenarioSpec {
  std::optional<std::filesystem::path> kb_dir;
  deceptor::ArcMode arc = deceptor::ArcMode::partial;
  WhitelistSpec whitelist;
  std::vector<ProcessSpec> processes;
  cryptodetect::EntropyPolicy entropy;
  std::uint64_t seed = 0;
  AttackerSpec attacker;
  std::uint64_t max_steps = 200'000;
  std::uint32_t workers = 1;
  bool timing = false;
  std::uint32_t timing_repeats = 20;
};

// Throws Error(format) naming the offending field; "seed" is mandatory.
// Relative program paths resolve against `base_dir`.
ScenarioSpec parse_scenario(std::string_view json_text, const std::filesystem::path& base_dir = ".");

// Full behavioral matrix, the twelve benign profiles and one dormant sample.
ScenarioSpec default_scenario(std::uint64_t seed);

struct ProcessOutcome {
  deceptor::FinalizeResult final;
  bool exited = false;
  simcore::Snapshot vfs;
  std::vector<std::string> observations;
  std::uint64_t exec_ns = 0;  // resume through finalize; excludes setup
};

// One monitored run of `program` over a fresh copy of the corpus file system.
ProcessOutcome run_monitored(const SimProgram& program, const ScenarioSpec& spec,
                             const std::shared_ptr<const kb::KnowledgeBase>& kb,
                             const std::shared_ptr<const cryptodetect::CfsScanner>& scanner, std::uint64_t stream,
                             bool record_observations = false);
// Same, with a pass-through interposer (or none at all).
ProcessOutcome run_unmonitored(const SimProgram& program, const ScenarioSpec& spec, std::uint64_t stream,
                               bool attach_null = true, bool record_observations = false);

RunReport run_scenario(const ScenarioSpec& spec);

// Median wall time of the benign processes, hooked and with a no-op hook.
std::vector<TimingRow> measure_overhead(const ScenarioSpec& spec, std::uint32_t repeats);
// Median over `repeats` rounds of total(hooked) / total(no-op hook).
double overhead_ratio(const ScenarioSpec& spec, std::uint32_t repeats);

}  // namespace rwdecoy::scenario
