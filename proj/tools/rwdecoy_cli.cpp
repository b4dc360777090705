#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "rwdecoy/attacker/channel.hpp"
#include "rwdecoy/kb/knowledge_base.hpp"
#include "rwdecoy/resetloop/orchestrator.hpp"
#include "rwdecoy/scenario/runner.hpp"

namespace fs = std::filesystem;
using namespace rwdecoy;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw Error(ErrorCode::io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os << text;
  if (!os) throw Error(ErrorCode::io, "cannot write " + p.string());
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    spit(out, text);
  }
}

int kb_show(const fs::path& dir) {
  const kb::KnowledgeBase k = kb::load_kb(dir);
  std::cout << "extensions: " << k.extensions.extensions.size() << "\n";
  std::cout << "keywords:";
  for (const auto& s : k.keywords.stems) std::cout << ' ' << s;
  std::cout << "\nmsgs:\n";
  for (const auto& [name, g] : k.msgs) {
    std::cout << "  " << name << ": " << g.nodes.size() << " nodes, " << g.edges.size() << " edges, terminal "
              << g.terminal << "\n";
  }
  std::cout << "cfs:\n";
  for (const auto& s : k.cfs) std::cout << "  " << s.meta.algorithm << ' ' << to_hex(s.digest) << "\n";
  return 0;
}

int corpus_gen(const fs::path& out, std::uint64_t seed) {
  fs::create_directories(out);
  const auto corpus =
      scenario::generate_corpus(scenario::full_matrix(), scenario::benign_profiles(), 1, seed);
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& e : corpus) {
    const std::string file = e.name + ".json";
    spit(out / file, simcore::serialize_program(e.program) + "\n");
    manifest.push_back({{"name", e.name}, {"kind", scenario::to_string(e.kind)}, {"program", file}});
  }
  nlohmann::json scenario{{"seed", seed}, {"processes", manifest}};
  spit(out / "scenario.json", scenario.dump(2) + "\n");
  std::cout << "wrote " << corpus.size() << " programs to " << out.string() << "\n";
  return 0;
}

int reset_bench(const std::string& sample, std::uint32_t agents, double hours, double time_scale,
                std::optional<double> rate, std::uint64_t seed, std::uint32_t workers, const std::string& out) {
  const kb::KnowledgeBase k = kb::KnowledgeBase::defaults();
  const auto vfs = scenario::corpus_vfs(seed);
  const auto program = scenario::generate_reset_sample(sample, seed, vfs);
  const auto sba = resetloop::analyze_program(program, vfs, simcore::KernelOptions{seed});
  const auto chain = resetloop::classify_chain(sba, k);
  const auto cfg = resetloop::build_config(sba, chain, k);
  const auto patched = resetloop::apply_patches(program, cfg);

  resetloop::FleetOptions fo;
  fo.sample_id = sample;
  fo.agents = agents;
  fo.sim_hours = hours;
  fo.time_scale = time_scale;
  fo.workers = workers;
  fo.seed = derive_seed(seed, 0xf1ee7);
  fo.rate_per_hour = rate ? *rate : attacker::feasible_rate(attacker::depletion_target(sample)).mid();
  std::cerr << sample << ": chain " << resetloop::to_string(chain) << ", " << agents << " agents, "
            << fo.rate_per_hour << " registrations/h\n";

  attacker::AttackerServer server(attacker::AttackerDb(false));
  const auto fr = resetloop::run_fleet(patched, cfg, server, fo, vfs);
  const auto db = server.finish();

  std::vector<double> buckets{1, 12, 24};
  std::erase_if(buckets, [&](double h) { return h > hours; });
  scenario::RunReport report;
  report.seed = seed;
  report.arc = "n/a";
  report.depletion.push_back({sample, agents, fo.rate_per_hour, attacker::depletion_report(db, buckets)});
  std::cerr << fr.iterations << " iterations in " << fr.wall_seconds << " s wall\n";
  emit(out.empty() ? scenario::report_to_table(report) : scenario::report_to_json(report), out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ransomware deception simulator"};
  app.require_subcommand(1);

  auto* kb_cmd = app.add_subcommand("kb", "Knowledge base maintenance");
  kb_cmd->require_subcommand(1);
  std::string kb_dir = "kb";
  auto* kb_init = kb_cmd->add_subcommand("init", "Write the built-in knowledge base");
  kb_init->add_option("--dir", kb_dir, "Target directory");
  auto* kb_show_cmd = kb_cmd->add_subcommand("show", "Summarize a knowledge base");
  kb_show_cmd->add_option("--dir", kb_dir, "Knowledge base directory");

  auto* corpus_cmd = app.add_subcommand("corpus", "Synthetic program corpus");
  corpus_cmd->require_subcommand(1);
  auto* corpus_gen_cmd = corpus_cmd->add_subcommand("gen", "Generate the full corpus");
  std::string corpus_out = "corpus";
  std::uint64_t seed = 1;
  corpus_gen_cmd->add_option("--out", corpus_out, "Output directory");
  corpus_gen_cmd->add_option("--seed", seed, "Seed");

  auto* run_cmd = app.add_subcommand("run", "Run a scenario under the monitor");
  std::string scenario_file;
  std::string run_out;
  std::optional<std::uint64_t> run_seed;
  std::string arc;
  std::string format = "json";
  bool timing = false;
  std::uint32_t workers = 1;
  run_cmd->add_option("--scenario", scenario_file, "Scenario JSON (default: full corpus)");
  run_cmd->add_option("--out", run_out, "Report file (default: stdout)");
  run_cmd->add_option("--seed", run_seed, "Override the scenario seed");
  run_cmd->add_option("--arc", arc, "ARC mode")->check(CLI::IsMember({"off", "partial", "full"}));
  run_cmd->add_option("--format", format, "json or table")->check(CLI::IsMember({"json", "table"}));
  run_cmd->add_flag("--timing", timing, "Measure hooked vs unhooked benign runs");
  run_cmd->add_option("--workers", workers, "Parallel process monitors");

  auto* report_cmd = app.add_subcommand("report", "Render a saved report");
  std::string report_in;
  std::string report_format = "table";
  report_cmd->add_option("--in", report_in, "Report JSON")->required();
  report_cmd->add_option("--format", report_format, "json or table")->check(CLI::IsMember({"json", "table"}));

  auto* bench_cmd = app.add_subcommand("reset-bench", "Scaled reset-loop depletion run");
  std::string sample = "r3";
  std::uint32_t agents = 50;
  double sim_hours = 24;
  double time_scale = 3600;
  std::optional<double> rate;
  std::string bench_out;
  std::uint32_t bench_workers = 1;
  std::uint64_t bench_seed = 1;
  bench_cmd->add_option("--sample", sample, "r1..r4")->check(CLI::IsMember({"r1", "r2", "r3", "r4"}));
  bench_cmd->add_option("--agents", agents, "Looping agents");
  bench_cmd->add_option("--sim-hours", sim_hours, "Simulated hours");
  bench_cmd->add_option("--time-scale", time_scale, "Simulated seconds per wall second (0 = unpaced)");
  bench_cmd->add_option("--rate", rate, "Aggregate registrations per simulated hour");
  bench_cmd->add_option("--seed", bench_seed, "Seed");
  bench_cmd->add_option("--workers", bench_workers, "Worker threads");
  bench_cmd->add_option("--out", bench_out, "JSON report file (default: table on stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (kb_init->parsed()) {
      kb::save_kb(kb::KnowledgeBase::defaults(), kb_dir);
      std::cout << "knowledge base written to " << kb_dir << "\n";
      return 0;
    }
    if (kb_show_cmd->parsed()) return kb_show(kb_dir);
    if (corpus_gen_cmd->parsed()) return corpus_gen(corpus_out, seed);
    if (run_cmd->parsed()) {
      scenario::ScenarioSpec spec;
      if (scenario_file.empty()) {
        spec = scenario::default_scenario(run_seed.value_or(1));
      } else {
        const fs::path file(scenario_file);
        std::string text = slurp(file);
        if (run_seed) {
          // The seed shapes generated programs, so it is applied before parsing.
          auto j = nlohmann::json::parse(text);
          j["seed"] = *run_seed;
          text = j.dump();
        }
        spec = scenario::parse_scenario(text, file.parent_path());
      }
      if (!arc.empty()) spec.arc = *deceptor::arc_from_string(arc);
      if (timing) spec.timing = true;
      if (workers > 1) spec.workers = workers;
      const auto report = scenario::run_scenario(spec);
      emit(format == "json" ? scenario::report_to_json(report) : scenario::report_to_table(report), run_out);
      return scenario::report_ok(report) ? 0 : 1;
    }
    if (report_cmd->parsed()) {
      const auto report = scenario::report_from_json(slurp(report_in));
      std::cout << (report_format == "json" ? scenario::report_to_json(report) : scenario::report_to_table(report));
      return 0;
    }
    if (bench_cmd->parsed()) {
      return reset_bench(sample, agents, sim_hours, time_scale, rate, bench_seed, bench_workers, bench_out);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
