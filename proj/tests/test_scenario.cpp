#include <gtest/gtest.h>

#include "helpers.hpp"
#include "rwdecoy/cryptodetect/entropy.hpp"
#include "rwdecoy/scenario/runner.hpp"

using namespace rwtest;
using namespace rwdecoy::scenario;

namespace {

Snapshot unhooked_final(const SimProgram& prog, const VirtualFs& fs) {
  Kernel k;
  k.fs() = fs;
  auto run = k.launch(prog, true);
  k.attach_interposer(run, std::make_shared<NullInterposer>());
  k.resume(run);
  k.run(run, 200000);
  return k.fs().snapshot();
}

std::size_t originals_damaged(const Snapshot& before, const Snapshot& after) {
  std::size_t n = 0;
  for (const auto& [p, bytes] : before) {
    auto it = after.find(p);
    if (it == after.end() || it->second != bytes) ++n;
  }
  return n;
}

ScenarioSpec small_spec(std::uint64_t seed) {
  ScenarioSpec s;
  s.seed = seed;
  RwGenParams known;
  known.extension = ExtensionKind::known;
  RwGenParams custom;
  custom.crypto = CryptoKind::custom;
  s.processes.push_back({"rw_known", CorpusEntry::Kind::rw, known, generate_rw(known, seed, corpus_vfs(seed))});
  s.processes.push_back({"rw_custom", CorpusEntry::Kind::rw, custom, generate_rw(custom, seed, corpus_vfs(seed))});
  s.processes.push_back({"archiver", CorpusEntry::Kind::benign, std::nullopt, generate_benign("archiver", seed)});
  s.processes.push_back({"dormant", CorpusEntry::Kind::dormant, std::nullopt, generate_dormant(seed)});
  return s;
}

}  // namespace

TEST(Corpus, MatrixHasAllCombinations) {
  const auto m = full_matrix();
  EXPECT_EQ(m.size(), 48u);
  std::set<std::string> names;
  for (const auto& p : m) names.insert(variant_name(p));
  EXPECT_EQ(names.size(), 48u);
  EXPECT_EQ(benign_profiles().size(), 12u);
}

TEST(Corpus, StaticOnlyEvidenceConflictsWithApiCrypto) {
  RwGenParams p;
  p.crypto = CryptoKind::standard_api;
  p.static_evidence_only = true;
  try {
    check_params(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_combination);
    EXPECT_NE(std::string(e.what()).find("crypto"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("static_evidence_only"), std::string::npos);
  }
  p.crypto = CryptoKind::static_cfs;
  EXPECT_NO_THROW(check_params(p));
}

TEST(Corpus, EveryRwVariantDamagesUnhooked) {
  const auto fs = corpus_vfs(5);
  for (const auto& p : full_matrix()) {
    const auto after = unhooked_final(generate_rw(p, 5, fs), fs);
    EXPECT_GT(originals_damaged(fs.snapshot(), after), 0u) << variant_name(p);
  }
}

TEST(Corpus, NewFileVariantEncryptsDeletesAndLeavesNote) {
  const auto fs = corpus_vfs(5);
  RwGenParams p;
  p.chain = ChainOrder::ec2;
  const auto after = unhooked_final(generate_rw(p, 5, fs), fs);
  const auto n = enumerable_files(fs);
  EXPECT_EQ(originals_damaged(fs.snapshot(), after), n);
  std::size_t high_entropy = 0;
  for (const auto& [path, bytes] : after) {
    if (!fs.exists(path) && bytes.size() >= 4096 && cryptodetect::shannon_entropy(bytes) > 7.2) ++high_entropy;
  }
  EXPECT_EQ(high_entropy, n);
  EXPECT_TRUE(after.contains(Path("/user/desktop/README_RESTORE_FILES.txt")));
}

TEST(Corpus, ArchiverDeletesInputsWithoutNote) {
  const auto fs = corpus_vfs(5);
  const auto after = unhooked_final(generate_benign("archiver", 5), fs);
  const auto diff = vfs_diff(fs.snapshot(), after);
  EXPECT_FALSE(diff.deleted.empty());
  EXPECT_FALSE(diff.created.empty());
  for (const auto& [path, bytes] : diff.created) {
    EXPECT_EQ(path.extension(), ".7z");
    EXPECT_FALSE(default_kb()->extensions.contains(path.extension()));
  }
}

TEST(Corpus, CustomCipherEvadesCfsButNotEntropy) {
  RwGenParams p;
  p.write_pattern = WritePattern::overwrite;
  p.crypto = CryptoKind::custom;
  p.note_channel = NoteChannel::wallpaper;
  const auto fs = corpus_vfs(5);
  const auto prog = generate_rw(p, 5, fs);
  EXPECT_TRUE(default_scanner()->scan(prog.code_image).empty());
  for (const auto& [addr, ins] : prog.instructions) {
    if (const auto* c = std::get_if<CallApi>(&ins)) EXPECT_FALSE(simcore::is_encrypt(c->api)) << addr;
  }
  ScenarioSpec spec;
  spec.seed = 5;
  const auto out = run_monitored(prog, spec, default_kb(), default_scanner(), 0);
  EXPECT_TRUE(out.final.verdict.is_ransomware());
  EXPECT_TRUE(out.final.verdict.reason == deceptor::Reason::entropy_confirmed ||
              out.final.verdict.reason == deceptor::Reason::wallpaper_note);
}

TEST(Corpus, StaticVariantIsFoundByCfs) {
  RwGenParams p;
  p.crypto = CryptoKind::static_cfs;
  p.static_evidence_only = true;
  const auto prog = generate_rw(p, 5, corpus_vfs(5));
  EXPECT_FALSE(default_scanner()->scan(prog.code_image).empty());
}

TEST(Corpus, GenerationIsDeterministic) {
  const auto a = generate_corpus(full_matrix(), benign_profiles(), 1, 77);
  const auto b = generate_corpus(full_matrix(), benign_profiles(), 1, 77);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(serialize_program(a[i].program), serialize_program(b[i].program));
}

TEST(Scenario, SeedIsMandatory) {
  try {
    parse_scenario(R"({"processes": []})");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::format);
    EXPECT_NE(std::string(e.what()).find("seed"), std::string::npos);
  }
}

TEST(Scenario, ParsesGeneratorEntries) {
  const auto s = parse_scenario(R"({"seed": 4, "arc": "full",
    "processes": [{"rw": {"write_pattern": "overwrite", "chain": "EC2", "crypto": "custom"}},
                  {"benign": "editor", "runs": 2}, {"dormant": true}]})");
  EXPECT_EQ(s.seed, 4u);
  EXPECT_EQ(s.arc, deceptor::ArcMode::full);
  ASSERT_EQ(s.processes.size(), 3u);
  EXPECT_EQ(s.processes[0].params->crypto, CryptoKind::custom);
  EXPECT_EQ(s.processes[1].runs, 2u);
}

TEST(Scenario, EmptyScenarioGivesValidEmptyReport) {
  ScenarioSpec s;
  s.seed = 1;
  const auto rep = run_scenario(s);
  EXPECT_TRUE(rep.processes.empty());
  EXPECT_EQ(rep.aggregate, Aggregate{});
  const auto back = report_from_json(report_to_json(rep));
  EXPECT_TRUE(back.processes.empty());
  EXPECT_NE(report_to_table(rep).find("no processes"), std::string::npos);
}

TEST(Scenario, SmallScenarioOutcome) {
  const auto rep = run_scenario(small_spec(3));
  EXPECT_EQ(rep.aggregate.rw_total, 2u);
  EXPECT_EQ(rep.aggregate.rw_detected, 2u);
  EXPECT_EQ(rep.aggregate.benign_fp, 0u);
  EXPECT_EQ(rep.aggregate.dormant_monitoring, 1u);
  EXPECT_TRUE(report_ok(rep));
  for (const auto& p : rep.processes) {
    if (p.name == "rw_known") {
      EXPECT_EQ(p.stage, 1);
      EXPECT_EQ(p.files_lost, 0u);
    }
    if (p.name == "rw_custom") EXPECT_LE(p.files_lost, 5u);
  }
}

TEST(Scenario, JsonAndTableCarryTheSameNumbers) {
  const auto rep = run_scenario(small_spec(3));
  const auto json = report_to_json(rep);
  const auto back = report_from_json(json);
  EXPECT_EQ(back.processes, rep.processes);
  EXPECT_EQ(back.aggregate, rep.aggregate);
  EXPECT_EQ(back.groups, rep.groups);
  EXPECT_EQ(report_to_table(back), report_to_table(rep));
  EXPECT_EQ(report_to_json(back), json);
}

TEST(Scenario, SameSeedSameBytes) {
  EXPECT_EQ(report_to_json(run_scenario(small_spec(8))), report_to_json(run_scenario(small_spec(8))));
}

TEST(Scenario, WhitelistBypassAfterThreeCleanRuns) {
  ScenarioSpec s;
  s.seed = 2;
  s.processes.push_back({"editor", CorpusEntry::Kind::benign, std::nullopt, generate_benign("editor", 2), 5});
  const auto rep = run_scenario(s);
  ASSERT_EQ(rep.processes.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(rep.processes[i].whitelisted, i >= 3) << i;
}
