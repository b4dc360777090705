#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "rwdecoy/deceptor/whitelist.hpp"
#include "rwdecoy/scenario/runner.hpp"

using namespace rwtest;
using deceptor::ArcMode;
using deceptor::Reason;
using deceptor::Verdict;

namespace {

const char* kDoc = "/user/documents/a.txt";

VirtualFs user_fs() {
  VirtualFs fs;
  fs.put(Path(kDoc), text_bytes("quarterly figures, draft two"));
  fs.put(Path("/user/documents/b.txt"), text_bytes("shopping list"));
  return fs;
}

void open(ProgramBuilder& b, const std::string& path, const std::string& disp, const std::string& out) {
  b.call(Api::CreateFile, {{"path", S(path)}, {"disposition", S(disp)}}, out);
}

// Reads `path`, encrypts it with the API, and leaves the ciphertext in "ct".
void read_and_encrypt(ProgramBuilder& b, const std::string& path) {
  open(b, path, "OPEN_EXISTING", "h");
  b.call(Api::ReadFile, {{"handle", V("h")}}, "pt");
  b.call(Api::RandBytes, {{"len", N(32)}}, "key");
  b.call(Api::CryptEncrypt, {{"data", V("pt")}, {"key", V("key")}}, "ct");
}

std::string content(const Kernel& k, const char* p) {
  const auto* rec = k.fs().find(Path(p));
  return rec ? std::string(rec->content.begin(), rec->content.end()) : "<missing>";
}

}  // namespace

TEST(CreateFile, KnownExtensionTerminatesAtStageOne) {
  ProgramBuilder b;
  open(b, "/user/docs/a.locky", "CREATE_NEW", "h");
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::partial);
  const auto r = m.finish();
  EXPECT_EQ(r.verdict, Verdict::ransomware(1, Reason::rw_extension));
  EXPECT_EQ(m.run.exit_reason(), ExitReason::terminated_by_monitor);
  EXPECT_FALSE(m.kernel.fs().exists(Path("/user/docs/a.locky")));
}

TEST(CreateFile, OpenExistingIsAllowedAndTrackedAsOriginal) {
  ProgramBuilder b;
  open(b, kDoc, "OPEN_EXISTING", "h");
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::partial);
  m.kernel.run(m.run, 10);
  EXPECT_TRUE(std::get<HandleId>(*m.run.var("h")).valid());
  EXPECT_TRUE(m.monitor->state().original_digests.contains(Path(kDoc)));
}

TEST(CreateFile, NewFileOnDesktopIsNoteCandidate) {
  ProgramBuilder b;
  open(b, "/user/desktop/readme.txt", "CREATE_NEW", "h");
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::partial);
  m.kernel.run(m.run, 10);
  EXPECT_TRUE(m.monitor->state().note_candidates.contains(Path("/user/desktop/readme.txt")));
  EXPECT_FALSE(m.monitor->state().verdict.is_ransomware());
}

TEST(MoveFile, RenameToKnownExtensionTerminates) {
  ProgramBuilder b;
  b.call(Api::MoveFile, {{"src", S(kDoc)}, {"dst", S("/user/documents/a.txt.wncry")}}, "ok");
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::partial);
  EXPECT_EQ(m.finish().verdict, Verdict::ransomware(1, Reason::rename_rw_extension));
  EXPECT_TRUE(m.kernel.fs().exists(Path(kDoc)));
}

TEST(MoveFile, PlainRenameIsAllowed) {
  ProgramBuilder b;
  b.call(Api::MoveFile, {{"src", S(kDoc)}, {"dst", S("/user/documents/c.txt")}}, "ok");
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::partial);
  const auto r = m.finish();
  EXPECT_TRUE(truthy(*m.run.var("ok")));
  EXPECT_TRUE(m.kernel.fs().exists(Path("/user/documents/c.txt")));
  EXPECT_EQ(r.verdict.kind, Verdict::Kind::benign);
}

TEST(MoveFile, MissingSourceFailsWithoutVerdict) {
  ProgramBuilder b;
  b.call(Api::MoveFile, {{"src", S("/user/documents/nope.txt")}, {"dst", S("/user/documents/z.txt")}}, "ok");
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::partial);
  const auto r = m.finish();
  EXPECT_FALSE(truthy(*m.run.var("ok")));
  EXPECT_FALSE(r.verdict.is_ransomware());
}

TEST(CryptoCall, PartialSetsFlagAndAllows) {
  ProgramBuilder b;
  read_and_encrypt(b, kDoc);
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::partial);
  m.kernel.run(m.run, 10);
  EXPECT_TRUE(m.monitor->state().encryption_flag);
  const auto& ct = std::get<Buffer>(*m.run.var("ct"));
  const auto& key = std::get<Buffer>(*m.run.var("key"));
  EXPECT_EQ(ct.bytes, keyed_stream(text_bytes("quarterly figures, draft two"), key.bytes));
}

TEST(CryptoCall, FullReturnsDecoyOfSameLength) {
  ProgramBuilder b;
  read_and_encrypt(b, kDoc);
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::full);
  m.kernel.run(m.run, 10);
  EXPECT_TRUE(m.monitor->state().encryption_flag);
  const auto& pt = std::get<Buffer>(*m.run.var("pt"));
  const auto& ct = std::get<Buffer>(*m.run.var("ct"));
  const auto& key = std::get<Buffer>(*m.run.var("key"));
  EXPECT_EQ(ct.bytes.size(), pt.bytes.size());
  EXPECT_NE(ct.bytes, pt.bytes);
  EXPECT_NE(ct.bytes, keyed_stream(pt.bytes, key.bytes));
}

TEST(CryptoCall, AesEncryptIsTheSameClass) {
  ProgramBuilder b;
  open(b, kDoc, "OPEN_EXISTING", "h");
  b.call(Api::ReadFile, {{"handle", V("h")}}, "pt");
  b.call(Api::AES_encrypt, {{"data", V("pt")}}, "ct");
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::partial);
  m.kernel.run(m.run, 10);
  EXPECT_TRUE(m.monitor->state().encryption_flag);
  EXPECT_EQ(m.monitor->state().stage_reached, 2);
}

TEST(WriteFile, OverwriteAfterRewindIsDroppedUnderPartial) {
  ProgramBuilder b;
  read_and_encrypt(b, kDoc);
  b.call(Api::SetFilePointer, {{"handle", V("h")}, {"offset", N(0)}}, "");
  b.call(Api::WriteFile, {{"handle", V("h")}, {"buffer", V("ct")}}, "w");
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::partial);
  m.kernel.run(m.run, 20);
  EXPECT_TRUE(truthy(*m.run.var("w")));
  EXPECT_EQ(content(m.kernel, kDoc), "quarterly figures, draft two");
  EXPECT_EQ(m.monitor->state().stage_reached, 3);
}

TEST(WriteFile, OverwriteUnderOffKeepsShadowAndRestoresOnConfirmation) {
  ProgramBuilder b;
  read_and_encrypt(b, kDoc);
  b.call(Api::SetFilePointer, {{"handle", V("h")}, {"offset", N(0)}}, "");
  b.call(Api::WriteFile, {{"handle", V("h")}, {"buffer", V("ct")}}, "w");
  b.call(Api::SetWallpaper, {{"text", S("YOUR FILES ARE ENCRYPTED")}}, "");
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::off);
  m.kernel.run(m.run, 5);
  m.kernel.run(m.run, 1);
  EXPECT_TRUE(m.monitor->state().shadow_copies.contains(Path(kDoc)));
  EXPECT_NE(content(m.kernel, kDoc), "quarterly figures, draft two");
  const auto r = m.finish();
  EXPECT_EQ(r.verdict, Verdict::ransomware(5, Reason::wallpaper_note));
  EXPECT_EQ(content(m.kernel, kDoc), "quarterly figures, draft two");
  EXPECT_EQ(r.files_lost, 0u);
}

TEST(WriteFile, NewDestinationIsAllowedAndFlagged) {
  ProgramBuilder b;
  read_and_encrypt(b, kDoc);
  open(b, "/user/documents/a.txt.enc", "CREATE_NEW", "d");
  b.call(Api::WriteFile, {{"handle", V("d")}, {"buffer", V("ct")}}, "w");
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::partial);
  m.kernel.run(m.run, 20);
  const auto* rec = m.kernel.fs().find(Path("/user/documents/a.txt.enc"));
  ASSERT_NE(rec, nullptr);
  EXPECT_FALSE(rec->content.empty());
  EXPECT_TRUE(rec->flags & simcore::kEncryptedDest);
}

TEST(WriteFile, ClosedHandleFails) {
  ProgramBuilder b;
  open(b, "/tmp/x", "CREATE_NEW", "h");
  b.call(Api::CloseHandle, {{"handle", V("h")}}, "");
  b.call(Api::WriteFile, {{"handle", V("h")}, {"buffer", S("data")}}, "w");
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::partial);
  m.finish();
  EXPECT_FALSE(truthy(*m.run.var("w")));
}

TEST(DeleteFile, AfterEncryptionIsFakedAndLedgered) {
  ProgramBuilder b;
  read_and_encrypt(b, kDoc);
  b.call(Api::DeleteFile, {{"path", S(kDoc)}}, "d1");
  b.call(Api::DeleteFile, {{"path", S(kDoc)}}, "d2");
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::partial);
  m.kernel.run(m.run, 20);
  EXPECT_TRUE(truthy(*m.run.var("d1")));
  EXPECT_TRUE(truthy(*m.run.var("d2")));
  EXPECT_TRUE(m.kernel.fs().exists(Path(kDoc)));
  EXPECT_EQ(m.monitor->state().deferred_deletes(), std::vector<Path>{Path(kDoc)});
  EXPECT_EQ(m.monitor->state().stage_reached, 4);
}

TEST(DeleteFile, BeforeEvidenceIsAllowed) {
  ProgramBuilder b;
  b.call(Api::DeleteFile, {{"path", S(kDoc)}}, "d");
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::partial);
  m.finish();
  EXPECT_TRUE(truthy(*m.run.var("d")));
  EXPECT_FALSE(m.kernel.fs().exists(Path(kDoc)));
}

TEST(NoteEvent, KeywordInDesktopNoteConfirms) {
  ProgramBuilder b;
  open(b, "/user/desktop/readme.txt", "CREATE_NEW", "n");
  b.call(Api::WriteFile, {{"handle", V("n")}, {"buffer", S("send 0.5 Bitcoin for decryption")}}, "");
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::partial);
  EXPECT_EQ(m.finish().verdict, Verdict::ransomware(5, Reason::ransom_note));
}

TEST(NoteEvent, PaymentStemAlsoConfirms) {
  ProgramBuilder b;
  open(b, "/user/desktop/notes.txt", "CREATE_NEW", "n");
  b.call(Api::WriteFile, {{"handle", V("n")}, {"buffer", S("meeting notes for payment team")}}, "");
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::partial);
  EXPECT_EQ(m.finish().verdict.reason, Reason::ransom_note);
}

TEST(NoteEvent, OnlyFirstWriteIsScanned) {
  ProgramBuilder b;
  open(b, "/user/desktop/todo.txt", "CREATE_NEW", "n");
  b.call(Api::WriteFile, {{"handle", V("n")}, {"buffer", S("groceries")}}, "");
  b.call(Api::WriteFile, {{"handle", V("n")}, {"buffer", S("bitcoin")}}, "");
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::partial);
  EXPECT_EQ(m.finish().verdict.kind, Verdict::Kind::benign);
  EXPECT_FALSE(m.monitor->state().note_candidates.contains(Path("/user/desktop/todo.txt")));
}

TEST(NoteEvent, BinaryFirstWriteIsNotANote) {
  ProgramBuilder b;
  open(b, "/user/desktop/blob.bin", "CREATE_NEW", "n");
  b.call(Api::WriteFile, {{"handle", V("n")}, {"buffer", S(std::string("\x7f" "ELF\0\0 bitcoin", 13))}}, "");
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::partial);
  EXPECT_EQ(m.finish().verdict.kind, Verdict::Kind::benign);
}

TEST(NoteEvent, WallpaperConfirms) {
  ProgramBuilder b;
  b.call(Api::SetWallpaper, {{"text", S("YOUR FILES ARE ENCRYPTED")}}, "");
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::partial);
  EXPECT_EQ(m.finish().verdict, Verdict::ransomware(5, Reason::wallpaper_note));
}

TEST(NoteEvent, HarmlessWallpaperIsIgnored) {
  ProgramBuilder b;
  b.call(Api::SetWallpaper, {{"text", S("mountain lake at dawn")}}, "");
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::partial);
  EXPECT_EQ(m.finish().verdict.kind, Verdict::Kind::benign);
}

TEST(Finalize, BenignRunReplaysDeferredDeletes) {
  ProgramBuilder b;
  read_and_encrypt(b, kDoc);
  b.call(Api::DeleteFile, {{"path", S("/user/documents/b.txt")}}, "");
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::partial);
  const auto r = m.finish();
  EXPECT_EQ(r.verdict.kind, Verdict::Kind::benign);
  EXPECT_EQ(r.deferred_applied, 1u);
  EXPECT_FALSE(m.kernel.fs().exists(Path("/user/documents/b.txt")));
}

TEST(Finalize, IsIdempotent) {
  ProgramBuilder b;
  read_and_encrypt(b, kDoc);
  open(b, "/user/documents/a.txt.enc", "CREATE_NEW", "d");
  b.call(Api::WriteFile, {{"handle", V("d")}, {"buffer", V("ct")}}, "");
  b.call(Api::DeleteFile, {{"path", S(kDoc)}}, "");
  b.call(Api::SetWallpaper, {{"text", S("pay the ransom")}}, "");
  b.halt();
  Monitored m(b.build(), user_fs(), ArcMode::partial);
  const auto first = m.finish();
  const auto hash = m.kernel.fs().content_hash();
  const auto second = m.monitor->finalize_process(m.kernel, true);
  EXPECT_EQ(first.verdict, second.verdict);
  EXPECT_EQ(first.files_lost, second.files_lost);
  EXPECT_EQ(first.dest_files_removed, 1u);
  EXPECT_EQ(m.kernel.fs().content_hash(), hash);
  EXPECT_EQ(m.kernel.fs().snapshot(), user_fs().snapshot());
}

class CorpusRun : public ::testing::Test {
 protected:
  scenario::ScenarioSpec spec = [] {
    scenario::ScenarioSpec s;
    s.seed = 9;
    return s;
  }();

  scenario::ProcessOutcome monitored(const SimProgram& p, bool observe = false) {
    return scenario::run_monitored(p, spec, default_kb(), default_scanner(), 1, observe);
  }
};

TEST_F(CorpusRun, Ec2NewFileSampleLosesNothing) {
  scenario::RwGenParams p;
  p.chain = scenario::ChainOrder::ec2;
  const auto fs = scenario::corpus_vfs(spec.seed);
  const auto out = monitored(scenario::generate_rw(p, spec.seed, fs));
  EXPECT_TRUE(out.final.verdict.is_ransomware());
  EXPECT_EQ(out.final.files_lost, 0u);
  EXPECT_GT(out.final.dest_files_removed, 0u);
  for (const auto& [path, bytes] : fs.snapshot()) {
    auto it = out.vfs.find(path);
    ASSERT_NE(it, out.vfs.end()) << path.str();
    EXPECT_EQ(it->second, bytes) << path.str();
  }
  EXPECT_EQ(out.vfs.size(), fs.snapshot().size());
}

TEST_F(CorpusRun, CustomCryptoLosesAtMostK) {
  scenario::RwGenParams p;
  p.crypto = scenario::CryptoKind::custom;
  p.write_pattern = scenario::WritePattern::overwrite;
  const auto out = monitored(scenario::generate_rw(p, spec.seed, scenario::corpus_vfs(spec.seed)));
  EXPECT_TRUE(out.final.verdict.is_ransomware());
  EXPECT_LE(out.final.files_lost, spec.entropy.consecutive_k);
}

TEST_F(CorpusRun, ArchiverMatchesUnhookedRun) {
  const auto prog = scenario::generate_benign("archiver", spec.seed);
  const auto hooked = monitored(prog);
  const auto plain = scenario::run_unmonitored(prog, spec, 1, false);
  EXPECT_EQ(hooked.final.verdict.kind, Verdict::Kind::benign);
  EXPECT_GT(hooked.final.deferred_applied, 0u);
  EXPECT_EQ(hooked.vfs, plain.vfs);
}

TEST_F(CorpusRun, DeceptionIsTransparentToBenignPrograms) {
  for (const auto& profile : scenario::benign_profiles()) {
    const auto prog = scenario::generate_benign(profile, spec.seed);
    const auto hooked = monitored(prog, true);
    const auto plain = scenario::run_unmonitored(prog, spec, 1, false, true);
    EXPECT_EQ(hooked.observations, plain.observations) << profile;
  }
}

TEST_F(CorpusRun, DeceptionIsTransparentToRansomwareUntilTermination) {
  spec.arc = ArcMode::full;
  for (const auto& p : scenario::full_matrix()) {
    const auto prog = scenario::generate_rw(p, spec.seed, scenario::corpus_vfs(spec.seed));
    const auto hooked = monitored(prog, true);
    const auto plain = scenario::run_unmonitored(prog, spec, 1, false, true);
    ASSERT_FALSE(hooked.observations.empty());
    const std::vector<std::string> before_kill(hooked.observations.begin(), hooked.observations.end() - 1);
    ASSERT_LE(before_kill.size(), plain.observations.size());
    EXPECT_TRUE(std::equal(before_kill.begin(), before_kill.end(), plain.observations.begin()))
        << scenario::variant_name(p);
  }
}

TEST(Whitelist, ThreeCleanRunsWhitelist) {
  deceptor::WhitelistStore store(3);
  ProgramBuilder b;
  b.halt();
  const auto prog = b.build();
  for (int i = 0; i < 3; ++i) {
    EXPECT_FALSE(store.check(prog));
    store.update(prog, Verdict{Verdict::Kind::benign, 1, Reason::none});
  }
  EXPECT_TRUE(store.check(prog));
}

TEST(Whitelist, RansomwareVerdictResets) {
  deceptor::WhitelistStore store(3);
  ProgramBuilder b;
  b.halt();
  const auto prog = b.build();
  store.update(prog, Verdict{Verdict::Kind::benign, 1, Reason::none});
  store.update(prog, Verdict{Verdict::Kind::benign, 1, Reason::none});
  store.update(prog, Verdict::ransomware(5, Reason::ransom_note));
  EXPECT_EQ(store.count(prog), 0u);
}

TEST(Whitelist, SealRoundTripsAndDetectsTampering) {
  deceptor::WhitelistStore store(3);
  ProgramBuilder b;
  b.halt();
  store.update(b.build(), Verdict{Verdict::Kind::benign, 1, Reason::none});
  Bytes sealed = store.seal("secret");
  EXPECT_EQ(deceptor::WhitelistStore::unseal(sealed, "secret"), store);
  Bytes flipped = sealed;
  flipped[flipped.size() / 2] ^= 1;
  for (const auto& bad : {flipped}) {
    try {
      deceptor::WhitelistStore::unseal(bad, "secret");
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::tampered_store);
    }
  }
  EXPECT_THROW(deceptor::WhitelistStore::unseal(sealed, "other"), Error);
}

TEST(Whitelist, TamperedFileIsRebuiltEmpty) {
  const auto file = std::filesystem::temp_directory_path() / "rwdecoy_whitelist_test.bin";
  deceptor::WhitelistStore store(3);
  ProgramBuilder b;
  b.halt();
  store.update(b.build(), Verdict{Verdict::Kind::benign, 1, Reason::none});
  store.save(file, "pw");
  EXPECT_EQ(deceptor::WhitelistStore::load(file, "pw"), store);
  {
    std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(2);
    f.put('X');
  }
  bool tampered = false;
  const auto rebuilt = deceptor::WhitelistStore::load_or_rebuild(file, "pw", 3, &tampered);
  EXPECT_TRUE(tampered);
  EXPECT_TRUE(rebuilt.entries().empty());
}
