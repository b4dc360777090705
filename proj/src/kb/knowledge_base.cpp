#include "rwdecoy/kb/knowledge_base.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace rwdecoy::kb {

namespace fs = std::filesystem;
using simcore::Api;
using simcore::single_class;

bool ExtensionList::contains(const std::string& ext) const {
  std::string lower = ext;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  return extensions.contains(lower);
}

ExtensionList ExtensionList::defaults() {
  return {{".locky", ".wncry", ".wcry", ".wnry", ".cerber", ".cerber3", ".zepto", ".odin", ".thor", ".aesir",
           ".crypt", ".cryptolocker", ".crypz", ".cryp1", ".petya", ".ryk", ".ryuk", ".conti", ".lockbit",
           ".phobos", ".dharma", ".djvu", ".stop", ".maze", ".sodinokibi", ".revil", ".nemty", ".gandcrab",
           ".krab", ".globeimposter", ".osiris", ".micro", ".vvv", ".ccc", ".ecc", ".xyz", ".zzz", ".exx",
           ".ezz", ".r5a", ".xtbl", ".ytbl", ".breaking_bad"}};
}

std::optional<std::string> KeywordList::first_hit(std::string_view text) const {
  std::string lower(text);
  for (auto& c : lower) {
    if (static_cast<unsigned char>(c - 'A') < 26) c = static_cast<char>(c | 0x20);
  }
  for (std::size_t i = 0; i < stems.size(); ++i) {
    // A stem containing an earlier stem can never be the first hit.
    bool subsumed = false;
    for (std::size_t j = 0; j < i && !subsumed; ++j) subsumed = stems[i].find(stems[j]) != std::string::npos;
    if (!subsumed && lower.find(stems[i]) != std::string::npos) return stems[i];
  }
  return std::nullopt;
}

KeywordList KeywordList::defaults() {
  return {{"ransom", "encrypt", "encrypted", "decrypt", "decrypted", "payment", "bitcoin", "delete", "deleted",
           "lose"}};
}

const MsgGraph& KnowledgeBase::msg(const std::string& name) const {
  auto it = msgs.find(name);
  if (it == msgs.end()) throw Error(ErrorCode::format, "knowledge base has no graph named '" + name + "'");
  return it->second;
}

namespace {

MsgGraph make_graph(std::vector<simcore::ApiClass> classes, std::vector<MsgEdge> edges, std::uint32_t terminal) {
  MsgGraph g;
  for (std::uint32_t i = 0; i < classes.size(); ++i) g.nodes.push_back({i, std::move(classes[i]), 0, 0});
  g.edges = std::move(edges);
  g.terminal = terminal;
  return g;
}

}  // namespace

// CreateFile(O) -> CreateFile(D) -> Encrypt(CO) -> WriteFile(D) -> CloseHandle(O, D) -> DeleteFile(O),
// with the enumeration call that names O and the read that yields CO.
MsgGraph write_to_new_file_msg() {
  return make_graph({simcore::find_class(), single_class(Api::CreateFile), single_class(Api::ReadFile),
                     simcore::encrypt_class(), single_class(Api::CreateFile), single_class(Api::WriteFile),
                     single_class(Api::CloseHandle), single_class(Api::CloseHandle), single_class(Api::DeleteFile)},
                    {{0, 1, DepKind::path},
                     {1, 2, DepKind::handle},
                     {2, 3, DepKind::buffer},
                     {3, 5, DepKind::buffer},
                     {4, 5, DepKind::handle},
                     {1, 6, DepKind::handle},
                     {4, 7, DepKind::handle},
                     {0, 8, DepKind::path}},
                    8);
}

// CreateFile(O) -> ReadFile(O) -> Encrypt(CO) -> SetFilePointer(O) -> WriteFile(O) -> CloseHandle(O)
MsgGraph overwrite_original_msg() {
  return make_graph({single_class(Api::CreateFile), single_class(Api::ReadFile), simcore::encrypt_class(),
                     single_class(Api::SetFilePointer), single_class(Api::WriteFile), single_class(Api::CloseHandle)},
                    {{0, 1, DepKind::handle},
                     {1, 2, DepKind::buffer},
                     {0, 3, DepKind::handle},
                     {0, 4, DepKind::handle},
                     {2, 4, DepKind::buffer},
                     {0, 5, DepKind::handle}},
                    5);
}

// Key material reaching a connected socket. Send is the terminal call.
MsgGraph transfer_key_msg() {
  return make_graph({single_class(Api::RandBytes), single_class(Api::Socket), single_class(Api::Connect),
                     single_class(Api::Send)},
                    {{1, 2, DepKind::handle}, {1, 3, DepKind::handle}, {0, 3, DepKind::buffer}}, 3);
}

KnowledgeBase KnowledgeBase::defaults() {
  KnowledgeBase kb;
  kb.extensions = ExtensionList::defaults();
  kb.keywords = KeywordList::defaults();
  kb.msgs[kWriteToNewFile] = write_to_new_file_msg();
  kb.msgs[kOverwriteOriginal] = overwrite_original_msg();
  kb.msgs[kTransferKey] = transfer_key_msg();
  kb.cfs = cryptodetect::default_signatures();
  return kb;
}

namespace {

std::vector<std::pair<std::size_t, std::string>> entry_lines(std::string_view text) {
  std::vector<std::pair<std::size_t, std::string>> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    out.emplace_back(n, line.substr(first, last - first + 1));
  }
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + p.string());
  out << content;
}

}  // namespace

ExtensionList parse_extensions(std::string_view text, const std::string& source) {
  ExtensionList list;
  for (auto& [line, entry] : entry_lines(text)) {
    if (entry.front() != '.' || entry.size() < 2) {
      throw Error(ErrorCode::format, source + ":" + std::to_string(line) + ": extension '" + entry + "' must start with '.'");
    }
    std::transform(entry.begin(), entry.end(), entry.begin(), [](unsigned char c) { return std::tolower(c); });
    list.extensions.insert(entry);
  }
  if (list.extensions.empty()) throw Error(ErrorCode::format, source + ": extension list is empty");
  return list;
}

KeywordList parse_keywords(std::string_view text, const std::string& source) {
  KeywordList list;
  auto add = [&](const std::string& s) {
    if (std::find(list.stems.begin(), list.stems.end(), s) == list.stems.end()) list.stems.push_back(s);
  };
  for (auto& [line, entry] : entry_lines(text)) {
    if (std::any_of(entry.begin(), entry.end(), [](unsigned char c) { return std::isupper(c); })) {
      throw Error(ErrorCode::format, source + ":" + std::to_string(line) + ": keyword '" + entry + "' must be lowercase");
    }
    constexpr std::string_view kEd = "(ed)";
    if (entry.size() > kEd.size() && entry.ends_with(kEd)) {
      const std::string stem = entry.substr(0, entry.size() - kEd.size());
      add(stem);
      add(stem + "ed");
    } else {
      add(entry);
    }
  }
  if (list.stems.empty()) throw Error(ErrorCode::format, source + ": keyword list is empty");
  return list;
}

KnowledgeBase load_kb(const fs::path& dir) {
  KnowledgeBase kb = KnowledgeBase::defaults();
  if (!fs::is_directory(dir)) throw Error(ErrorCode::io, "knowledge base directory not found: " + dir.string());
  if (auto p = dir / "extensions.txt"; fs::exists(p)) kb.extensions = parse_extensions(read_file(p), p.string());
  if (auto p = dir / "keywords.txt"; fs::exists(p)) kb.keywords = parse_keywords(read_file(p), p.string());
  if (auto d = dir / "msg"; fs::is_directory(d)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(d))
      if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) kb.msgs[f.stem().string()] = msg_from_json(read_file(f), f.string());
  }
  if (auto d = dir / "cfs"; fs::is_directory(d)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(d))
      if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (!files.empty()) {
      kb.cfs.clear();
      for (const auto& f : files) kb.cfs.push_back(cryptodetect::cfs_from_json(read_file(f), f.string()));
    }
  }
  return kb;
}

void save_kb(const KnowledgeBase& kb, const fs::path& dir) {
  fs::create_directories(dir / "msg");
  fs::create_directories(dir / "cfs");
  std::string ext = "# known ransomware extensions, one per line\n";
  for (const auto& e : kb.extensions.extensions) ext += e + "\n";
  write_file(dir / "extensions.txt", ext);
  std::string kw = "# ransom-note keyword stems\n";
  for (const auto& s : kb.keywords.stems) kw += s + "\n";
  write_file(dir / "keywords.txt", kw);
  for (const auto& [name, g] : kb.msgs) write_file(dir / "msg" / (name + ".json"), msg_to_json(g) + "\n");
  for (std::size_t i = 0; i < kb.cfs.size(); ++i) {
    std::string name = kb.cfs[i].meta.algorithm.empty() ? "sig" : kb.cfs[i].meta.algorithm;
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    char prefix[8];
    std::snprintf(prefix, sizeof(prefix), "%03zu_", i);
    write_file(dir / "cfs" / (prefix + name + ".json"), cryptodetect::cfs_to_json(kb.cfs[i]) + "\n");
  }
}

bool structurally_equal(const KnowledgeBase& a, const KnowledgeBase& b) {
  if (a.extensions.extensions != b.extensions.extensions || a.keywords.stems != b.keywords.stems) return false;
  if (a.msgs.size() != b.msgs.size() || a.cfs != b.cfs) return false;
  for (const auto& [name, g] : a.msgs) {
    auto it = b.msgs.find(name);
    if (it == b.msgs.end() || !same_structure(g, it->second)) return false;
  }
  return true;
}

}  // namespace rwdecoy::kb
