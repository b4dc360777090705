#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rwdecoy/cryptodetect/cfs.hpp"
#include "rwdecoy/kb/msg.hpp"

namespace rwdecoy::kb {

struct ExtensionList {
  std::set<std::string> extensions;  // lowercase, each starting with '.'

  bool contains(const std::string& ext) const;
  static ExtensionList defaults();
};

struct KeywordList {
  std::vector<std::string> stems;  // lowercase, "(ed)" already expanded

  // First stem occurring as a substring of `text`, case-insensitively.
  std::optional<std::string> first_hit(std::string_view text) const;
  static KeywordList defaults();
};

inline constexpr const char* kWriteToNewFile = "write_to_new_file";
inline constexpr const char* kOverwriteOriginal = "overwrite_original";
inline constexpr const char* kTransferKey = "transfer_key";

struct KnowledgeBase {
  ExtensionList extensions;
  KeywordList keywords;
  std::map<std::string, MsgGraph> msgs;
  std::vector<cryptodetect::CfsSignature> cfs;

  const MsgGraph& msg(const std::string& name) const;
  static KnowledgeBase defaults();
};

MsgGraph write_to_new_file_msg();
MsgGraph overwrite_original_msg();
MsgGraph transfer_key_msg();

ExtensionList parse_extensions(std::string_view text, const std::string& source);
KeywordList parse_keywords(std::string_view text, const std::string& source);

// Reads extensions.txt, keywords.txt, msg/*.json, cfs/*.json. Each missing
// part falls back to its built-in default.
KnowledgeBase load_kb(const std::filesystem::path& dir);
void save_kb(const KnowledgeBase& kb, const std::filesystem::path& dir);

bool structurally_equal(const KnowledgeBase& a, const KnowledgeBase& b);

}  // namespace rwdecoy::kb
