#pragma once

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rwdecoy/simcore/value.hpp"

namespace rwdecoy::simcore {

// Case-insensitive, '/'-separated absolute path. Construction normalizes.
class Path {
 public:
  Path() = default;
  explicit Path(std::string_view raw);

  const std::string& str() const { return value_; }
  bool empty() const { return value_.empty(); }
  bool under(const Path& dir) const;
  std::string extension() const;  // lowercase, with leading '.', or empty
  std::string filename() const;

  friend auto operator<=>(const Path&, const Path&) = default;

 private:
  std::string value_;
};

enum FileFlag : std::uint8_t {
  kEncryptedDest = 1 << 0,
  kShadowCopied = 1 << 1,
  kDeferredDelete = 1 << 2,
};

struct FileRecord {
  Path path;
  Bytes content;
  ProcessId created_by = 0;  // 0 = present before any simulated process
  std::uint8_t flags = 0;
};

using Snapshot = std::map<Path, Bytes>;

struct DiffReport {
  std::vector<std::pair<Path, Bytes>> created;
  std::vector<Path> deleted;
  std::vector<std::pair<Path, Bytes>> modified;

  bool empty() const { return created.empty() && deleted.empty() && modified.empty(); }
};

class VirtualFs {
 public:
  VirtualFs();

  bool exists(const Path& p) const { return files_.contains(p); }
  const FileRecord* find(const Path& p) const;
  FileRecord* find_mut(const Path& p);

  // Creates or truncates. Returns false only for an empty path.
  bool put(const Path& p, Bytes content, ProcessId creator = 0);
  bool write_at(const Path& p, std::size_t offset, std::span<const std::uint8_t> data);
  bool truncate(const Path& p);
  bool remove(const Path& p);
  bool move(const Path& from, const Path& to);

  // Files strictly below `dir`, in path order.
  std::vector<Path> list_under(const Path& dir) const;
  std::size_t size() const { return files_.size(); }
  const std::map<Path, FileRecord>& files() const { return files_; }

  const std::vector<Path>& sensitive_dirs() const { return sensitive_dirs_; }
  void set_sensitive_dirs(std::vector<Path> dirs) { sensitive_dirs_ = std::move(dirs); }
  bool is_sensitive(const Path& p) const;

  Snapshot snapshot() const;
  Digest256 content_hash() const;

 private:
  std::map<Path, FileRecord> files_;
  std::vector<Path> sensitive_dirs_;
};

DiffReport vfs_diff(const Snapshot& a, const Snapshot& b);
Snapshot apply_diff(Snapshot base, const DiffReport& diff);
Digest256 snapshot_hash(const Snapshot& s);

}  // namespace rwdecoy::simcore
