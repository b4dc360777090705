#include "rwdecoy/simcore/vfs.hpp"

#include <algorithm>
#include <cctype>

namespace rwdecoy::simcore {

Path::Path(std::string_view raw) {
  value_.reserve(raw.size() + 1);
  for (char c : raw) {
    char ch = c == '\\' ? '/' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ch == '/' && !value_.empty() && value_.back() == '/') continue;
    value_.push_back(ch);
  }
  if (value_.empty()) return;
  if (value_.front() != '/') value_.insert(value_.begin(), '/');
  while (value_.size() > 1 && value_.back() == '/') value_.pop_back();
}

bool Path::under(const Path& dir) const {
  if (dir.value_ == "/") return value_.size() > 1;
  return value_.size() > dir.value_.size() && value_.compare(0, dir.value_.size(), dir.value_) == 0 &&
         value_[dir.value_.size()] == '/';
}

std::string Path::filename() const {
  auto slash = value_.rfind('/');
  return slash == std::string::npos ? value_ : value_.substr(slash + 1);
}

std::string Path::extension() const {
  const std::string name = filename();
  auto dot = name.rfind('.');
  if (dot == std::string::npos || dot == 0) return {};
  return name.substr(dot);
}

VirtualFs::VirtualFs()
    : sensitive_dirs_{Path("/user/desktop"), Path("/user/documents"), Path("/user/downloads")} {}

const FileRecord* VirtualFs::find(const Path& p) const {
  auto it = files_.find(p);
  return it == files_.end() ? nullptr : &it->second;
}

FileRecord* VirtualFs::find_mut(const Path& p) {
  auto it = files_.find(p);
  return it == files_.end() ? nullptr : &it->second;
}

bool VirtualFs::put(const Path& p, Bytes content, ProcessId creator) {
  if (p.empty()) return false;
  auto& rec = files_[p];
  rec.path = p;
  rec.content = std::move(content);
  rec.created_by = creator;
  rec.flags = 0;
  return true;
}

bool VirtualFs::write_at(const Path& p, std::size_t offset, std::span<const std::uint8_t> data) {
  auto* rec = find_mut(p);
  if (!rec || offset > rec->content.size()) return false;
  if (offset + data.size() > rec->content.size()) rec->content.resize(offset + data.size());
  std::copy(data.begin(), data.end(), rec->content.begin() + static_cast<std::ptrdiff_t>(offset));
  return true;
}

bool VirtualFs::truncate(const Path& p) {
  auto* rec = find_mut(p);
  if (!rec) return false;
  rec->content.clear();
  return true;
}

bool VirtualFs::remove(const Path& p) { return files_.erase(p) > 0; }

bool VirtualFs::move(const Path& from, const Path& to) {
  if (to.empty() || from == to) return false;
  auto it = files_.find(from);
  if (it == files_.end() || files_.contains(to)) return false;
  FileRecord rec = std::move(it->second);
  files_.erase(it);
  rec.path = to;
  files_.emplace(to, std::move(rec));
  return true;
}

std::vector<Path> VirtualFs::list_under(const Path& dir) const {
  std::vector<Path> out;
  for (auto it = files_.lower_bound(dir); it != files_.end(); ++it) {
    if (it->first.under(dir)) {
      out.push_back(it->first);
    } else if (it->first != dir && it->first.str().compare(0, dir.str().size(), dir.str()) != 0) {
      break;
    }
  }
  return out;
}

bool VirtualFs::is_sensitive(const Path& p) const {
  return std::any_of(sensitive_dirs_.begin(), sensitive_dirs_.end(), [&](const Path& d) { return p.under(d); });
}

Snapshot VirtualFs::snapshot() const {
  Snapshot s;
  for (const auto& [p, rec] : files_) s.emplace_hint(s.end(), p, rec.content);
  return s;
}

Digest256 VirtualFs::content_hash() const { return snapshot_hash(snapshot()); }

DiffReport vfs_diff(const Snapshot& a, const Snapshot& b) {
  DiffReport d;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() || ib != b.end()) {
    if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
      d.deleted.push_back(ia->first);
      ++ia;
    } else if (ia == a.end() || ib->first < ia->first) {
      d.created.emplace_back(ib->first, ib->second);
      ++ib;
    } else {
      if (ia->second != ib->second) d.modified.emplace_back(ib->first, ib->second);
      ++ia;
      ++ib;
    }
  }
  return d;
}

Snapshot apply_diff(Snapshot base, const DiffReport& diff) {
  for (const auto& p : diff.deleted) base.erase(p);
  for (const auto& [p, c] : diff.created) base[p] = c;
  for (const auto& [p, c] : diff.modified) base[p] = c;
  return base;
}

Digest256 snapshot_hash(const Snapshot& s) {
  Bytes acc;
  for (const auto& [p, c] : s) {
    acc.insert(acc.end(), p.str().begin(), p.str().end());
    acc.push_back(0);
    auto h = sha256(c);
    acc.insert(acc.end(), h.begin(), h.end());
  }
  return sha256(acc);
}

}  // namespace rwdecoy::simcore
