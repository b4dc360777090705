#include "rwdecoy/deceptor/monitor.hpp"

#include <algorithm>
#include <cstring>
#include <functional>

namespace rwdecoy::deceptor {

using simcore::Api;
using simcore::Buffer;
using simcore::HandleEntry;
using simcore::HandleId;

namespace {

// Feeds the files_lost count only, never a verdict.
std::uint64_t content_hash(const Bytes& b) {
  return std::hash<std::string_view>{}(std::string_view(reinterpret_cast<const char*>(b.data()), b.size())) ^ b.size();
}

// Same test git uses: a NUL byte early on means binary, so not a note.
bool looks_like_text(std::span<const std::uint8_t> data) {
  return std::memchr(data.data(), 0, std::min<std::size_t>(data.size(), 8000)) == nullptr;
}

}  // namespace

std::string_view to_string(ArcMode m) {
  switch (m) {
    case ArcMode::off: return "off";
    case ArcMode::partial: return "partial";
    case ArcMode::full: return "full";
  }
  return "partial";
}

std::optional<ArcMode> arc_from_string(std::string_view s) {
  if (s == "off") return ArcMode::off;
  if (s == "partial") return ArcMode::partial;
  if (s == "full") return ArcMode::full;
  return std::nullopt;
}

std::string_view to_string(Reason r) {
  switch (r) {
    case Reason::none: return "none";
    case Reason::rw_extension: return "rw_extension";
    case Reason::rename_rw_extension: return "rename_rw_extension";
    case Reason::ransom_note: return "ransom_note";
    case Reason::wallpaper_note: return "wallpaper_note";
    case Reason::entropy_confirmed: return "entropy_confirmed";
  }
  return "none";
}

std::string_view to_string(Verdict::Kind k) {
  switch (k) {
    case Verdict::Kind::monitoring: return "Monitoring";
    case Verdict::Kind::benign: return "Benign";
    case Verdict::Kind::ransomware: return "Ransomware";
  }
  return "Monitoring";
}

std::vector<Path> MonitorState::deferred_deletes() const {
  std::vector<Path> out;
  for (const auto& a : deferred)
    if (a.kind == DeferredAction::Kind::remove) out.push_back(a.path);
  return out;
}

Deceptor::Deceptor(ProcessId pid, Bytes code_image, std::shared_ptr<const kb::KnowledgeBase> kb,
                   std::shared_ptr<const cryptodetect::CfsScanner> scanner, DeceptorOptions options)
    : code_image_(std::move(code_image)),
      kb_(std::move(kb)),
      scanner_(std::move(scanner)),
      options_(options),
      rng_(derive_seed(options.seed, pid)),
      next_tag_((std::uint64_t{1} << 63) | (static_cast<std::uint64_t>(pid) << 32)) {
  options_.entropy.validate();
  st_.pid = pid;
}

void Deceptor::reach(int stage) { st_.stage_reached = std::max(st_.stage_reached, stage); }

void Deceptor::raise_flag(std::uint8_t evidence, Kernel& kernel) {
  st_.evidence |= evidence;
  reach(2);
  if (st_.encryption_flag) return;
  st_.encryption_flag = true;
  // Output written before the flag was raised is encrypted output too.
  for (const auto& p : st_.tracked_dest_files) {
    if (auto* rec = kernel.fs().find_mut(p)) rec->flags |= simcore::kEncryptedDest;
  }
}

EventDisposition Deceptor::confirm(int stage, Reason why) {
  if (!st_.verdict.is_ransomware()) st_.verdict = Verdict::ransomware(stage, why);
  reach(stage);
  return EventDisposition::terminate();
}

bool Deceptor::is_original(const Path& p, Kernel& kernel) const {
  const auto* rec = kernel.fs().find(p);
  return rec != nullptr && rec->created_by != st_.pid;
}

void Deceptor::remember_original(const Path& p, Kernel& kernel) {
  if (st_.original_digests.contains(p)) return;
  const auto* rec = kernel.fs().find(p);
  if (rec != nullptr && rec->created_by != st_.pid) st_.original_digests.emplace(p, content_hash(rec->content));
}

// Hidden-cipher rule: high-entropy output from a process with no visible
// crypto capability, combined with destruction of user files.
bool Deceptor::entropy_confirmation_due() const {
  return st_.encryption_flag && st_.evidence == kEvidenceEntropy && st_.destructive_attempts > 0;
}

EventDisposition Deceptor::before(const ApiEvent& ev, Kernel& kernel) {
  if (st_.verdict.is_ransomware()) return EventDisposition::terminate();
  switch (ev.api) {
    case Api::CreateFile: return on_create_file(ev, kernel);
    case Api::MoveFile:
    case Api::MoveFileWithProgress: return on_move_file(ev, kernel);
    case Api::CryptEncrypt:
    case Api::AES_encrypt:
    case Api::AESxEncryption: return on_crypto_call(ev, kernel);
    case Api::WriteFile: return on_write_file(ev, kernel);
    case Api::DeleteFile: return on_delete_file(ev, kernel);
    case Api::SetWallpaper: return on_note_event(ev, kernel);
    default: return EventDisposition::allow();
  }
}

void Deceptor::after(const ApiEvent& ev, bool applied, Kernel& kernel) {
  if (!applied) return;
  switch (ev.api) {
    case Api::CreateFile: {
      const auto* h = std::get_if<HandleId>(&ev.return_slot);
      if (h == nullptr || !h->valid()) return;
      const HandleEntry* he = kernel.handle(*h);
      if (he == nullptr) return;
      const auto* rec = kernel.fs().find(he->path);
      if (rec != nullptr && rec->created_by == st_.pid) {
        st_.created_files.insert(he->path);
        if (kernel.fs().is_sensitive(he->path)) st_.note_candidates.insert(he->path);
      }
      break;
    }
    case Api::SetFilePointer: {
      const HandleId h = ev.handle_arg("handle");
      if (ev.int_arg("offset", -1) == 0 && simcore::truthy(ev.return_slot)) {
        st_.rewound_handles.insert(h.value);
      } else {
        st_.rewound_handles.erase(h.value);
      }
      break;
    }
    case Api::CloseHandle: st_.rewound_handles.erase(ev.handle_arg("handle").value); break;
    case Api::MoveFile:
    case Api::MoveFileWithProgress: {
      if (!simcore::truthy(ev.return_slot)) return;
      const Path src = ev.path_arg("src");
      const Path dst = ev.path_arg("dst");
      if (st_.created_files.erase(src)) st_.created_files.insert(dst);
      if (st_.tracked_dest_files.erase(src)) st_.tracked_dest_files.insert(dst);
      break;
    }
    default: break;
  }
}

EventDisposition Deceptor::on_create_file(const ApiEvent& ev, Kernel& kernel) {
  reach(1);
  const Path p = ev.path_arg("path");
  const std::string disp = ev.text_arg("disposition");
  const bool creating = disp == "CREATE_ALWAYS" || disp == "CREATE_NEW";
  if (creating && kb_->extensions.contains(p.extension())) return confirm(1, Reason::rw_extension);
  remember_original(p, kernel);
  if (disp == "CREATE_ALWAYS" && is_original(p, kernel) && !st_.shadow_copies.contains(p)) {
    // Truncation destroys the original before any write is seen.
    st_.shadow_copies.emplace(p, kernel.fs().find(p)->content);
  }
  return EventDisposition::allow();
}

EventDisposition Deceptor::on_move_file(const ApiEvent& ev, Kernel& kernel) {
  reach(1);
  const Path src = ev.path_arg("src");
  const Path dst = ev.path_arg("dst");
  if (!kernel.fs().exists(src)) return EventDisposition::allow();  // fails visibly in the kernel
  if (kb_->extensions.contains(dst.extension())) return confirm(1, Reason::rename_rw_extension);
  remember_original(src, kernel);
  if (st_.encryption_flag && is_original(src, kernel)) {
    DeferredAction a{DeferredAction::Kind::move, src, dst};
    if (std::find(st_.deferred.begin(), st_.deferred.end(), a) == st_.deferred.end()) st_.deferred.push_back(a);
    reach(4);
    return EventDisposition::fake_success(true);
  }
  return EventDisposition::allow();
}

EventDisposition Deceptor::on_crypto_call(const ApiEvent& ev, Kernel& kernel) {
  raise_flag(kEvidenceApi, kernel);
  if (options_.arc != ArcMode::full) return EventDisposition::allow();
  // Decoy ciphertext: random bytes of the plaintext's length, so the caller
  // still sees plausible output.
  const Buffer* data = ev.buffer_arg("data");
  Buffer decoy;
  decoy.bytes = rng_.bytes(data ? data->bytes.size() : 0);
  decoy.tag = next_tag_++;
  if (data && data->tag != 0) decoy.lineage = {data->tag};
  return EventDisposition::fake_success(std::move(decoy));
}

EventDisposition Deceptor::on_write_file(const ApiEvent& ev, Kernel& kernel) {
  const HandleId h = ev.handle_arg("handle");
  const HandleEntry* he = kernel.handle(h);
  if (he == nullptr || he->kind != HandleEntry::Kind::file || !kernel.fs().exists(he->path)) {
    return EventDisposition::allow();  // closed handle: the kernel reports failure
  }
  const Path path = he->path;
  const std::size_t pointer = he->pointer;
  Bytes owned;
  std::span<const std::uint8_t> data;
  if (const Buffer* b = ev.buffer_arg("buffer")) {
    data = b->bytes;
  } else {
    const std::string text = ev.text_arg("buffer");
    owned.assign(text.begin(), text.end());
    data = owned;
  }

  if (!st_.encryption_flag) {
    if (!st_.cfs_hit.has_value()) st_.cfs_hit = !scanner_->scan(code_image_).empty();
    if (*st_.cfs_hit) {
      raise_flag(kEvidenceCfs, kernel);
    } else if (!data.empty() &&
               cryptodetect::entropy_step(st_.entropy_counter, path.str(), data, options_.entropy).flag_set) {
      raise_flag(kEvidenceEntropy, kernel);
    }
  }

  if (st_.note_candidates.erase(path) > 0 && looks_like_text(data)) {
    if (kb_->keywords.first_hit(std::string_view(reinterpret_cast<const char*>(data.data()), data.size()))) {
      return confirm(5, Reason::ransom_note);
    }
  }

  const bool original = is_original(path, kernel);
  const bool overwrite = original && pointer == 0 && st_.rewound_handles.contains(h.value);
  if (overwrite) {
    if (kernel.fs().is_sensitive(path)) ++st_.destructive_attempts;
    if (entropy_confirmation_due()) {
      if (options_.arc == ArcMode::off && !st_.shadow_copies.contains(path)) {
        st_.shadow_copies.emplace(path, kernel.fs().find(path)->content);
      }
      return confirm(2, Reason::entropy_confirmed);
    }
    if (options_.arc == ArcMode::off) {
      if (!st_.shadow_copies.contains(path)) {
        st_.shadow_copies.emplace(path, kernel.fs().find(path)->content);
        kernel.fs().find_mut(path)->flags |= simcore::kShadowCopied;
      }
      if (st_.encryption_flag) reach(3);
      return EventDisposition::allow();
    }
    if (st_.encryption_flag) {
      reach(3);
      return EventDisposition::block(true);
    }
    return EventDisposition::allow();
  }

  if (entropy_confirmation_due()) return confirm(2, Reason::entropy_confirmed);

  if (!original) {
    st_.tracked_dest_files.insert(path);
    if (st_.encryption_flag) {
      reach(3);
      kernel.fs().find_mut(path)->flags |= simcore::kEncryptedDest;
    }
  }
  return EventDisposition::allow();
}

EventDisposition Deceptor::on_delete_file(const ApiEvent& ev, Kernel& kernel) {
  const Path p = ev.path_arg("path");
  remember_original(p, kernel);
  const bool original = is_original(p, kernel);
  if (original && kernel.fs().is_sensitive(p)) ++st_.destructive_attempts;
  if (!st_.encryption_flag) return EventDisposition::allow();
  if (entropy_confirmation_due()) return confirm(2, Reason::entropy_confirmed);
  reach(4);
  DeferredAction a{DeferredAction::Kind::remove, p, {}};
  if (std::find(st_.deferred.begin(), st_.deferred.end(), a) == st_.deferred.end()) {
    st_.deferred.push_back(a);
    if (auto* rec = kernel.fs().find_mut(p)) rec->flags |= simcore::kDeferredDelete;
  }
  return EventDisposition::fake_success(true);
}

EventDisposition Deceptor::on_note_event(const ApiEvent& ev, Kernel&) {
  if (ev.api == Api::SetWallpaper) {
    if (kb_->keywords.first_hit(ev.text_arg("text"))) return confirm(5, Reason::wallpaper_note);
  }
  return EventDisposition::allow();
}

FinalizeResult Deceptor::finalize_process(Kernel& kernel, bool process_exited) {
  if (st_.finalized) return final_;
  auto& fs = kernel.fs();
  FinalizeResult r;
  if (st_.verdict.is_ransomware()) {
    for (const auto& p : st_.created_files) {
      if (auto* rec = fs.find_mut(p); rec && rec->created_by == st_.pid) rec->flags |= simcore::kEncryptedDest;
    }
    std::vector<Path> doomed;
    for (const auto& [p, rec] : fs.files())
      if ((rec.flags & simcore::kEncryptedDest) && rec.created_by == st_.pid) doomed.push_back(p);
    for (const auto& p : doomed) {
      fs.remove(p);
      ++r.dest_files_removed;
    }
    for (const auto& [p, content] : st_.shadow_copies) {
      if (auto* rec = fs.find_mut(p)) {
        rec->content = content;
        rec->flags &= static_cast<std::uint8_t>(~simcore::kShadowCopied);
      } else {
        fs.put(p, content, 0);
      }
      ++r.originals_restored;
    }
    for (const auto& a : st_.deferred) {
      if (auto* rec = fs.find_mut(a.path)) rec->flags &= static_cast<std::uint8_t>(~simcore::kDeferredDelete);
    }
    st_.deferred.clear();
    for (const auto& [p, digest] : st_.original_digests) {
      const auto* rec = fs.find(p);
      if (rec == nullptr || content_hash(rec->content) != digest) ++r.files_lost;
    }
  } else if (process_exited) {
    st_.verdict = Verdict{Verdict::Kind::benign, st_.stage_reached, Reason::none};
    for (const auto& a : st_.deferred) {
      bool ok = false;
      if (a.kind == DeferredAction::Kind::remove) {
        ok = fs.remove(a.path);
      } else {
        ok = fs.move(a.path, a.destination);
      }
      if (ok) ++r.deferred_applied;
    }
    st_.deferred.clear();
    for (const auto& [p, content] : st_.shadow_copies) {
      if (auto* rec = fs.find_mut(p)) rec->flags &= static_cast<std::uint8_t>(~simcore::kShadowCopied);
    }
    st_.shadow_copies.clear();
  } else {
    // Still running (e.g. waiting on a C&C trigger): nothing to resolve yet.
    r.verdict = st_.verdict;
    return r;
  }
  r.verdict = st_.verdict;
  st_.finalized = true;
  final_ = r;
  return r;
}

}  // namespace rwdecoy::deceptor
