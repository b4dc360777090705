#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rwdecoy/cryptodetect/cfs.hpp"
#include "rwdecoy/cryptodetect/entropy.hpp"
#include "rwdecoy/kb/knowledge_base.hpp"
#include "rwdecoy/simcore/kernel.hpp"

namespace rwdecoy::deceptor {

using simcore::ApiEvent;
using simcore::EventDisposition;
using simcore::Kernel;
using simcore::Path;
using simcore::ProcessId;

// Application Restart Control: how much an unverified process may do once
// it is known to be able to encrypt.
enum class ArcMode { off, partial, full };

std::string_view to_string(ArcMode m);
std::optional<ArcMode> arc_from_string(std::string_view s);

enum class Reason { none, rw_extension, rename_rw_extension, ransom_note, wallpaper_note, entropy_confirmed };

std::string_view to_string(Reason r);

struct Verdict {
  enum class Kind { monitoring, benign, ransomware };
  Kind kind = Kind::monitoring;
  int stage = 0;
  Reason reason = Reason::none;

  static Verdict ransomware(int stage, Reason why) { return {Kind::ransomware, stage, why}; }
  bool is_ransomware() const { return kind == Kind::ransomware; }
  friend bool operator==(const Verdict&, const Verdict&) = default;
};

std::string_view to_string(Verdict::Kind k);

// Where the encryption flag came from. Bits, since several may fire.
enum Evidence : std::uint8_t {
  kEvidenceApi = 1 << 0,
  kEvidenceCfs = 1 << 1,
  kEvidenceEntropy = 1 << 2,
};

struct DeferredAction {
  enum class Kind { remove, move };
  Kind kind = Kind::remove;
  Path path;
  Path destination;  // move only
  friend bool operator==(const DeferredAction&, const DeferredAction&) = default;
};

struct MonitorState {
  ProcessId pid = 0;
  int stage_reached = 1;
  bool encryption_flag = false;
  std::uint8_t evidence = 0;
  cryptodetect::EntropyCounter entropy_counter;
  std::set<Path> tracked_dest_files;
  std::vector<DeferredAction> deferred;  // faked deletes and renames, in program order
  std::map<Path, Bytes> shadow_copies;
  Verdict verdict;

  std::set<Path> created_files;
  std::set<Path> note_candidates;
  std::set<std::uint32_t> rewound_handles;
  std::map<Path, std::uint64_t> original_digests;  // content hash at first touch
  std::uint32_t destructive_attempts = 0;      // deletes/overwrites of sensitive originals
  std::optional<bool> cfs_hit;
  bool finalized = false;

  std::vector<Path> deferred_deletes() const;
};

struct FinalizeResult {
  Verdict verdict;
  std::uint32_t files_lost = 0;
  std::uint32_t deferred_applied = 0;
  std::uint32_t dest_files_removed = 0;
  std::uint32_t originals_restored = 0;
};

struct DeceptorOptions {
  ArcMode arc = ArcMode::partial;
  cryptodetect::EntropyPolicy entropy;
  std::uint64_t seed = 1;
};

// The real-time engine: an interposer that walks each process through the
// five identification stages and answers destructive calls with deception.
class Deceptor final : public simcore::Interposer {
 public:
  Deceptor(ProcessId pid, Bytes code_image, std::shared_ptr<const kb::KnowledgeBase> kb,
           std::shared_ptr<const cryptodetect::CfsScanner> scanner, DeceptorOptions options);

  EventDisposition before(const ApiEvent& ev, Kernel& kernel) override;
  void after(const ApiEvent& ev, bool applied, Kernel& kernel) override;

  EventDisposition on_create_file(const ApiEvent& ev, Kernel& kernel);
  EventDisposition on_move_file(const ApiEvent& ev, Kernel& kernel);
  EventDisposition on_crypto_call(const ApiEvent& ev, Kernel& kernel);
  EventDisposition on_write_file(const ApiEvent& ev, Kernel& kernel);
  EventDisposition on_delete_file(const ApiEvent& ev, Kernel& kernel);
  EventDisposition on_note_event(const ApiEvent& ev, Kernel& kernel);

  // Resolves the verdict and applies cleanup. Idempotent.
  FinalizeResult finalize_process(Kernel& kernel, bool process_exited);

  const MonitorState& state() const { return st_; }
  ArcMode arc() const { return options_.arc; }

 private:
  void reach(int stage);
  void raise_flag(std::uint8_t evidence, Kernel& kernel);
  EventDisposition confirm(int stage, Reason why);
  void remember_original(const Path& p, Kernel& kernel);
  bool is_original(const Path& p, Kernel& kernel) const;
  bool entropy_confirmation_due() const;

  MonitorState st_;
  Bytes code_image_;
  std::shared_ptr<const kb::KnowledgeBase> kb_;
  std::shared_ptr<const cryptodetect::CfsScanner> scanner_;
  DeceptorOptions options_;
  Rng rng_;
  std::uint64_t next_tag_;
  FinalizeResult final_;
};

}  // namespace rwdecoy::deceptor
