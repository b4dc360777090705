#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "rwdecoy/deceptor/monitor.hpp"

namespace rwdecoy::deceptor {

// Clean-run counters keyed by program digest, sealed with HMAC-SHA256 under a
// key stretched from a passphrase.
class WhitelistStore {
 public:
  explicit WhitelistStore(std::uint32_t n_threshold = 3) : n_threshold_(n_threshold) {}

  bool check(const simcore::SimProgram& program) const;
  void update(const simcore::SimProgram& program, const Verdict& verdict);
  std::uint32_t count(const simcore::SimProgram& program) const;

  std::uint32_t n_threshold() const { return n_threshold_; }
  const std::map<std::string, std::uint32_t>& entries() const { return entries_; }

  Bytes seal(const std::string& passphrase) const;
  // Throws Error(tampered_store) if the seal does not verify.
  static WhitelistStore unseal(std::span<const std::uint8_t> sealed, const std::string& passphrase);

  void save(const std::filesystem::path& file, const std::string& passphrase) const;
  static WhitelistStore load(const std::filesystem::path& file, const std::string& passphrase);
  // A tampered or missing store is replaced by an empty one.
  static WhitelistStore load_or_rebuild(const std::filesystem::path& file, const std::string& passphrase,
                                        std::uint32_t n_threshold, bool* tampered = nullptr);

  friend bool operator==(const WhitelistStore&, const WhitelistStore&) = default;

 private:
  std::string body() const;

  std::map<std::string, std::uint32_t> entries_;  // hex digest -> clean run count
  std::uint32_t n_threshold_;
};

}  // namespace rwdecoy::deceptor
