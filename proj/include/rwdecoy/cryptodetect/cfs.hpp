#pragma once

#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "rwdecoy/common.hpp"

namespace rwdecoy::cryptodetect {

struct CfgShape {
  std::uint32_t blocks = 0;
  std::uint32_t loops = 0;
};

struct CfsFeatures {
  std::vector<Bytes> constants;
  std::vector<std::vector<std::string>> opcode_ngrams;
  CfgShape cfg_shape;
};

struct CfsMeta {
  std::string library_name;
  std::string algorithm;
  std::vector<std::string> constant_ids;
  friend bool operator==(const CfsMeta&, const CfsMeta&) = default;
};

// Cryptographic function signature: a 32-byte digest of the routine's
// canonical feature record, plus the constant tables used to find it.
struct CfsSignature {
  Digest256 digest{};
  CfsMeta meta;
  std::vector<Bytes> constants;
  friend bool operator==(const CfsSignature&, const CfsSignature&) = default;
};

inline constexpr std::size_t kMinConstantLength = 16;

// Canonical record: "CFS1", then constants sorted bytewise, n-grams (opcodes
// joined by a single space) sorted, then blocks and loops. Every count and
// length is a little-endian u32.
Bytes canonical_features(const CfsFeatures& features);

CfsSignature derive_cfs(const CfsFeatures& features, CfsMeta meta = {});

struct CfsMatch {
  std::size_t signature_index = 0;
  std::string algorithm;
  friend bool operator==(const CfsMatch&, const CfsMatch&) = default;
};

// Aho-Corasick automaton over every signature's constants. One pass over the
// image regardless of how many patterns are loaded.
class CfsScanner {
 public:
  explicit CfsScanner(std::vector<CfsSignature> signatures);
  std::vector<CfsMatch> scan(std::span<const std::uint8_t> image) const;
  const std::vector<CfsSignature>& signatures() const { return signatures_; }

 private:
  struct Node {
    std::array<std::int32_t, 256> next;
    std::int32_t fail = 0;
    std::vector<std::uint32_t> outputs;  // pattern ids ending here
  };
  std::vector<CfsSignature> signatures_;
  std::vector<std::pair<std::size_t, std::size_t>> pattern_owner_;  // pattern id -> (signature, constant)
  std::vector<Node> nodes_;

  // Images are rescanned for every process of the same program.
  std::vector<CfsMatch> scan_uncached(std::span<const std::uint8_t> image) const;
  mutable std::mutex memo_mu_;
  mutable std::unordered_map<std::string, std::vector<CfsMatch>> memo_;
};

std::vector<CfsMatch> scan_code_cfs(std::span<const std::uint8_t> image, const std::vector<CfsSignature>& signatures);

// Standard AES forward S-box.
const std::array<std::uint8_t, 256>& aes_sbox();

std::string cfs_to_json(const CfsSignature& sig);
CfsSignature cfs_from_json(std::string_view text, const std::string& source);

// Built-in signatures: AES (S-box) and ChaCha20 (sigma constant).
std::vector<CfsSignature> default_signatures();

}  // namespace rwdecoy::cryptodetect
