#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rwdecoy/simcore/kernel.hpp"

namespace rwdecoy::scenario {

using simcore::SimProgram;

enum class WritePattern { new_file, overwrite };
enum class ChainOrder { ec1, ec2 };
enum class CryptoKind { standard_api, static_cfs, custom };
enum class ExtensionKind { known, novel };
enum class NoteChannel { file, wallpaper };

struct RwGenParams {
  WritePattern write_pattern = WritePattern::new_file;
  ChainOrder chain = ChainOrder::ec1;
  CryptoKind crypto = CryptoKind::standard_api;
  ExtensionKind extension = ExtensionKind::novel;
  NoteChannel note_channel = NoteChannel::file;
  // The variant must be recognizable from embedded crypto constants alone;
  // meaningless for a sample that calls the crypto APIs.
  bool static_evidence_only = false;
  bool split_key_send = false;  // id and key in separate sends
  std::uint32_t target_files = 0;  // 0 = every file found

  friend bool operator==(const RwGenParams&, const RwGenParams&) = default;
};

std::string variant_name(const RwGenParams& p);
// Throws Error(invalid_combination) naming the conflicting fields.
void check_params(const RwGenParams& p);
std::vector<RwGenParams> full_matrix();

// Detection group used in reports.
std::string detection_group(const RwGenParams& p);

std::string to_string(WritePattern v);
std::string to_string(ChainOrder v);
std::string to_string(CryptoKind v);
std::string to_string(ExtensionKind v);
std::string to_string(NoteChannel v);
RwGenParams params_from_fields(const std::string& write_pattern, const std::string& chain, const std::string& crypto,
                               const std::string& extension, const std::string& note_channel);

const std::vector<std::string>& benign_profiles();

inline constexpr const char* kC2Host = "c2.sim:443";

// User and system files every scenario process starts from.
simcore::VirtualFs corpus_vfs(std::uint64_t seed);
std::uint32_t enumerable_files(const simcore::VirtualFs& fs);

SimProgram generate_rw(const RwGenParams& p, std::uint64_t seed, const simcore::VirtualFs& fs);
SimProgram generate_benign(const std::string& profile, std::uint64_t seed);
// Fingerprints the host, then polls its C&C forever without ever getting
// the go-ahead to encrypt.
SimProgram generate_dormant(std::uint64_t seed);
// Looping-profile stand-ins for the reset benchmark samples r1..r4.
SimProgram generate_reset_sample(const std::string& sample_id, std::uint64_t seed, const simcore::VirtualFs& fs);

struct CorpusEntry {
  enum class Kind { rw, benign, dormant, program };
  std::string name;
  Kind kind = Kind::rw;
  std::optional<RwGenParams> params;
  SimProgram program;
};

std::string to_string(CorpusEntry::Kind k);

std::vector<CorpusEntry> generate_corpus(const std::vector<RwGenParams>& params,
                                         const std::vector<std::string>& benign, std::uint32_t dormant,
                                         std::uint64_t seed);

}  // namespace rwdecoy::scenario
