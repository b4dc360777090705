#pragma once

#include <bitset>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace rwdecoy::simcore {

enum class Api : std::uint8_t {
  CreateFile,
  WriteFile,
  ReadFile,
  SetFilePointer,
  DeleteFile,
  MoveFile,
  MoveFileWithProgress,
  CloseHandle,
  CryptEncrypt,
  AES_encrypt,
  AESxEncryption,
  FindFirstFile,
  FindNextFile,
  GetMacAddress,
  GetSystemTime,
  RandBytes,
  Socket,
  Connect,
  Send,
  SetWallpaper,
};

inline constexpr std::size_t kApiCount = 20;

std::string_view to_string(Api api);
std::optional<Api> api_from_string(std::string_view name);

using ApiSet = std::bitset<kApiCount>;

constexpr std::size_t index_of(Api api) { return static_cast<std::size_t>(api); }

// Named API classes. A class is either a single API or a wildcard over
// equivalent APIs (e.g. the three encryption entry points).
struct ApiClass {
  std::string name;
  ApiSet members;

  bool contains(Api api) const { return members.test(index_of(api)); }
  friend bool operator==(const ApiClass&, const ApiClass&) = default;
};

ApiClass single_class(Api api);
ApiClass encrypt_class();
ApiClass move_class();
ApiClass find_class();

// Resolves "Encrypt", "Move", "Find" or any single API name.
std::optional<ApiClass> class_from_string(std::string_view name);

bool is_encrypt(Api api);
bool is_fingerprint_source(Api api);  // GetMacAddress, GetSystemTime, RandBytes

}  // namespace rwdecoy::simcore
