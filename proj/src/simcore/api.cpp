#include "rwdecoy/simcore/api.hpp"

#include <array>

namespace rwdecoy::simcore {

namespace {
constexpr std::array<std::string_view, kApiCount> kNames = {
    "CreateFile",   "WriteFile",     "ReadFile",      "SetFilePointer", "DeleteFile",
    "MoveFile",     "MoveFileWithProgress", "CloseHandle", "CryptEncrypt", "AES_encrypt",
    "AESxEncryption", "FindFirstFile", "FindNextFile", "GetMacAddress", "GetSystemTime",
    "RandBytes",    "Socket",        "Connect",       "Send",           "SetWallpaper",
};

ApiSet set_of(std::initializer_list<Api> apis) {
  ApiSet s;
  for (Api a : apis) s.set(index_of(a));
  return s;
}
}  // namespace

std::string_view to_string(Api api) { return kNames[index_of(api)]; }

std::optional<Api> api_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<Api>(i);
  }
  return std::nullopt;
}

ApiClass single_class(Api api) { return {std::string(to_string(api)), set_of({api})}; }

ApiClass encrypt_class() {
  return {"Encrypt", set_of({Api::CryptEncrypt, Api::AES_encrypt, Api::AESxEncryption})};
}

ApiClass move_class() { return {"Move", set_of({Api::MoveFile, Api::MoveFileWithProgress})}; }

ApiClass find_class() { return {"Find", set_of({Api::FindFirstFile, Api::FindNextFile})}; }

std::optional<ApiClass> class_from_string(std::string_view name) {
  if (name == "Encrypt") return encrypt_class();
  if (name == "Move") return move_class();
  if (name == "Find") return find_class();
  if (auto api = api_from_string(name)) return single_class(*api);
  return std::nullopt;
}

bool is_encrypt(Api api) {
  return api == Api::CryptEncrypt || api == Api::AES_encrypt || api == Api::AESxEncryption;
}

bool is_fingerprint_source(Api api) {
  return api == Api::GetMacAddress || api == Api::GetSystemTime || api == Api::RandBytes;
}

}  // namespace rwdecoy::simcore
