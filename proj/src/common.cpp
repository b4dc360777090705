#include "rwdecoy/common.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/sha.h>

namespace rwdecoy {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_target: return "invalid-target";
    case ErrorCode::malformed_program: return "malformed-program";
    case ErrorCode::late_attach: return "late-attach";
    case ErrorCode::not_running: return "not-running";
    case ErrorCode::segfault_model: return "segfault-model";
    case ErrorCode::empty_trace: return "empty-trace";
    case ErrorCode::format: return "format";
    case ErrorCode::no_features: return "no-features";
    case ErrorCode::empty_buffer: return "empty";
    case ErrorCode::tampered_store: return "tampered-store";
    case ErrorCode::no_calls: return "no-calls";
    case ErrorCode::no_transfer_key: return "no-transfer-key";
    case ErrorCode::bad_patch: return "bad-patch";
    case ErrorCode::corrupt: return "corrupt";
    case ErrorCode::invalid_combination: return "invalid-combination";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.resize(bytes.size() * 2);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    out[2 * i] = kDigits[bytes[i] >> 4];
    out[2 * i + 1] = kDigits[bytes[i] & 0x0f];
  }
  return out;
}

namespace {
int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}
}  // namespace

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw Error(ErrorCode::format, "odd-length hex string");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(ErrorCode::format, "invalid hex digit");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

Digest256 sha256(std::span<const std::uint8_t> data) {
  Digest256 out{};
  SHA256(data.data(), data.size(), out.data());
  return out;
}

Digest256 sha256(std::string_view data) { return sha256(as_bytes(data)); }

Digest256 hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> data) {
  Digest256 out{};
  unsigned int len = 0;
  HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(), data.size(), out.data(), &len);
  return out;
}

}  // namespace rwdecoy
