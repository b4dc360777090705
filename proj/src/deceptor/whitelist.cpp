#include "rwdecoy/deceptor/whitelist.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

namespace rwdecoy::deceptor {

namespace {

constexpr std::string_view kSalt = "rwdecoy-whitelist-v1";

Digest256 seal_key(const std::string& passphrase) {
  Digest256 key{};
  if (PKCS5_PBKDF2_HMAC(passphrase.data(), static_cast<int>(passphrase.size()),
                        reinterpret_cast<const unsigned char*>(kSalt.data()), static_cast<int>(kSalt.size()), 10000,
                        EVP_sha256(), static_cast<int>(key.size()), key.data()) != 1) {
    throw Error(ErrorCode::io, "key derivation failed");
  }
  return key;
}

std::string identity(const simcore::SimProgram& program) { return to_hex(simcore::program_digest(program)); }

}  // namespace

bool WhitelistStore::check(const simcore::SimProgram& program) const { return count(program) >= n_threshold_; }

std::uint32_t WhitelistStore::count(const simcore::SimProgram& program) const {
  auto it = entries_.find(identity(program));
  return it == entries_.end() ? 0 : it->second;
}

void WhitelistStore::update(const simcore::SimProgram& program, const Verdict& verdict) {
  if (verdict.kind == Verdict::Kind::monitoring) return;
  auto& c = entries_[identity(program)];
  c = verdict.is_ransomware() ? 0 : c + 1;
}

std::string WhitelistStore::body() const {
  std::ostringstream os;
  os << "WLS1 n=" << n_threshold_ << '\n';
  for (const auto& [id, c] : entries_) os << id << ' ' << c << '\n';
  return os.str();
}

Bytes WhitelistStore::seal(const std::string& passphrase) const {
  const std::string b = body();
  const Digest256 key = seal_key(passphrase);
  const Digest256 tag = hmac_sha256(key, as_bytes(b));
  Bytes out(b.begin(), b.end());
  out.insert(out.end(), tag.begin(), tag.end());
  return out;
}

WhitelistStore WhitelistStore::unseal(std::span<const std::uint8_t> sealed, const std::string& passphrase) {
  if (sealed.size() < 32) throw Error(ErrorCode::tampered_store, "store shorter than its seal");
  const auto body = sealed.first(sealed.size() - 32);
  const auto tag = sealed.last(32);
  const Digest256 expect = hmac_sha256(seal_key(passphrase), body);
  if (CRYPTO_memcmp(expect.data(), tag.data(), 32) != 0) throw Error(ErrorCode::tampered_store, "seal mismatch");

  std::istringstream is(std::string(body.begin(), body.end()));
  std::string header;
  std::getline(is, header);
  unsigned n = 0;
  if (std::sscanf(header.c_str(), "WLS1 n=%u", &n) != 1) throw Error(ErrorCode::tampered_store, "bad header");
  WhitelistStore store(n);
  std::string id;
  std::uint32_t c = 0;
  while (is >> id >> c) store.entries_[id] = c;
  return store;
}

void WhitelistStore::save(const std::filesystem::path& file, const std::string& passphrase) const {
  const Bytes data = seal(passphrase);
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!os) throw Error(ErrorCode::io, "cannot write " + file.string());
}

WhitelistStore WhitelistStore::load(const std::filesystem::path& file, const std::string& passphrase) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw Error(ErrorCode::io, "cannot read " + file.string());
  Bytes data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return unseal(data, passphrase);
}

WhitelistStore WhitelistStore::load_or_rebuild(const std::filesystem::path& file, const std::string& passphrase,
                                               std::uint32_t n_threshold, bool* tampered) {
  if (tampered) *tampered = false;
  if (!std::filesystem::exists(file)) return WhitelistStore(n_threshold);
  try {
    return load(file, passphrase);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::tampered_store) throw;
    if (tampered) *tampered = true;
    return WhitelistStore(n_threshold);
  }
}

}  // namespace rwdecoy::deceptor
