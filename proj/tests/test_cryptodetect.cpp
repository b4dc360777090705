#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rwdecoy/cryptodetect/cfs.hpp"
#include "rwdecoy/cryptodetect/entropy.hpp"

using namespace rwdecoy;
using namespace rwdecoy::cryptodetect;

namespace {

// Reference digests computed once with an external SHA-256 over the
// canonical feature record.
constexpr const char* kAesDigest = "990e5c2c711605509d09001da552e4e0a84d593d4e496ff8bf5534b1b306f5ac";
constexpr const char* kChachaDigest = "d5ec16e6e71d70de3caead4d4381fee7d7ef19a61a832bc3b965c604b5c81414";

CfsFeatures aes_features() {
  CfsFeatures f;
  const auto& sbox = aes_sbox();
  f.constants = {Bytes(sbox.begin(), sbox.end())};
  f.opcode_ngrams = {{"aesenc", "aesenc", "aesenc", "aesenclast"}};
  f.cfg_shape = {9, 1};
  return f;
}

Bytes text(std::string_view s) { return {s.begin(), s.end()}; }

}  // namespace

TEST(Sbox, MatchesStandardTable) {
  const auto& s = aes_sbox();
  EXPECT_EQ(s[0x00], 0x63);
  EXPECT_EQ(s[0x53], 0xed);
  EXPECT_EQ(s[0xff], 0x16);
  EXPECT_EQ(to_hex(sha256(s)), "c2d8e5eed6cbebd8625fc18f81486a7733c04f9b0129ffbe974c68b90308b4f2");
}

TEST(DeriveCfs, AesGoldenDigest) {
  EXPECT_EQ(to_hex(derive_cfs(aes_features()).digest), kAesDigest);
}

TEST(DeriveCfs, ChachaGoldenDigest) {
  CfsFeatures f;
  f.constants = {text("expand 32-byte k")};
  f.opcode_ngrams = {{"add", "xor", "rol", "add"}};
  f.cfg_shape = {4, 1};
  EXPECT_EQ(to_hex(derive_cfs(f).digest), kChachaDigest);
}

TEST(DeriveCfs, ConstantOrderDoesNotMatter) {
  CfsFeatures a = aes_features();
  a.constants.push_back(text("expand 32-byte k"));
  CfsFeatures b = a;
  std::swap(b.constants[0], b.constants[1]);
  EXPECT_EQ(derive_cfs(a).digest, derive_cfs(b).digest);
}

TEST(DeriveCfs, OneOpcodeChangesDigest) {
  CfsFeatures b = aes_features();
  b.opcode_ngrams[0][3] = "aesdec";
  EXPECT_NE(derive_cfs(aes_features()).digest, derive_cfs(b).digest);
}

TEST(DeriveCfs, EmptyFeaturesRejected) {
  try {
    derive_cfs(CfsFeatures{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::no_features);
  }
}

TEST(ScanCfs, FindsEmbeddedSbox) {
  Rng rng(1);
  Bytes image = rng.bytes(4000);
  const auto& s = aes_sbox();
  image.insert(image.begin() + 1234, s.begin(), s.end());
  const auto hits = scan_code_cfs(image, default_signatures());
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].algorithm, "AES");
}

TEST(ScanCfs, EmptyImageHasNoMatches) {
  EXPECT_TRUE(scan_code_cfs({}, default_signatures()).empty());
}

TEST(ScanCfs, RandomMebibyteHasNoMatches) {
  Rng rng(2024);
  EXPECT_TRUE(scan_code_cfs(rng.bytes(1 << 20), default_signatures()).empty());
}

TEST(ScanCfs, PartialConstantIsNotAMatch) {
  const auto& s = aes_sbox();
  Bytes image(s.begin(), s.begin() + 255);
  EXPECT_TRUE(scan_code_cfs(image, default_signatures()).empty());
}

TEST(ScanCfs, RepeatedScansAgreeAcrossImages) {
  const CfsScanner scanner(default_signatures());
  Rng rng(5);
  Bytes clean = rng.bytes(2048);
  Bytes hit = clean;
  const auto& s = aes_sbox();
  hit.insert(hit.begin() + 100, s.begin(), s.end());
  for (int i = 0; i < 3; ++i) {
    EXPECT_TRUE(scanner.scan(clean).empty());
    EXPECT_EQ(scanner.scan(hit).size(), 1u);
  }
}

TEST(ScanCfs, JsonRoundTrip) {
  for (const auto& sig : default_signatures()) EXPECT_EQ(cfs_from_json(cfs_to_json(sig), "x"), sig);
}

TEST(Entropy, ZerosAreZero) { EXPECT_EQ(shannon_entropy(Bytes(4096, 0)), 0.0); }

TEST(Entropy, FullAlphabetIsEight) {
  Bytes all(256);
  for (int i = 0; i < 256; ++i) all[i] = static_cast<std::uint8_t>(i);
  EXPECT_EQ(shannon_entropy(all), 8.0);
}

TEST(Entropy, RandomBufferIsNearEight) {
  Rng rng(7);
  EXPECT_GE(shannon_entropy(rng.bytes(65536)), 7.99);
}

TEST(Entropy, MatchesDirectSummation) {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    Bytes b = rng.bytes(1 + rng.below(5000));
    const auto alphabet = 1 + rng.below(256);
    for (auto& x : b) x = static_cast<std::uint8_t>(x % alphabet);
    EXPECT_NEAR(shannon_entropy(b), rwtest::entropy_oracle(b), 1e-9);
  }
}

TEST(Entropy, EmptyBufferRejected) {
  try {
    shannon_entropy({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_buffer);
  }
}

TEST(EntropyStep, FlagsOnKthDistinctFile) {
  Rng rng(3);
  EntropyCounter c;
  EntropyPolicy policy;
  for (int i = 1; i <= 5; ++i) {
    const auto step = entropy_step(c, "/f" + std::to_string(i), rng.bytes(8192), policy);
    EXPECT_TRUE(step.counted);
    EXPECT_EQ(step.flag_set, i == 5) << i;
  }
}

TEST(EntropyStep, RepeatedFileCountsOnce) {
  Rng rng(3);
  EntropyCounter c;
  for (int i = 0; i < 10; ++i) entropy_step(c, "/same", rng.bytes(8192), EntropyPolicy{});
  EXPECT_EQ(c.count(), 1u);
  EXPECT_FALSE(c.flag);
}

TEST(EntropyStep, PlaintextNeverFlags) {
  std::string prose;
  while (prose.size() < 8192) prose += "The committee reviewed the budget and agreed on the schedule. ";
  const Bytes b = text(prose);
  ASSERT_LT(rwtest::entropy_oracle(b), 7.2);
  EntropyCounter c;
  for (int i = 0; i < 100; ++i) EXPECT_FALSE(entropy_step(c, "/t" + std::to_string(i), b, EntropyPolicy{}).flag_set);
  EXPECT_EQ(c.count(), 0u);
}

TEST(EntropyStep, ShortWritesAreIgnored) {
  Rng rng(4);
  EntropyCounter c;
  EXPECT_FALSE(entropy_step(c, "/a", rng.bytes(4095), EntropyPolicy{}).counted);
}

TEST(EntropyStep, KOfOneFlagsImmediately) {
  Rng rng(5);
  EntropyCounter c;
  EntropyPolicy p;
  p.consecutive_k = 1;
  EXPECT_TRUE(entropy_step(c, "/a", rng.bytes(8192), p).flag_set);
}
