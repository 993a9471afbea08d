#include <gtest/gtest.h>

#include <random>

#include "regguard/mac.hpp"
#include "siphash_vectors.hpp"

using namespace regguard::mac;

namespace {

using rgtest::kPublished;

MacKey reference_key() {
  std::array<std::uint8_t, 16> k{};
  for (int i = 0; i < 16; ++i) k[i] = static_cast<std::uint8_t>(i);
  return MacKey::from_bytes(k);
}

// Straight transcription of the reference C code, kept separate from the
// library so the two can disagree.
std::uint64_t rotl(std::uint64_t x, int b) { return (x << b) | (x >> (64 - b)); }

std::uint64_t reference_siphash(std::uint64_t k0, std::uint64_t k1, const std::vector<std::uint8_t>& in) {
  std::uint64_t v0 = 0x736f6d6570736575ULL ^ k0, v1 = 0x646f72616e646f6dULL ^ k1;
  std::uint64_t v2 = 0x6c7967656e657261ULL ^ k0, v3 = 0x7465646279746573ULL ^ k1;
  auto round = [&] {
    v0 += v1; v1 = rotl(v1, 13); v1 ^= v0; v0 = rotl(v0, 32);
    v2 += v3; v3 = rotl(v3, 16); v3 ^= v2;
    v0 += v3; v3 = rotl(v3, 21); v3 ^= v0;
    v2 += v1; v1 = rotl(v1, 17); v1 ^= v2; v2 = rotl(v2, 32);
  };
  const std::size_t full = in.size() / 8 * 8;
  for (std::size_t i = 0; i < full; i += 8) {
    std::uint64_t m = 0;
    for (int j = 7; j >= 0; --j) m = (m << 8) | in[i + j];
    v3 ^= m;
    round();
    round();
    v0 ^= m;
  }
  std::uint64_t b = static_cast<std::uint64_t>(in.size()) << 56;
  for (std::size_t j = 0; j < in.size() - full; ++j) b |= static_cast<std::uint64_t>(in[full + j]) << (8 * j);
  v3 ^= b;
  round();
  round();
  v0 ^= b;
  v2 ^= 0xff;
  for (int i = 0; i < 4; ++i) round();
  return v0 ^ v1 ^ v2 ^ v3;
}

std::vector<std::uint8_t> words_to_bytes(const std::vector<std::uint64_t>& w) {
  std::vector<std::uint8_t> out;
  for (auto x : w)
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
  return out;
}

}  // namespace

TEST(Mac, PublishedVectorsMatchBitExactly) {
  const auto key = reference_key();
  for (int n = 0; n < 64; ++n) {
    std::vector<std::uint8_t> msg(n);
    for (int i = 0; i < n; ++i) msg[i] = static_cast<std::uint8_t>(i);
    EXPECT_EQ(siphash24(key, msg), kPublished[n]) << "length " << n;
  }
}

TEST(Mac, BuiltInTableAgreesWithPublishedOne) {
  for (int n = 0; n < 64; ++n) EXPECT_EQ(kReferenceVectors[n], kPublished[n]) << n;
  const auto r = run_selftest();
  EXPECT_TRUE(r.ok());
  EXPECT_EQ(r.passed, 64);
}

TEST(Mac, KeyLoadIsLittleEndian) {
  const auto key = reference_key();
  EXPECT_EQ(key.k0, 0x0706050403020100ULL);
  EXPECT_EQ(key.k1, 0x0f0e0d0c0b0a0908ULL);
}

TEST(Mac, OneShotMatchesReferenceOnRandomInputs) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 300; ++t) {
    const MacKey key{rng(), rng()};
    std::vector<std::uint8_t> msg(rng() % 100);
    for (auto& b : msg) b = static_cast<std::uint8_t>(rng());
    ASSERT_EQ(siphash24(key, msg), reference_siphash(key.k0, key.k1, msg));
  }
}

TEST(Mac, StreamingEqualsOneShotOverWordBytes) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 300; ++t) {
    const MacKey key{rng(), rng()};
    std::vector<std::uint64_t> words(rng() % 12);
    for (auto& w : words) w = rng();
    MacState s = mac_init(key);
    for (auto w : words) s = mac_compress(s, w);
    const Tag streamed = mac_finalize(s);
    EXPECT_EQ(streamed, mac_words(key, words));
    EXPECT_EQ(streamed.value, reference_siphash(key.k0, key.k1, words_to_bytes(words)));
  }
}

TEST(Mac, FrameShapedStreamOfFiveWords) {
  // tag, ret, bp, two variable registers
  const MacKey key{0x0123456789abcdefULL, 0xfedcba9876543210ULL};
  const std::vector<std::uint64_t> words = {0, 0x400010, 0x7fffffe0, 42, 7};
  MacState s = mac_init(key);
  EXPECT_EQ(s.absorbed, 0u);
  for (auto w : words) s = mac_compress(s, w);
  EXPECT_EQ(s.absorbed, 40u);
  EXPECT_EQ(mac_finalize(s).value, reference_siphash(key.k0, key.k1, words_to_bytes(words)));
}

TEST(Mac, InitStateFollowsConstants) {
  const MacKey key{1, 2};
  const auto s = mac_init(key);
  EXPECT_EQ(s.v[0], kInitConstants[0] ^ 1);
  EXPECT_EQ(s.v[1], kInitConstants[1] ^ 2);
  EXPECT_EQ(s.v[2], kInitConstants[2] ^ 1);
  EXPECT_EQ(s.v[3], kInitConstants[3] ^ 2);
}

TEST(Mac, SingleBitChangesAlterTheTag) {
  std::mt19937_64 rng(13);
  const MacKey key{rng(), rng()};
  std::vector<std::uint64_t> words = {rng(), rng(), rng(), rng()};
  const Tag base = mac_words(key, words);
  for (std::size_t i = 0; i < words.size(); ++i)
    for (int bit = 0; bit < 64; bit += 7) {
      auto w = words;
      w[i] ^= 1ULL << bit;
      EXPECT_NE(mac_words(key, w), base);
    }
  EXPECT_NE(mac_words(MacKey{key.k0 ^ 1, key.k1}, words), base);
}

TEST(Mac, OrderMatters) {
  const MacKey key{3, 4};
  const std::vector<std::uint64_t> a = {1, 2, 3}, b = {3, 2, 1};
  EXPECT_NE(mac_words(key, a), mac_words(key, b));
}
