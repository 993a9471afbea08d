#include "regguard/mac.hpp"

#include <bit>
#include <cstdio>
#include <vector>

namespace regguard::mac {
namespace {

std::uint64_t load_le64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void sipround(std::array<std::uint64_t, 4>& v) {
  v[0] += v[1];
  v[1] = std::rotl(v[1], 13);
  v[1] ^= v[0];
  v[0] = std::rotl(v[0], 32);
  v[2] += v[3];
  v[3] = std::rotl(v[3], 16);
  v[3] ^= v[2];
  v[0] += v[3];
  v[3] = std::rotl(v[3], 21);
  v[3] ^= v[0];
  v[2] += v[1];
  v[1] = std::rotl(v[1], 17);
  v[1] ^= v[2];
  v[2] = std::rotl(v[2], 32);
}

void absorb_block(std::array<std::uint64_t, 4>& v, std::uint64_t m) {
  v[3] ^= m;
  sipround(v);
  sipround(v);
  v[0] ^= m;
}

std::uint64_t finish(std::array<std::uint64_t, 4> v, std::uint64_t last_block) {
  absorb_block(v, last_block);
  v[2] ^= 0xff;
  for (int i = 0; i < 4; ++i) sipround(v);
  return v[0] ^ v[1] ^ v[2] ^ v[3];
}

}  // namespace

MacKey MacKey::from_bytes(std::span<const std::uint8_t, 16> bytes) {
  return MacKey{load_le64(bytes.data()), load_le64(bytes.data() + 8)};
}

MacState mac_init(const MacKey& key) {
  MacState s;
  s.v = {key.k0 ^ kInitConstants[0], key.k1 ^ kInitConstants[1],
         key.k0 ^ kInitConstants[2], key.k1 ^ kInitConstants[3]};
  return s;
}

MacState mac_compress(MacState state, std::uint64_t word) {
  absorb_block(state.v, word);
  state.absorbed += 8;
  return state;
}

Tag mac_finalize(MacState state) {
  // Word-granular input never leaves a partial block, so the final block
  // carries only the length byte.
  return Tag{finish(state.v, (state.absorbed & 0xff) << 56)};
}

Tag mac_words(const MacKey& key, std::span<const std::uint64_t> words) {
  MacState s = mac_init(key);
  for (std::uint64_t w : words) s = mac_compress(s, w);
  return mac_finalize(s);
}

std::uint64_t siphash24(const MacKey& key, std::span<const std::uint8_t> message) {
  MacState s = mac_init(key);
  const std::size_t full = message.size() / 8 * 8;
  for (std::size_t i = 0; i < full; i += 8) absorb_block(s.v, load_le64(message.data() + i));
  std::uint64_t last = static_cast<std::uint64_t>(message.size() & 0xff) << 56;
  for (std::size_t i = full; i < message.size(); ++i) {
    last |= static_cast<std::uint64_t>(message[i]) << (8 * (i - full));
  }
  return finish(s.v, last);
}

const std::array<std::uint64_t, 64> kReferenceVectors = {
    0x726fdb47dd0e0e31ULL, 0x74f839c593dc67fdULL, 0x0d6c8009d9a94f5aULL,
    0x85676696d7fb7e2dULL, 0xcf2794e0277187b7ULL, 0x18765564cd99a68dULL,
    0xcbc9466e58fee3ceULL, 0xab0200f58b01d137ULL, 0x93f5f5799a932462ULL,
    0x9e0082df0ba9e4b0ULL, 0x7a5dbbc594ddb9f3ULL, 0xf4b32f46226bada7ULL,
    0x751e8fbc860ee5fbULL, 0x14ea5627c0843d90ULL, 0xf723ca908e7af2eeULL,
    0xa129ca6149be45e5ULL, 0x3f2acc7f57c29bdbULL, 0x699ae9f52cbe4794ULL,
    0x4bc1b3f0968dd39cULL, 0xbb6dc91da77961bdULL, 0xbed65cf21aa2ee98ULL,
    0xd0f2cbb02e3b67c7ULL, 0x93536795e3a33e88ULL, 0xa80c038ccd5ccec8ULL,
    0xb8ad50c6f649af94ULL, 0xbce192de8a85b8eaULL, 0x17d835b85bbb15f3ULL,
    0x2f2e6163076bcfadULL, 0xde4daaaca71dc9a5ULL, 0xa6a2506687956571ULL,
    0xad87a3535c49ef28ULL, 0x32d892fad841c342ULL, 0x7127512f72f27cceULL,
    0xa7f32346f95978e3ULL, 0x12e0b01abb051238ULL, 0x15e034d40fa197aeULL,
    0x314dffbe0815a3b4ULL, 0x027990f029623981ULL, 0xcadcd4e59ef40c4dULL,
    0x9abfd8766a33735cULL, 0x0e3ea96b5304a7d0ULL, 0xad0c42d6fc585992ULL,
    0x187306c89bc215a9ULL, 0xd4a60abcf3792b95ULL, 0xf935451de4f21df2ULL,
    0xa9538f0419755787ULL, 0xdb9acddff56ca510ULL, 0xd06c98cd5c0975ebULL,
    0xe612a3cb9ecba951ULL, 0xc766e62cfcadaf96ULL, 0xee64435a9752fe72ULL,
    0xa192d576b245165aULL, 0x0a8787bf8ecb74b2ULL, 0x81b3e73d20b49b6fULL,
    0x7fa8220ba3b2eceaULL, 0x245731c13ca42499ULL, 0xb78dbfaf3a8d83bdULL,
    0xea1ad565322a1a0bULL, 0x60e61c23a3795013ULL, 0x6606d7e446282b93ULL,
    0x6ca4ecb15c5f91e1ULL, 0x9f626da15c9625f3ULL, 0xe51b38608ef25f57ULL,
    0x958a324ceb064572ULL};

SelfTestResult run_selftest() {
  std::array<std::uint8_t, 16> key_bytes{};
  for (std::size_t i = 0; i < key_bytes.size(); ++i) key_bytes[i] = static_cast<std::uint8_t>(i);
  const MacKey key = MacKey::from_bytes(key_bytes);

  std::vector<std::uint8_t> msg;
  SelfTestResult result;
  char line[96];
  for (std::size_t n = 0; n < kReferenceVectors.size(); ++n) {
    const std::uint64_t got = siphash24(key, msg);
    const bool ok = got == kReferenceVectors[n];
    ok ? ++result.passed : ++result.failed;
    std::snprintf(line, sizeof line, "len=%02zu expected=%016llx got=%016llx %s\n", n,
                  static_cast<unsigned long long>(kReferenceVectors[n]),
                  static_cast<unsigned long long>(got), ok ? "ok" : "MISMATCH");
    result.report += line;
    msg.push_back(static_cast<std::uint8_t>(n));
  }
  return result;
}

}  // namespace regguard::mac
