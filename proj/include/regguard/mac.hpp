// SipHash-2-4 keyed MAC with a word-granular streaming interface.
//
// The streaming form mirrors how tags are built from register values: one
// init from the key, one compress per saved 64-bit register, one finalize.
// A word stream is exactly SipHash-2-4 over the little-endian bytes of the
// words, so mac_words() and siphash24() agree on every input.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

namespace regguard::mac {

struct MacKey {
  std::uint64_t k0 = 0;
  std::uint64_t k1 = 0;

  /// Little-endian load of a 16-byte key, as in the reference implementation.
  static MacKey from_bytes(std::span<const std::uint8_t, 16> bytes);

  friend bool operator==(const MacKey&, const MacKey&) = default;
};

struct Tag {
  std::uint64_t value = 0;

  friend bool operator==(const Tag&, const Tag&) = default;
};

/// Internal SipHash state. `absorbed` counts message bytes so finalize can
/// append the length byte required by the SipHash padding rule.
struct MacState {
  std::array<std::uint64_t, 4> v{};
  std::uint64_t absorbed = 0;

  friend bool operator==(const MacState&, const MacState&) = default;
};

inline constexpr std::array<std::uint64_t, 4> kInitConstants = {
    0x736f6d6570736575ULL, 0x646f72616e646f6dULL, 0x6c7967656e657261ULL,
    0x7465646279746573ULL};

MacState mac_init(const MacKey& key);
MacState mac_compress(MacState state, std::uint64_t word);
Tag mac_finalize(MacState state);
Tag mac_words(const MacKey& key, std::span<const std::uint64_t> words);

/// Byte-oriented one-shot SipHash-2-4 (arbitrary message length).
std::uint64_t siphash24(const MacKey& key, std::span<const std::uint8_t> message);

/// Published SipHash-2-4 vectors: key bytes 00..0f, message bytes 00..(n-1).
extern const std::array<std::uint64_t, 64> kReferenceVectors;

struct SelfTestResult {
  int passed = 0;
  int failed = 0;
  std::string report;
  bool ok() const { return failed == 0 && passed == 64; }
};

SelfTestResult run_selftest();

}  // namespace regguard::mac
