#pragma once

#include <openssl/evp.h>
#include <openssl/rand.h>

#include <array>
#include <filesystem>
#include <memory>
#include <random>

#include "caos/bytes.hpp"
#include "caos/map_file.hpp"
#include "caos/types.hpp"

// Block layout and authenticated encryption (AES-128-GCM).
//
// Plaintext layout: bid u64 | cns u32 | ts u64 | data[block_size].
// Sealed record:    nonce[12] | ciphertext[20 + block_size] | tag[16].

namespace caos {

inline constexpr std::size_t kBlockHeaderSize = 20;
inline constexpr std::size_t kNonceSize = 12;
inline constexpr std::size_t kTagSize = 16;

constexpr std::size_t plain_size(std::size_t block_size) { return kBlockHeaderSize + block_size; }
/// AEAD output without the nonce.
constexpr std::size_t ct_size(std::size_t block_size) { return plain_size(block_size) + kTagSize; }
/// What one server slot holds and what travels on the wire.
constexpr std::size_t sealed_size(std::size_t block_size) {
  return kNonceSize + ct_size(block_size);
}
constexpr std::size_t block_size_for_sealed(std::size_t sealed) {
  return sealed - kNonceSize - kTagSize - kBlockHeaderSize;
}

struct StoreKey {
  std::array<std::uint8_t, 16> bytes{};
  bool operator==(const StoreKey&) const = default;
};

/// UniformRandomBitGenerator over the OpenSSL CSPRNG.
struct OsRandom {
  using result_type = std::uint64_t;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() {
    result_type v;
    fill(reinterpret_cast<std::uint8_t*>(&v), sizeof v);
    return v;
  }
  static void fill(std::uint8_t* out, std::size_t n) {
    if (RAND_bytes(out, static_cast<int>(n)) != 1) throw Error("randomness source failure");
  }
};

inline StoreKey keygen(unsigned security_parameter = 128) {
  if (security_parameter != 128)
    throw ConfigError("unsupported security parameter " + std::to_string(security_parameter) +
                      " (only 128)");
  StoreKey k;
  OsRandom::fill(k.bytes.data(), k.bytes.size());
  return k;
}

inline StoreKey load_key(const std::filesystem::path& path) {
  Bytes b = read_file(path);
  if (b.size() != 16) throw FormatError("key file must hold exactly 16 bytes");
  StoreKey k;
  std::copy(b.begin(), b.end(), k.bytes.begin());
  return k;
}

inline void save_key(const std::filesystem::path& path, const StoreKey& key) {
  write_file_atomic(path, key.bytes);
}

inline Bytes encode_block(const BlockPlain& b, std::size_t block_size) {
  if (b.data.size() != block_size)
    throw FormatError("block data is " + std::to_string(b.data.size()) + " bytes, expected " +
                      std::to_string(block_size));
  Bytes out;
  out.reserve(plain_size(block_size));
  ByteWriter w(out);
  w.u64(raw(b.bid));
  w.u32(b.cns);
  w.u64(b.ts);
  w.raw(b.data);
  return out;
}

inline BlockPlain decode_block(std::span<const std::uint8_t> bytes, std::size_t block_size) {
  if (bytes.size() != plain_size(block_size))
    throw FormatError("plain block is " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(plain_size(block_size)));
  ByteReader r(bytes);
  BlockPlain b;
  b.bid = block_id(r.u64());
  b.cns = r.u32();
  b.ts = r.u64();
  auto d = r.raw(block_size, "data");
  b.data.assign(d.begin(), d.end());
  return b;
}

namespace detail {
struct CtxFree {
  void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CtxFree>;

inline CipherCtx new_ctx() {
  CipherCtx c(EVP_CIPHER_CTX_new());
  if (!c) throw Error("EVP_CIPHER_CTX_new failed");
  return c;
}
}  // namespace detail

/// Encrypts `b` under a fresh random nonce drawn from `rng`.
template <class Rng>
Bytes seal(const StoreKey& key, const BlockPlain& b, std::size_t block_size, Rng& rng) {
  Bytes plain = encode_block(b, block_size);
  Bytes out(sealed_size(block_size));
  std::uniform_int_distribution<unsigned> byte(0, 255);
  for (std::size_t i = 0; i < kNonceSize; ++i) out[i] = static_cast<std::uint8_t>(byte(rng));

  auto ctx = detail::new_ctx();
  int len = 0;
  std::uint8_t* ct = out.data() + kNonceSize;
  if (EVP_EncryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, key.bytes.data(), out.data()) !=
          1 ||
      EVP_EncryptUpdate(ctx.get(), ct, &len, plain.data(), static_cast<int>(plain.size())) != 1 ||
      EVP_EncryptFinal_ex(ctx.get(), ct + len, &len) != 1 ||
      EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kTagSize,
                          out.data() + kNonceSize + plain.size()) != 1)
    throw Error("AES-GCM encryption failed");
  return out;
}

inline Bytes seal(const StoreKey& key, const BlockPlain& b, std::size_t block_size) {
  OsRandom rng;
  return seal(key, b, block_size, rng);
}

inline BlockPlain open(const StoreKey& key, std::span<const std::uint8_t> sealed,
                       std::size_t block_size) {
  if (sealed.size() != sealed_size(block_size))
    throw FormatError("sealed block is " + std::to_string(sealed.size()) + " bytes, expected " +
                      std::to_string(sealed_size(block_size)));
  const std::size_t n = plain_size(block_size);
  Bytes plain(n);
  auto ctx = detail::new_ctx();
  int len = 0;
  Bytes tag(sealed.begin() + static_cast<std::ptrdiff_t>(kNonceSize + n), sealed.end());
  if (EVP_DecryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, key.bytes.data(),
                         sealed.data()) != 1 ||
      EVP_DecryptUpdate(ctx.get(), plain.data(), &len, sealed.data() + kNonceSize,
                        static_cast<int>(n)) != 1 ||
      EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kTagSize, tag.data()) != 1)
    throw Error("AES-GCM setup failed");
  if (EVP_DecryptFinal_ex(ctx.get(), plain.data() + len, &len) != 1)
    throw IntegrityError("sealed block failed authentication");
  return decode_block(plain, block_size);
}

}  // namespace caos
