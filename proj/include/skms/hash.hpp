#pragma once

#include <array>
#include <span>
#include <string>

#include "skms/bytes.hpp"

namespace skms {

using Digest32 = std::array<uint8_t, 32>;
using Digest64 = std::array<uint8_t, 64>;

Digest32 sha256(std::span<const uint8_t> data);
Digest64 sha512(std::span<const uint8_t> data);
Digest32 hmac_sha256(std::span<const uint8_t> key, std::span<const uint8_t> data);
Digest64 hmac_sha512(std::span<const uint8_t> key, std::span<const uint8_t> data);
Digest64 pbkdf2_hmac_sha512(std::span<const uint8_t> password, std::span<const uint8_t> salt,
                            unsigned iterations);
std::array<uint8_t, 20> ripemd160(std::span<const uint8_t> data);

bool constant_time_equal(std::span<const uint8_t> a, std::span<const uint8_t> b);

// ChaCha20-Poly1305 with a caller-supplied 12-byte nonce. The tag (16 bytes)
// is returned/consumed separately so callers control the wire layout.
constexpr size_t kAeadNonceLen = 12;
constexpr size_t kAeadTagLen = 16;

struct AeadSealed {
    Bytes ciphertext;
    std::array<uint8_t, kAeadTagLen> tag;
};

AeadSealed aead_seal(std::span<const uint8_t> key32, std::span<const uint8_t> nonce12,
                     std::span<const uint8_t> plaintext);

// Throws AUTH_FAILURE when the tag does not verify.
Bytes aead_open(std::span<const uint8_t> key32, std::span<const uint8_t> nonce12,
                std::span<const uint8_t> ciphertext, std::span<const uint8_t> tag);

}  // namespace skms
