#include "skms/hash.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <memory>

#include "skms/errors.hpp"

namespace skms {

namespace {

struct CtxFree {
    void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
    void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};

template <typename DigestT>
DigestT evp_digest(const EVP_MD* md, std::span<const uint8_t> data) {
    DigestT out{};
    std::unique_ptr<EVP_MD_CTX, CtxFree> ctx(EVP_MD_CTX_new());
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), md, nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1 || len != out.size()) {
        raise(ErrorClass::INTERNAL, "digest failure");
    }
    return out;
}

}  // namespace

Digest32 sha256(std::span<const uint8_t> data) { return evp_digest<Digest32>(EVP_sha256(), data); }

Digest64 sha512(std::span<const uint8_t> data) { return evp_digest<Digest64>(EVP_sha512(), data); }

Digest32 hmac_sha256(std::span<const uint8_t> key, std::span<const uint8_t> data) {
    Digest32 out{};
    unsigned int len = 0;
    if (HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(), data.size(),
             out.data(), &len) == nullptr ||
        len != out.size()) {
        raise(ErrorClass::INTERNAL, "hmac failure");
    }
    return out;
}

Digest64 hmac_sha512(std::span<const uint8_t> key, std::span<const uint8_t> data) {
    Digest64 out{};
    unsigned int len = 0;
    if (HMAC(EVP_sha512(), key.data(), static_cast<int>(key.size()), data.data(), data.size(),
             out.data(), &len) == nullptr ||
        len != out.size()) {
        raise(ErrorClass::INTERNAL, "hmac failure");
    }
    return out;
}

Digest64 pbkdf2_hmac_sha512(std::span<const uint8_t> password, std::span<const uint8_t> salt,
                            unsigned iterations) {
    Digest64 out{};
    if (PKCS5_PBKDF2_HMAC(reinterpret_cast<const char*>(password.data()),
                          static_cast<int>(password.size()), salt.data(),
                          static_cast<int>(salt.size()), static_cast<int>(iterations),
                          EVP_sha512(), static_cast<int>(out.size()), out.data()) != 1) {
        raise(ErrorClass::INTERNAL, "pbkdf2 failure");
    }
    return out;
}

bool constant_time_equal(std::span<const uint8_t> a, std::span<const uint8_t> b) {
    if (a.size() != b.size()) return false;
    if (a.empty()) return true;
    return CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

AeadSealed aead_seal(std::span<const uint8_t> key32, std::span<const uint8_t> nonce12,
                     std::span<const uint8_t> plaintext) {
    if (key32.size() != 32 || nonce12.size() != kAeadNonceLen) {
        raise(ErrorClass::INVALID_ARGUMENT, "bad aead key/nonce length");
    }
    AeadSealed out;
    out.ciphertext.resize(plaintext.size());
    std::unique_ptr<EVP_CIPHER_CTX, CtxFree> ctx(EVP_CIPHER_CTX_new());
    int len = 0;
    if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_chacha20_poly1305(), nullptr, key32.data(),
                                   nonce12.data()) != 1) {
        raise(ErrorClass::INTERNAL, "aead init failure");
    }
    if (!plaintext.empty() &&
        EVP_EncryptUpdate(ctx.get(), out.ciphertext.data(), &len, plaintext.data(),
                          static_cast<int>(plaintext.size())) != 1) {
        raise(ErrorClass::INTERNAL, "aead encrypt failure");
    }
    int fin = 0;
    if (EVP_EncryptFinal_ex(ctx.get(), out.ciphertext.data() + len, &fin) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_GET_TAG, kAeadTagLen, out.tag.data()) != 1) {
        raise(ErrorClass::INTERNAL, "aead finalize failure");
    }
    return out;
}

Bytes aead_open(std::span<const uint8_t> key32, std::span<const uint8_t> nonce12,
                std::span<const uint8_t> ciphertext, std::span<const uint8_t> tag) {
    if (key32.size() != 32 || nonce12.size() != kAeadNonceLen || tag.size() != kAeadTagLen) {
        raise(ErrorClass::MALFORMED, "bad aead input length");
    }
    Bytes plaintext(ciphertext.size());
    std::unique_ptr<EVP_CIPHER_CTX, CtxFree> ctx(EVP_CIPHER_CTX_new());
    int len = 0;
    if (!ctx || EVP_DecryptInit_ex(ctx.get(), EVP_chacha20_poly1305(), nullptr, key32.data(),
                                   nonce12.data()) != 1) {
        raise(ErrorClass::INTERNAL, "aead init failure");
    }
    if (!ciphertext.empty() &&
        EVP_DecryptUpdate(ctx.get(), plaintext.data(), &len, ciphertext.data(),
                          static_cast<int>(ciphertext.size())) != 1) {
        raise(ErrorClass::AUTH_FAILURE, "aead decrypt failure");
    }
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_SET_TAG, kAeadTagLen,
                            const_cast<uint8_t*>(tag.data())) != 1) {
        raise(ErrorClass::INTERNAL, "aead tag set failure");
    }
    int fin = 0;
    if (EVP_DecryptFinal_ex(ctx.get(), plaintext.data() + len, &fin) != 1) {
        raise(ErrorClass::AUTH_FAILURE, "authentication failed");
    }
    return plaintext;
}

// ---------------------------------------------------------------------------
// RIPEMD-160. OpenSSL 3 ships it only in the legacy provider, so it is
// implemented here directly from the published algorithm; needed for BIP-32
// key fingerprints.
// ---------------------------------------------------------------------------

namespace {

inline uint32_t rol(uint32_t x, unsigned n) { return (x << n) | (x >> (32 - n)); }

constexpr uint8_t R1[80] = {0, 1, 2,  3,  4,  5,  6,  7,  8,  9,  10, 11, 12, 13, 14, 15,
                            7, 4, 13, 1,  10, 6,  15, 3,  12, 0,  9,  5,  2,  14, 11, 8,
                            3, 10, 14, 4, 9,  15, 8,  1,  2,  7,  0,  6,  13, 11, 5,  12,
                            1, 9, 11, 10, 0,  8,  12, 4,  13, 3,  7,  15, 14, 5,  6,  2,
                            4, 0, 5,  9,  7,  12, 2,  10, 14, 1,  3,  8,  11, 6,  15, 13};
constexpr uint8_t R2[80] = {5,  14, 7, 0, 9, 2,  11, 4,  13, 6,  15, 8,  1,  10, 3,  12,
                            6,  11, 3, 7, 0, 13, 5,  10, 14, 15, 8,  12, 4,  9,  1,  2,
                            15, 5,  1, 3, 7, 14, 6,  9,  11, 8,  12, 2,  10, 0,  4,  13,
                            8,  6,  4, 1, 3, 11, 15, 0,  5,  12, 2,  13, 9,  7,  10, 14,
                            12, 15, 10, 4, 1, 5,  8,  7,  6,  2,  13, 14, 0,  3,  9,  11};
constexpr uint8_t S1[80] = {11, 14, 15, 12, 5,  8,  7,  9,  11, 13, 14, 15, 6,  7,  9,  8,
                            7,  6,  8,  13, 11, 9,  7,  15, 7,  12, 15, 9,  11, 7,  13, 12,
                            11, 13, 6,  7,  14, 9,  13, 15, 14, 8,  13, 6,  5,  12, 7,  5,
                            11, 12, 14, 15, 14, 15, 9,  8,  9,  14, 5,  6,  8,  6,  5,  12,
                            9,  15, 5,  11, 6,  8,  13, 12, 5,  12, 13, 14, 11, 8,  5,  6};
constexpr uint8_t S2[80] = {8,  9,  9,  11, 13, 15, 15, 5,  7,  7,  8,  11, 14, 14, 12, 6,
                            9,  13, 15, 7,  12, 8,  9,  11, 7,  7,  12, 7,  6,  15, 13, 11,
                            9,  7,  15, 11, 8,  6,  6,  14, 12, 13, 5,  14, 13, 13, 7,  5,
                            15, 5,  8,  11, 14, 14, 6,  14, 6,  9,  12, 9,  12, 5,  15, 8,
                            8,  5,  12, 9,  12, 5,  14, 6,  8,  13, 6,  5,  15, 13, 11, 11};
constexpr uint32_t K1[5] = {0x00000000u, 0x5A827999u, 0x6ED9EBA1u, 0x8F1BBCDCu, 0xA953FD4Eu};
constexpr uint32_t K2[5] = {0x50A28BE6u, 0x5C4DD124u, 0x6D703EF3u, 0x7A6D76E9u, 0x00000000u};

inline uint32_t f(unsigned j, uint32_t x, uint32_t y, uint32_t z) {
    if (j < 16) return x ^ y ^ z;
    if (j < 32) return (x & y) | (~x & z);
    if (j < 48) return (x | ~y) ^ z;
    if (j < 64) return (x & z) | (y & ~z);
    return x ^ (y | ~z);
}

}  // namespace

std::array<uint8_t, 20> ripemd160(std::span<const uint8_t> data) {
    uint32_t h[5] = {0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u, 0xC3D2E1F0u};

    Bytes msg(data.begin(), data.end());
    uint64_t bit_len = static_cast<uint64_t>(msg.size()) * 8;
    msg.push_back(0x80);
    while (msg.size() % 64 != 56) msg.push_back(0x00);
    for (int i = 0; i < 8; ++i) msg.push_back(static_cast<uint8_t>(bit_len >> (8 * i)));

    for (size_t off = 0; off < msg.size(); off += 64) {
        uint32_t X[16];
        for (int i = 0; i < 16; ++i) {
            X[i] = static_cast<uint32_t>(msg[off + 4 * i]) |
                   (static_cast<uint32_t>(msg[off + 4 * i + 1]) << 8) |
                   (static_cast<uint32_t>(msg[off + 4 * i + 2]) << 16) |
                   (static_cast<uint32_t>(msg[off + 4 * i + 3]) << 24);
        }
        uint32_t a1 = h[0], b1 = h[1], c1 = h[2], d1 = h[3], e1 = h[4];
        uint32_t a2 = h[0], b2 = h[1], c2 = h[2], d2 = h[3], e2 = h[4];
        for (unsigned j = 0; j < 80; ++j) {
            uint32_t t = rol(a1 + f(j, b1, c1, d1) + X[R1[j]] + K1[j / 16], S1[j]) + e1;
            a1 = e1; e1 = d1; d1 = rol(c1, 10); c1 = b1; b1 = t;
            t = rol(a2 + f(79 - j, b2, c2, d2) + X[R2[j]] + K2[j / 16], S2[j]) + e2;
            a2 = e2; e2 = d2; d2 = rol(c2, 10); c2 = b2; b2 = t;
        }
        uint32_t t = h[1] + c1 + d2;
        h[1] = h[2] + d1 + e2;
        h[2] = h[3] + e1 + a2;
        h[3] = h[4] + a1 + b2;
        h[4] = h[0] + b1 + c2;
        h[0] = t;
    }

    std::array<uint8_t, 20> out{};
    for (int i = 0; i < 5; ++i) {
        out[4 * i] = static_cast<uint8_t>(h[i]);
        out[4 * i + 1] = static_cast<uint8_t>(h[i] >> 8);
        out[4 * i + 2] = static_cast<uint8_t>(h[i] >> 16);
        out[4 * i + 3] = static_cast<uint8_t>(h[i] >> 24);
    }
    return out;
}

}  // namespace skms
