#pragma once

#include <array>

#include "skms/bytes.hpp"
#include "skms/ecurve.hpp"
#include "skms/field.hpp"
#include "skms/hash.hpp"
#include "skms/rng.hpp"

namespace skms {

// Complementary encryption keypair (Ekp) and signing identity share one
// curve so reconstructed scalars are valid wallet keys.
struct EncKeypair {
    FieldElement private_scalar;  // over the curve order, nonzero
    EcPoint public_point;

    static EncKeypair generate(EntropySource& rng);
    static EncKeypair from_scalar(const FieldElement& scalar);
};

// Hashed-ElGamal sealed box: ephemeral ECDH -> KDF -> stream cipher + tag.
// Wire encoding: 33-byte compressed ephemeral point || 16-byte tag || ciphertext.
struct SealedBox {
    EcPoint ephemeral_public;
    std::array<uint8_t, kAeadTagLen> tag;
    Bytes ciphertext;

    Bytes encode() const;
    static SealedBox decode(std::span<const uint8_t> wire);  // throws MALFORMED
};

SealedBox seal(std::span<const uint8_t> plaintext, const EcPoint& recipient, EntropySource& rng);
// Throws AUTH_FAILURE on wrong key or any tampering, MALFORMED on an
// unparseable ephemeral point.
Bytes open(const SealedBox& box, const FieldElement& private_scalar);

// ECDSA over secp256k1 with a deterministic nonce; s in canonical low form.
// Wire encoding: 64-byte r||s plus one recovery-hint byte.
struct Signature {
    FieldElement r;
    FieldElement s;
    uint8_t recovery_hint = 0;

    Bytes encode() const;
    static Signature decode(std::span<const uint8_t> wire);
};

Signature sign_digest(const Digest32& digest, const FieldElement& signing_scalar);
bool verify_digest(const Signature& sig, const EcPoint& public_point, const Digest32& digest);

// Master-entropy combination: domain-separated hash of the ordered,
// length-prefixed entropies, reduced to a nonzero scalar. Deterministic.
FieldElement combine_entropy(std::span<const uint8_t> e_network, std::span<const uint8_t> e_server,
                             std::span<const uint8_t> e_device);

}  // namespace skms
