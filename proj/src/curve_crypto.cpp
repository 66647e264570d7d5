#include "skms/curve_crypto.hpp"

#include "skms/errors.hpp"

namespace skms {

namespace {

constexpr const char* kEciesDomain = "skms/ecies/v1";
constexpr const char* kEntropyDomain = "skms/master-entropy/v1";
constexpr const char* kNonceDomain = "skms/sig-nonce/v1";

Digest32 ecies_key(const EcPoint& shared) {
    Bytes input = str_bytes(kEciesDomain);
    Bytes pt = shared.encode_compressed();
    append(input, pt);
    return sha256(input);
}

const std::array<uint8_t, kAeadNonceLen> kZeroNonce{};  // fresh key per box

}  // namespace

EncKeypair EncKeypair::generate(EntropySource& rng) {
    FieldElement d = FieldElement::random_nonzero(Field::secp256k1_order(), rng);
    return from_scalar(d);
}

EncKeypair EncKeypair::from_scalar(const FieldElement& scalar) {
    if (scalar.is_zero()) raise(ErrorClass::INVALID_ARGUMENT, "zero private scalar");
    if (!(*scalar.field() == *Field::secp256k1_order())) {
        raise(ErrorClass::INVALID_ARGUMENT, "scalar not over curve order");
    }
    return EncKeypair{scalar, ec_base_mul(scalar.value())};
}

Bytes SealedBox::encode() const {
    Bytes out = ephemeral_public.encode_compressed();
    out.insert(out.end(), tag.begin(), tag.end());
    append(out, ciphertext);
    return out;
}

SealedBox SealedBox::decode(std::span<const uint8_t> wire) {
    if (wire.size() < 33 + kAeadTagLen) raise(ErrorClass::MALFORMED, "sealed box too short");
    SealedBox box;
    box.ephemeral_public = EcPoint::decode_compressed(wire.subspan(0, 33));
    std::copy_n(wire.begin() + 33, kAeadTagLen, box.tag.begin());
    box.ciphertext.assign(wire.begin() + 33 + kAeadTagLen, wire.end());
    return box;
}

SealedBox seal(std::span<const uint8_t> plaintext, const EcPoint& recipient, EntropySource& rng) {
    if (recipient.is_infinity()) raise(ErrorClass::INVALID_ARGUMENT, "recipient is infinity");
    FieldElement eph = FieldElement::random_nonzero(Field::secp256k1_order(), rng);
    EcPoint shared = recipient.mul(eph.value());
    if (shared.is_infinity()) raise(ErrorClass::INVALID_ARGUMENT, "degenerate shared point");
    Digest32 key = ecies_key(shared);
    AeadSealed sealed = aead_seal(key, kZeroNonce, plaintext);
    SealedBox box;
    box.ephemeral_public = ec_base_mul(eph.value());
    box.tag = sealed.tag;
    box.ciphertext = std::move(sealed.ciphertext);
    secure_wipe(key.data(), key.size());
    return box;
}

Bytes open(const SealedBox& box, const FieldElement& private_scalar) {
    if (private_scalar.is_zero()) raise(ErrorClass::INVALID_ARGUMENT, "zero private scalar");
    EcPoint shared = box.ephemeral_public.mul(private_scalar.value());
    if (shared.is_infinity()) raise(ErrorClass::AUTH_FAILURE, "degenerate shared point");
    Digest32 key = ecies_key(shared);
    Bytes plaintext = aead_open(key, kZeroNonce, box.ciphertext, box.tag);
    secure_wipe(key.data(), key.size());
    return plaintext;
}

Bytes Signature::encode() const {
    Bytes out = r.to_bytes();
    Bytes sb = s.to_bytes();
    append(out, sb);
    out.push_back(recovery_hint);
    return out;
}

Signature Signature::decode(std::span<const uint8_t> wire) {
    if (wire.size() != 65) raise(ErrorClass::MALFORMED, "bad signature length");
    FieldPtr order = Field::secp256k1_order();
    Signature sig;
    sig.r = FieldElement::from_bytes_exact(order, wire.subspan(0, 32));
    sig.s = FieldElement::from_bytes_exact(order, wire.subspan(32, 32));
    sig.recovery_hint = wire[64];
    return sig;
}

Signature sign_digest(const Digest32& digest, const FieldElement& signing_scalar) {
    if (signing_scalar.is_zero()) raise(ErrorClass::INVALID_ARGUMENT, "zero signing scalar");
    FieldPtr order = Field::secp256k1_order();
    const mpz_class& n = order->modulus();
    mpz_class half_n = n >> 1;
    FieldElement z = FieldElement::from_bytes_reduced(order, digest);

    Bytes key = signing_scalar.to_bytes();
    for (uint32_t counter = 0;; ++counter) {
        // Deterministic nonce: HMAC(key = scalar, domain || digest || counter).
        Bytes msg = str_bytes(kNonceDomain);
        append(msg, digest);
        append_u32be(msg, counter);
        Digest32 kd = hmac_sha256(key, msg);
        FieldElement k = FieldElement::from_bytes_reduced(order, kd);
        if (k.is_zero()) continue;

        EcPoint R = ec_base_mul(k.value());
        FieldElement r(order, R.x());
        if (r.is_zero()) continue;
        FieldElement s = (z + r * signing_scalar) * k.inverse();
        if (s.is_zero()) continue;

        uint8_t hint = mpz_odd_p(R.y().get_mpz_t()) ? 1 : 0;
        if (R.x() >= n) hint |= 2;
        if (s.value() > half_n) {
            s = s.negate();
            hint ^= 1;
        }
        secure_wipe(key);
        return Signature{r, s, hint};
    }
}

bool verify_digest(const Signature& sig, const EcPoint& public_point, const Digest32& digest) {
    FieldPtr order = Field::secp256k1_order();
    const mpz_class& n = order->modulus();
    if (sig.r.is_zero() || sig.s.is_zero()) return false;
    if (sig.s.value() > (n >> 1)) return false;  // enforce canonical low-s
    if (public_point.is_infinity()) return false;

    FieldElement z = FieldElement::from_bytes_reduced(order, digest);
    FieldElement s_inv = sig.s.inverse();
    FieldElement u1 = z * s_inv;
    FieldElement u2 = sig.r * s_inv;
    EcPoint R = ec_base_mul(u1.value()) + public_point.mul(u2.value());
    if (R.is_infinity()) return false;
    FieldElement rx(order, R.x());
    return rx == sig.r;
}

FieldElement combine_entropy(std::span<const uint8_t> e_network, std::span<const uint8_t> e_server,
                             std::span<const uint8_t> e_device) {
    if (e_network.size() != 32 || e_server.size() != 32 || e_device.size() != 32) {
        raise(ErrorClass::INVALID_ARGUMENT, "entropy inputs must be 32 bytes");
    }
    FieldPtr order = Field::secp256k1_order();
    for (uint32_t counter = 0;; ++counter) {
        Bytes input = str_bytes(kEntropyDomain);
        append_u32be(input, counter);
        append_length_prefixed(input, e_network);
        append_length_prefixed(input, e_server);
        append_length_prefixed(input, e_device);
        Digest32 h = sha256(input);
        mpz_class v = mpz_from_bytes(h);
        if (v != 0 && v < order->modulus()) {
            return FieldElement(order, v);
        }
    }
}

}  // namespace skms
