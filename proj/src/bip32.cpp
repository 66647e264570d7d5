#include "skms/bip32.hpp"

#include "skms/base58.hpp"
#include "skms/errors.hpp"
#include "skms/hash.hpp"

namespace skms::bip32 {

namespace {

constexpr uint32_t kVersionXprv = 0x0488ADE4u;
constexpr uint32_t kVersionXpub = 0x0488B21Eu;

Bytes serialize(uint32_t version, const ExtendedKey& k, std::span<const uint8_t> key_data) {
    Bytes out;
    out.reserve(78);
    append_u32be(out, version);
    out.push_back(k.depth);
    out.insert(out.end(), k.parent_fingerprint.begin(), k.parent_fingerprint.end());
    append_u32be(out, k.child_number);
    out.insert(out.end(), k.chain_code.begin(), k.chain_code.end());
    append(out, key_data);
    return out;
}

}  // namespace

EcPoint ExtendedKey::public_point() const { return ec_base_mul(key.value()); }

std::array<uint8_t, 4> ExtendedKey::fingerprint() const {
    Bytes pub = public_point().encode_compressed();
    auto h160 = ripemd160(sha256(pub));
    std::array<uint8_t, 4> fp{};
    std::copy_n(h160.begin(), 4, fp.begin());
    return fp;
}

ExtendedKey ExtendedKey::derive_child(uint32_t index) const {
    Bytes data;
    data.reserve(37);
    if (index & kHardenedBit) {
        data.push_back(0x00);
        Bytes kb = key.to_bytes();
        append(data, kb);
    } else {
        Bytes pub = public_point().encode_compressed();
        append(data, pub);
    }
    append_u32be(data, index);

    Digest64 I = hmac_sha512(chain_code, data);
    FieldPtr order = Field::secp256k1_order();
    // left half taken mod n; the out-of-range/zero cases are vanishingly
    // rare and the standard says skip to the next index
    mpz_class il = mpz_from_bytes(std::span(I.data(), 32));
    if (il >= order->modulus()) raise(ErrorClass::INVALID_ARGUMENT, "unusable child index");
    FieldElement child_key = FieldElement(order, il) + key;
    if (child_key.is_zero()) raise(ErrorClass::INVALID_ARGUMENT, "unusable child index");

    ExtendedKey child;
    child.key = child_key;
    std::copy_n(I.begin() + 32, 32, child.chain_code.begin());
    child.depth = static_cast<uint8_t>(depth + 1);
    child.child_number = index;
    child.parent_fingerprint = fingerprint();
    return child;
}

ExtendedKey ExtendedKey::derive_path(const std::vector<uint32_t>& path) const {
    ExtendedKey k = *this;
    for (uint32_t idx : path) k = k.derive_child(idx);
    return k;
}

std::string ExtendedKey::to_xprv() const {
    Bytes key_data;
    key_data.push_back(0x00);
    Bytes kb = key.to_bytes();
    append(key_data, kb);
    return base58check_encode(serialize(kVersionXprv, *this, key_data));
}

std::string ExtendedKey::to_xpub() const {
    Bytes pub = public_point().encode_compressed();
    return base58check_encode(serialize(kVersionXpub, *this, pub));
}

ExtendedKey master_from_seed(std::span<const uint8_t> seed) {
    if (seed.size() < 16 || seed.size() > 64) {
        raise(ErrorClass::INVALID_ARGUMENT, "seed must be 16..64 bytes");
    }
    Digest64 I = hmac_sha512(str_bytes("Bitcoin seed"), seed);
    FieldPtr order = Field::secp256k1_order();
    mpz_class il = mpz_from_bytes(std::span(I.data(), 32));
    if (il == 0 || il >= order->modulus()) raise(ErrorClass::INTERNAL, "invalid master key");
    ExtendedKey k;
    k.key = FieldElement(order, il);
    std::copy_n(I.begin() + 32, 32, k.chain_code.begin());
    return k;
}

std::vector<uint32_t> parse_path(const std::string& path) {
    if (path.empty()) raise(ErrorClass::INVALID_ARGUMENT, "empty derivation path");
    std::vector<uint32_t> out;
    size_t pos = 0;
    if (path[0] == 'm' || path[0] == 'M') {
        if (path.size() == 1) return out;
        if (path[1] != '/') raise(ErrorClass::INVALID_ARGUMENT, "bad path prefix");
        pos = 2;
    }
    while (pos < path.size()) {
        size_t slash = path.find('/', pos);
        std::string elem = path.substr(pos, slash == std::string::npos ? slash : slash - pos);
        if (elem.empty()) raise(ErrorClass::INVALID_ARGUMENT, "empty path element");
        bool hardened = elem.back() == '\'' || elem.back() == 'h' || elem.back() == 'H';
        if (hardened) elem.pop_back();
        if (elem.empty() || elem.find_first_not_of("0123456789") != std::string::npos) {
            raise(ErrorClass::INVALID_ARGUMENT, "bad path element '" + elem + "'");
        }
        unsigned long v;
        try {
            v = std::stoul(elem);
        } catch (const std::exception&) {
            raise(ErrorClass::INVALID_ARGUMENT, "path element out of range");
        }
        if (v >= kHardenedBit) raise(ErrorClass::INVALID_ARGUMENT, "path element out of range");
        out.push_back(static_cast<uint32_t>(v) | (hardened ? kHardenedBit : 0));
        if (slash == std::string::npos) break;
        pos = slash + 1;
    }
    return out;
}

}  // namespace skms::bip32
