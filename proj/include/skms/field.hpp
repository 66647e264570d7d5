#pragma once

#include <gmpxx.h>

#include <memory>
#include <span>
#include <string>

#include "skms/bytes.hpp"
#include "skms/rng.hpp"

namespace skms {

// Immutable prime-field description. Constructed once and shared; elements
// keep a shared_ptr so mixed-field arithmetic can be rejected.
class Field {
public:
    // Throws INVALID_ARGUMENT unless modulus passes Miller-Rabin.
    static std::shared_ptr<const Field> make(const mpz_class& modulus);
    static std::shared_ptr<const Field> make_from_hex(const std::string& modulus_hex);

    // Order of the secp256k1 scalar group; the production profile.
    static std::shared_ptr<const Field> secp256k1_order();
    // Smallest prime above 2^256, so any 32-byte chunk embeds losslessly.
    static std::shared_ptr<const Field> blob_field();

    const mpz_class& modulus() const { return modulus_; }
    size_t byte_length() const { return byte_length_; }

    bool operator==(const Field& other) const { return modulus_ == other.modulus_; }

private:
    explicit Field(mpz_class modulus);
    mpz_class modulus_;
    size_t byte_length_;
};

using FieldPtr = std::shared_ptr<const Field>;

class FieldElement {
public:
    FieldElement() = default;  // empty element; using it in arithmetic throws

    // Value is reduced canonically into [0, modulus).
    FieldElement(FieldPtr field, const mpz_class& value);
    static FieldElement from_u64(const FieldPtr& field, uint64_t value);
    // Big-endian bytes reduced mod the modulus.
    static FieldElement from_bytes_reduced(const FieldPtr& field, std::span<const uint8_t> bytes);
    // Big-endian bytes that must already be < modulus (throws MALFORMED otherwise).
    static FieldElement from_bytes_exact(const FieldPtr& field, std::span<const uint8_t> bytes);
    // Uniform draw from [0, modulus) by rejection sampling.
    static FieldElement random(const FieldPtr& field, EntropySource& rng);
    // Uniform draw from [1, modulus).
    static FieldElement random_nonzero(const FieldPtr& field, EntropySource& rng);

    const mpz_class& value() const { return value_; }
    const FieldPtr& field() const { return field_; }
    bool is_zero() const { return value_ == 0; }

    FieldElement operator+(const FieldElement& rhs) const;
    FieldElement operator-(const FieldElement& rhs) const;
    FieldElement operator*(const FieldElement& rhs) const;
    FieldElement operator/(const FieldElement& rhs) const;  // throws on zero divisor
    FieldElement negate() const;
    FieldElement inverse() const;  // throws INVALID_ARGUMENT on zero
    FieldElement pow(const mpz_class& exponent) const;

    bool operator==(const FieldElement& rhs) const;
    bool operator!=(const FieldElement& rhs) const { return !(*this == rhs); }

    // Fixed-width big-endian encoding (field byte_length).
    Bytes to_bytes() const;
    std::string to_hex() const;

private:
    void require_same_field(const FieldElement& rhs) const;
    void require_field() const;

    FieldPtr field_;
    mpz_class value_;
};

mpz_class mpz_from_bytes(std::span<const uint8_t> bytes);
Bytes mpz_to_bytes(const mpz_class& value, size_t width);

}  // namespace skms
