#pragma once

#include <gmpxx.h>

#include <optional>

#include "skms/bytes.hpp"
#include "skms/field.hpp"

namespace skms {

// secp256k1: y^2 = x^3 + 7 over F_p. Desk-scale affine arithmetic; this
// backend makes no constant-time claims.
class EcPoint {
public:
    EcPoint() : infinity_(true) {}  // point at infinity

    static EcPoint generator();
    static const mpz_class& field_prime();
    static const mpz_class& group_order();

    // Affine point; throws MALFORMED if not on the curve.
    static EcPoint from_affine(const mpz_class& x, const mpz_class& y);
    // 33-byte compressed encoding (02/03 prefix). Throws MALFORMED.
    static EcPoint decode_compressed(std::span<const uint8_t> bytes);

    bool is_infinity() const { return infinity_; }
    const mpz_class& x() const;
    const mpz_class& y() const;

    EcPoint operator+(const EcPoint& rhs) const;
    EcPoint negate() const;
    EcPoint mul(const mpz_class& scalar) const;  // scalar taken mod group order

    bool operator==(const EcPoint& rhs) const;
    bool operator!=(const EcPoint& rhs) const { return !(*this == rhs); }

    // Compressed 33-byte encoding; throws INVALID_ARGUMENT for infinity.
    Bytes encode_compressed() const;

private:
    EcPoint(mpz_class x, mpz_class y) : x_(std::move(x)), y_(std::move(y)), infinity_(false) {}

    mpz_class x_;
    mpz_class y_;
    bool infinity_;
};

inline EcPoint ec_base_mul(const mpz_class& scalar) { return EcPoint::generator().mul(scalar); }

}  // namespace skms
