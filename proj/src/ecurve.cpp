#include "skms/ecurve.hpp"

#include "skms/errors.hpp"

namespace skms {

namespace {

struct CurveParams {
    mpz_class p;   // base field prime
    mpz_class n;   // group order
    mpz_class gx;
    mpz_class gy;
    mpz_class sqrt_exp;  // (p+1)/4, valid since p = 3 mod 4
};

const CurveParams& params() {
    static const CurveParams cp = [] {
        CurveParams c;
        c.p.set_str("FFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFFC2F", 16);
        c.n.set_str("FFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141", 16);
        c.gx.set_str("79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798", 16);
        c.gy.set_str("483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8", 16);
        c.sqrt_exp = (c.p + 1) / 4;
        return c;
    }();
    return cp;
}

mpz_class mod_p(const mpz_class& v) {
    mpz_class r;
    mpz_mod(r.get_mpz_t(), v.get_mpz_t(), params().p.get_mpz_t());
    return r;
}

mpz_class inv_p(const mpz_class& v) {
    mpz_class r;
    if (mpz_invert(r.get_mpz_t(), v.get_mpz_t(), params().p.get_mpz_t()) == 0) {
        raise(ErrorClass::INTERNAL, "non-invertible curve denominator");
    }
    return r;
}

bool on_curve(const mpz_class& x, const mpz_class& y) {
    mpz_class lhs = mod_p(y * y);
    mpz_class rhs = mod_p(x * x * x + 7);
    return lhs == rhs;
}

}  // namespace

const mpz_class& EcPoint::field_prime() { return params().p; }
const mpz_class& EcPoint::group_order() { return params().n; }

EcPoint EcPoint::generator() { return EcPoint(params().gx, params().gy); }

EcPoint EcPoint::from_affine(const mpz_class& x, const mpz_class& y) {
    if (x < 0 || x >= params().p || y < 0 || y >= params().p || !on_curve(x, y)) {
        raise(ErrorClass::MALFORMED, "point not on curve");
    }
    return EcPoint(x, y);
}

const mpz_class& EcPoint::x() const {
    if (infinity_) raise(ErrorClass::INVALID_ARGUMENT, "coordinates of infinity");
    return x_;
}

const mpz_class& EcPoint::y() const {
    if (infinity_) raise(ErrorClass::INVALID_ARGUMENT, "coordinates of infinity");
    return y_;
}

EcPoint EcPoint::operator+(const EcPoint& rhs) const {
    if (infinity_) return rhs;
    if (rhs.infinity_) return *this;
    const mpz_class& p = params().p;
    if (x_ == rhs.x_) {
        if (mod_p(y_ + rhs.y_) == 0) return EcPoint();  // P + (-P)
        // doubling
        mpz_class lambda = mod_p(3 * x_ * x_ * inv_p(mod_p(2 * y_)));
        mpz_class x3 = mod_p(lambda * lambda - 2 * x_);
        mpz_class y3 = mod_p(lambda * (x_ - x3) - y_);
        return EcPoint(x3, y3);
    }
    mpz_class lambda = mod_p((rhs.y_ - y_ + p) * inv_p(mod_p(rhs.x_ - x_ + p)));
    mpz_class x3 = mod_p(lambda * lambda - x_ - rhs.x_ + 2 * p);
    mpz_class y3 = mod_p(lambda * (x_ - x3 + p) - y_ + p);
    return EcPoint(x3, y3);
}

EcPoint EcPoint::negate() const {
    if (infinity_) return *this;
    return EcPoint(x_, mod_p(params().p - y_));
}

namespace {

// Jacobian coordinates (X/Z^2, Y/Z^3) so scalar multiplication needs a
// single field inversion at the end.
struct Jac {
    mpz_class X, Y, Z;
    bool inf = true;
};

Jac jac_double(const Jac& p) {
    if (p.inf || p.Y == 0) return Jac{};
    mpz_class y2 = mod_p(p.Y * p.Y);
    mpz_class s = mod_p(4 * p.X * y2);
    mpz_class m = mod_p(3 * p.X * p.X);
    mpz_class x3 = mod_p(m * m - 2 * s);
    mpz_class y3 = mod_p(m * (s - x3) - 8 * y2 * y2);
    mpz_class z3 = mod_p(2 * p.Y * p.Z);
    return Jac{x3, y3, z3, false};
}

Jac jac_add_affine(const Jac& p, const mpz_class& qx, const mpz_class& qy) {
    if (p.inf) return Jac{qx, qy, 1, false};
    mpz_class z2 = mod_p(p.Z * p.Z);
    mpz_class u2 = mod_p(qx * z2);
    mpz_class s2 = mod_p(qy * z2 * p.Z);
    mpz_class h = mod_p(u2 - p.X);
    mpz_class r = mod_p(s2 - p.Y);
    if (h == 0) {
        if (r == 0) return jac_double(p);
        return Jac{};
    }
    mpz_class h2 = mod_p(h * h);
    mpz_class h3 = mod_p(h2 * h);
    mpz_class v = mod_p(p.X * h2);
    mpz_class x3 = mod_p(r * r - h3 - 2 * v);
    mpz_class y3 = mod_p(r * (v - x3) - p.Y * h3);
    mpz_class z3 = mod_p(p.Z * h);
    return Jac{x3, y3, z3, false};
}

}  // namespace

EcPoint EcPoint::mul(const mpz_class& scalar) const {
    mpz_class k;
    mpz_mod(k.get_mpz_t(), scalar.get_mpz_t(), params().n.get_mpz_t());
    if (k == 0 || infinity_) return EcPoint();
    Jac acc;
    for (long i = static_cast<long>(mpz_sizeinbase(k.get_mpz_t(), 2)) - 1; i >= 0; --i) {
        acc = jac_double(acc);
        if (mpz_tstbit(k.get_mpz_t(), static_cast<mp_bitcnt_t>(i))) {
            acc = jac_add_affine(acc, x_, y_);
        }
    }
    if (acc.inf) return EcPoint();
    mpz_class zinv = inv_p(acc.Z);
    mpz_class zinv2 = mod_p(zinv * zinv);
    return EcPoint(mod_p(acc.X * zinv2), mod_p(acc.Y * zinv2 * zinv));
}

bool EcPoint::operator==(const EcPoint& rhs) const {
    if (infinity_ || rhs.infinity_) return infinity_ == rhs.infinity_;
    return x_ == rhs.x_ && y_ == rhs.y_;
}

Bytes EcPoint::encode_compressed() const {
    if (infinity_) raise(ErrorClass::INVALID_ARGUMENT, "cannot encode infinity");
    Bytes out;
    out.reserve(33);
    out.push_back(mpz_odd_p(y_.get_mpz_t()) ? 0x03 : 0x02);
    Bytes xb = mpz_to_bytes(x_, 32);
    append(out, xb);
    return out;
}

EcPoint EcPoint::decode_compressed(std::span<const uint8_t> bytes) {
    if (bytes.size() != 33 || (bytes[0] != 0x02 && bytes[0] != 0x03)) {
        raise(ErrorClass::MALFORMED, "bad compressed point encoding");
    }
    mpz_class x = mpz_from_bytes(bytes.subspan(1));
    if (x >= params().p) raise(ErrorClass::MALFORMED, "x exceeds field prime");
    mpz_class rhs = mod_p(x * x * x + 7);
    mpz_class y;
    mpz_powm(y.get_mpz_t(), rhs.get_mpz_t(), params().sqrt_exp.get_mpz_t(),
             params().p.get_mpz_t());
    if (mod_p(y * y) != rhs) raise(ErrorClass::MALFORMED, "x has no curve point");
    bool want_odd = bytes[0] == 0x03;
    if (mpz_odd_p(y.get_mpz_t()) != static_cast<int>(want_odd)) y = params().p - y;
    return EcPoint(x, y);
}

}  // namespace skms
