#include "skms/field.hpp"

#include "skms/errors.hpp"

namespace skms {

mpz_class mpz_from_bytes(std::span<const uint8_t> bytes) {
    mpz_class v;
    if (!bytes.empty()) {
        mpz_import(v.get_mpz_t(), bytes.size(), 1 /*msb first*/, 1, 1, 0, bytes.data());
    }
    return v;
}

Bytes mpz_to_bytes(const mpz_class& value, size_t width) {
    Bytes out(width, 0);
    size_t count = 0;
    if (value != 0) {
        size_t needed = (mpz_sizeinbase(value.get_mpz_t(), 2) + 7) / 8;
        if (needed > width) raise(ErrorClass::INVALID_ARGUMENT, "value too wide for encoding");
        mpz_export(out.data() + (width - needed), &count, 1, 1, 1, 0, value.get_mpz_t());
    }
    return out;
}

Field::Field(mpz_class modulus) : modulus_(std::move(modulus)) {
    byte_length_ = (mpz_sizeinbase(modulus_.get_mpz_t(), 2) + 7) / 8;
}

std::shared_ptr<const Field> Field::make(const mpz_class& modulus) {
    if (modulus < 2) raise(ErrorClass::INVALID_ARGUMENT, "modulus must be >= 2");
    if (mpz_probab_prime_p(modulus.get_mpz_t(), 40) == 0) {
        raise(ErrorClass::INVALID_ARGUMENT, "modulus is not prime");
    }
    return std::shared_ptr<const Field>(new Field(modulus));
}

std::shared_ptr<const Field> Field::make_from_hex(const std::string& modulus_hex) {
    mpz_class m;
    if (m.set_str(modulus_hex, 16) != 0) raise(ErrorClass::MALFORMED, "bad modulus hex");
    return make(m);
}

std::shared_ptr<const Field> Field::secp256k1_order() {
    static const FieldPtr instance = make_from_hex(
        "FFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141");
    return instance;
}

std::shared_ptr<const Field> Field::blob_field() {
    // 2^256 + 297, verified prime at construction.
    static const FieldPtr instance = [] {
        mpz_class m = 1;
        m <<= 256;
        m += 297;
        return make(m);
    }();
    return instance;
}

FieldElement::FieldElement(FieldPtr field, const mpz_class& value) : field_(std::move(field)) {
    if (!field_) raise(ErrorClass::INVALID_ARGUMENT, "null field");
    mpz_mod(value_.get_mpz_t(), value.get_mpz_t(), field_->modulus().get_mpz_t());
}

FieldElement FieldElement::from_u64(const FieldPtr& field, uint64_t value) {
    mpz_class v = static_cast<unsigned long>(value >> 32);
    v <<= 32;
    v += static_cast<unsigned long>(value & 0xFFFFFFFFu);
    return FieldElement(field, v);
}

FieldElement FieldElement::from_bytes_reduced(const FieldPtr& field,
                                              std::span<const uint8_t> bytes) {
    return FieldElement(field, mpz_from_bytes(bytes));
}

FieldElement FieldElement::from_bytes_exact(const FieldPtr& field,
                                            std::span<const uint8_t> bytes) {
    mpz_class v = mpz_from_bytes(bytes);
    if (v >= field->modulus()) raise(ErrorClass::MALFORMED, "encoding exceeds modulus");
    return FieldElement(field, v);
}

FieldElement FieldElement::random(const FieldPtr& field, EntropySource& rng) {
    // Rejection sampling over the minimal byte width keeps the draw uniform.
    size_t width = field->byte_length();
    size_t top_bits = mpz_sizeinbase(field->modulus().get_mpz_t(), 2) % 8;
    uint8_t top_mask = top_bits == 0 ? 0xFF : static_cast<uint8_t>((1u << top_bits) - 1);
    Bytes buf(width);
    for (;;) {
        rng.fill(buf);
        buf[0] &= top_mask;
        mpz_class v = mpz_from_bytes(buf);
        if (v < field->modulus()) {
            secure_wipe(buf);
            return FieldElement(field, v);
        }
    }
}

FieldElement FieldElement::random_nonzero(const FieldPtr& field, EntropySource& rng) {
    for (;;) {
        FieldElement e = random(field, rng);
        if (!e.is_zero()) return e;
    }
}

void FieldElement::require_field() const {
    if (!field_) raise(ErrorClass::INVALID_ARGUMENT, "uninitialized field element");
}

void FieldElement::require_same_field(const FieldElement& rhs) const {
    require_field();
    rhs.require_field();
    if (!(*field_ == *rhs.field_)) {
        raise(ErrorClass::INVALID_ARGUMENT, "mixed-field arithmetic");
    }
}

FieldElement FieldElement::operator+(const FieldElement& rhs) const {
    require_same_field(rhs);
    return FieldElement(field_, value_ + rhs.value_);
}

FieldElement FieldElement::operator-(const FieldElement& rhs) const {
    require_same_field(rhs);
    return FieldElement(field_, value_ - rhs.value_ + field_->modulus());
}

FieldElement FieldElement::operator*(const FieldElement& rhs) const {
    require_same_field(rhs);
    return FieldElement(field_, value_ * rhs.value_);
}

FieldElement FieldElement::operator/(const FieldElement& rhs) const {
    return *this * rhs.inverse();
}

FieldElement FieldElement::negate() const {
    require_field();
    if (value_ == 0) return *this;
    return FieldElement(field_, field_->modulus() - value_);
}

FieldElement FieldElement::inverse() const {
    require_field();
    if (value_ == 0) raise(ErrorClass::INVALID_ARGUMENT, "inverse of zero");
    mpz_class inv;
    if (mpz_invert(inv.get_mpz_t(), value_.get_mpz_t(), field_->modulus().get_mpz_t()) == 0) {
        raise(ErrorClass::INVALID_ARGUMENT, "non-invertible element");
    }
    return FieldElement(field_, inv);
}

FieldElement FieldElement::pow(const mpz_class& exponent) const {
    require_field();
    mpz_class out;
    mpz_powm(out.get_mpz_t(), value_.get_mpz_t(), exponent.get_mpz_t(),
             field_->modulus().get_mpz_t());
    return FieldElement(field_, out);
}

bool FieldElement::operator==(const FieldElement& rhs) const {
    if (!field_ || !rhs.field_) return field_ == rhs.field_;
    return *field_ == *rhs.field_ && value_ == rhs.value_;
}

Bytes FieldElement::to_bytes() const {
    require_field();
    return mpz_to_bytes(value_, field_->byte_length());
}

std::string FieldElement::to_hex() const { return skms::to_hex(to_bytes()); }

}  // namespace skms
