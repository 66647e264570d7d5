#include "skms/base58.hpp"

#include <gmpxx.h>

#include "skms/errors.hpp"
#include "skms/field.hpp"
#include "skms/hash.hpp"

namespace skms {

namespace {

const char* kAlphabet = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz";

Bytes checksum4(std::span<const uint8_t> payload) {
    Digest32 first = sha256(payload);
    Digest32 second = sha256(first);
    return Bytes(second.begin(), second.begin() + 4);
}

}  // namespace

std::string base58check_encode(std::span<const uint8_t> payload) {
    Bytes data(payload.begin(), payload.end());
    Bytes check = checksum4(payload);
    append(data, check);

    mpz_class v = mpz_from_bytes(data);
    std::string out;
    while (v != 0) {
        mpz_class q, r;
        mpz_fdiv_qr_ui(q.get_mpz_t(), r.get_mpz_t(), v.get_mpz_t(), 58);
        out.push_back(kAlphabet[r.get_ui()]);
        v = q;
    }
    for (uint8_t b : data) {
        if (b != 0) break;
        out.push_back('1');
    }
    std::reverse(out.begin(), out.end());
    return out;
}

Bytes base58check_decode(const std::string& text) {
    mpz_class v = 0;
    size_t leading_ones = 0;
    bool in_prefix = true;
    for (char c : text) {
        const char* p = std::strchr(kAlphabet, c);
        if (p == nullptr || c == '\0') raise(ErrorClass::MALFORMED, "bad base58 character");
        if (in_prefix && c == '1') {
            ++leading_ones;
        } else {
            in_prefix = false;
        }
        v = v * 58 + static_cast<unsigned long>(p - kAlphabet);
    }
    size_t byte_len = v == 0 ? 0 : (mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8;
    Bytes data(leading_ones, 0);
    Bytes tail = mpz_to_bytes(v, byte_len);
    append(data, tail);

    if (data.size() < 4) raise(ErrorClass::MALFORMED, "base58 payload too short");
    Bytes payload(data.begin(), data.end() - 4);
    Bytes check(data.end() - 4, data.end());
    if (checksum4(payload) != check) raise(ErrorClass::MALFORMED, "base58 checksum mismatch");
    return payload;
}

}  // namespace skms
