#include "skms/bytes.hpp"

#include <openssl/crypto.h>

#include "skms/errors.hpp"

namespace skms {

static const char* kHexDigits = "0123456789abcdef";

std::string to_hex(std::span<const uint8_t> data) {
    std::string out;
    out.reserve(data.size() * 2);
    for (uint8_t b : data) {
        out.push_back(kHexDigits[b >> 4]);
        out.push_back(kHexDigits[b & 0x0F]);
    }
    return out;
}

static int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

Bytes from_hex(const std::string& hex) {
    if (hex.size() % 2 != 0) raise(ErrorClass::MALFORMED, "odd-length hex string");
    Bytes out(hex.size() / 2);
    for (size_t i = 0; i < out.size(); ++i) {
        int hi = hex_nibble(hex[2 * i]);
        int lo = hex_nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) raise(ErrorClass::MALFORMED, "non-hex character");
        out[i] = static_cast<uint8_t>((hi << 4) | lo);
    }
    return out;
}

void secure_wipe(void* data, size_t len) {
    if (data != nullptr && len > 0) OPENSSL_cleanse(data, len);
}

void secure_wipe(Bytes& b) {
    secure_wipe(b.data(), b.size());
    b.clear();
}

void ByteReader::need(size_t n) const {
    if (data_.size() - pos_ < n) raise(ErrorClass::MALFORMED, "truncated buffer");
}

uint8_t ByteReader::u8() {
    need(1);
    return data_[pos_++];
}

uint32_t ByteReader::u32be() {
    need(4);
    uint32_t v = (static_cast<uint32_t>(data_[pos_]) << 24) |
                 (static_cast<uint32_t>(data_[pos_ + 1]) << 16) |
                 (static_cast<uint32_t>(data_[pos_ + 2]) << 8) |
                 static_cast<uint32_t>(data_[pos_ + 3]);
    pos_ += 4;
    return v;
}

uint64_t ByteReader::u64be() {
    uint64_t hi = u32be();
    uint64_t lo = u32be();
    return (hi << 32) | lo;
}

Bytes ByteReader::take(size_t n) {
    need(n);
    Bytes out(data_.begin() + pos_, data_.begin() + pos_ + n);
    pos_ += n;
    return out;
}

Bytes ByteReader::length_prefixed() {
    uint32_t len = u32be();
    return take(len);
}

}  // namespace skms
