#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

namespace skms {

using Bytes = std::vector<uint8_t>;

std::string to_hex(std::span<const uint8_t> data);
Bytes from_hex(const std::string& hex);  // throws MALFORMED on bad input

// Best-effort wipe that the optimizer may not elide.
void secure_wipe(void* data, size_t len);
void secure_wipe(Bytes& b);

inline void append(Bytes& out, std::span<const uint8_t> data) {
    out.insert(out.end(), data.begin(), data.end());
}

inline void append_u32be(Bytes& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

inline void append_u64be(Bytes& out, uint64_t v) {
    append_u32be(out, static_cast<uint32_t>(v >> 32));
    append_u32be(out, static_cast<uint32_t>(v));
}

// Cursor for parsing length-prefixed structures; throws MALFORMED on truncation.
class ByteReader {
public:
    explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}

    uint8_t u8();
    uint32_t u32be();
    uint64_t u64be();
    Bytes take(size_t n);
    Bytes length_prefixed();  // u32be length + that many bytes
    size_t remaining() const { return data_.size() - pos_; }
    bool done() const { return pos_ == data_.size(); }

private:
    void need(size_t n) const;
    std::span<const uint8_t> data_;
    size_t pos_ = 0;
};

inline void append_length_prefixed(Bytes& out, std::span<const uint8_t> data) {
    append_u32be(out, static_cast<uint32_t>(data.size()));
    append(out, data);
}

inline Bytes str_bytes(const std::string& s) {
    return Bytes(s.begin(), s.end());
}

inline std::string bytes_str(std::span<const uint8_t> b) {
    return std::string(b.begin(), b.end());
}

}  // namespace skms
