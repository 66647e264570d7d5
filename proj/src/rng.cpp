#include "skms/rng.hpp"

#include <openssl/rand.h>

#include "skms/errors.hpp"
#include "skms/hash.hpp"

namespace skms {

void SystemEntropy::fill(std::span<uint8_t> out) {
    if (out.empty()) return;
    if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) {
        raise(ErrorClass::INTERNAL, "system entropy failure");
    }
}

SeededEntropy::SeededEntropy(uint64_t seed) {
    Bytes s;
    append_u64be(s, seed);
    key_.assign(s.begin(), s.end());
}

SeededEntropy::SeededEntropy(std::span<const uint8_t> seed) : key_(seed.begin(), seed.end()) {}

void SeededEntropy::fill(std::span<uint8_t> out) {
    size_t filled = 0;
    while (filled < out.size()) {
        if (buffer_pos_ == buffer_.size()) {
            Bytes block;
            block.reserve(key_.size() + 12);
            append(block, key_);
            block.push_back('c');
            block.push_back('t');
            block.push_back('r');
            append_u64be(block, counter_++);
            Digest32 d = sha256(block);
            buffer_.assign(d.begin(), d.end());
            buffer_pos_ = 0;
        }
        size_t n = std::min(out.size() - filled, buffer_.size() - buffer_pos_);
        std::memcpy(out.data() + filled, buffer_.data() + buffer_pos_, n);
        filled += n;
        buffer_pos_ += n;
    }
}

}  // namespace skms
