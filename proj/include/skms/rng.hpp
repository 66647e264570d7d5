#pragma once

#include <cstdint>
#include <memory>
#include <span>

#include "skms/bytes.hpp"

namespace skms {

// Caller-owned entropy source. Implementations are not thread-safe; each
// concurrent context owns its own instance.
class EntropySource {
public:
    virtual ~EntropySource() = default;
    virtual void fill(std::span<uint8_t> out) = 0;

    Bytes bytes(size_t n) {
        Bytes b(n);
        fill(b);
        return b;
    }
};

// OS-backed randomness for real use.
class SystemEntropy final : public EntropySource {
public:
    void fill(std::span<uint8_t> out) override;
};

// Deterministic SHA-256 counter generator for seeded test/CLI profiles.
// Identical seeds yield identical streams on every platform.
class SeededEntropy final : public EntropySource {
public:
    explicit SeededEntropy(uint64_t seed);
    explicit SeededEntropy(std::span<const uint8_t> seed);

    void fill(std::span<uint8_t> out) override;

private:
    Bytes key_;
    uint64_t counter_ = 0;
    Bytes buffer_;
    size_t buffer_pos_ = 0;
};

}  // namespace skms
