#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "skms/bytes.hpp"
#include "skms/ecurve.hpp"
#include "skms/field.hpp"

namespace skms::bip32 {

constexpr uint32_t kHardenedBit = 0x80000000u;

// Extended private key; public side is derived on demand.
struct ExtendedKey {
    FieldElement key;  // over the curve order
    std::array<uint8_t, 32> chain_code{};
    uint8_t depth = 0;
    uint32_t child_number = 0;
    std::array<uint8_t, 4> parent_fingerprint{};

    EcPoint public_point() const;
    std::array<uint8_t, 4> fingerprint() const;

    ExtendedKey derive_child(uint32_t index) const;
    ExtendedKey derive_path(const std::vector<uint32_t>& path) const;

    std::string to_xprv() const;  // base58check, mainnet version bytes
    std::string to_xpub() const;
};

// Master key from a 16..64-byte seed (HMAC-SHA512 under "Bitcoin seed").
ExtendedKey master_from_seed(std::span<const uint8_t> seed);

// "m/44'/0'/0/1" -> {44|H, 0|H, 0, 1}; throws INVALID_ARGUMENT.
std::vector<uint32_t> parse_path(const std::string& path);

}  // namespace skms::bip32
