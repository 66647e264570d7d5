#pragma once

#include <array>
#include <string>

#include "skms/bytes.hpp"
#include "skms/hash.hpp"

namespace skms::bip39 {

extern const std::array<const char*, 2048> kEnglishWords;

// Entropy (16/20/24/28/32 bytes) -> mnemonic sentence with the standard
// SHA-256 checksum bits appended.
std::string mnemonic_from_entropy(std::span<const uint8_t> entropy);

// Inverse: validates every word and the checksum. Throws MALFORMED.
Bytes entropy_from_mnemonic(const std::string& mnemonic);

// PBKDF2-HMAC-SHA512, 2048 iterations, salt "mnemonic" + passphrase.
Digest64 seed_from_mnemonic(const std::string& mnemonic, const std::string& passphrase = "");

}  // namespace skms::bip39
