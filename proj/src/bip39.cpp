#include "skms/bip39.hpp"

#include <map>
#include <sstream>

#include "skms/errors.hpp"

namespace skms::bip39 {

std::string mnemonic_from_entropy(std::span<const uint8_t> entropy) {
    size_t ent_bits = entropy.size() * 8;
    if (ent_bits < 128 || ent_bits > 256 || ent_bits % 32 != 0) {
        raise(ErrorClass::INVALID_ARGUMENT, "entropy must be 128..256 bits in 32-bit steps");
    }
    size_t cs_bits = ent_bits / 32;
    Digest32 checksum = sha256(entropy);

    auto bit_at = [&](size_t i) -> unsigned {
        if (i < ent_bits) return (entropy[i / 8] >> (7 - i % 8)) & 1u;
        size_t j = i - ent_bits;
        return (checksum[j / 8] >> (7 - j % 8)) & 1u;
    };

    std::string out;
    size_t words = (ent_bits + cs_bits) / 11;
    for (size_t w = 0; w < words; ++w) {
        unsigned idx = 0;
        for (size_t b = 0; b < 11; ++b) idx = (idx << 1) | bit_at(w * 11 + b);
        if (w > 0) out.push_back(' ');
        out += kEnglishWords[idx];
    }
    return out;
}

namespace {

const std::map<std::string, unsigned>& word_index() {
    static const std::map<std::string, unsigned> m = [] {
        std::map<std::string, unsigned> idx;
        for (unsigned i = 0; i < kEnglishWords.size(); ++i) idx[kEnglishWords[i]] = i;
        return idx;
    }();
    return m;
}

}  // namespace

Bytes entropy_from_mnemonic(const std::string& mnemonic) {
    std::istringstream ss(mnemonic);
    std::vector<unsigned> indices;
    std::string word;
    while (ss >> word) {
        auto it = word_index().find(word);
        if (it == word_index().end()) raise(ErrorClass::MALFORMED, "unknown word '" + word + "'");
        indices.push_back(it->second);
    }
    size_t words = indices.size();
    if (words < 12 || words > 24 || words % 3 != 0) {
        raise(ErrorClass::MALFORMED, "mnemonic must have 12..24 words in steps of 3");
    }
    size_t total_bits = words * 11;
    size_t cs_bits = total_bits / 33;
    size_t ent_bits = total_bits - cs_bits;

    std::vector<uint8_t> bits(total_bits);
    for (size_t w = 0; w < words; ++w) {
        for (size_t b = 0; b < 11; ++b) bits[w * 11 + b] = (indices[w] >> (10 - b)) & 1u;
    }
    Bytes entropy(ent_bits / 8, 0);
    for (size_t i = 0; i < ent_bits; ++i) {
        entropy[i / 8] = static_cast<uint8_t>((entropy[i / 8] << 1) | bits[i]);
    }
    Digest32 checksum = sha256(entropy);
    for (size_t j = 0; j < cs_bits; ++j) {
        unsigned expected = (checksum[j / 8] >> (7 - j % 8)) & 1u;
        if (bits[ent_bits + j] != expected) raise(ErrorClass::MALFORMED, "bad mnemonic checksum");
    }
    return entropy;
}

Digest64 seed_from_mnemonic(const std::string& mnemonic, const std::string& passphrase) {
    std::string salt = "mnemonic" + passphrase;
    return pbkdf2_hmac_sha512(str_bytes(mnemonic), str_bytes(salt), 2048);
}

}  // namespace skms::bip39
