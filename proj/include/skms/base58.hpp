#pragma once

#include <string>

#include "skms/bytes.hpp"

namespace skms {

std::string base58check_encode(std::span<const uint8_t> payload);
Bytes base58check_decode(const std::string& text);  // throws MALFORMED on bad checksum

}  // namespace skms
