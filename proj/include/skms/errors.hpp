#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace skms {

// Every failure in the system belongs to exactly one class. The wire layer
// and the CLI exit codes map these 1:1, so keep the numeric values stable.
enum class ErrorClass : uint8_t {
    BAD_SIGNATURE = 1,
    EXPIRED = 2,
    AUDIENCE_MISMATCH = 3,
    AUTH_FAILURE = 4,
    MALFORMED = 5,
    NOT_FOUND = 6,
    UNPROVISIONED = 7,
    EPOCH_MISMATCH = 8,
    ALREADY_ASSIGNED = 9,
    ALREADY_ENROLLED = 10,
    INSUFFICIENT_NODES = 11,
    INSUFFICIENT_STORAGES = 12,
    INVALID_ARGUMENT = 13,
    VERSION_ERROR = 14,
    UNAVAILABLE = 15,
    INTERNAL = 16,
};

const char* error_class_name(ErrorClass ec);
ErrorClass error_class_from_code(uint8_t code);  // throws on unknown code

class KmsError : public std::runtime_error {
public:
    KmsError(ErrorClass ec, const std::string& msg)
        : std::runtime_error(std::string(error_class_name(ec)) + ": " + msg), class_(ec) {}

    ErrorClass error_class() const { return class_; }

private:
    ErrorClass class_;
};

[[noreturn]] inline void raise(ErrorClass ec, const std::string& msg) {
    throw KmsError(ec, msg);
}

}  // namespace skms
