#include "skms/errors.hpp"

namespace skms {

const char* error_class_name(ErrorClass ec) {
    switch (ec) {
        case ErrorClass::BAD_SIGNATURE: return "BAD_SIGNATURE";
        case ErrorClass::EXPIRED: return "EXPIRED";
        case ErrorClass::AUDIENCE_MISMATCH: return "AUDIENCE_MISMATCH";
        case ErrorClass::AUTH_FAILURE: return "AUTH_FAILURE";
        case ErrorClass::MALFORMED: return "MALFORMED";
        case ErrorClass::NOT_FOUND: return "NOT_FOUND";
        case ErrorClass::UNPROVISIONED: return "UNPROVISIONED";
        case ErrorClass::EPOCH_MISMATCH: return "EPOCH_MISMATCH";
        case ErrorClass::ALREADY_ASSIGNED: return "ALREADY_ASSIGNED";
        case ErrorClass::ALREADY_ENROLLED: return "ALREADY_ENROLLED";
        case ErrorClass::INSUFFICIENT_NODES: return "INSUFFICIENT_NODES";
        case ErrorClass::INSUFFICIENT_STORAGES: return "INSUFFICIENT_STORAGES";
        case ErrorClass::INVALID_ARGUMENT: return "INVALID_ARGUMENT";
        case ErrorClass::VERSION_ERROR: return "VERSION_ERROR";
        case ErrorClass::UNAVAILABLE: return "UNAVAILABLE";
        case ErrorClass::INTERNAL: return "INTERNAL";
    }
    return "UNKNOWN";
}

ErrorClass error_class_from_code(uint8_t code) {
    if (code < 1 || code > static_cast<uint8_t>(ErrorClass::INTERNAL)) {
        throw KmsError(ErrorClass::MALFORMED, "unknown error class code");
    }
    return static_cast<ErrorClass>(code);
}

}  // namespace skms
