#pragma once

#include <cstdint>
#include <string>

#include "skms/bytes.hpp"
#include "skms/rng.hpp"

namespace skms {

// The (verifier_url, verifier_id) pair is the unique user key everywhere.
struct Identity {
    std::string verifier_url;
    std::string verifier_id;

    bool operator==(const Identity&) const = default;
    bool operator<(const Identity& o) const {
        return std::tie(verifier_url, verifier_id) < std::tie(o.verifier_url, o.verifier_id);
    }
    std::string display() const { return verifier_url + "|" + verifier_id; }
};

struct IdToken {
    std::string issuer;
    std::string subject;
    std::string audience;
    int64_t issued_at = 0;
    int64_t expires_at = 0;

    // Canonical field-ordered text payload (aud/exp/iat/iss/sub, values
    // percent-encoded) followed by "." and the hex MAC.
    std::string canonical_payload() const;
};

// MAC-signed stand-in for a real OIDC provider: same claim surface, no
// redirect machinery. Clock is always injected.
class MockIdp {
public:
    explicit MockIdp(Bytes secret);
    static MockIdp with_random_secret(EntropySource& rng);

    std::string issue_token(const Identity& identity, const std::string& audience,
                            int64_t ttl_seconds, int64_t now) const;
    const Bytes& secret() const { return secret_; }

private:
    Bytes secret_;
};

class TokenVerifier {
public:
    explicit TokenVerifier(Bytes secret);

    // Returns the embedded identity iff signature, audience, and validity
    // window all pass. Errors: BAD_SIGNATURE, AUDIENCE_MISMATCH, EXPIRED.
    Identity verify(const std::string& token, const std::string& expected_audience,
                    int64_t now) const;

    // Parse without verifying; used by wire services for routing. Throws
    // BAD_SIGNATURE on malformed tokens.
    static IdToken parse(const std::string& token);

private:
    Bytes secret_;
};

// Every storage in the system requires this audience.
inline constexpr const char* kKmsAudience = "kms";

}  // namespace skms
