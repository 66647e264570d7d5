#include "skms/auth.hpp"

#include <algorithm>

#include "skms/errors.hpp"
#include "skms/hash.hpp"

namespace skms {

namespace {

bool plain_char(char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
           c == '-' || c == '_' || c == '.' || c == '~' || c == ':' || c == '/';
}

std::string pct_encode(const std::string& s) {
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (char c : s) {
        if (plain_char(c)) {
            out.push_back(c);
        } else {
            uint8_t b = static_cast<uint8_t>(c);
            out.push_back('%');
            out.push_back(hex[b >> 4]);
            out.push_back(hex[b & 0x0F]);
        }
    }
    return out;
}

std::string pct_decode(const std::string& s) {
    std::string out;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '%') {
            if (i + 2 >= s.size()) raise(ErrorClass::BAD_SIGNATURE, "bad escape in token");
            Bytes b = from_hex(s.substr(i + 1, 2));
            out.push_back(static_cast<char>(b[0]));
            i += 2;
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

}  // namespace

std::string IdToken::canonical_payload() const {
    return "aud=" + pct_encode(audience) + "&exp=" + std::to_string(expires_at) +
           "&iat=" + std::to_string(issued_at) + "&iss=" + pct_encode(issuer) +
           "&sub=" + pct_encode(subject);
}

MockIdp::MockIdp(Bytes secret) : secret_(std::move(secret)) {
    if (secret_.empty()) raise(ErrorClass::INVALID_ARGUMENT, "empty idp secret");
}

MockIdp MockIdp::with_random_secret(EntropySource& rng) { return MockIdp(rng.bytes(32)); }

std::string MockIdp::issue_token(const Identity& identity, const std::string& audience,
                                 int64_t ttl_seconds, int64_t now) const {
    if (identity.verifier_url.empty() || identity.verifier_id.empty()) {
        raise(ErrorClass::INVALID_ARGUMENT, "identity fields must be nonempty");
    }
    if (ttl_seconds <= 0) raise(ErrorClass::INVALID_ARGUMENT, "ttl must be positive");
    IdToken t;
    t.issuer = identity.verifier_url;
    t.subject = identity.verifier_id;
    t.audience = audience;
    t.issued_at = now;
    t.expires_at = now + ttl_seconds;
    std::string payload = t.canonical_payload();
    Digest32 mac = hmac_sha256(secret_, str_bytes(payload));
    return payload + "." + to_hex(mac);
}

TokenVerifier::TokenVerifier(Bytes secret) : secret_(std::move(secret)) {
    if (secret_.empty()) raise(ErrorClass::INVALID_ARGUMENT, "empty verifier secret");
}

IdToken TokenVerifier::parse(const std::string& token) {
    size_t dot = token.rfind('.');
    if (dot == std::string::npos) raise(ErrorClass::BAD_SIGNATURE, "missing mac separator");
    std::string payload = token.substr(0, dot);

    IdToken t;
    bool have_aud = false, have_exp = false, have_iat = false, have_iss = false, have_sub = false;
    size_t pos = 0;
    while (pos <= payload.size()) {
        size_t amp = payload.find('&', pos);
        std::string kv = payload.substr(pos, amp == std::string::npos ? amp : amp - pos);
        size_t eq = kv.find('=');
        if (eq == std::string::npos) raise(ErrorClass::BAD_SIGNATURE, "bad token field");
        std::string key = kv.substr(0, eq);
        std::string val = kv.substr(eq + 1);
        try {
            if (key == "aud") { t.audience = pct_decode(val); have_aud = true; }
            else if (key == "exp") { t.expires_at = std::stoll(val); have_exp = true; }
            else if (key == "iat") { t.issued_at = std::stoll(val); have_iat = true; }
            else if (key == "iss") { t.issuer = pct_decode(val); have_iss = true; }
            else if (key == "sub") { t.subject = pct_decode(val); have_sub = true; }
            else raise(ErrorClass::BAD_SIGNATURE, "unknown token field");
        } catch (const std::invalid_argument&) {
            raise(ErrorClass::BAD_SIGNATURE, "bad numeric field");
        } catch (const std::out_of_range&) {
            raise(ErrorClass::BAD_SIGNATURE, "numeric field out of range");
        }
        if (amp == std::string::npos) break;
        pos = amp + 1;
    }
    if (!(have_aud && have_exp && have_iat && have_iss && have_sub)) {
        raise(ErrorClass::BAD_SIGNATURE, "missing token field");
    }
    return t;
}

Identity TokenVerifier::verify(const std::string& token, const std::string& expected_audience,
                               int64_t now) const {
    size_t dot = token.rfind('.');
    if (dot == std::string::npos) raise(ErrorClass::BAD_SIGNATURE, "missing mac separator");
    std::string payload = token.substr(0, dot);
    std::string mac_hex = token.substr(dot + 1);

    Bytes provided;
    try {
        provided = from_hex(mac_hex);
    } catch (const KmsError&) {
        raise(ErrorClass::BAD_SIGNATURE, "mac is not hex");
    }
    Digest32 expected = hmac_sha256(secret_, str_bytes(payload));
    if (!constant_time_equal(provided, expected)) {
        raise(ErrorClass::BAD_SIGNATURE, "mac mismatch");
    }

    IdToken t = parse(token);
    if (t.audience != expected_audience) {
        raise(ErrorClass::AUDIENCE_MISMATCH, "token audience '" + t.audience + "'");
    }
    // validity interval is [issued_at, expires_at)
    if (now < t.issued_at || now >= t.expires_at) {
        raise(ErrorClass::EXPIRED, "token outside validity window");
    }
    if (t.issuer.empty() || t.subject.empty()) {
        raise(ErrorClass::BAD_SIGNATURE, "empty identity claims");
    }
    return Identity{t.issuer, t.subject};
}

}  // namespace skms
