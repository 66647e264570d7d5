#include "skms/wire.hpp"

namespace skms::wire {

Bytes encode_request(const WireRequest& req) {
    Bytes body;
    body.push_back(req.version);
    body.push_back(req.op);
    append_u64be(body, req.correlation_id);
    append_length_prefixed(body, str_bytes(req.identity.verifier_url));
    append_length_prefixed(body, str_bytes(req.identity.verifier_id));
    append_length_prefixed(body, str_bytes(req.token));
    append_length_prefixed(body, req.payload);
    return body;
}

WireRequest decode_request(const Bytes& body) {
    ByteReader r(body);
    WireRequest req;
    req.version = r.u8();
    if (req.version != kWireVersion) raise(ErrorClass::VERSION_ERROR, "unknown wire version");
    req.op = r.u8();
    req.correlation_id = r.u64be();
    req.identity.verifier_url = bytes_str(r.length_prefixed());
    req.identity.verifier_id = bytes_str(r.length_prefixed());
    req.token = bytes_str(r.length_prefixed());
    req.payload = r.length_prefixed();
    if (!r.done()) raise(ErrorClass::MALFORMED, "trailing bytes in request frame");
    return req;
}

Bytes encode_response(const WireResponse& resp) {
    Bytes body;
    body.push_back(resp.version);
    body.push_back(resp.status);
    append_u64be(body, resp.correlation_id);
    append_length_prefixed(body, resp.payload);
    return body;
}

WireResponse decode_response(const Bytes& body) {
    ByteReader r(body);
    WireResponse resp;
    resp.version = r.u8();
    if (resp.version != kWireVersion) raise(ErrorClass::VERSION_ERROR, "unknown wire version");
    resp.status = r.u8();
    resp.correlation_id = r.u64be();
    resp.payload = r.length_prefixed();
    if (!r.done()) raise(ErrorClass::MALFORMED, "trailing bytes in response frame");
    return resp;
}

namespace {

FieldPtr order_field() { return Field::secp256k1_order(); }

void append_share_y(Bytes& out, const FieldElement& y) {
    Bytes b = y.to_bytes();
    append(out, b);
}

}  // namespace

Bytes encode_deal_package(const DealPackage& pkg) {
    Bytes out = pkg.commitment.encode_compressed();
    append_u32be(out, static_cast<uint32_t>(pkg.subshares.size()));
    for (const auto& s : pkg.subshares) {
        append_u32be(out, s.dealer_index);
        append_u32be(out, s.recipient_index);
        append_share_y(out, s.y);
    }
    return out;
}

DealPackage decode_deal_package(const Bytes& b) {
    ByteReader r(b);
    DealPackage pkg;
    pkg.commitment = EcPoint::decode_compressed(r.take(33));
    uint32_t count = r.u32be();
    for (uint32_t i = 0; i < count; ++i) {
        SubShare s;
        s.dealer_index = r.u32be();
        s.recipient_index = r.u32be();
        s.y = FieldElement::from_bytes_exact(order_field(), r.take(32));
        pkg.subshares.push_back(std::move(s));
    }
    if (!r.done()) raise(ErrorClass::MALFORMED, "trailing bytes in deal package");
    return pkg;
}

Bytes encode_subshares(const std::vector<SubShare>& entries) {
    Bytes out;
    append_u32be(out, static_cast<uint32_t>(entries.size()));
    for (const auto& s : entries) {
        append_u32be(out, s.dealer_index);
        append_u32be(out, s.recipient_index);
        append_share_y(out, s.y);
    }
    return out;
}

std::vector<SubShare> decode_subshares(const Bytes& b) {
    ByteReader r(b);
    uint32_t count = r.u32be();
    std::vector<SubShare> entries;
    entries.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        SubShare s;
        s.dealer_index = r.u32be();
        s.recipient_index = r.u32be();
        s.y = FieldElement::from_bytes_exact(order_field(), r.take(32));
        entries.push_back(std::move(s));
    }
    if (!r.done()) raise(ErrorClass::MALFORMED, "trailing bytes in subshare list");
    return entries;
}

Bytes encode_share_point(const SharePoint& p) {
    Bytes out;
    append_u32be(out, static_cast<uint32_t>(p.x.value().get_ui()));
    append_share_y(out, p.y);
    return out;
}

SharePoint decode_share_point(const Bytes& b) {
    ByteReader r(b);
    uint32_t x = r.u32be();
    FieldElement y = FieldElement::from_bytes_exact(order_field(), r.take(32));
    if (!r.done()) raise(ErrorClass::MALFORMED, "trailing bytes in share point");
    return SharePoint{FieldElement::from_u64(order_field(), x), y};
}

Bytes encode_blob_shard(const StoredBlobShard& s) {
    Bytes out;
    append_u32be(out, s.version);
    append_u32be(out, static_cast<uint32_t>(s.chunk_ys.size()));
    for (const auto& y : s.chunk_ys) {
        Bytes b = y.to_bytes();  // 33 bytes over the blob field
        append(out, b);
    }
    return out;
}

StoredBlobShard decode_blob_shard(const Bytes& b) {
    FieldPtr blob_field = Field::blob_field();
    ByteReader r(b);
    StoredBlobShard s;
    s.version = r.u32be();
    uint32_t count = r.u32be();
    s.chunk_ys.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        s.chunk_ys.push_back(FieldElement::from_bytes_exact(blob_field, r.take(33)));
    }
    if (!r.done()) raise(ErrorClass::MALFORMED, "trailing bytes in blob shard");
    return s;
}

Bytes encode_u32(uint32_t v) {
    Bytes out;
    append_u32be(out, v);
    return out;
}

uint32_t decode_u32(const Bytes& b) {
    ByteReader r(b);
    uint32_t v = r.u32be();
    if (!r.done()) raise(ErrorClass::MALFORMED, "trailing bytes in u32 payload");
    return v;
}

}  // namespace skms::wire
