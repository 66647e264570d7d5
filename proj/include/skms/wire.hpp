#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "skms/auth.hpp"
#include "skms/bytes.hpp"
#include "skms/errors.hpp"
#include "skms/node_network.hpp"

namespace skms::wire {

// Frame layout (see docs/wire_protocol.md): u32 length, u8 version, u8 op
// (or status in responses), u64 correlation id, then blocks. No schema
// negotiation; unknown versions fail with VERSION_ERROR.
constexpr uint8_t kWireVersion = 0x01;
constexpr uint32_t kMaxFrameLength = 16u << 20;

enum class Op : uint8_t {
    NODE_HAS_POSTBOX = 0x01,
    NODE_DEAL_POSTBOX = 0x02,
    NODE_ACCEPT_SUBSHARES = 0x03,
    NODE_FETCH_POSTBOX_SHARE = 0x04,
    NODE_STORE_BLOB_SHARD = 0x05,
    NODE_FETCH_BLOB_SHARD = 0x06,
    NODE_DELETE_BLOB_SHARD = 0x07,
    NODE_MARK = 0x08,

    SRV_ISSUE_ENTROPY = 0x21,
    SRV_PUT_VAULT = 0x22,
    SRV_GET_SHARD = 0x23,
    SRV_GET_EKP = 0x24,
    SRV_HAS_VAULT = 0x25,
    SRV_DELETE_VAULT = 0x26,
    SRV_ROTATE = 0x27,
    SRV_EPOCH = 0x28,
};

constexpr uint8_t kStatusOk = 0;

struct WireRequest {
    uint8_t version = kWireVersion;
    uint8_t op = 0;
    uint64_t correlation_id = 0;
    Identity identity;  // informational; authority comes from the token
    std::string token;
    Bytes payload;
};

struct WireResponse {
    uint8_t version = kWireVersion;
    uint8_t status = kStatusOk;  // 0 or an ErrorClass code
    uint64_t correlation_id = 0;
    Bytes payload;  // error message text when status != 0
};

// Frame bodies (everything after the u32 length prefix).
Bytes encode_request(const WireRequest& req);
WireRequest decode_request(const Bytes& body);  // throws VERSION_ERROR / MALFORMED
Bytes encode_response(const WireResponse& resp);
WireResponse decode_response(const Bytes& body);

// Payload codecs for the structured bodies.
Bytes encode_deal_package(const DealPackage& pkg);
DealPackage decode_deal_package(const Bytes& b);
Bytes encode_subshares(const std::vector<SubShare>& entries);
std::vector<SubShare> decode_subshares(const Bytes& b);
Bytes encode_share_point(const SharePoint& p);      // u32 x, 32-byte y (curve order)
SharePoint decode_share_point(const Bytes& b);
Bytes encode_blob_shard(const StoredBlobShard& s);  // u32 version, u32 count, 33-byte ys
StoredBlobShard decode_blob_shard(const Bytes& b);
Bytes encode_u32(uint32_t v);
uint32_t decode_u32(const Bytes& b);

}  // namespace skms::wire
