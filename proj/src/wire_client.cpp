#include "skms/wire_client.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>

namespace skms::wire {

namespace {

struct FdGuard {
    int fd = -1;
    ~FdGuard() {
        if (fd >= 0) ::close(fd);
    }
};

bool read_full(int fd, uint8_t* buf, size_t len) {
    size_t got = 0;
    while (got < len) {
        ssize_t n = ::recv(fd, buf + got, len - got, 0);
        if (n <= 0) return false;
        got += static_cast<size_t>(n);
    }
    return true;
}

bool write_full(int fd, const uint8_t* buf, size_t len) {
    size_t sent = 0;
    while (sent < len) {
        ssize_t n = ::send(fd, buf + sent, len - sent, MSG_NOSIGNAL);
        if (n <= 0) return false;
        sent += static_cast<size_t>(n);
    }
    return true;
}

}  // namespace

WireChannel::WireChannel(std::string host, uint16_t port)
    : host_(std::move(host)), port_(port) {}

Bytes WireChannel::call(Op op, const std::string& token, const Bytes& payload) {
    auto t0 = std::chrono::steady_clock::now();
    auto finish = [&] {
        last_latency_ms_ = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
    };

    WireRequest req;
    req.op = static_cast<uint8_t>(op);
    req.correlation_id = next_correlation_++;
    req.token = token;
    req.payload = payload;
    if (!token.empty()) {
        try {
            IdToken t = TokenVerifier::parse(token);
            req.identity = Identity{t.issuer, t.subject};
        } catch (const KmsError&) {
            // unverifiable tokens still travel; the service classifies them
        }
    }

    FdGuard sock{::socket(AF_INET, SOCK_STREAM, 0)};
    if (sock.fd < 0) {
        finish();
        raise(ErrorClass::UNAVAILABLE, "socket creation failed");
    }
    int one = 1;
    ::setsockopt(sock.fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port_);
    if (::inet_pton(AF_INET, host_.c_str(), &addr.sin_addr) != 1) {
        finish();
        raise(ErrorClass::INVALID_ARGUMENT, "bad service address");
    }
    if (::connect(sock.fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        finish();
        raise(ErrorClass::UNAVAILABLE, "connection refused");
    }

    Bytes body = encode_request(req);
    Bytes frame;
    append_u32be(frame, static_cast<uint32_t>(body.size()));
    append(frame, body);
    if (!write_full(sock.fd, frame.data(), frame.size())) {
        finish();
        raise(ErrorClass::UNAVAILABLE, "send failed");
    }

    uint8_t len_buf[4];
    if (!read_full(sock.fd, len_buf, 4)) {
        finish();
        raise(ErrorClass::UNAVAILABLE, "request dropped");
    }
    uint32_t len = (static_cast<uint32_t>(len_buf[0]) << 24) |
                   (static_cast<uint32_t>(len_buf[1]) << 16) |
                   (static_cast<uint32_t>(len_buf[2]) << 8) | static_cast<uint32_t>(len_buf[3]);
    if (len > kMaxFrameLength) {
        finish();
        raise(ErrorClass::MALFORMED, "oversized response frame");
    }
    Bytes resp_body(len);
    if (len > 0 && !read_full(sock.fd, resp_body.data(), len)) {
        finish();
        raise(ErrorClass::UNAVAILABLE, "truncated response");
    }
    finish();

    WireResponse resp = decode_response(resp_body);
    if (resp.correlation_id != req.correlation_id) {
        raise(ErrorClass::MALFORMED, "correlation id mismatch");
    }
    if (resp.status != kStatusOk) {
        throw KmsError(error_class_from_code(resp.status), bytes_str(resp.payload));
    }
    return resp.payload;
}

// ---------------------------------------------------------------------------
// WireNodeTransport
// ---------------------------------------------------------------------------

WireNodeTransport::WireNodeTransport(unsigned index, std::string host, uint16_t port)
    : index_(index), channel_(std::move(host), port) {}

bool WireNodeTransport::has_postbox(const std::string& token) {
    Bytes r = channel_.call(Op::NODE_HAS_POSTBOX, token, {});
    return !r.empty() && r[0] == 1;
}

DealPackage WireNodeTransport::deal_postbox(const std::string& token) {
    return decode_deal_package(channel_.call(Op::NODE_DEAL_POSTBOX, token, {}));
}

void WireNodeTransport::accept_subshares(const std::string& token,
                                         const std::vector<SubShare>& entries) {
    channel_.call(Op::NODE_ACCEPT_SUBSHARES, token, encode_subshares(entries));
}

SharePoint WireNodeTransport::fetch_postbox_share(const std::string& token) {
    return decode_share_point(channel_.call(Op::NODE_FETCH_POSTBOX_SHARE, token, {}));
}

void WireNodeTransport::store_blob_shard(const std::string& token, uint32_t version,
                                         const std::vector<FieldElement>& chunk_ys) {
    StoredBlobShard shard{version, chunk_ys};
    channel_.call(Op::NODE_STORE_BLOB_SHARD, token, encode_blob_shard(shard));
}

StoredBlobShard WireNodeTransport::fetch_blob_shard(const std::string& token) {
    return decode_blob_shard(channel_.call(Op::NODE_FETCH_BLOB_SHARD, token, {}));
}

void WireNodeTransport::delete_blob_shard(const std::string& token) {
    channel_.call(Op::NODE_DELETE_BLOB_SHARD, token, {});
}

void WireNodeTransport::mark(NodeHealth health) {
    channel_.call(Op::NODE_MARK, "", Bytes{static_cast<uint8_t>(health)});
}

// ---------------------------------------------------------------------------
// WireServerClient
// ---------------------------------------------------------------------------

WireServerClient::WireServerClient(std::string host, uint16_t port)
    : channel_(std::move(host), port) {}

Bytes WireServerClient::issue_entropy(const std::string& token, CallMeter& meter) {
    ++meter.server_calls;
    Bytes r = channel_.call(Op::SRV_ISSUE_ENTROPY, token, {});
    meter.latency_ms += channel_.last_latency_ms();
    return r;
}

void WireServerClient::put_vault(const std::string& token, const Bytes& privkey_payload,
                                 const Bytes& ekp_payload, CallMeter& meter) {
    ++meter.server_calls;
    Bytes payload;
    append_length_prefixed(payload, privkey_payload);
    append_length_prefixed(payload, ekp_payload);
    channel_.call(Op::SRV_PUT_VAULT, token, payload);
    meter.latency_ms += channel_.last_latency_ms();
}

Bytes WireServerClient::get_shard(const std::string& token, CallMeter& meter) {
    ++meter.server_calls;
    Bytes r = channel_.call(Op::SRV_GET_SHARD, token, {});
    meter.latency_ms += channel_.last_latency_ms();
    return r;
}

Bytes WireServerClient::get_ekp(const std::string& token, CallMeter& meter) {
    ++meter.server_calls;
    Bytes r = channel_.call(Op::SRV_GET_EKP, token, {});
    meter.latency_ms += channel_.last_latency_ms();
    return r;
}

bool WireServerClient::has_vault(const std::string& token, CallMeter& meter) {
    ++meter.server_calls;
    Bytes r = channel_.call(Op::SRV_HAS_VAULT, token, {});
    meter.latency_ms += channel_.last_latency_ms();
    return !r.empty() && r[0] == 1;
}

void WireServerClient::delete_vault(const std::string& token, CallMeter& meter) {
    ++meter.server_calls;
    channel_.call(Op::SRV_DELETE_VAULT, token, {});
    meter.latency_ms += channel_.last_latency_ms();
}

uint32_t WireServerClient::rotate_at_rest(CallMeter& meter) {
    ++meter.server_calls;
    return decode_u32(channel_.call(Op::SRV_ROTATE, "", {}));
}

uint32_t WireServerClient::epoch(CallMeter& meter) {
    ++meter.server_calls;
    return decode_u32(channel_.call(Op::SRV_EPOCH, "", {}));
}

std::shared_ptr<NetworkOrchestrator> make_wire_network(unsigned threshold,
                                                       const std::string& host,
                                                       const std::vector<uint16_t>& node_ports) {
    std::vector<std::shared_ptr<NodeTransport>> transports;
    transports.reserve(node_ports.size());
    for (size_t i = 0; i < node_ports.size(); ++i) {
        transports.push_back(
            std::make_shared<WireNodeTransport>(static_cast<unsigned>(i + 1), host,
                                                node_ports[i]));
    }
    return std::make_shared<NetworkOrchestrator>(threshold, std::move(transports));
}

}  // namespace skms::wire
