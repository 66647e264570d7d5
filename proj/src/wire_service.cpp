#include "skms/wire_service.hpp"

#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>

namespace skms::wire {

namespace {

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

bool write_frame(int fd, const Bytes& body) {
    Bytes frame;
    append_u32be(frame, static_cast<uint32_t>(body.size()));
    append(frame, body);
    return write_full(fd, frame.data(), frame.size());
}

std::optional<Bytes> read_frame(int fd) {
    uint8_t len_buf[4];
    if (!read_full(fd, len_buf, 4)) return std::nullopt;
    uint32_t len = (static_cast<uint32_t>(len_buf[0]) << 24) |
                   (static_cast<uint32_t>(len_buf[1]) << 16) |
                   (static_cast<uint32_t>(len_buf[2]) << 8) | static_cast<uint32_t>(len_buf[3]);
    if (len > kMaxFrameLength) return std::nullopt;
    Bytes body(len);
    if (len > 0 && !read_full(fd, body.data(), len)) return std::nullopt;
    return body;
}

}  // namespace

WireServer::WireServer(uint16_t port, Dispatcher dispatcher, DropPredicate drop, double delay_ms)
    : dispatcher_(std::move(dispatcher)), drop_(std::move(drop)), delay_ms_(delay_ms) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) raise(ErrorClass::UNAVAILABLE, "socket creation failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(listen_fd_);
        raise(ErrorClass::UNAVAILABLE, "bind failed");
    }
    if (::listen(listen_fd_, 64) != 0) {
        ::close(listen_fd_);
        raise(ErrorClass::UNAVAILABLE, "listen failed");
    }
    socklen_t addr_len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &addr_len);
    port_ = ntohs(addr.sin_port);

    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
}

WireServer::~WireServer() { stop(); }

void WireServer::stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (accept_thread_.joinable()) accept_thread_.join();
    // connection threads are detached; drain them before members go away
    for (int i = 0; i < 400 && active_connections_.load() > 0; ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
}

void WireServer::accept_loop() {
    while (running_) {
        int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (!running_) break;
            continue;
        }
        ++active_connections_;  // counted before the thread exists
        std::thread([this, fd] { handle_connection(fd); }).detach();
    }
}

void WireServer::handle_connection(int fd) {
    struct Guard {
        std::atomic<int>& c;
        ~Guard() { --c; }
    } guard{active_connections_};
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    for (;;) {
        auto body = read_frame(fd);
        if (!body) break;
        // dead node: drop without a response (mark is exempt for revival)
        if (drop_ && body->size() >= 2 && drop_((*body)[1])) break;
        if (delay_ms_ > 0) {
            std::this_thread::sleep_for(
                std::chrono::microseconds(static_cast<int64_t>(delay_ms_ * 1000)));
        }

        WireResponse resp;
        try {
            WireRequest req = decode_request(*body);
            resp.correlation_id = req.correlation_id;
            resp.payload = dispatcher_(req);
        } catch (const KmsError& e) {
            resp.status = static_cast<uint8_t>(e.error_class());
            resp.payload = str_bytes(e.what());
        } catch (const std::exception& e) {
            resp.status = static_cast<uint8_t>(ErrorClass::INTERNAL);
            resp.payload = str_bytes(e.what());
        }
        if (!write_frame(fd, encode_response(resp))) break;
    }
    ::close(fd);
}

std::unique_ptr<WireServer> serve_node(std::shared_ptr<Node> node, uint16_t port,
                                       double delay_ms, std::function<void()> after_mutate) {
    auto mutated = [after_mutate] {
        if (after_mutate) after_mutate();
    };
    auto dispatcher = [node, mutated](const WireRequest& req) -> Bytes {
        switch (static_cast<Op>(req.op)) {
            case Op::NODE_HAS_POSTBOX:
                return Bytes{node->has_postbox(req.token) ? uint8_t{1} : uint8_t{0}};
            case Op::NODE_DEAL_POSTBOX: {
                Bytes out = encode_deal_package(node->deal_postbox(req.token));
                mutated();  // the deterministic draw counter advanced
                return out;
            }
            case Op::NODE_ACCEPT_SUBSHARES:
                node->accept_subshares(req.token, decode_subshares(req.payload));
                mutated();
                return {};
            case Op::NODE_FETCH_POSTBOX_SHARE:
                return encode_share_point(node->fetch_postbox_share(req.token));
            case Op::NODE_STORE_BLOB_SHARD: {
                StoredBlobShard shard = decode_blob_shard(req.payload);
                node->store_blob_shard(req.token, shard.version, std::move(shard.chunk_ys));
                mutated();
                return {};
            }
            case Op::NODE_FETCH_BLOB_SHARD:
                return encode_blob_shard(node->fetch_blob_shard(req.token));
            case Op::NODE_DELETE_BLOB_SHARD:
                node->delete_blob_shard(req.token);
                mutated();
                return {};
            case Op::NODE_MARK: {
                if (req.payload.size() != 1 || req.payload[0] > 2) {
                    raise(ErrorClass::INVALID_ARGUMENT, "bad health value");
                }
                node->set_health(static_cast<NodeHealth>(req.payload[0]));
                mutated();
                return {};
            }
            default:
                raise(ErrorClass::VERSION_ERROR, "unsupported node operation");
        }
    };
    // A node marked dead keeps its socket open but drops every request,
    // except the mark op itself so tests and ops can revive it.
    auto drop = [node](uint8_t op) {
        return node->health() == NodeHealth::Dead && op != static_cast<uint8_t>(Op::NODE_MARK);
    };
    return std::make_unique<WireServer>(port, dispatcher, drop, delay_ms);
}

std::unique_ptr<WireServer> serve_server_store(std::shared_ptr<ServerStore> store,
                                               uint16_t port) {
    auto dispatcher = [store](const WireRequest& req) -> Bytes {
        switch (static_cast<Op>(req.op)) {
            case Op::SRV_ISSUE_ENTROPY:
                return store->issue_entropy(req.token);
            case Op::SRV_PUT_VAULT: {
                ByteReader r(req.payload);
                Bytes privkey_payload = r.length_prefixed();
                Bytes ekp_payload = r.length_prefixed();
                if (!r.done()) raise(ErrorClass::MALFORMED, "trailing bytes in vault payload");
                store->put_vault(req.token, privkey_payload, ekp_payload);
                return {};
            }
            case Op::SRV_GET_SHARD:
                return store->get(req.token, VaultSlot::PRIVKEY_SHARD);
            case Op::SRV_GET_EKP:
                return store->get(req.token, VaultSlot::EKP_SHARD);
            case Op::SRV_HAS_VAULT:
                return Bytes{store->has_vault(req.token) ? uint8_t{1} : uint8_t{0}};
            case Op::SRV_DELETE_VAULT:
                store->delete_vault(req.token);
                return {};
            case Op::SRV_ROTATE:
                return encode_u32(store->rotate_at_rest());
            case Op::SRV_EPOCH:
                return encode_u32(store->epoch());
            default:
                raise(ErrorClass::VERSION_ERROR, "unsupported server operation");
        }
    };
    return std::make_unique<WireServer>(port, dispatcher, nullptr, 0.0);
}

}  // namespace skms::wire
