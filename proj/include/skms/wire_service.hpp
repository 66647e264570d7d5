#pragma once

#include <atomic>
#include <memory>
#include <thread>

#include "skms/node_network.hpp"
#include "skms/storage.hpp"
#include "skms/wire.hpp"

namespace skms::wire {

// A running localhost service speaking the length-prefixed frame protocol.
// One thread per connection; the underlying store serializes state.
class WireServer {
public:
    using Dispatcher = std::function<Bytes(const WireRequest&)>;
    using DropPredicate = std::function<bool(uint8_t op)>;

    // port 0 binds an ephemeral port; query the result with port().
    WireServer(uint16_t port, Dispatcher dispatcher, DropPredicate drop, double delay_ms);
    ~WireServer();

    uint16_t port() const { return port_; }
    void stop();

private:
    void accept_loop();
    void handle_connection(int fd);

    int listen_fd_ = -1;
    uint16_t port_ = 0;
    Dispatcher dispatcher_;
    DropPredicate drop_;
    double delay_ms_;
    std::atomic<bool> running_{false};
    std::atomic<int> active_connections_{0};
    std::thread accept_thread_;
};

// Node service: postbox share fetch, blob shard store/fetch, DKG dealing and
// delivery, health marking. Dead nodes drop requests without a response.
// after_mutate runs once per state-changing request, for persistence.
std::unique_ptr<WireServer> serve_node(std::shared_ptr<Node> node, uint16_t port,
                                       double delay_ms = 0.0,
                                       std::function<void()> after_mutate = {});

// Server-store service: shard/ekp fetch, vault store, entropy, rotation.
std::unique_ptr<WireServer> serve_server_store(std::shared_ptr<ServerStore> store, uint16_t port);

}  // namespace skms::wire
