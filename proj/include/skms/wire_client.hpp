#pragma once

#include <memory>
#include <string>
#include <vector>

#include "skms/node_network.hpp"
#include "skms/storage.hpp"
#include "skms/wire.hpp"

namespace skms::wire {

// One request/response exchange per connection. Connection failures and
// dropped requests surface as UNAVAILABLE; error statuses rethrow as their
// original class.
class WireChannel {
public:
    WireChannel(std::string host, uint16_t port);

    Bytes call(Op op, const std::string& token, const Bytes& payload);
    double last_latency_ms() const { return last_latency_ms_; }
    uint16_t port() const { return port_; }

private:
    std::string host_;
    uint16_t port_;
    uint64_t next_correlation_ = 1;
    double last_latency_ms_ = 0.0;
};

class WireNodeTransport final : public NodeTransport {
public:
    WireNodeTransport(unsigned index, std::string host, uint16_t port);

    unsigned index() const override { return index_; }
    bool has_postbox(const std::string& token) override;
    DealPackage deal_postbox(const std::string& token) override;
    void accept_subshares(const std::string& token, const std::vector<SubShare>& entries) override;
    SharePoint fetch_postbox_share(const std::string& token) override;
    void store_blob_shard(const std::string& token, uint32_t version,
                          const std::vector<FieldElement>& chunk_ys) override;
    StoredBlobShard fetch_blob_shard(const std::string& token) override;
    void delete_blob_shard(const std::string& token) override;
    double last_latency_ms() const override { return channel_.last_latency_ms(); }

    void mark(NodeHealth health);  // ops tooling

private:
    unsigned index_;
    mutable WireChannel channel_;
};

class WireServerClient final : public ServerStoreClient {
public:
    WireServerClient(std::string host, uint16_t port);

    Bytes issue_entropy(const std::string& token, CallMeter& meter) override;
    void put_vault(const std::string& token, const Bytes& privkey_payload,
                   const Bytes& ekp_payload, CallMeter& meter) override;
    Bytes get_shard(const std::string& token, CallMeter& meter) override;
    Bytes get_ekp(const std::string& token, CallMeter& meter) override;
    bool has_vault(const std::string& token, CallMeter& meter) override;
    void delete_vault(const std::string& token, CallMeter& meter) override;
    uint32_t rotate_at_rest(CallMeter& meter) override;
    uint32_t epoch(CallMeter& meter) override;

private:
    WireChannel channel_;
};

// Orchestrator over wire node transports: the identical policy layer used
// in-process, now across a real serialization boundary.
std::shared_ptr<NetworkOrchestrator> make_wire_network(unsigned threshold,
                                                       const std::string& host,
                                                       const std::vector<uint16_t>& node_ports);

}  // namespace skms::wire
