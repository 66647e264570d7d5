#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "skms/auth.hpp"
#include "skms/curve_crypto.hpp"
#include "skms/meter.hpp"
#include "skms/shamir.hpp"

namespace skms {

using ClockFn = std::function<int64_t()>;
int64_t system_clock_seconds();

struct NetworkConfig {
    unsigned node_count = 9;
    unsigned dkg_threshold = 5;
    double node_latency_ms = 0.0;  // simulated per-contact latency

    void validate() const;  // throws INVALID_ARGUMENT unless 1 <= t <= n
};

enum class NodeHealth : uint8_t { Healthy = 0, Dead = 1, Compromised = 2 };

struct SubShare {
    unsigned dealer_index = 0;
    unsigned recipient_index = 0;
    FieldElement y;  // over the curve order
};

struct DealPackage {
    EcPoint commitment;  // dealt scalar times G
    std::vector<SubShare> subshares;
};

struct StoredBlobShard {
    uint32_t version = 0;
    std::vector<FieldElement> chunk_ys;  // over the blob field, x = node index
};

// One simulated validator node: aggregated postbox share plus one blob shard
// per identity; never more than that. Verifies the SSO token on every
// request.
class Node {
public:
    Node(unsigned index, unsigned node_count, unsigned threshold, Bytes idp_secret,
         ClockFn clock = system_clock_seconds, uint64_t rng_seed = 0);

    unsigned index() const { return index_; }
    NodeHealth health() const { return health_; }
    void set_health(NodeHealth h) { health_ = h; }

    bool has_postbox(const std::string& token);
    // DKG: deal a fresh t-of-n sharing of a random scalar; retains nothing.
    DealPackage deal_postbox(const std::string& token);
    // Store the sum of sub-shares addressed to this node. Exactly one entry
    // per dealer; rejects re-assignment.
    void accept_subshares(const std::string& token, const std::vector<SubShare>& entries);

    SharePoint fetch_postbox_share(const std::string& token);
    void store_blob_shard(const std::string& token, uint32_t version,
                          std::vector<FieldElement> chunk_ys);
    StoredBlobShard fetch_blob_shard(const std::string& token);  // NOT_FOUND when absent
    void delete_blob_shard(const std::string& token);

    // Harness introspection: everything this node persists.
    std::map<Identity, SharePoint> postbox_table() const;
    std::map<Identity, StoredBlobShard> blob_table() const;

    nlohmann::json to_json() const;
    static std::shared_ptr<Node> from_json(const nlohmann::json& j, Bytes idp_secret,
                                           ClockFn clock = system_clock_seconds);

private:
    Identity identity_from_token(const std::string& token) const;
    std::unique_ptr<EntropySource> draw_rng();

    unsigned index_;
    unsigned node_count_;
    unsigned threshold_;
    NodeHealth health_ = NodeHealth::Healthy;
    TokenVerifier verifier_;
    ClockFn clock_;
    uint64_t rng_seed_;      // 0 = system entropy
    uint64_t draw_counter_ = 0;  // advances per deal so seeded state reloads exactly
    mutable std::shared_mutex mutex_;
    std::map<Identity, SharePoint> postbox_shares_;
    std::map<Identity, StoredBlobShard> blob_shards_;
};

// Per-node reachability abstraction shared by the in-process simulator and
// the localhost wire client; unreachable nodes throw UNAVAILABLE.
class NodeTransport {
public:
    virtual ~NodeTransport() = default;
    virtual unsigned index() const = 0;
    virtual bool has_postbox(const std::string& token) = 0;
    virtual DealPackage deal_postbox(const std::string& token) = 0;
    virtual void accept_subshares(const std::string& token,
                                  const std::vector<SubShare>& entries) = 0;
    virtual SharePoint fetch_postbox_share(const std::string& token) = 0;
    virtual void store_blob_shard(const std::string& token, uint32_t version,
                                  const std::vector<FieldElement>& chunk_ys) = 0;
    virtual StoredBlobShard fetch_blob_shard(const std::string& token) = 0;
    virtual void delete_blob_shard(const std::string& token) = 0;
    // Cost of the most recent contact, for the latency meter.
    virtual double last_latency_ms() const = 0;
};

// What the KMS flows program against.
class NodeNetworkClient {
public:
    virtual ~NodeNetworkClient() = default;
    virtual unsigned threshold() const = 0;
    virtual bool is_assigned(const std::string& token, CallMeter& meter) = 0;
    virtual EcPoint assign_postbox(const std::string& token, CallMeter& meter) = 0;
    virtual std::vector<SharePoint> fetch_postbox_shares(const std::string& token,
                                                         CallMeter& meter) = 0;
    virtual void store_blob(const std::string& token, const Bytes& blob, uint32_t version,
                            EntropySource& rng, CallMeter& meter) = 0;
    virtual Bytes retrieve_blob(const std::string& token, CallMeter& meter) = 0;
    virtual void delete_blob(const std::string& token, CallMeter& meter) = 0;
};

// The client-side policy layer: relayed DKG, minimum-contact fetches,
// chunk-wise t-of-n blob sharding. Identical over any transport.
class NetworkOrchestrator final : public NodeNetworkClient {
public:
    NetworkOrchestrator(unsigned threshold, std::vector<std::shared_ptr<NodeTransport>> nodes);

    unsigned threshold() const override { return threshold_; }
    bool is_assigned(const std::string& token, CallMeter& meter) override;
    EcPoint assign_postbox(const std::string& token, CallMeter& meter) override;
    std::vector<SharePoint> fetch_postbox_shares(const std::string& token,
                                                 CallMeter& meter) override;
    void store_blob(const std::string& token, const Bytes& blob, uint32_t version,
                    EntropySource& rng, CallMeter& meter) override;
    Bytes retrieve_blob(const std::string& token, CallMeter& meter) override;
    void delete_blob(const std::string& token, CallMeter& meter) override;

private:
    unsigned threshold_;
    std::vector<std::shared_ptr<NodeTransport>> nodes_;
};

// Blob framing: version byte, u64be payload length, payload, zero padding to
// a 32-byte multiple. Chunks embed losslessly in the blob field.
Bytes blob_frame(const Bytes& payload);
Bytes blob_unframe(const Bytes& framed);
std::vector<std::vector<SharePoint>> blob_split_chunks(const Bytes& framed, unsigned k, unsigned n,
                                                       EntropySource& rng);

struct CompromisedNodeView {
    unsigned index = 0;
    std::map<Identity, SharePoint> postbox_shares;
    std::map<Identity, StoredBlobShard> blob_shards;
};

// In-process simulated network: n Nodes plus the orchestrator, with fault
// injection and the adversary's view of compromised nodes.
class Network {
public:
    Network(NetworkConfig config, Bytes idp_secret, ClockFn clock = system_clock_seconds,
            uint64_t seed = 0);

    NodeNetworkClient& client() { return *orchestrator_; }
    std::shared_ptr<NodeNetworkClient> client_ptr() { return orchestrator_; }
    const NetworkConfig& config() const { return config_; }
    Node& node(unsigned index);  // 1-based
    void mark_node(unsigned index, NodeHealth health);
    std::vector<CompromisedNodeView> adversary_view() const;

    nlohmann::json to_json() const;
    static std::unique_ptr<Network> from_json(const nlohmann::json& j, const Bytes& idp_secret,
                                              ClockFn clock = system_clock_seconds);

private:
    NetworkConfig config_;
    std::vector<std::shared_ptr<Node>> nodes_;
    std::shared_ptr<NetworkOrchestrator> orchestrator_;
};

}  // namespace skms
