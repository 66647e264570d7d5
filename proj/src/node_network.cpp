#include "skms/node_network.hpp"

#include <chrono>

#include <nlohmann/json.hpp>

#include "skms/errors.hpp"

namespace skms {

int64_t system_clock_seconds() {
    return std::chrono::duration_cast<std::chrono::seconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

void NetworkConfig::validate() const {
    if (node_count < 1 || dkg_threshold < 1 || dkg_threshold > node_count) {
        raise(ErrorClass::INVALID_ARGUMENT, "need 1 <= threshold <= node count");
    }
    if (node_latency_ms < 0) raise(ErrorClass::INVALID_ARGUMENT, "negative latency");
}

// ---------------------------------------------------------------------------
// Node
// ---------------------------------------------------------------------------

Node::Node(unsigned index, unsigned node_count, unsigned threshold, Bytes idp_secret,
           ClockFn clock, uint64_t rng_seed)
    : index_(index),
      node_count_(node_count),
      threshold_(threshold),
      verifier_(std::move(idp_secret)),
      clock_(std::move(clock)),
      rng_seed_(rng_seed) {
    if (index_ < 1 || index_ > node_count_) {
        raise(ErrorClass::INVALID_ARGUMENT, "node index out of range");
    }
}

Identity Node::identity_from_token(const std::string& token) const {
    return verifier_.verify(token, kKmsAudience, clock_());
}

std::unique_ptr<EntropySource> Node::draw_rng() {
    if (rng_seed_ == 0) return std::make_unique<SystemEntropy>();
    // One fresh stream per deal, keyed by (seed, node, counter), so a node
    // reloaded from persisted state continues the exact same sequence.
    Bytes key;
    append_u64be(key, rng_seed_);
    append_u32be(key, index_);
    append_u64be(key, draw_counter_++);
    Digest32 d = sha256(key);
    return std::make_unique<SeededEntropy>(d);
}

DealPackage Node::deal_postbox(const std::string& token) {
    (void)identity_from_token(token);
    std::unique_lock lock(mutex_);
    auto rng = draw_rng();
    FieldPtr order = Field::secp256k1_order();
    FieldElement dealt = FieldElement::random_nonzero(order, *rng);
    SharePolicy policy = SharePolicy::make(order, threshold_, node_count_);
    std::vector<SharePoint> points = split_secret(dealt, policy, *rng);

    DealPackage pkg;
    pkg.commitment = ec_base_mul(dealt.value());
    pkg.subshares.reserve(node_count_);
    for (unsigned j = 0; j < node_count_; ++j) {
        pkg.subshares.push_back(SubShare{index_, j + 1, points[j].y});
    }
    return pkg;
}

void Node::accept_subshares(const std::string& token, const std::vector<SubShare>& entries) {
    Identity identity = identity_from_token(token);
    std::unique_lock lock(mutex_);
    if (postbox_shares_.count(identity) != 0) {
        raise(ErrorClass::ALREADY_ASSIGNED, "postbox already assigned on node");
    }
    if (entries.size() != node_count_) {
        raise(ErrorClass::INVALID_ARGUMENT, "need one sub-share per dealer");
    }
    std::vector<bool> seen(node_count_ + 1, false);
    FieldPtr order = Field::secp256k1_order();
    FieldElement sum(order, 0);
    for (const auto& e : entries) {
        if (e.recipient_index != index_) {
            raise(ErrorClass::INVALID_ARGUMENT, "sub-share addressed to another node");
        }
        if (e.dealer_index < 1 || e.dealer_index > node_count_ || seen[e.dealer_index]) {
            raise(ErrorClass::INVALID_ARGUMENT, "bad dealer index");
        }
        seen[e.dealer_index] = true;
        sum = sum + e.y;
    }
    postbox_shares_.emplace(identity,
                            SharePoint{FieldElement::from_u64(order, index_), sum});
}

bool Node::has_postbox(const std::string& token) {
    Identity identity = identity_from_token(token);
    std::shared_lock lock(mutex_);
    return postbox_shares_.count(identity) != 0;
}

SharePoint Node::fetch_postbox_share(const std::string& token) {
    Identity id = identity_from_token(token);
    std::shared_lock lock(mutex_);
    auto it = postbox_shares_.find(id);
    if (it == postbox_shares_.end()) raise(ErrorClass::NOT_FOUND, "no postbox share");
    return it->second;
}

void Node::store_blob_shard(const std::string& token, uint32_t version,
                            std::vector<FieldElement> chunk_ys) {
    Identity id = identity_from_token(token);
    std::unique_lock lock(mutex_);
    blob_shards_[id] = StoredBlobShard{version, std::move(chunk_ys)};
}

StoredBlobShard Node::fetch_blob_shard(const std::string& token) {
    Identity id = identity_from_token(token);
    std::shared_lock lock(mutex_);
    auto it = blob_shards_.find(id);
    if (it == blob_shards_.end()) raise(ErrorClass::NOT_FOUND, "no blob shard");
    return it->second;
}

void Node::delete_blob_shard(const std::string& token) {
    Identity id = identity_from_token(token);
    std::unique_lock lock(mutex_);
    blob_shards_.erase(id);
}

std::map<Identity, SharePoint> Node::postbox_table() const {
    std::shared_lock lock(mutex_);
    return postbox_shares_;
}

std::map<Identity, StoredBlobShard> Node::blob_table() const {
    std::shared_lock lock(mutex_);
    return blob_shards_;
}

nlohmann::json Node::to_json() const {
    std::shared_lock lock(mutex_);
    nlohmann::json j;
    j["index"] = index_;
    j["node_count"] = node_count_;
    j["threshold"] = threshold_;
    j["health"] = static_cast<int>(health_);
    j["rng_seed"] = rng_seed_;
    j["draw_counter"] = draw_counter_;
    auto identity_json = [](const Identity& id) {
        return nlohmann::json{{"url", id.verifier_url}, {"id", id.verifier_id}};
    };
    j["postbox"] = nlohmann::json::array();
    for (const auto& [id, share] : postbox_shares_) {
        j["postbox"].push_back({{"identity", identity_json(id)}, {"y", share.y.to_hex()}});
    }
    j["blobs"] = nlohmann::json::array();
    for (const auto& [id, shard] : blob_shards_) {
        nlohmann::json chunks = nlohmann::json::array();
        for (const auto& y : shard.chunk_ys) chunks.push_back(y.to_hex());
        j["blobs"].push_back({{"identity", identity_json(id)},
                              {"version", shard.version},
                              {"chunks", chunks}});
    }
    return j;
}

std::shared_ptr<Node> Node::from_json(const nlohmann::json& j, Bytes idp_secret, ClockFn clock) {
    auto node = std::make_shared<Node>(
        j.at("index").get<unsigned>(), j.at("node_count").get<unsigned>(),
        j.at("threshold").get<unsigned>(), std::move(idp_secret), std::move(clock),
        j.at("rng_seed").get<uint64_t>());
    node->draw_counter_ = j.at("draw_counter").get<uint64_t>();
    node->health_ = static_cast<NodeHealth>(j.at("health").get<int>());
    FieldPtr order = Field::secp256k1_order();
    FieldPtr blob_field = Field::blob_field();
    for (const auto& entry : j.at("postbox")) {
        Identity id{entry.at("identity").at("url").get<std::string>(),
                    entry.at("identity").at("id").get<std::string>()};
        FieldElement y = FieldElement::from_bytes_exact(
            order, from_hex(entry.at("y").get<std::string>()));
        node->postbox_shares_.emplace(
            id, SharePoint{FieldElement::from_u64(order, node->index_), y});
    }
    for (const auto& entry : j.at("blobs")) {
        Identity id{entry.at("identity").at("url").get<std::string>(),
                    entry.at("identity").at("id").get<std::string>()};
        StoredBlobShard shard;
        shard.version = entry.at("version").get<uint32_t>();
        for (const auto& c : entry.at("chunks")) {
            shard.chunk_ys.push_back(
                FieldElement::from_bytes_exact(blob_field, from_hex(c.get<std::string>())));
        }
        node->blob_shards_.emplace(id, std::move(shard));
    }
    return node;
}

// ---------------------------------------------------------------------------
// Blob framing and chunk splitting
// ---------------------------------------------------------------------------

namespace {
constexpr uint8_t kBlobFrameVersion = 0x01;
constexpr size_t kChunkSize = 32;
}  // namespace

Bytes blob_frame(const Bytes& payload) {
    Bytes framed;
    framed.reserve(payload.size() + kChunkSize);
    framed.push_back(kBlobFrameVersion);
    append_u64be(framed, payload.size());
    append(framed, payload);
    while (framed.size() % kChunkSize != 0) framed.push_back(0x00);
    return framed;
}

Bytes blob_unframe(const Bytes& framed) {
    ByteReader r(framed);
    if (r.u8() != kBlobFrameVersion) raise(ErrorClass::MALFORMED, "bad blob frame version");
    uint64_t len = r.u64be();
    if (len > r.remaining()) raise(ErrorClass::MALFORMED, "blob frame length exceeds data");
    Bytes payload = r.take(len);
    // remainder must be zero padding within one chunk
    if (r.remaining() >= kChunkSize) raise(ErrorClass::MALFORMED, "excess blob padding");
    while (!r.done()) {
        if (r.u8() != 0) raise(ErrorClass::MALFORMED, "nonzero blob padding");
    }
    return payload;
}

std::vector<std::vector<SharePoint>> blob_split_chunks(const Bytes& framed, unsigned k, unsigned n,
                                                       EntropySource& rng) {
    if (framed.size() % kChunkSize != 0) raise(ErrorClass::INVALID_ARGUMENT, "unframed blob");
    FieldPtr field = Field::blob_field();
    SharePolicy policy = SharePolicy::make(field, k, n);
    std::vector<std::vector<SharePoint>> chunk_shares;
    chunk_shares.reserve(framed.size() / kChunkSize);
    for (size_t off = 0; off < framed.size(); off += kChunkSize) {
        FieldElement chunk = FieldElement::from_bytes_exact(
            field, std::span(framed.data() + off, kChunkSize));
        chunk_shares.push_back(split_secret(chunk, policy, rng));
    }
    return chunk_shares;
}

// ---------------------------------------------------------------------------
// NetworkOrchestrator
// ---------------------------------------------------------------------------

NetworkOrchestrator::NetworkOrchestrator(unsigned threshold,
                                         std::vector<std::shared_ptr<NodeTransport>> nodes)
    : threshold_(threshold), nodes_(std::move(nodes)) {
    if (threshold_ < 1 || threshold_ > nodes_.size()) {
        raise(ErrorClass::INVALID_ARGUMENT, "threshold out of range");
    }
}

bool NetworkOrchestrator::is_assigned(const std::string& token, CallMeter& meter) {
    for (auto& node : nodes_) {
        ++meter.node_fetches;
        try {
            bool assigned = node->has_postbox(token);
            meter.latency_ms += node->last_latency_ms();
            return assigned;
        } catch (const KmsError& e) {
            if (e.error_class() != ErrorClass::UNAVAILABLE) throw;
        }
    }
    raise(ErrorClass::INSUFFICIENT_NODES, "no node reachable");
}

EcPoint NetworkOrchestrator::assign_postbox(const std::string& token, CallMeter& meter) {
    // The client relays dealing: every node deals a fresh t-of-n sharing and
    // each node stores the sum of the sub-shares addressed to it, so the
    // postbox scalar (sum of dealt scalars) never exists inside the network.
    // Dealing needs every node present; fetches later tolerate failures.
    for (auto& node : nodes_) {
        ++meter.node_fetches;
        try {
            if (node->has_postbox(token)) {
                raise(ErrorClass::ALREADY_ASSIGNED, "identity already has a postbox");
            }
            meter.latency_ms += node->last_latency_ms();
        } catch (const KmsError& e) {
            if (e.error_class() == ErrorClass::UNAVAILABLE) {
                raise(ErrorClass::INSUFFICIENT_NODES, "postbox dealing requires every node");
            }
            throw;
        }
    }
    std::vector<DealPackage> deals;
    deals.reserve(nodes_.size());
    for (auto& node : nodes_) {
        ++meter.node_fetches;
        try {
            deals.push_back(node->deal_postbox(token));
            meter.latency_ms += node->last_latency_ms();
        } catch (const KmsError& e) {
            if (e.error_class() == ErrorClass::UNAVAILABLE) {
                raise(ErrorClass::INSUFFICIENT_NODES, "postbox dealing requires every node");
            }
            throw;
        }
    }
    EcPoint postbox_public;
    for (const auto& deal : deals) postbox_public = postbox_public + deal.commitment;

    for (size_t j = 0; j < nodes_.size(); ++j) {
        std::vector<SubShare> for_node;
        for_node.reserve(deals.size());
        for (const auto& deal : deals) for_node.push_back(deal.subshares[j]);
        ++meter.node_fetches;
        nodes_[j]->accept_subshares(token, for_node);
        meter.latency_ms += nodes_[j]->last_latency_ms();
    }
    return postbox_public;
}

std::vector<SharePoint> NetworkOrchestrator::fetch_postbox_shares(const std::string& token,
                                                                  CallMeter& meter) {
    // Minimum-contact policy: walk nodes in index order, stop at t shares.
    std::vector<SharePoint> shares;
    for (auto& node : nodes_) {
        if (shares.size() == threshold_) break;
        ++meter.node_fetches;
        try {
            shares.push_back(node->fetch_postbox_share(token));
            meter.latency_ms += node->last_latency_ms();
        } catch (const KmsError& e) {
            if (e.error_class() == ErrorClass::UNAVAILABLE ||
                e.error_class() == ErrorClass::NOT_FOUND) {
                continue;  // dead or unassigned node; try the next one
            }
            throw;  // token errors propagate
        }
    }
    if (shares.size() < threshold_) {
        raise(ErrorClass::INSUFFICIENT_NODES, "fewer than threshold shares available");
    }
    return shares;
}

void NetworkOrchestrator::store_blob(const std::string& token, const Bytes& blob,
                                     uint32_t version, EntropySource& rng, CallMeter& meter) {
    Bytes framed = blob_frame(blob);
    auto chunk_shares = blob_split_chunks(framed, threshold_, static_cast<unsigned>(nodes_.size()),
                                          rng);
    unsigned stored = 0;
    KmsError first_error(ErrorClass::INTERNAL, "unset");
    bool have_error = false;
    for (size_t j = 0; j < nodes_.size(); ++j) {
        std::vector<FieldElement> ys;
        ys.reserve(chunk_shares.size());
        for (const auto& chunk : chunk_shares) ys.push_back(chunk[j].y);
        ++meter.node_fetches;
        try {
            nodes_[j]->store_blob_shard(token, version, ys);
            meter.latency_ms += nodes_[j]->last_latency_ms();
            ++stored;
        } catch (const KmsError& e) {
            if (e.error_class() != ErrorClass::UNAVAILABLE) {
                if (!have_error) {
                    first_error = e;
                    have_error = true;
                }
            }
        }
    }
    if (have_error) throw first_error;  // token errors and the like
    if (stored < threshold_) {
        raise(ErrorClass::INSUFFICIENT_NODES, "blob not stored on threshold nodes");
    }
}

Bytes NetworkOrchestrator::retrieve_blob(const std::string& token, CallMeter& meter) {
    // Collect shards, preferring the highest version seen (nodes that were
    // dead during a replace may hold stale shards).
    std::vector<std::pair<unsigned, StoredBlobShard>> shards;  // node index, shard
    uint32_t best_version = 0;
    unsigned found_any = 0;
    unsigned responded = 0;
    auto matching = [&] {
        unsigned c = 0;
        for (const auto& [idx, s] : shards) {
            if (s.version == best_version) ++c;
        }
        return c;
    };
    for (auto& node : nodes_) {
        if (found_any > 0 && matching() >= threshold_) break;
        ++meter.node_fetches;
        try {
            StoredBlobShard shard = node->fetch_blob_shard(token);
            meter.latency_ms += node->last_latency_ms();
            ++responded;
            ++found_any;
            best_version = std::max(best_version, shard.version);
            shards.emplace_back(node->index(), std::move(shard));
        } catch (const KmsError& e) {
            if (e.error_class() == ErrorClass::UNAVAILABLE) continue;
            if (e.error_class() == ErrorClass::NOT_FOUND) {
                ++responded;
                continue;
            }
            throw;
        }
    }
    if (responded < threshold_) {
        raise(ErrorClass::INSUFFICIENT_NODES, "fewer than threshold nodes reachable");
    }
    if (found_any == 0) raise(ErrorClass::NOT_FOUND, "no blob stored for identity");
    if (matching() < threshold_) {
        raise(ErrorClass::INSUFFICIENT_NODES, "fewer than threshold blob shards");
    }

    std::vector<std::pair<unsigned, StoredBlobShard>> chosen;
    for (auto& [idx, s] : shards) {
        if (s.version == best_version && chosen.size() < threshold_) {
            chosen.emplace_back(idx, std::move(s));
        }
    }
    size_t chunk_count = chosen.front().second.chunk_ys.size();
    for (const auto& [idx, s] : chosen) {
        if (s.chunk_ys.size() != chunk_count) {
            raise(ErrorClass::MALFORMED, "inconsistent shard chunk counts");
        }
    }

    FieldPtr field = Field::blob_field();
    Bytes framed;
    framed.reserve(chunk_count * 32);
    for (size_t c = 0; c < chunk_count; ++c) {
        std::vector<SharePoint> points;
        points.reserve(chosen.size());
        for (const auto& [idx, s] : chosen) {
            points.push_back(SharePoint{FieldElement::from_u64(field, idx), s.chunk_ys[c]});
        }
        FieldElement chunk = reconstruct_secret(points, threshold_);
        Bytes cb = mpz_to_bytes(chunk.value(), 32);  // chunk values are < 2^256
        append(framed, cb);
    }
    return blob_unframe(framed);
}

void NetworkOrchestrator::delete_blob(const std::string& token, CallMeter& meter) {
    for (auto& node : nodes_) {
        ++meter.node_fetches;
        try {
            node->delete_blob_shard(token);
            meter.latency_ms += node->last_latency_ms();
        } catch (const KmsError& e) {
            if (e.error_class() != ErrorClass::UNAVAILABLE) throw;
        }
    }
}

// ---------------------------------------------------------------------------
// In-process Network
// ---------------------------------------------------------------------------

namespace {

// Direct in-memory transport; enforces dead-node drops and accounts the
// configured simulated latency.
class InProcessTransport final : public NodeTransport {
public:
    InProcessTransport(std::shared_ptr<Node> node, double latency_ms)
        : node_(std::move(node)), latency_ms_(latency_ms) {}

    unsigned index() const override { return node_->index(); }
    double last_latency_ms() const override { return latency_ms_; }

    bool has_postbox(const std::string& token) override {
        check_alive();
        return node_->has_postbox(token);
    }
    DealPackage deal_postbox(const std::string& token) override {
        check_alive();
        return node_->deal_postbox(token);
    }
    void accept_subshares(const std::string& token,
                          const std::vector<SubShare>& entries) override {
        check_alive();
        node_->accept_subshares(token, entries);
    }
    SharePoint fetch_postbox_share(const std::string& token) override {
        check_alive();
        return node_->fetch_postbox_share(token);
    }
    void store_blob_shard(const std::string& token, uint32_t version,
                          const std::vector<FieldElement>& chunk_ys) override {
        check_alive();
        node_->store_blob_shard(token, version, chunk_ys);
    }
    StoredBlobShard fetch_blob_shard(const std::string& token) override {
        check_alive();
        return node_->fetch_blob_shard(token);
    }
    void delete_blob_shard(const std::string& token) override {
        check_alive();
        node_->delete_blob_shard(token);
    }

private:
    void check_alive() const {
        if (node_->health() == NodeHealth::Dead) {
            raise(ErrorClass::UNAVAILABLE, "node is dead");
        }
    }
    std::shared_ptr<Node> node_;
    double latency_ms_;
};

}  // namespace

Network::Network(NetworkConfig config, Bytes idp_secret, ClockFn clock, uint64_t seed)
    : config_(config) {
    config_.validate();
    std::vector<std::shared_ptr<NodeTransport>> transports;
    for (unsigned i = 1; i <= config_.node_count; ++i) {
        auto node = std::make_shared<Node>(i, config_.node_count, config_.dkg_threshold,
                                           idp_secret, clock, seed);
        transports.push_back(
            std::make_shared<InProcessTransport>(node, config_.node_latency_ms));
        nodes_.push_back(std::move(node));
    }
    orchestrator_ =
        std::make_shared<NetworkOrchestrator>(config_.dkg_threshold, std::move(transports));
}

Node& Network::node(unsigned index) {
    if (index < 1 || index > nodes_.size()) raise(ErrorClass::INVALID_ARGUMENT, "bad node index");
    return *nodes_[index - 1];
}

void Network::mark_node(unsigned index, NodeHealth health) { node(index).set_health(health); }

std::vector<CompromisedNodeView> Network::adversary_view() const {
    std::vector<CompromisedNodeView> view;
    for (const auto& node : nodes_) {
        if (node->health() != NodeHealth::Compromised) continue;
        view.push_back(
            CompromisedNodeView{node->index(), node->postbox_table(), node->blob_table()});
    }
    return view;
}

nlohmann::json Network::to_json() const {
    nlohmann::json j;
    j["node_count"] = config_.node_count;
    j["threshold"] = config_.dkg_threshold;
    j["latency_ms"] = config_.node_latency_ms;
    j["nodes"] = nlohmann::json::array();
    for (const auto& node : nodes_) j["nodes"].push_back(node->to_json());
    return j;
}

std::unique_ptr<Network> Network::from_json(const nlohmann::json& j, const Bytes& idp_secret,
                                            ClockFn clock) {
    NetworkConfig cfg;
    cfg.node_count = j.at("node_count").get<unsigned>();
    cfg.dkg_threshold = j.at("threshold").get<unsigned>();
    cfg.node_latency_ms = j.at("latency_ms").get<double>();
    auto network = std::make_unique<Network>(cfg, idp_secret, clock);
    std::vector<std::shared_ptr<NodeTransport>> transports;
    network->nodes_.clear();
    for (const auto& nj : j.at("nodes")) {
        std::shared_ptr<Node> node = Node::from_json(nj, idp_secret, clock);
        transports.push_back(
            std::make_shared<InProcessTransport>(node, cfg.node_latency_ms));
        network->nodes_.push_back(std::move(node));
    }
    if (network->nodes_.size() != cfg.node_count) {
        raise(ErrorClass::MALFORMED, "node count mismatch in state file");
    }
    network->orchestrator_ =
        std::make_shared<NetworkOrchestrator>(cfg.dkg_threshold, std::move(transports));
    return network;
}

}  // namespace skms
