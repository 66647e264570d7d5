// Acceptance suite: one pass/fail line per criterion, in-process first, then
// repeated across the localhost wire boundary with spawned service
// processes. Exits nonzero if any criterion fails its check or its time
// budget.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "skms/errors.hpp"
#include "skms/kms.hpp"
#include "skms/wire_client.hpp"
#include "skms/wire_service.hpp"

using namespace skms;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g_service_binary;
int g_failures = 0;

// ---------------------------------------------------------------------------
// Harness plumbing
// ---------------------------------------------------------------------------

struct Criterion {
    int number;
    std::string name;
    double budget_seconds;
};

void run_criterion(const Criterion& c, const std::function<void()>& body) {
    auto t0 = std::chrono::steady_clock::now();
    std::string failure;
    try {
        body();
    } catch (const std::exception& e) {
        failure = e.what();
    }
    double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool over_budget = elapsed > c.budget_seconds;
    bool pass = failure.empty() && !over_budget;
    std::ostringstream line;
    line << (pass ? "PASS" : "FAIL") << "  " << c.number << "  " << c.name << "  ("
         << elapsed << "s, budget " << c.budget_seconds << "s)";
    if (!failure.empty()) line << "  -- " << failure;
    if (over_budget && failure.empty()) line << "  -- over time budget";
    std::cout << line.str() << std::endl;
    if (!pass) ++g_failures;
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::runtime_error(msg);
}

ErrorClass classify(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const KmsError& e) {
        return e.error_class();
    }
    return ErrorClass::INTERNAL;
}

void for_each_subset(size_t n, size_t k,
                     const std::function<void(const std::vector<size_t>&)>& fn) {
    std::vector<size_t> idx(k);
    for (size_t i = 0; i < k; ++i) idx[i] = i;
    for (;;) {
        fn(idx);
        size_t i = k;
        while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
        if (i == 0) return;
        ++idx[i - 1];
        for (size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() /
               ("skms-accept-" + tag + "-" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// ---------------------------------------------------------------------------
// Service process management (wire mode)
// ---------------------------------------------------------------------------

struct ServiceProcess {
    pid_t pid = -1;
    uint16_t port = 0;

    static ServiceProcess spawn(const std::vector<std::string>& args) {
        int pipe_fds[2];
        if (::pipe(pipe_fds) != 0) throw std::runtime_error("pipe failed");
        pid_t pid = ::fork();
        if (pid < 0) throw std::runtime_error("fork failed");
        if (pid == 0) {
            ::close(pipe_fds[0]);
            ::dup2(pipe_fds[1], STDOUT_FILENO);
            ::close(pipe_fds[1]);
            std::vector<char*> argv;
            argv.push_back(const_cast<char*>(g_service_binary.c_str()));
            for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
            argv.push_back(nullptr);
            ::execv(g_service_binary.c_str(), argv.data());
            _exit(127);
        }
        ::close(pipe_fds[1]);
        // scrape "LISTENING <port>" from the child's stdout
        std::string line;
        char ch;
        while (::read(pipe_fds[0], &ch, 1) == 1 && ch != '\n') line.push_back(ch);
        ::close(pipe_fds[0]);
        ServiceProcess proc;
        proc.pid = pid;
        if (line.rfind("LISTENING ", 0) == 0) {
            proc.port = static_cast<uint16_t>(std::stoul(line.substr(10)));
        } else {
            proc.kill_now();
            throw std::runtime_error("service failed to start: " + line);
        }
        return proc;
    }

    void kill_now() {
        if (pid > 0) {
            ::kill(pid, SIGKILL);
            ::waitpid(pid, nullptr, 0);
            pid = -1;
        }
    }
};

// ---------------------------------------------------------------------------
// Backend abstraction: the same criteria drive both modes
// ---------------------------------------------------------------------------

struct ServerSnapshot {
    std::vector<VaultRecord> records;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string mode() const = 0;
    virtual std::shared_ptr<NodeNetworkClient> network() = 0;
    virtual std::shared_ptr<ServerStoreClient> server() = 0;
    virtual std::shared_ptr<DeviceStore> devices() = 0;
    virtual void mark_node(unsigned index, NodeHealth health) = 0;
    virtual void set_server_available(bool available) = 0;
    // aggregated postbox shares of nodes [1..count], the adversary's haul
    virtual std::vector<SharePoint> node_postbox_shares(const Identity& id, unsigned count) = 0;
    virtual std::vector<StoredBlobShard> node_blob_shards(const Identity& id,
                                                          unsigned count) = 0;
    virtual ServerSnapshot server_snapshot() = 0;
    virtual Digest32 server_epoch_secret() = 0;
    virtual double node_delay_ms() const { return 0.0; }

    // Reset injected faults between criteria, even after a failure.
    virtual void restore_faults() {
        for (unsigned i = 1; i <= 9; ++i) {
            try {
                mark_node(i, NodeHealth::Healthy);
            } catch (...) {
            }
        }
        try {
            set_server_available(true);
        } catch (...) {
        }
    }

    Bytes idp_secret = Bytes(32, 0x42);
    MockIdp idp{idp_secret};
    std::string token(const Identity& id) {
        return idp.issue_token(id, kKmsAudience, 3600, system_clock_seconds());
    }
};

class InProcessBackend final : public Backend {
public:
    explicit InProcessBackend(uint64_t seed) : tmp_("inproc") {
        network_ = std::make_unique<Network>(NetworkConfig{}, idp_secret,
                                             system_clock_seconds, seed);
        store_ = ServerStore::open(tmp_.path / "server", idp_secret, system_clock_seconds,
                                   seed + 1);
        devices_ = std::make_shared<DeviceStore>(tmp_.path / "devices");
    }

    std::string mode() const override { return "in-process"; }
    std::shared_ptr<NodeNetworkClient> network() override { return network_->client_ptr(); }
    std::shared_ptr<ServerStoreClient> server() override {
        return std::make_shared<InProcessServerClient>(store_);
    }
    std::shared_ptr<DeviceStore> devices() override { return devices_; }
    void mark_node(unsigned index, NodeHealth health) override {
        network_->mark_node(index, health);
    }
    void set_server_available(bool available) override { store_->set_available(available); }
    std::vector<SharePoint> node_postbox_shares(const Identity& id, unsigned count) override {
        std::vector<SharePoint> out;
        for (unsigned i = 1; i <= count; ++i) out.push_back(network_->node(i).postbox_table().at(id));
        return out;
    }
    std::vector<StoredBlobShard> node_blob_shards(const Identity& id, unsigned count) override {
        std::vector<StoredBlobShard> out;
        for (unsigned i = 1; i <= count; ++i) out.push_back(network_->node(i).blob_table().at(id));
        return out;
    }
    ServerSnapshot server_snapshot() override { return {store_->raw_records()}; }
    Digest32 server_epoch_secret() override { return store_->current_epoch_secret(); }

private:
    TempDir tmp_;
    std::unique_ptr<Network> network_;
    std::shared_ptr<ServerStore> store_;
    std::shared_ptr<DeviceStore> devices_;
};

class WireBackend final : public Backend {
public:
    WireBackend(uint64_t seed, double node_delay_ms)
        : tmp_("wire"), seed_(seed), delay_ms_(node_delay_ms) {
        {
            std::ofstream out(tmp_.path / "idp.secret");
            out << to_hex(idp_secret) << "\n";
        }
        std::vector<uint16_t> ports;
        for (unsigned i = 1; i <= 9; ++i) {
            nodes_.push_back(spawn_node(i));
            ports.push_back(nodes_.back().port);
        }
        server_proc_ = ServiceProcess::spawn({"--role", "server", "--state-dir",
                                              tmp_.path.string(), "--port", "0", "--seed",
                                              std::to_string(seed_ + 1)});
        network_ = wire::make_wire_network(5, "127.0.0.1", ports);
        server_ = std::make_shared<wire::WireServerClient>("127.0.0.1", server_proc_.port);
        devices_ = std::make_shared<DeviceStore>(tmp_.path / "devices");
    }

    ~WireBackend() override {
        for (auto& n : nodes_) n.kill_now();
        server_proc_.kill_now();
    }

    std::string mode() const override { return "wire"; }
    std::shared_ptr<NodeNetworkClient> network() override { return network_; }
    std::shared_ptr<ServerStoreClient> server() override { return server_; }
    std::shared_ptr<DeviceStore> devices() override { return devices_; }
    double node_delay_ms() const override { return delay_ms_; }

    void mark_node(unsigned index, NodeHealth health) override {
        wire::WireNodeTransport t(index, "127.0.0.1", nodes_[index - 1].port);
        t.mark(health);
    }

    void set_server_available(bool available) override {
        // process-level fault: SIGKILL the server; revive by respawning over
        // the same persisted state directory
        if (!available && server_proc_.pid > 0) {
            server_proc_.kill_now();
        } else if (available && server_proc_.pid <= 0) {
            server_proc_ = ServiceProcess::spawn({"--role", "server", "--state-dir",
                                                  tmp_.path.string(), "--port", "0", "--seed",
                                                  std::to_string(seed_ + 1)});
            server_ = std::make_shared<wire::WireServerClient>("127.0.0.1", server_proc_.port);
        }
    }

    void kill_node_process(unsigned index) { nodes_[index - 1].kill_now(); }

    // Respawn killed processes over their persisted state, rebuild the
    // orchestrator around the new ports, and clear health marks.
    void restore_faults() override {
        bool respawned = false;
        for (unsigned i = 1; i <= 9; ++i) {
            if (nodes_[i - 1].pid <= 0) {
                nodes_[i - 1] = spawn_node(i);
                respawned = true;
            }
        }
        if (respawned) {
            std::vector<uint16_t> ports;
            for (auto& n : nodes_) ports.push_back(n.port);
            network_ = wire::make_wire_network(5, "127.0.0.1", ports);
        }
        Backend::restore_faults();
    }

    // The adversary reads a node's own persisted state file: exactly what a
    // compromised node operator possesses.
    std::vector<SharePoint> node_postbox_shares(const Identity& id, unsigned count) override {
        std::vector<SharePoint> out;
        FieldPtr order = Field::secp256k1_order();
        for (unsigned i = 1; i <= count; ++i) {
            json j = node_state(i);
            bool found = false;
            for (const auto& entry : j.at("postbox")) {
                if (entry.at("identity").at("url") == id.verifier_url &&
                    entry.at("identity").at("id") == id.verifier_id) {
                    out.push_back(SharePoint{
                        FieldElement::from_u64(order, i),
                        FieldElement::from_bytes_exact(
                            order, from_hex(entry.at("y").get<std::string>()))});
                    found = true;
                }
            }
            require(found, "node state file missing postbox share");
        }
        return out;
    }

    std::vector<StoredBlobShard> node_blob_shards(const Identity& id, unsigned count) override {
        std::vector<StoredBlobShard> out;
        FieldPtr blob_field = Field::blob_field();
        for (unsigned i = 1; i <= count; ++i) {
            json j = node_state(i);
            for (const auto& entry : j.at("blobs")) {
                if (entry.at("identity").at("url") == id.verifier_url &&
                    entry.at("identity").at("id") == id.verifier_id) {
                    StoredBlobShard shard;
                    shard.version = entry.at("version").get<uint32_t>();
                    for (const auto& c : entry.at("chunks")) {
                        shard.chunk_ys.push_back(FieldElement::from_bytes_exact(
                            blob_field, from_hex(c.get<std::string>())));
                    }
                    out.push_back(std::move(shard));
                }
            }
        }
        return out;
    }

    // Snapshot = copy of the server's on-disk state, opened offline.
    ServerSnapshot server_snapshot() override {
        auto copy = copy_server_dir();
        auto store = ServerStore::open(copy, idp_secret, system_clock_seconds, 1);
        return {store->raw_records()};
    }

    Digest32 server_epoch_secret() override {
        auto copy = copy_server_dir();
        auto store = ServerStore::open(copy, idp_secret, system_clock_seconds, 1);
        return store->current_epoch_secret();
    }

private:
    ServiceProcess spawn_node(unsigned index) {
        return ServiceProcess::spawn({"--role", "node", "--index", std::to_string(index),
                                      "--state-dir", tmp_.path.string(), "--port", "0",
                                      "--seed", std::to_string(seed_), "--delay-ms",
                                      std::to_string(delay_ms_)});
    }
    json node_state(unsigned index) {
        std::ifstream in(tmp_.path / ("node-" + std::to_string(index) + ".json"));
        require(static_cast<bool>(in), "missing node state file");
        return json::parse(in);
    }
    fs::path copy_server_dir() {
        fs::path copy = tmp_.path / ("server-snapshot-" + std::to_string(snapshot_id_++));
        fs::remove_all(copy);
        fs::copy(tmp_.path / "server", copy, fs::copy_options::recursive);
        return copy;
    }

    TempDir tmp_;
    uint64_t seed_;
    double delay_ms_;
    std::vector<ServiceProcess> nodes_;
    ServiceProcess server_proc_;
    std::shared_ptr<NetworkOrchestrator> network_;
    std::shared_ptr<wire::WireServerClient> server_;
    std::shared_ptr<DeviceStore> devices_;
    int snapshot_id_ = 0;
};

// ---------------------------------------------------------------------------
// Criterion bodies
// ---------------------------------------------------------------------------

FieldElement fe(const FieldPtr& f, uint64_t v) { return FieldElement::from_u64(f, v); }

void criterion_shamir_algebra() {
    // hand-computed vector over p=17
    FieldPtr f17 = Field::make(17);
    auto policy = SharePolicy::make(f17, 2, 3);
    auto shares = split_secret_with_coefficients(fe(f17, 5), policy, {fe(f17, 3)});
    require(shares[0].y.value() == 8 && shares[1].y.value() == 11 && shares[2].y.value() == 14,
            "hand vector mismatch");
    require(reconstruct_secret({shares[0], shares[2]}, 2).value() == 5, "reconstruct mismatch");
    SharePoint derived = derive_share_at({shares[0], shares[1]}, 2, fe(f17, 4));
    require(reconstruct_secret({shares[0], derived}, 2).value() == 5, "derive-share mismatch");

    // round-trips across test primes and the production field
    SeededEntropy rng(11);
    for (FieldPtr f : {Field::make(101), Field::make(257), Field::secp256k1_order()}) {
        for (unsigned n = 2; n <= 5; ++n) {
            for (unsigned k = 1; k <= n; ++k) {
                FieldElement secret = FieldElement::random(f, rng);
                auto s = split_secret(secret, SharePolicy::make(f, k, n), rng);
                for_each_subset(n, k, [&](const std::vector<size_t>& idx) {
                    std::vector<SharePoint> subset;
                    for (size_t i : idx) subset.push_back(s[i]);
                    require(reconstruct_secret(subset, k) == secret, "subset round-trip failed");
                });
                FieldElement nx = fe(f, 97);
                SharePoint extra = derive_share_at(s, k, nx);
                std::vector<SharePoint> mix(s.begin(), s.begin() + (k - 1));
                mix.push_back(extra);
                require(reconstruct_secret(mix, k) == secret, "derived-share round-trip failed");
            }
        }
    }
}

void criterion_dkg_exhaustive(Backend& be) {
    Identity id{"https://idp.test", "dkg-user"};
    Session s{id, "d", {}};
    EcPoint postbox_pub = be.network()->assign_postbox(be.token(id), s.meter);
    auto shares = be.node_postbox_shares(id, 9);
    require(shares.size() == 9, "expected nine node shares");

    unsigned good = 0, bad = 0;
    for_each_subset(9, 5, [&](const std::vector<size_t>& idx) {
        std::vector<SharePoint> subset;
        for (size_t i : idx) subset.push_back(shares[i]);
        if (ec_base_mul(reconstruct_secret(subset, 5).value()) == postbox_pub) ++good;
    });
    for_each_subset(9, 4, [&](const std::vector<size_t>& idx) {
        std::vector<SharePoint> subset;
        for (size_t i : idx) subset.push_back(shares[i]);
        if (ec_base_mul(reconstruct_secret(subset, 4).value()) != postbox_pub) ++bad;
    });
    require(good == 126, "not all 5-subsets reconstruct");
    require(bad == 126, "some 4-subset reconstructed");
}

struct FlowRig {
    std::unique_ptr<Kms> kms;
    Backend* be;
    Identity id;
    std::string device = "laptop";
    SeededEntropy rng{4040};

    FlowRig(Backend& backend, const std::string& user) : be(&backend) {
        id = Identity{"https://idp.test", user};
        kms = std::make_unique<Kms>(backend.network(), backend.server(), backend.devices());
    }
    Session session(const std::string& dev = "") {
        return Session{id, dev.empty() ? device : dev, {}};
    }
    std::string token() { return be->token(id); }
};

void criterion_key_invariance(Backend& be) {
    FlowRig rig(be, "invariance-user");
    Session s0 = rig.session();
    EcPoint pub = rig.kms->signup(s0, rig.token(), rig.rng);

    auto check_state = [&](const std::string& dev, const std::string& stage) {
        Session si = rig.session(dev);
        KeyHandle h = rig.kms->signin(si, rig.token());
        require(h.public_point() == pub, "public key changed at " + stage);
        return Kms::export_seed_phrase(h);
    };
    std::string mnemonic = check_state("laptop", "signin");

    Session s1 = rig.session();
    rig.kms->rotate_ekp(s1, rig.token(), rig.rng);
    require(check_state("laptop", "rotate") == mnemonic, "mnemonic changed at rotate");

    Session s2 = rig.session();
    rig.kms->reshare_key(s2, rig.token(), rig.rng);
    require(check_state("laptop", "reshare") == mnemonic, "mnemonic changed at reshare");

    Session s3 = rig.session();
    rig.kms->recover_device(s3, rig.token(), "phone", rig.rng);
    require(check_state("phone", "recover") == mnemonic, "mnemonic changed at recover");

    be.set_server_available(false);
    Session s4 = rig.session("phone");
    std::string disaster_mnemonic = rig.kms->disaster_recover(s4, rig.token());
    be.set_server_available(true);
    require(disaster_mnemonic == mnemonic, "mnemonic changed at disaster recovery");
}

void criterion_two_of_three(Backend& be, bool wire_kill_variant) {
    // sufficiency: each storage pair completes its designated flow
    {
        FlowRig rig(be, "pair-server-device");
        Session s = rig.session();
        EcPoint pub = rig.kms->signup(s, rig.token(), rig.rng);
        for (unsigned i = 1; i <= 9; ++i) be.mark_node(i, NodeHealth::Dead);
        Session si = rig.session();
        require(rig.kms->signin(si, rig.token()).public_point() == pub,
                "signin failed with the network dead");
        for (unsigned i = 1; i <= 9; ++i) be.mark_node(i, NodeHealth::Healthy);
    }
    {
        FlowRig rig(be, "pair-network-server");
        Session s = rig.session();
        EcPoint pub = rig.kms->signup(s, rig.token(), rig.rng);
        rig.be->devices()->remove("laptop");  // the device is gone
        Session sr = rig.session();
        rig.kms->recover_device(sr, rig.token(), "tablet", rig.rng);
        Session si = rig.session("tablet");
        require(rig.kms->signin(si, rig.token()).public_point() == pub,
                "recovery pair failed");
    }
    {
        FlowRig rig(be, "pair-network-device");
        Session s = rig.session();
        (void)rig.kms->signup(s, rig.token(), rig.rng);
        be.set_server_available(false);
        Session sd = rig.session();
        std::string mnemonic = rig.kms->disaster_recover(sd, rig.token());
        require(!mnemonic.empty(), "disaster pair failed");
        require(sd.meter.server_calls == 0, "disaster flow touched the server");
        be.set_server_available(true);
    }

    // single storages fail closed
    {
        FlowRig rig(be, "single-storage");
        Session s = rig.session();
        (void)rig.kms->signup(s, rig.token(), rig.rng);

        // device only: no server, no network
        be.set_server_available(false);
        for (unsigned i = 1; i <= 9; ++i) be.mark_node(i, NodeHealth::Dead);
        Session s1 = rig.session();
        ErrorClass e1 = classify([&] { (void)rig.kms->signin(s1, rig.token()); });
        require(e1 == ErrorClass::UNAVAILABLE, "device-only signin did not fail closed");
        Session s1b = rig.session();
        ErrorClass e1b = classify([&] { (void)rig.kms->disaster_recover(s1b, rig.token()); });
        require(e1b == ErrorClass::INSUFFICIENT_NODES,
                "device-only disaster did not fail closed");

        // server only
        be.set_server_available(true);
        Session s2 = rig.session("missing-device");
        ErrorClass e2 = classify([&] { (void)rig.kms->signin(s2, rig.token()); });
        require(e2 == ErrorClass::UNPROVISIONED, "server-only signin did not fail closed");
        Session s2b = rig.session();
        ErrorClass e2b =
            classify([&] { rig.kms->recover_device(s2b, rig.token(), "x", rig.rng); });
        require(e2b == ErrorClass::INSUFFICIENT_NODES,
                "server-only recovery did not fail closed");

        // network only
        for (unsigned i = 1; i <= 9; ++i) be.mark_node(i, NodeHealth::Healthy);
        be.set_server_available(false);
        Session s3 = rig.session("missing-device");
        ErrorClass e3 = classify([&] { (void)rig.kms->disaster_recover(s3, rig.token()); });
        require(e3 == ErrorClass::UNPROVISIONED, "network-only disaster did not fail closed");
        Session s3b = rig.session();
        ErrorClass e3b =
            classify([&] { rig.kms->recover_device(s3b, rig.token(), "y", rig.rng); });
        require(e3b == ErrorClass::UNAVAILABLE, "network-only recovery did not fail closed");
        be.set_server_available(true);
    }

    // wire mode additionally proves the threshold against killed processes
    if (wire_kill_variant) {
        auto& wb = dynamic_cast<WireBackend&>(be);
        FlowRig rig(be, "kill-variant");
        Session s = rig.session();
        EcPoint pub = rig.kms->signup(s, rig.token(), rig.rng);
        for (unsigned i = 1; i <= 4; ++i) wb.kill_node_process(i);
        Session sr = rig.session();
        rig.kms->recover_device(sr, rig.token(), "phone2", rig.rng);
        Session si = rig.session("phone2");
        require(rig.kms->signin(si, rig.token()).public_point() == pub,
                "flows failed with 4 node processes killed");
        wb.kill_node_process(5);
        Session sd = rig.session("phone2");
        ErrorClass e = classify([&] { rig.kms->recover_device(sd, rig.token(), "z", rig.rng); });
        require(e == ErrorClass::INSUFFICIENT_NODES, "threshold not enforced after 5 kills");
    }
}

void criterion_latency_asymmetry(Backend& be) {
    FlowRig rig(be, "latency-user");
    Session s = rig.session();
    (void)rig.kms->signup(s, rig.token(), rig.rng);
    require(s.meter.node_fetches >= 5, "signup below threshold contacts");

    Session si = rig.session();
    (void)rig.kms->signin(si, rig.token());
    require(si.meter.node_fetches == 0, "signin touched the network");

    Session sg = rig.session();
    Digest32 d{};
    d.fill(0x5C);
    (void)rig.kms->sign_transaction(sg, rig.token(), d);
    require(sg.meter.node_fetches == 0, "sign touched the network");

    Session sr = rig.session();
    rig.kms->recover_device(sr, rig.token(), "phone", rig.rng);
    require(sr.meter.node_fetches >= 5, "recovery below threshold contacts");

    if (be.node_delay_ms() >= 50.0) {
        require(sr.meter.latency_ms >= 250.0, "recovery latency below 5x node delay");
        require(si.meter.latency_ms < 50.0, "signin latency should not pay node delay");
    }
}

void criterion_compromise_drills(Backend& be) {
    FlowRig rig(be, "drill-user");
    Session s = rig.session();
    EcPoint pub = rig.kms->signup(s, rig.token(), rig.rng);

    // (a) server snapshot before rotate_ekp decrypts nothing afterward
    ServerSnapshot snap = be.server_snapshot();
    require(!snap.records.empty(), "no server records to snapshot");
    Session sr = rig.session();
    rig.kms->rotate_ekp(sr, rig.token(), rig.rng);
    CallMeter rotate_meter;
    be.server()->rotate_at_rest(rotate_meter);  // at-rest layer rotates too
    Digest32 new_secret = be.server_epoch_secret();
    for (const auto& rec : snap.records) {
        Digest32 key = ServerStore::derive_record_key(new_secret, rec.identity, rec.slot);
        ErrorClass e = classify(
            [&] { (void)aead_open(key, rec.nonce, rec.at_rest_ciphertext, rec.tag); });
        require(e == ErrorClass::AUTH_FAILURE, "old ciphertext decrypted under new epoch");
    }

    // (b) 4 compromised nodes cannot reconstruct the postbox or the blob
    for (unsigned i = 1; i <= 4; ++i) be.mark_node(i, NodeHealth::Compromised);
    auto stolen_shares = be.node_postbox_shares(rig.id, 4);
    CallMeter m;
    auto honest = be.network()->fetch_postbox_shares(rig.token(), m);
    EcPoint postbox_pub = ec_base_mul(reconstruct_secret(honest, 5).value());
    for (unsigned k = 1; k <= 4; ++k) {
        for_each_subset(4, k, [&](const std::vector<size_t>& idx) {
            std::vector<SharePoint> subset;
            for (size_t i : idx) subset.push_back(stolen_shares[i]);
            require(ec_base_mul(reconstruct_secret(subset, k).value()) != postbox_pub,
                    "adversary reconstructed the postbox scalar");
        });
    }
    auto stolen_blobs = be.node_blob_shards(rig.id, 4);
    require(stolen_blobs.size() == 4, "expected four stolen blob shards");
    // chunk-wise reconstruction attempts from four shards at every k <= 4:
    // no attempt may produce any true chunk of the stored blob
    FieldPtr blob_field = Field::blob_field();
    Bytes true_framed = blob_frame(be.network()->retrieve_blob(rig.token(), m));
    for (unsigned k = 1; k <= 4; ++k) {
        for_each_subset(4, k, [&](const std::vector<size_t>& idx) {
            for (size_t c = 0; c < stolen_blobs[0].chunk_ys.size(); ++c) {
                std::vector<SharePoint> pts;
                for (size_t i : idx) {
                    pts.push_back(SharePoint{fe(blob_field, i + 1), stolen_blobs[i].chunk_ys[c]});
                }
                FieldElement guess = reconstruct_secret(pts, k);
                FieldElement truth = FieldElement::from_bytes_exact(
                    blob_field, std::span(true_framed.data() + 32 * c, 32));
                require(guess != truth, "adversary recovered a blob chunk");
            }
        });
    }
    for (unsigned i = 1; i <= 4; ++i) be.mark_node(i, NodeHealth::Healthy);

    // (c) old-device artifacts are dead after recover_device
    Bytes old_priv = be.devices()->get("laptop", VaultSlot::PRIVKEY_SHARD);
    Bytes old_ekp = be.devices()->get("laptop", VaultSlot::EKP_SHARD);
    Session s2 = rig.session();
    rig.kms->recover_device(s2, rig.token(), "phone", rig.rng);
    Session s_old = rig.session("laptop");
    ErrorClass e = classify([&] { (void)rig.kms->signin(s_old, rig.token()); });
    require(e == ErrorClass::AUTH_FAILURE, "old device still signs in after recovery");
    // and the stolen artifacts cannot be combined with fresh server material
    auto [oe, old_e_d] = parse_ekp_payload(old_ekp);
    CallMeter mm;
    auto [ne, new_e_s] = parse_ekp_payload(be.server()->get_ekp(rig.token(), mm));
    FieldPtr order = Field::secp256k1_order();
    FieldElement fake = reconstruct_secret(
        {SharePoint{fe(order, kServerShareX), new_e_s},
         SharePoint{fe(order, kDeviceShareX), old_e_d}},
        2);
    auto [pe, old_sealed] = parse_sealed_payload(old_priv);
    ErrorClass e2 = classify([&] { (void)open(SealedBox::decode(old_sealed), fake); });
    require(e2 == ErrorClass::AUTH_FAILURE, "stolen device shard opened with mixed shares");
    // signin still works on the new device
    Session si = rig.session("phone");
    require(rig.kms->signin(si, rig.token()).public_point() == pub, "post-drill signin broken");
}

void criterion_epoch_mixing(Backend& be) {
    // flow level: a handful of real reshares
    FlowRig rig(be, "mixing-user");
    Session s = rig.session();
    EcPoint pub = rig.kms->signup(s, rig.token(), rig.rng);
    FieldPtr order = Field::secp256k1_order();

    for (int round = 0; round < 3; ++round) {
        // capture the old plaintext server shard via the signin path
        CallMeter m;
        auto [e1, e_s] = parse_ekp_payload(be.server()->get_ekp(rig.token(), m));
        auto [e2, e_d] =
            parse_ekp_payload(be.devices()->get(rig.device, VaultSlot::EKP_SHARD));
        FieldElement ekp = reconstruct_secret({SharePoint{fe(order, kServerShareX), e_s},
                                               SharePoint{fe(order, kDeviceShareX), e_d}},
                                              2);
        auto [p1, sealed_s] = parse_sealed_payload(be.server()->get_shard(rig.token(), m));
        FieldElement old_s_s = FieldElement::from_bytes_exact(
            order, open(SealedBox::decode(sealed_s), ekp));

        Session sr = rig.session();
        rig.kms->reshare_key(sr, rig.token(), rig.rng);

        auto [n1, new_e_s] = parse_ekp_payload(be.server()->get_ekp(rig.token(), m));
        auto [n2, new_e_d] =
            parse_ekp_payload(be.devices()->get(rig.device, VaultSlot::EKP_SHARD));
        FieldElement new_ekp =
            reconstruct_secret({SharePoint{fe(order, kServerShareX), new_e_s},
                                SharePoint{fe(order, kDeviceShareX), new_e_d}},
                               2);
        auto [n3, new_sealed_d] =
            parse_sealed_payload(be.devices()->get(rig.device, VaultSlot::PRIVKEY_SHARD));
        FieldElement new_s_d = FieldElement::from_bytes_exact(
            order, open(SealedBox::decode(new_sealed_d), new_ekp));

        FieldElement mixed =
            reconstruct_secret({SharePoint{fe(order, kServerShareX), old_s_s},
                                SharePoint{fe(order, kDeviceShareX), new_s_d}},
                               2);
        require(ec_base_mul(mixed.value()) != pub, "epoch mixing reconstructed the key");
    }

    // primitive level: 1,000 seeded trials of the exact resharing mechanism
    SeededEntropy rng(20202);
    FieldElement master = FieldElement::random_nonzero(order, rng);
    auto policy = SharePolicy::make(order, 2, 3);
    for (int trial = 0; trial < 1000; ++trial) {
        auto old_shares = split_secret(master, policy, rng);
        auto new_shares = split_secret(master, policy, rng);
        FieldElement mixed = reconstruct_secret({old_shares[1], new_shares[2]}, 2);
        require(mixed != master, "mixed-epoch shares reconstructed the master scalar");
    }
}

void criterion_bip_conformance() {
    // BIP-39 published vectors
    Bytes zero16(16, 0);
    require(bip39::mnemonic_from_entropy(zero16) ==
                "abandon abandon abandon abandon abandon abandon abandon abandon abandon "
                "abandon abandon about",
            "bip39 vector 1 mismatch");
    Bytes zero32(32, 0);
    std::string m32 = bip39::mnemonic_from_entropy(zero32);
    require(m32.substr(m32.rfind(' ') + 1) == "art", "bip39 24-word checksum mismatch");
    require(bip39::entropy_from_mnemonic(m32) == zero32, "bip39 decode mismatch");
    Digest64 seed = bip39::seed_from_mnemonic(
        "legal winner thank year wave sausage worth useful legal winner thank yellow", "TREZOR");
    require(to_hex(seed) ==
                "2e8905819b8723fe2c1d161860e5ee1830318dbf49a83bd451cfb8440c28bd6fa457fe1296106559"
                "a3c80937a1c1069be3a3a5bd381ee6260e8d9739fce1f607",
            "bip39 seed vector mismatch");

    // BIP-32 reference vector 1: m, m/0', m/0'/1
    bip32::ExtendedKey master =
        bip32::master_from_seed(from_hex("000102030405060708090a0b0c0d0e0f"));
    require(master.to_xprv() ==
                "xprv9s21ZrQH143K3QTDL4LXw2F7HEK3wJUD2nW2nRk4stbPy6cq3jPPqjiChkVvvNKmPGJxWUtg6Ln"
                "F5kejMRNNU3TGtRBeJgk33yuGBxrMPHi",
            "bip32 master xprv mismatch");
    auto m0h = master.derive_child(0x80000000u);
    require(m0h.to_xpub() ==
                "xpub68Gmy5EdvgibQVfPdqkBBCHxA5htiqg55crXYuXoQRKfDBFA1WEjWgP6LHhwBZeNK1VTsfTFUHC"
                "drfp1bgwQ9xv5ski8PX9rL2dZXvgGDnw",
            "bip32 m/0' xpub mismatch");
    auto m0h1 = m0h.derive_child(1);
    require(m0h1.to_xprv() ==
                "xprv9wTYmMFdV23N2TdNG573QoEsfRrWKQgWeibmLntzniatZvR9BmLnvSxqu53Kw1UmYPxLgboyZQa"
                "XwTCg8MSY3H2EU4pWcQDnRnrVA1xe8fs",
            "bip32 m/0'/1 xprv mismatch");
}

void criterion_at_rest_rotation(Backend& be) {
    FlowRig rig(be, "at-rest-user");
    Session s = rig.session();
    EcPoint pub = rig.kms->signup(s, rig.token(), rig.rng);

    ServerSnapshot snap = be.server_snapshot();
    CallMeter m;
    uint32_t new_epoch = be.server()->rotate_at_rest(m);
    require(new_epoch >= 2, "epoch did not advance");

    // post-rotation reads succeed
    Session si = rig.session();
    require(rig.kms->signin(si, rig.token()).public_point() == pub,
            "reads failed after at-rest rotation");

    // pre-rotation ciphertext + new epoch secret fails universally
    Digest32 new_secret = be.server_epoch_secret();
    require(!snap.records.empty(), "empty snapshot");
    for (const auto& rec : snap.records) {
        Digest32 key = ServerStore::derive_record_key(new_secret, rec.identity, rec.slot);
        ErrorClass e = classify(
            [&] { (void)aead_open(key, rec.nonce, rec.at_rest_ciphertext, rec.tag); });
        require(e == ErrorClass::AUTH_FAILURE, "old record decrypted under the new epoch");
    }
}

void run_mode_suite(Backend& be, bool wire) {
    std::cout << "== " << be.mode() << " mode ==" << std::endl;
    auto guarded = [&](const Criterion& c, const std::function<void()>& body) {
        run_criterion(c, body);
        be.restore_faults();
    };
    run_criterion({1, "shamir-algebra (" + be.mode() + ")", 1.0},
                  [&] { criterion_shamir_algebra(); });
    guarded({2, "dkg-threshold-exhaustive (" + be.mode() + ")", 5.0},
            [&] { criterion_dkg_exhaustive(be); });
    guarded({3, "end-to-end-key-invariance (" + be.mode() + ")", wire ? 30.0 : 5.0},
            [&] { criterion_key_invariance(be); });
    guarded({4, "two-of-three-matrix (" + be.mode() + ")", wire ? 30.0 : 5.0},
            [&] { criterion_two_of_three(be, wire); });
    guarded({6, "compromise-drills (" + be.mode() + ")", 10.0},
            [&] { criterion_compromise_drills(be); });
    guarded({7, "epoch-mixing (" + be.mode() + ")", 5.0}, [&] { criterion_epoch_mixing(be); });
    run_criterion({8, "bip-conformance (" + be.mode() + ")", 1.0},
                  [&] { criterion_bip_conformance(); });
    guarded({10, "at-rest-rotation (" + be.mode() + ")", wire ? 10.0 : 2.0},
            [&] { criterion_at_rest_rotation(be); });
}

}  // namespace

int main(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; i += 2) {
        if (std::string(argv[i]) == "--service-binary") g_service_binary = argv[i + 1];
    }
    if (g_service_binary.empty()) {
        // default: sibling binary next to this executable
        fs::path self = fs::canonical("/proc/self/exe");
        g_service_binary = (self.parent_path() / "skms-service").string();
    }
    if (!fs::exists(g_service_binary)) {
        std::cerr << "service binary not found: " << g_service_binary << "\n";
        return 2;
    }

    auto t0 = std::chrono::steady_clock::now();

    {
        InProcessBackend be(12345);
        run_mode_suite(be, false);
        // criterion 5 in-process half: counters only
        run_criterion({5, "latency-message-asymmetry (in-process counters)", 5.0}, [&] {
            InProcessBackend fresh(54321);
            criterion_latency_asymmetry(fresh);
        });
    }

    {
        // criterion 5 wire half: 50 ms injected node delay, real processes
        run_criterion({5, "latency-message-asymmetry (wire, 50ms delay)", 30.0}, [&] {
            WireBackend be(777, 50.0);
            criterion_latency_asymmetry(be);
        });
    }

    {
        // criterion 9: the suite again across the wire boundary
        auto t_wire = std::chrono::steady_clock::now();
        WireBackend be(999, 0.0);
        run_mode_suite(be, true);
        double wire_elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_wire).count();
        run_criterion({9, "wire-transparency", 60.0}, [&] {
            require(wire_elapsed < 60.0, "wire suite exceeded its budget");
            require(g_failures == 0, "wire-mode criteria diverged from in-process results");
        });
    }

    double total =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (g_failures == 0 ? "ALL CRITERIA PASSED" : "FAILURES PRESENT") << "  (total "
              << total << "s)" << std::endl;
    return g_failures == 0 ? 0 : 1;
}
