#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "skms/errors.hpp"
#include "skms/kms.hpp"
#include "skms/wire_client.hpp"
#include "skms/wire_service.hpp"

using namespace skms;

namespace {

constexpr int64_t kNow = 1700000000;
int64_t test_clock() { return kNow; }

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("skms-wire-" + std::to_string(::getpid()) + "-" +
                std::to_string(reinterpret_cast<uintptr_t>(this)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

// In-process services behind real localhost sockets: same states, wire
// transport. Process-level spawning is exercised by the acceptance suite.
struct WireFixture {
    TempDir tmp;
    Bytes idp_secret = Bytes(32, 0x21);
    MockIdp idp{idp_secret};
    Identity user{"https://idp.test", "alice"};
    std::vector<std::shared_ptr<Node>> nodes;
    std::vector<std::unique_ptr<wire::WireServer>> node_servers;
    std::shared_ptr<ServerStore> server_store;
    std::unique_ptr<wire::WireServer> server_server;
    std::shared_ptr<NetworkOrchestrator> network;
    std::shared_ptr<wire::WireServerClient> server_client;
    std::shared_ptr<DeviceStore> devices;
    std::unique_ptr<Kms> kms;
    SeededEntropy rng{777};

    explicit WireFixture(double node_delay_ms = 0.0, unsigned n = 9, unsigned t = 5) {
        std::vector<uint16_t> ports;
        for (unsigned i = 1; i <= n; ++i) {
            auto node = std::make_shared<Node>(i, n, t, idp_secret, test_clock, 99);
            node_servers.push_back(wire::serve_node(node, 0, node_delay_ms));
            ports.push_back(node_servers.back()->port());
            nodes.push_back(std::move(node));
        }
        network = wire::make_wire_network(t, "127.0.0.1", ports);
        server_store = ServerStore::open(tmp.path / "server", idp_secret, test_clock, 100);
        server_server = wire::serve_server_store(server_store, 0);
        server_client =
            std::make_shared<wire::WireServerClient>("127.0.0.1", server_server->port());
        devices = std::make_shared<DeviceStore>(tmp.path / "devices");
        kms = std::make_unique<Kms>(network, server_client, devices);
    }

    std::string token() const { return idp.issue_token(user, kKmsAudience, 3600, kNow); }
    Session session(const std::string& device = "laptop") const {
        return Session{user, device, {}};
    }
};

ErrorClass classify(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const KmsError& e) {
        return e.error_class();
    }
    return ErrorClass::INTERNAL;
}

}  // namespace

TEST_CASE("frame codec round-trips and rejects bad versions") {
    wire::WireRequest req;
    req.op = static_cast<uint8_t>(wire::Op::SRV_GET_SHARD);
    req.correlation_id = 0xDEADBEEF12345678ull;
    req.identity = {"https://idp.test", "alice"};
    req.token = "tok";
    req.payload = {1, 2, 3};
    Bytes body = wire::encode_request(req);
    wire::WireRequest back = wire::decode_request(body);
    CHECK(back.op == req.op);
    CHECK(back.correlation_id == req.correlation_id);
    CHECK(back.identity == req.identity);
    CHECK(back.token == req.token);
    CHECK(back.payload == req.payload);

    Bytes bad = body;
    bad[0] = 0x7F;
    CHECK(classify([&] { (void)wire::decode_request(bad); }) == ErrorClass::VERSION_ERROR);

    wire::WireResponse resp;
    resp.status = static_cast<uint8_t>(ErrorClass::EXPIRED);
    resp.correlation_id = 7;
    resp.payload = str_bytes("msg");
    wire::WireResponse rback = wire::decode_response(wire::encode_response(resp));
    CHECK(rback.status == resp.status);
    CHECK(rback.correlation_id == 7);
}

TEST_CASE("wire mode: full flow chain passes unchanged") {
    WireFixture fx;
    Session s = fx.session();
    EcPoint pub = fx.kms->signup(s, fx.token(), fx.rng);
    CHECK(s.meter.node_fetches >= 5);

    Session si = fx.session();
    KeyHandle h = fx.kms->signin(si, fx.token());
    CHECK(h.public_point() == pub);
    CHECK(si.meter.node_fetches == 0);
    std::string mnemonic0 = Kms::export_seed_phrase(h);

    Session sr = fx.session();
    CHECK(fx.kms->rotate_ekp(sr, fx.token(), fx.rng) == 2);
    Session s2 = fx.session();
    fx.kms->reshare_key(s2, fx.token(), fx.rng);
    Session s3 = fx.session();
    fx.kms->recover_device(s3, fx.token(), "phone", fx.rng);

    Session si2 = fx.session("phone");
    KeyHandle h2 = fx.kms->signin(si2, fx.token());
    CHECK(h2.public_point() == pub);
    CHECK(Kms::export_seed_phrase(h2) == mnemonic0);

    // disaster: stop the server service entirely
    fx.server_server->stop();
    Session sd = fx.session("phone");
    CHECK(fx.kms->disaster_recover(sd, fx.token()) == mnemonic0);
    CHECK(sd.meter.server_calls == 0);
}

TEST_CASE("wire mode: truncated token maps to BAD_SIGNATURE, status 1:1") {
    WireFixture fx(0.0, 3, 2);
    Session s = fx.session();
    (void)fx.kms->signup(s, fx.token(), fx.rng);

    std::string truncated = fx.token().substr(0, 11);
    CallMeter meter;
    CHECK(classify([&] { (void)fx.server_client->get_shard(truncated, meter); }) ==
          ErrorClass::BAD_SIGNATURE);
    CHECK(classify([&] { (void)fx.network->fetch_postbox_shares(truncated, meter); }) ==
          ErrorClass::BAD_SIGNATURE);

    std::string expired = fx.idp.issue_token(fx.user, kKmsAudience, 10, kNow - 100);
    CHECK(classify([&] { (void)fx.server_client->get_shard(expired, meter); }) ==
          ErrorClass::EXPIRED);
}

TEST_CASE("wire mode: unknown op yields VERSION_ERROR and the connection survives") {
    WireFixture fx(0.0, 3, 2);
    wire::WireChannel chan("127.0.0.1", fx.node_servers[0]->port());
    CHECK(classify([&] {
              (void)chan.call(static_cast<wire::Op>(0x7E), fx.token(), {});
          }) == ErrorClass::VERSION_ERROR);
    // same channel endpoint keeps serving
    Bytes r = chan.call(wire::Op::NODE_HAS_POSTBOX, fx.token(), {});
    CHECK(r == Bytes{0});
}

TEST_CASE("wire mode: dead nodes drop requests; threshold still rules") {
    WireFixture fx(0.0, 9, 5);
    Session s = fx.session();
    (void)fx.kms->signup(s, fx.token(), fx.rng);

    // mark four nodes dead over the wire
    for (unsigned i = 0; i < 4; ++i) {
        wire::WireNodeTransport t(i + 1, "127.0.0.1", fx.node_servers[i]->port());
        t.mark(NodeHealth::Dead);
    }
    CallMeter meter;
    auto shares = fx.network->fetch_postbox_shares(fx.token(), meter);
    CHECK(shares.size() == 5);

    wire::WireNodeTransport t5(5, "127.0.0.1", fx.node_servers[4]->port());
    t5.mark(NodeHealth::Dead);
    CHECK(classify([&] { (void)fx.network->fetch_postbox_shares(fx.token(), meter); }) ==
          ErrorClass::INSUFFICIENT_NODES);

    // killed service process == connection refused == dead
    fx.node_servers[4]->stop();
    CHECK(classify([&] { t5.mark(NodeHealth::Healthy); }) == ErrorClass::UNAVAILABLE);
    CHECK(classify([&] { (void)fx.network->fetch_postbox_shares(fx.token(), meter); }) ==
          ErrorClass::INSUFFICIENT_NODES);
}

TEST_CASE("wire mode: injected node delay shows up on the latency meter") {
    WireFixture fx(20.0, 9, 5);  // 20 ms per node contact
    Session s = fx.session();
    (void)fx.kms->signup(s, fx.token(), fx.rng);

    // signin never contacts nodes: meter stays near zero
    Session si = fx.session();
    (void)fx.kms->signin(si, fx.token());
    CHECK(si.meter.latency_ms < 20.0);

    // a threshold fetch pays the delay at least t times
    Session sf = fx.session();
    auto shares = fx.network->fetch_postbox_shares(fx.token(), sf.meter);
    CHECK(shares.size() == 5);
    CHECK(sf.meter.latency_ms >= 5 * 20.0);
}
