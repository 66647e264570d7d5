// Desk-scale driver for the key-backup flows: signup, signin, signing,
// rotation, resharing, device recovery, disaster recovery, seed export and
// chain derivation, against either the in-process simulated network or
// localhost wire services.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "skms/kms.hpp"
#include "skms/wire_client.hpp"

using namespace skms;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliConfig {
    std::string profile = "test";  // test|production
    uint64_t seed = 0;             // accepted only in the test profile
    unsigned node_count = 9;
    unsigned threshold = 5;
    double node_latency_ms = 0.0;
    bool wire = false;
    std::string server_addr;                // host:port
    std::vector<std::string> node_addrs;    // host:port per node
    std::string idp_url = "https://idp.test";
};

int exit_code_for(ErrorClass ec) {
    switch (ec) {
        case ErrorClass::BAD_SIGNATURE:
        case ErrorClass::EXPIRED:
        case ErrorClass::AUDIENCE_MISMATCH:
            return 3;
        case ErrorClass::INSUFFICIENT_NODES:
        case ErrorClass::INSUFFICIENT_STORAGES:
        case ErrorClass::UNAVAILABLE:
        case ErrorClass::NOT_FOUND:
        case ErrorClass::UNPROVISIONED:
            return 4;
        case ErrorClass::AUTH_FAILURE:
        case ErrorClass::EPOCH_MISMATCH:
        case ErrorClass::MALFORMED:
            return 5;
        default:
            return 2;
    }
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    size_t b = s.find_last_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos <= s.size()) {
        size_t comma = s.find(',', pos);
        std::string item = trim(s.substr(pos, comma == std::string::npos ? comma : comma - pos));
        if (!item.empty()) out.push_back(item);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

// Simple key=value config file; '#' starts a comment line.
void load_config_file(const fs::path& path, CliConfig& cfg) {
    std::ifstream in(path);
    if (!in) raise(ErrorClass::INVALID_ARGUMENT, "cannot read config " + path.string());
    std::string line;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos) raise(ErrorClass::INVALID_ARGUMENT, "bad config line: " + t);
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));
        if (key == "profile") cfg.profile = val;
        else if (key == "seed") cfg.seed = std::stoull(val);
        else if (key == "node_count") cfg.node_count = std::stoul(val);
        else if (key == "threshold") cfg.threshold = std::stoul(val);
        else if (key == "node_latency_ms") cfg.node_latency_ms = std::stod(val);
        else if (key == "wire") cfg.wire = (val == "true" || val == "1" || val == "yes");
        else if (key == "server_addr") cfg.server_addr = val;
        else if (key == "node_addrs") cfg.node_addrs = split_list(val);
        else if (key == "idp_url") cfg.idp_url = val;
        else raise(ErrorClass::INVALID_ARGUMENT, "unknown config key: " + key);
    }
}

std::pair<std::string, uint16_t> parse_addr(const std::string& addr) {
    size_t colon = addr.rfind(':');
    if (colon == std::string::npos) {
        raise(ErrorClass::INVALID_ARGUMENT, "address must be host:port: " + addr);
    }
    return {addr.substr(0, colon), static_cast<uint16_t>(std::stoul(addr.substr(colon + 1)))};
}

// Holds everything a command needs: stores, clients, idp, seeded rng stream.
struct Env {
    fs::path state_dir;
    CliConfig cfg;
    json meta;
    Bytes idp_secret;
    std::unique_ptr<MockIdp> idp;

    std::unique_ptr<Network> network;  // in-process mode only
    std::shared_ptr<NodeNetworkClient> network_client;
    std::shared_ptr<ServerStore> server_store;  // in-process mode only
    std::shared_ptr<ServerStoreClient> server_client;
    std::shared_ptr<DeviceStore> devices;
    std::unique_ptr<Kms> kms;
    std::unique_ptr<EntropySource> rng;

    fs::path meta_path() const { return state_dir / "meta.json"; }
    fs::path network_path() const { return state_dir / "network.json"; }
    fs::path session_path() const { return state_dir / "session.json"; }

    void save_meta() {
        std::ofstream out(meta_path(), std::ios::trunc);
        out << meta.dump(2);
    }
    void save_network() {
        if (!network) return;
        std::ofstream out(network_path(), std::ios::trunc);
        out << network->to_json().dump();
    }
    void save_session(const std::string& command, const CallMeter& meter) {
        json j{{"command", command},
               {"node_fetches", meter.node_fetches},
               {"server_calls", meter.server_calls},
               {"latency_ms", meter.latency_ms}};
        std::ofstream out(session_path(), std::ios::trunc);
        out << j.dump(2);
    }

    std::string token_for(const std::string& user) {
        Identity id{cfg.idp_url, user};
        return idp->issue_token(id, kKmsAudience, 3600, system_clock_seconds());
    }
};

// Per-command deterministic stream: advance a persisted counter so repeated
// runs with the same seed replay the exact byte sequence.
std::unique_ptr<EntropySource> make_command_rng(Env& env) {
    if (env.cfg.seed == 0) return std::make_unique<SystemEntropy>();
    uint64_t counter = env.meta.value("rng_counter", 0ull);
    env.meta["rng_counter"] = counter + 1;
    env.save_meta();
    Bytes key;
    append_u64be(key, env.cfg.seed);
    append_u64be(key, counter);
    key.push_back('c');
    key.push_back('l');
    key.push_back('i');
    Digest32 d = sha256(key);
    return std::make_unique<SeededEntropy>(d);
}

void open_env(Env& env, bool expect_initialized = true) {
    if (!fs::exists(env.meta_path())) {
        if (expect_initialized) {
            raise(ErrorClass::INVALID_ARGUMENT,
                  "state dir not initialized; run init-network first");
        }
        return;
    }
    std::ifstream in(env.meta_path());
    env.meta = json::parse(in);
    // config file values may be overridden by what init recorded
    env.cfg.profile = env.meta.value("profile", env.cfg.profile);
    env.cfg.seed = env.meta.value("seed", env.cfg.seed);
    env.cfg.node_count = env.meta.value("node_count", env.cfg.node_count);
    env.cfg.threshold = env.meta.value("threshold", env.cfg.threshold);
    env.cfg.node_latency_ms = env.meta.value("node_latency_ms", env.cfg.node_latency_ms);
    env.cfg.idp_url = env.meta.value("idp_url", env.cfg.idp_url);

    std::ifstream sec(env.state_dir / "idp.secret");
    std::string hex;
    sec >> hex;
    env.idp_secret = from_hex(hex);
    env.idp = std::make_unique<MockIdp>(env.idp_secret);

    if (env.cfg.wire) {
        if (env.cfg.server_addr.empty() || env.cfg.node_addrs.empty()) {
            raise(ErrorClass::INVALID_ARGUMENT,
                  "wire mode needs server_addr and node_addrs in the config");
        }
        std::vector<std::shared_ptr<NodeTransport>> transports;
        for (size_t i = 0; i < env.cfg.node_addrs.size(); ++i) {
            auto [host, port] = parse_addr(env.cfg.node_addrs[i]);
            transports.push_back(std::make_shared<wire::WireNodeTransport>(
                static_cast<unsigned>(i + 1), host, port));
        }
        env.network_client =
            std::make_shared<NetworkOrchestrator>(env.cfg.threshold, std::move(transports));
        auto [shost, sport] = parse_addr(env.cfg.server_addr);
        env.server_client = std::make_shared<wire::WireServerClient>(shost, sport);
    } else {
        std::ifstream net_in(env.network_path());
        if (!net_in) raise(ErrorClass::INVALID_ARGUMENT, "missing network state");
        env.network = Network::from_json(json::parse(net_in), env.idp_secret);
        env.network_client = env.network->client_ptr();
        env.server_store = ServerStore::open(env.state_dir / "server", env.idp_secret,
                                             system_clock_seconds, env.cfg.seed);
        env.server_client = std::make_shared<InProcessServerClient>(env.server_store);
    }
    env.devices = std::make_shared<DeviceStore>(env.state_dir / "devices");
    env.kms = std::make_unique<Kms>(env.network_client, env.server_client, env.devices);
    env.rng = make_command_rng(env);
}

std::string fingerprint(std::span<const uint8_t> data) {
    Digest32 d = sha256(data);
    return to_hex(std::span(d.data(), 8));
}

std::string fingerprint(const std::string& s) { return fingerprint(str_bytes(s)); }

void emit(bool as_json, const json& payload, const std::string& text) {
    if (as_json) {
        std::cout << payload.dump(2) << "\n";
    } else {
        std::cout << text;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"skms: threshold key-backup flows at desk scale"};
    app.require_subcommand(1);

    std::string state_dir = "skms-state";
    std::string config_file;
    bool as_json = false;
    uint64_t seed_flag = 0;
    bool seed_given = false;
    app.add_option("--state-dir", state_dir, "state directory");
    app.add_option("--config", config_file, "key=value config file");
    app.add_flag("--json", as_json, "machine-readable output");
    auto* seed_opt = app.add_option("--seed", seed_flag, "deterministic seed (test profile only)");

    // init-network
    auto* init = app.add_subcommand("init-network", "create the state dir and node network");
    unsigned init_nodes = 9, init_threshold = 5;
    double init_latency = 0.0;
    std::string init_profile = "test";
    init->add_option("--nodes", init_nodes, "node count");
    init->add_option("--threshold", init_threshold, "dkg threshold");
    init->add_option("--latency-ms", init_latency, "simulated per-node latency");
    init->add_option("--profile", init_profile, "test or production")
        ->check(CLI::IsMember({"test", "production"}));

    std::string user, device = "device-1", new_device, digest_hex, path_str, node_state_str;
    unsigned node_index = 0;
    bool reveal = false, assume_server_dead = false;

    auto add_user_device = [&](CLI::App* cmd, bool need_device = true) {
        cmd->add_option("--user", user, "verifier_id of the user")->required();
        if (need_device) cmd->add_option("--device", device, "device id");
    };

    auto* signup = app.add_subcommand("signup", "enroll a user and create the vault");
    add_user_device(signup);
    auto* signin = app.add_subcommand("signin", "reconstruct the key from server+device");
    add_user_device(signin);
    auto* sign = app.add_subcommand("sign", "sign a 32-byte digest");
    add_user_device(sign);
    sign->add_option("--digest-hex", digest_hex, "32-byte digest, hex")->required();
    auto* rotate = app.add_subcommand("rotate", "rotate the encryption keypair");
    add_user_device(rotate);
    auto* reshare = app.add_subcommand("reshare", "fresh 2-of-3 polynomial, same key");
    add_user_device(reshare);
    auto* recover = app.add_subcommand("recover-device", "provision a replacement device");
    add_user_device(recover, false);
    recover->add_option("--new-device", new_device, "replacement device id")->required();
    auto* disaster = app.add_subcommand("disaster-recover", "server-independent seed recovery");
    add_user_device(disaster);
    disaster->add_flag("--assume-server-dead", assume_server_dead,
                       "skip the live-server guard");
    disaster->add_flag("--reveal", reveal, "print the mnemonic instead of a fingerprint");
    auto* export_seed = app.add_subcommand("export-seed", "BIP-39 mnemonic of the master key");
    add_user_device(export_seed);
    export_seed->add_flag("--reveal", reveal, "print the mnemonic instead of a fingerprint");
    auto* derive = app.add_subcommand("derive", "BIP-32 child derivation");
    add_user_device(derive);
    derive->add_option("--path", path_str, "derivation path, e.g. m/44'/60'/0'/0/0")->required();
    derive->add_flag("--reveal", reveal, "print xprv as well");
    auto* mark = app.add_subcommand("mark-node", "set a node's health");
    mark->add_option("--index", node_index, "node index (1-based)")->required();
    mark->add_option("--state", node_state_str, "healthy|dead|compromised")->required()
        ->check(CLI::IsMember({"healthy", "dead", "compromised"}));
    auto* rotate_salt = app.add_subcommand("rotate-salt", "rotate the at-rest epoch secret");
    auto* status = app.add_subcommand("status", "counters, epochs, node health");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        Env env;
        env.state_dir = state_dir;
        if (!config_file.empty()) load_config_file(config_file, env.cfg);
        if (seed_opt->count() > 0) {
            seed_given = true;
            env.cfg.seed = seed_flag;
        }

        if (init->parsed()) {
            env.cfg.profile = init_profile;
            if (env.cfg.seed != 0 && env.cfg.profile != "test") {
                raise(ErrorClass::INVALID_ARGUMENT, "seeds are accepted only in the test profile");
            }
            fs::create_directories(env.state_dir);
            // idp secret: seeded in the test profile for reproducible tokens
            Bytes secret;
            if (env.cfg.seed != 0) {
                SeededEntropy r(env.cfg.seed ^ 0x6964702d73656372ull);
                secret = r.bytes(32);
            } else {
                SystemEntropy r;
                secret = r.bytes(32);
            }
            {
                std::ofstream out(env.state_dir / "idp.secret", std::ios::trunc);
                out << to_hex(secret) << "\n";
            }
            env.meta = json{{"profile", env.cfg.profile},
                            {"seed", env.cfg.seed},
                            {"node_count", init_nodes},
                            {"threshold", init_threshold},
                            {"node_latency_ms", init_latency},
                            {"idp_url", env.cfg.idp_url},
                            {"rng_counter", 0}};
            env.save_meta();
            if (!env.cfg.wire) {
                NetworkConfig ncfg{init_nodes, init_threshold, init_latency};
                Network network(ncfg, secret, system_clock_seconds, env.cfg.seed);
                std::ofstream out(env.network_path(), std::ios::trunc);
                out << network.to_json().dump();
            }
            emit(as_json,
                 json{{"ok", true},
                      {"nodes", init_nodes},
                      {"threshold", init_threshold},
                      {"profile", env.cfg.profile}},
                 "initialized network: " + std::to_string(init_nodes) + " nodes, threshold " +
                     std::to_string(init_threshold) + ", profile " + env.cfg.profile + "\n");
            return 0;
        }

        open_env(env);
        if (seed_given && env.cfg.profile != "test") {
            raise(ErrorClass::INVALID_ARGUMENT, "seeds are accepted only in the test profile");
        }

        if (signup->parsed()) {
            Session s{{env.cfg.idp_url, user}, device, {}};
            EcPoint pub = env.kms->signup(s, env.token_for(user), *env.rng);
            env.save_network();
            env.save_session("signup", s.meter);
            std::string pub_hex = to_hex(pub.encode_compressed());
            emit(as_json,
                 json{{"public_key", pub_hex},
                      {"node_fetches", s.meter.node_fetches},
                      {"server_calls", s.meter.server_calls}},
                 "enrolled " + user + "\npublic_key " + pub_hex + "\n");
            return 0;
        }
        if (signin->parsed()) {
            Session s{{env.cfg.idp_url, user}, device, {}};
            KeyHandle h = env.kms->signin(s, env.token_for(user));
            env.save_session("signin", s.meter);
            std::string pub_hex = to_hex(h.public_point().encode_compressed());
            emit(as_json,
                 json{{"public_key", pub_hex},
                      {"node_fetches", s.meter.node_fetches},
                      {"server_calls", s.meter.server_calls}},
                 "signed in " + user + "\npublic_key " + pub_hex + "\nnode_fetches " +
                     std::to_string(s.meter.node_fetches) + "\n");
            return 0;
        }
        if (sign->parsed()) {
            Bytes digest;
            try {
                digest = from_hex(digest_hex);
            } catch (const KmsError&) {
                raise(ErrorClass::INVALID_ARGUMENT, "digest must be 32 bytes of hex");
            }
            if (digest.size() != 32) {
                raise(ErrorClass::INVALID_ARGUMENT, "digest must be 32 bytes of hex");
            }
            Digest32 d{};
            std::copy(digest.begin(), digest.end(), d.begin());
            Session s{{env.cfg.idp_url, user}, device, {}};
            Signature sig = env.kms->sign_transaction(s, env.token_for(user), d);
            env.save_session("sign", s.meter);
            std::string sig_hex = to_hex(sig.encode());
            emit(as_json,
                 json{{"signature", sig_hex}, {"node_fetches", s.meter.node_fetches}},
                 "signature " + sig_hex + "\n");
            return 0;
        }
        if (rotate->parsed()) {
            Session s{{env.cfg.idp_url, user}, device, {}};
            uint32_t epoch = env.kms->rotate_ekp(s, env.token_for(user), *env.rng);
            env.save_network();
            env.save_session("rotate", s.meter);
            emit(as_json, json{{"vault_epoch", epoch}},
                 "rotated; vault_epoch " + std::to_string(epoch) + "\n");
            return 0;
        }
        if (reshare->parsed()) {
            Session s{{env.cfg.idp_url, user}, device, {}};
            env.kms->reshare_key(s, env.token_for(user), *env.rng);
            env.save_network();
            env.save_session("reshare", s.meter);
            emit(as_json, json{{"ok", true}}, "reshared; public key unchanged\n");
            return 0;
        }
        if (recover->parsed()) {
            Session s{{env.cfg.idp_url, user}, new_device, {}};
            env.kms->recover_device(s, env.token_for(user), new_device, *env.rng);
            env.save_network();
            env.save_session("recover-device", s.meter);
            emit(as_json,
                 json{{"new_device", new_device}, {"node_fetches", s.meter.node_fetches}},
                 "recovered onto device " + new_device + "\n");
            return 0;
        }
        if (disaster->parsed()) {
            if (!assume_server_dead) {
                // guard: refuse while the server is demonstrably alive
                bool alive = true;
                try {
                    CallMeter probe;
                    (void)env.server_client->epoch(probe);
                } catch (const KmsError&) {
                    alive = false;
                }
                if (alive) {
                    std::cerr << "error: INVALID_ARGUMENT: server is reachable; pass "
                                 "--assume-server-dead to run the death route\n";
                    return 2;
                }
            } else if (env.server_store) {
                env.server_store->set_available(false);  // simulate the outage
            }
            Session s{{env.cfg.idp_url, user}, device, {}};
            std::string mnemonic = env.kms->disaster_recover(s, env.token_for(user));
            env.save_session("disaster-recover", s.meter);
            json j{{"server_calls", s.meter.server_calls},
                   {"mnemonic_fingerprint", fingerprint(mnemonic)}};
            std::string text = "recovered seed; fingerprint " + fingerprint(mnemonic) +
                               "\nserver_calls " + std::to_string(s.meter.server_calls) + "\n";
            if (reveal) {
                j["mnemonic"] = mnemonic;
                text = mnemonic + "\n";
            }
            emit(as_json, j, text);
            return 0;
        }
        if (export_seed->parsed()) {
            Session s{{env.cfg.idp_url, user}, device, {}};
            KeyHandle h = env.kms->signin(s, env.token_for(user));
            std::string mnemonic = Kms::export_seed_phrase(h);
            env.save_session("export-seed", s.meter);
            json j{{"mnemonic_fingerprint", fingerprint(mnemonic)}};
            std::string text = "seed fingerprint " + fingerprint(mnemonic) + "\n";
            if (reveal) {
                j["mnemonic"] = mnemonic;
                text = mnemonic + "\n";
            }
            emit(as_json, j, text);
            return 0;
        }
        if (derive->parsed()) {
            Session s{{env.cfg.idp_url, user}, device, {}};
            KeyHandle h = env.kms->signin(s, env.token_for(user));
            auto path = bip32::parse_path(path_str);
            bip32::ExtendedKey child = Kms::derive_chain_key(h, path);
            env.save_session("derive", s.meter);
            std::string xpub = child.to_xpub();
            json j{{"path", path_str}, {"xpub", xpub}};
            std::string text = "path " + path_str + "\nxpub " + xpub + "\n";
            if (reveal) {
                j["xprv"] = child.to_xprv();
                text += "xprv " + child.to_xprv() + "\n";
            }
            emit(as_json, j, text);
            return 0;
        }
        if (mark->parsed()) {
            NodeHealth health = node_state_str == "healthy"  ? NodeHealth::Healthy
                                : node_state_str == "dead"   ? NodeHealth::Dead
                                                             : NodeHealth::Compromised;
            if (env.cfg.wire) {
                if (node_index < 1 || node_index > env.cfg.node_addrs.size()) {
                    raise(ErrorClass::INVALID_ARGUMENT, "bad node index");
                }
                auto [host, port] = parse_addr(env.cfg.node_addrs[node_index - 1]);
                wire::WireNodeTransport t(node_index, host, port);
                t.mark(health);
            } else {
                env.network->mark_node(node_index, health);
                env.save_network();
            }
            emit(as_json, json{{"index", node_index}, {"state", node_state_str}},
                 "node " + std::to_string(node_index) + " -> " + node_state_str + "\n");
            return 0;
        }
        if (rotate_salt->parsed()) {
            CallMeter meter;
            uint32_t epoch = env.server_client->rotate_at_rest(meter);
            env.save_session("rotate-salt", meter);
            emit(as_json, json{{"at_rest_epoch", epoch}},
                 "at-rest epoch " + std::to_string(epoch) + "\n");
            return 0;
        }
        if (status->parsed()) {
            json session = json::object();
            if (fs::exists(env.session_path())) {
                std::ifstream in(env.session_path());
                session = json::parse(in);
            }
            uint32_t at_rest_epoch = 0;
            bool server_up = true;
            try {
                CallMeter probe;
                at_rest_epoch = env.server_client->epoch(probe);
            } catch (const KmsError&) {
                server_up = false;
            }
            json nodes = json::array();
            if (!env.cfg.wire && env.network) {
                for (unsigned i = 1; i <= env.cfg.node_count; ++i) {
                    NodeHealth h = env.network->node(i).health();
                    nodes.push_back(json{{"index", i},
                                         {"state", h == NodeHealth::Healthy       ? "healthy"
                                                   : h == NodeHealth::Dead        ? "dead"
                                                                                  : "compromised"}});
                }
            }
            json j{{"last_flow", session},
                   {"at_rest_epoch", at_rest_epoch},
                   {"server_up", server_up},
                   {"nodes", nodes}};
            std::string text = "last flow: " + session.value("command", std::string("none")) +
                               "\nnode_fetches " +
                               std::to_string(session.value("node_fetches", 0)) +
                               "\nserver_calls " +
                               std::to_string(session.value("server_calls", 0)) +
                               "\nlatency_ms " +
                               std::to_string(session.value("latency_ms", 0.0)) +
                               "\nat_rest_epoch " + std::to_string(at_rest_epoch) +
                               "\nserver_up " + (server_up ? "true" : "false") + "\n";
            for (const auto& n : nodes) {
                text += "node " + std::to_string(n.at("index").get<unsigned>()) + " " +
                        n.at("state").get<std::string>() + "\n";
            }
            emit(as_json, j, text);
            return 0;
        }
        raise(ErrorClass::INVALID_ARGUMENT, "no subcommand");
    } catch (const KmsError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.error_class());
    } catch (const std::exception& e) {
        std::cerr << "error: INTERNAL: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
