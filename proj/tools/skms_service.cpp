// Localhost wire daemon: runs one simulated node or the server store behind
// the binary frame protocol. Used by wire-mode CLI sessions and the
// acceptance harness, which spawns one process per node plus one for the
// server.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "skms/wire_service.hpp"

using namespace skms;

namespace {

volatile std::sig_atomic_t g_stop = 0;
void handle_signal(int) { g_stop = 1; }

Bytes read_idp_secret(const std::filesystem::path& state_dir) {
    std::ifstream in(state_dir / "idp.secret");
    if (!in) {
        std::cerr << "error: UNAVAILABLE: missing idp.secret in " << state_dir << "\n";
        std::exit(4);
    }
    std::string hex;
    in >> hex;
    return from_hex(hex);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"skms wire service"};
    std::string role;
    std::string state_dir = "skms-state";
    unsigned index = 0;
    unsigned node_count = 9;
    unsigned threshold = 5;
    uint16_t port = 0;
    double delay_ms = 0.0;
    uint64_t seed = 0;

    app.add_option("--role", role, "node or server")->required()
        ->check(CLI::IsMember({"node", "server"}));
    app.add_option("--state-dir", state_dir, "state directory (holds idp.secret)");
    app.add_option("--index", index, "node index (1-based), role=node");
    app.add_option("--node-count", node_count, "network size, role=node");
    app.add_option("--threshold", threshold, "dkg threshold, role=node");
    app.add_option("--port", port, "listen port; 0 picks an ephemeral port");
    app.add_option("--delay-ms", delay_ms, "artificial per-request delay, role=node");
    app.add_option("--seed", seed, "deterministic rng seed (0 = system entropy)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);

    std::filesystem::path dir(state_dir);
    Bytes idp_secret = read_idp_secret(dir);

    try {
        std::unique_ptr<wire::WireServer> server;
        std::shared_ptr<Node> node;
        std::filesystem::path node_state;

        if (role == "node") {
            if (index < 1) {
                std::cerr << "error: INVALID_ARGUMENT: --index required for role=node\n";
                return 2;
            }
            node_state = dir / ("node-" + std::to_string(index) + ".json");
            if (std::filesystem::exists(node_state)) {
                std::ifstream in(node_state);
                node = Node::from_json(nlohmann::json::parse(in), idp_secret);
            } else {
                node = std::make_shared<Node>(index, node_count, threshold, idp_secret,
                                              system_clock_seconds, seed);
            }
            auto save = [node, node_state] {
                static std::mutex m;
                std::lock_guard g(m);
                std::ofstream out(node_state, std::ios::trunc);
                out << node->to_json().dump();
            };
            save();
            server = wire::serve_node(node, port, delay_ms, save);
        } else {
            auto store = ServerStore::open(dir / "server", idp_secret, system_clock_seconds,
                                           seed);
            server = wire::serve_server_store(store, port);
        }

        std::cout << "LISTENING " << server->port() << std::endl;

        while (!g_stop) {
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
        server->stop();
    } catch (const KmsError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
