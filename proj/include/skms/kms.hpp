#pragma once

#include <memory>
#include <mutex>
#include <string>

#include "skms/bip32.hpp"
#include "skms/bip39.hpp"
#include "skms/curve_crypto.hpp"
#include "skms/meter.hpp"
#include "skms/node_network.hpp"
#include "skms/storage.hpp"

namespace skms {

// Fixed x-coordinate convention for the 2-of-3 scheme.
constexpr unsigned kNetworkShareX = 1;
constexpr unsigned kServerShareX = 2;
constexpr unsigned kDeviceShareX = 3;

// Ephemeral reconstructed key. Confined to the creating context; the scalar
// is wiped when the handle is dropped.
class KeyHandle {
public:
    explicit KeyHandle(FieldElement scalar);
    KeyHandle(KeyHandle&&) = default;
    KeyHandle& operator=(KeyHandle&&) = default;
    KeyHandle(const KeyHandle&) = delete;
    KeyHandle& operator=(const KeyHandle&) = delete;
    ~KeyHandle();

    bool live() const { return !scalar_.is_zero(); }
    const EcPoint& public_point() const { return public_point_; }
    Signature sign(const Digest32& digest) const;  // throws when wiped
    Bytes entropy32() const;
    void wipe();

private:
    FieldElement scalar_;
    EcPoint public_point_;
};

// Per-flow context: who, which device, and the message/latency meters.
// Holds no secret material by construction.
struct Session {
    Identity identity;
    std::string device_id;
    CallMeter meter;
};

// Orchestrates the flows against the three storages. One flow at a time per
// identity; flows for distinct identities run concurrently.
class Kms {
public:
    Kms(std::shared_ptr<NodeNetworkClient> network, std::shared_ptr<ServerStoreClient> server,
        std::shared_ptr<DeviceStore> devices);

    EcPoint signup(Session& session, const std::string& token, EntropySource& rng);
    KeyHandle signin(Session& session, const std::string& token);
    Signature sign_transaction(Session& session, const std::string& token,
                               const Digest32& digest);
    uint32_t rotate_ekp(Session& session, const std::string& token, EntropySource& rng);
    void reshare_key(Session& session, const std::string& token, EntropySource& rng);
    void recover_device(Session& session, const std::string& token,
                        const std::string& new_device_id, EntropySource& rng);
    // Server-independent path; returns the mnemonic. Performs zero server
    // calls by construction.
    std::string disaster_recover(Session& session, const std::string& token);

    static std::string export_seed_phrase(const KeyHandle& handle);
    static bip32::ExtendedKey derive_chain_key(const KeyHandle& handle,
                                               const std::vector<uint32_t>& path);

private:
    struct StorageView;  // one storage's vault artifacts

    std::shared_ptr<std::mutex> identity_lock(const Identity& identity);
    uint32_t rotate_ekp_locked(Session& session, const std::string& token, EntropySource& rng);
    StorageView fetch_network_view(Session& session, const std::string& token,
                                   bool need_postbox_scalar);
    StorageView fetch_server_view(Session& session, const std::string& token);
    StorageView fetch_device_view(Session& session);
    void place_vault(Session& session, const std::string& token, uint32_t vault_epoch,
                     const EcPoint& postbox_pub, const EncKeypair& ekp,
                     const std::vector<SharePoint>& s_shares,
                     const std::vector<SharePoint>& e_shares, EntropySource& rng);

    std::shared_ptr<NodeNetworkClient> network_;
    std::shared_ptr<ServerStoreClient> server_;
    std::shared_ptr<DeviceStore> devices_;
    std::mutex locks_mutex_;
    std::map<Identity, std::shared_ptr<std::mutex>> identity_locks_;
};

// Vault payload codecs, shared with the wire services and tests.
Bytes build_sealed_payload(uint32_t vault_epoch, const Bytes& sealed_wire);
std::pair<uint32_t, Bytes> parse_sealed_payload(const Bytes& payload);
Bytes build_ekp_payload(uint32_t vault_epoch, const FieldElement& y);
std::pair<uint32_t, FieldElement> parse_ekp_payload(const Bytes& payload);
Bytes build_network_vault(uint32_t vault_epoch, const Bytes& sealed_wire, const FieldElement& y);
struct NetworkVault {
    uint32_t vault_epoch = 0;
    Bytes sealed_share_wire;
    FieldElement ekp_share_y;
};
NetworkVault parse_network_vault(const Bytes& payload);

}  // namespace skms
