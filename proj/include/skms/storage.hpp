#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <shared_mutex>

#include "skms/auth.hpp"
#include "skms/hash.hpp"
#include "skms/meter.hpp"
#include "skms/node_network.hpp"
#include "skms/rng.hpp"

namespace skms {

enum class VaultSlot : uint8_t { PRIVKEY_SHARD = 1, EKP_SHARD = 2 };

struct VaultRecord {
    Identity identity;
    VaultSlot slot = VaultSlot::PRIVKEY_SHARD;
    uint32_t at_rest_epoch = 0;
    std::array<uint8_t, kAeadNonceLen> nonce{};
    Bytes at_rest_ciphertext;  // AEAD ciphertext
    std::array<uint8_t, kAeadTagLen> tag{};
};

// Token-gated server storage, encrypted at rest under a per-epoch secret
// derived from a master secret on an operator-driven rotate policy.
// Persists to a record-framed binary log (version header byte, u32-length
// frames) that is compacted on rotation; the master secret and epoch live in
// a sidecar file standing in for the external secret manager.
class ServerStore {
public:
    static std::shared_ptr<ServerStore> open(const std::filesystem::path& dir, Bytes idp_secret,
                                             ClockFn clock = system_clock_seconds,
                                             uint64_t seed = 0);

    void put(const std::string& token, VaultSlot slot, const Bytes& payload);
    Bytes get(const std::string& token, VaultSlot slot);
    // Replaces both slots in one exclusive step.
    void put_vault(const std::string& token, const Bytes& privkey_payload,
                   const Bytes& ekp_payload);
    void delete_vault(const std::string& token);
    bool has_vault(const std::string& token);
    Bytes issue_entropy(const std::string& token);

    // Re-encrypts every record under the next epoch secret; retires the old
    // secret. Empty store rotation is a no-op re-key.
    uint32_t rotate_at_rest();
    uint32_t epoch() const;
    size_t record_count() const;

    // Disaster/fault injection: an unavailable store refuses every call.
    void set_available(bool available);
    bool available() const;

    // Adversary-snapshot hooks for compromise drills: the persisted
    // ciphertext records and the active epoch secret.
    std::vector<VaultRecord> raw_records() const;
    Digest32 current_epoch_secret() const;
    static Digest32 derive_epoch_secret(const Bytes& master_secret, uint32_t epoch);
    static Digest32 derive_record_key(const Digest32& epoch_secret, const Identity& identity,
                                      VaultSlot slot);

private:
    ServerStore(std::filesystem::path dir, Bytes idp_secret, ClockFn clock, uint64_t seed);

    Identity identity_from_token(const std::string& token) const;
    void require_available() const;
    VaultRecord encrypt_record(const Identity& id, VaultSlot slot, const Bytes& payload);
    Bytes decrypt_record(const VaultRecord& rec) const;
    void persist_all() const;  // compacting rewrite
    void append_record(const VaultRecord& rec) const;
    void load();

    std::filesystem::path dir_;
    TokenVerifier verifier_;
    ClockFn clock_;
    std::unique_ptr<EntropySource> rng_;
    Bytes master_secret_;
    uint32_t epoch_ = 1;
    bool available_ = true;
    mutable std::shared_mutex mutex_;
    std::map<std::pair<Identity, uint8_t>, VaultRecord> records_;
};

// Local device storage: one file per device_id, two slots when provisioned.
// Possession of the device (directory) is the factor; no token involved.
class DeviceStore {
public:
    explicit DeviceStore(std::filesystem::path root_dir);

    void put(const std::string& device_id, VaultSlot slot, const Bytes& payload);
    Bytes get(const std::string& device_id, VaultSlot slot);
    // Writes both slots in one step (provisioning or replacement).
    void put_all(const std::string& device_id, const Bytes& privkey_payload,
                 const Bytes& ekp_payload);
    bool provisioned(const std::string& device_id) const;
    void remove(const std::string& device_id);

private:
    std::filesystem::path device_path(const std::string& device_id) const;
    std::filesystem::path root_;
    mutable std::mutex mutex_;
};

// The flow-facing server interface; the wire client implements the same
// surface over TCP. Calls tick the server_calls meter.
class ServerStoreClient {
public:
    virtual ~ServerStoreClient() = default;
    virtual Bytes issue_entropy(const std::string& token, CallMeter& meter) = 0;
    virtual void put_vault(const std::string& token, const Bytes& privkey_payload,
                           const Bytes& ekp_payload, CallMeter& meter) = 0;
    virtual Bytes get_shard(const std::string& token, CallMeter& meter) = 0;
    virtual Bytes get_ekp(const std::string& token, CallMeter& meter) = 0;
    virtual bool has_vault(const std::string& token, CallMeter& meter) = 0;
    virtual void delete_vault(const std::string& token, CallMeter& meter) = 0;
    virtual uint32_t rotate_at_rest(CallMeter& meter) = 0;
    virtual uint32_t epoch(CallMeter& meter) = 0;
};

class InProcessServerClient final : public ServerStoreClient {
public:
    explicit InProcessServerClient(std::shared_ptr<ServerStore> store) : store_(std::move(store)) {}

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
    std::shared_ptr<ServerStore> store_;
};

}  // namespace skms
