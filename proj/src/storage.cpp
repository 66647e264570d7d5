#include "skms/storage.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "skms/errors.hpp"

namespace skms {

namespace {

constexpr uint8_t kLogVersion = 0x01;
constexpr uint8_t kFramePut = 0x01;
constexpr uint8_t kFrameDelete = 0x02;
constexpr const char* kLogName = "server_store.bin";
constexpr const char* kSecretName = "server_secret.json";

Bytes read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) raise(ErrorClass::UNAVAILABLE, "cannot read " + p.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& p, std::span<const uint8_t> data) {
    std::filesystem::path tmp = p;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) raise(ErrorClass::UNAVAILABLE, "cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size()));
    }
    std::filesystem::rename(tmp, p);
}

Bytes encode_record(uint8_t kind, const VaultRecord& rec) {
    Bytes frame;
    frame.push_back(kind);
    append_length_prefixed(frame, str_bytes(rec.identity.verifier_url));
    append_length_prefixed(frame, str_bytes(rec.identity.verifier_id));
    frame.push_back(static_cast<uint8_t>(rec.slot));
    if (kind == kFramePut) {
        append_u32be(frame, rec.at_rest_epoch);
        frame.insert(frame.end(), rec.nonce.begin(), rec.nonce.end());
        frame.insert(frame.end(), rec.tag.begin(), rec.tag.end());
        append_length_prefixed(frame, rec.at_rest_ciphertext);
    }
    return frame;
}

}  // namespace

ServerStore::ServerStore(std::filesystem::path dir, Bytes idp_secret, ClockFn clock, uint64_t seed)
    : dir_(std::move(dir)), verifier_(std::move(idp_secret)), clock_(std::move(clock)) {
    if (seed != 0) {
        rng_ = std::make_unique<SeededEntropy>(seed ^ 0x5352564552535452ull);  // distinct stream
    } else {
        rng_ = std::make_unique<SystemEntropy>();
    }
}

std::shared_ptr<ServerStore> ServerStore::open(const std::filesystem::path& dir, Bytes idp_secret,
                                               ClockFn clock, uint64_t seed) {
    std::filesystem::create_directories(dir);
    auto store = std::shared_ptr<ServerStore>(
        new ServerStore(dir, std::move(idp_secret), std::move(clock), seed));
    store->load();
    return store;
}

void ServerStore::load() {
    std::filesystem::path secret_path = dir_ / kSecretName;
    if (std::filesystem::exists(secret_path)) {
        auto j = nlohmann::json::parse(bytes_str(read_file(secret_path)));
        master_secret_ = from_hex(j.at("master_secret").get<std::string>());
        epoch_ = j.at("epoch").get<uint32_t>();
    } else {
        master_secret_ = rng_->bytes(32);
        epoch_ = 1;
        nlohmann::json j{{"master_secret", to_hex(master_secret_)}, {"epoch", epoch_}};
        write_file(secret_path, str_bytes(j.dump(2)));
    }

    std::filesystem::path log_path = dir_ / kLogName;
    if (!std::filesystem::exists(log_path)) {
        Bytes header{kLogVersion};
        write_file(log_path, header);
        return;
    }
    Bytes data = read_file(log_path);
    ByteReader r(data);
    if (r.u8() != kLogVersion) raise(ErrorClass::VERSION_ERROR, "unknown store log version");
    while (!r.done()) {
        Bytes frame = r.length_prefixed();
        ByteReader fr(frame);
        uint8_t kind = fr.u8();
        VaultRecord rec;
        rec.identity.verifier_url = bytes_str(fr.length_prefixed());
        rec.identity.verifier_id = bytes_str(fr.length_prefixed());
        rec.slot = static_cast<VaultSlot>(fr.u8());
        auto key = std::make_pair(rec.identity, static_cast<uint8_t>(rec.slot));
        if (kind == kFrameDelete) {
            records_.erase(key);
            continue;
        }
        if (kind != kFramePut) raise(ErrorClass::MALFORMED, "unknown log frame kind");
        rec.at_rest_epoch = fr.u32be();
        Bytes nonce = fr.take(kAeadNonceLen);
        std::copy(nonce.begin(), nonce.end(), rec.nonce.begin());
        Bytes tag = fr.take(kAeadTagLen);
        std::copy(tag.begin(), tag.end(), rec.tag.begin());
        rec.at_rest_ciphertext = fr.length_prefixed();
        records_[key] = std::move(rec);
    }
}

void ServerStore::persist_all() const {
    Bytes data{kLogVersion};
    for (const auto& [key, rec] : records_) {
        append_length_prefixed(data, encode_record(kFramePut, rec));
    }
    write_file(dir_ / kLogName, data);
    nlohmann::json j{{"master_secret", to_hex(master_secret_)}, {"epoch", epoch_}};
    write_file(dir_ / kSecretName, str_bytes(j.dump(2)));
}

void ServerStore::append_record(const VaultRecord& rec) const {
    std::ofstream out(dir_ / kLogName, std::ios::binary | std::ios::app);
    if (!out) raise(ErrorClass::UNAVAILABLE, "cannot append to store log");
    Bytes frame;
    append_length_prefixed(frame, encode_record(kFramePut, rec));
    out.write(reinterpret_cast<const char*>(frame.data()),
              static_cast<std::streamsize>(frame.size()));
}

Identity ServerStore::identity_from_token(const std::string& token) const {
    return verifier_.verify(token, kKmsAudience, clock_());
}

void ServerStore::require_available() const {
    if (!available_) raise(ErrorClass::UNAVAILABLE, "server storage is down");
}

Digest32 ServerStore::derive_epoch_secret(const Bytes& master_secret, uint32_t epoch) {
    Bytes info = str_bytes("skms/at-rest-epoch/v1");
    append_u32be(info, epoch);
    return hmac_sha256(master_secret, info);
}

Digest32 ServerStore::derive_record_key(const Digest32& epoch_secret, const Identity& identity,
                                        VaultSlot slot) {
    Bytes info = str_bytes("skms/at-rest-record/v1");
    append_length_prefixed(info, str_bytes(identity.verifier_url));
    append_length_prefixed(info, str_bytes(identity.verifier_id));
    info.push_back(static_cast<uint8_t>(slot));
    return hmac_sha256(epoch_secret, info);
}

VaultRecord ServerStore::encrypt_record(const Identity& id, VaultSlot slot, const Bytes& payload) {
    VaultRecord rec;
    rec.identity = id;
    rec.slot = slot;
    rec.at_rest_epoch = epoch_;
    rng_->fill(rec.nonce);
    Digest32 key = derive_record_key(derive_epoch_secret(master_secret_, epoch_), id, slot);
    AeadSealed sealed = aead_seal(key, rec.nonce, payload);
    rec.at_rest_ciphertext = std::move(sealed.ciphertext);
    rec.tag = sealed.tag;
    secure_wipe(key.data(), key.size());
    return rec;
}

Bytes ServerStore::decrypt_record(const VaultRecord& rec) const {
    if (rec.at_rest_epoch != epoch_) {
        raise(ErrorClass::EPOCH_MISMATCH, "record encrypted under retired epoch");
    }
    Digest32 key =
        derive_record_key(derive_epoch_secret(master_secret_, epoch_), rec.identity, rec.slot);
    Bytes payload = aead_open(key, rec.nonce, rec.at_rest_ciphertext, rec.tag);
    secure_wipe(key.data(), key.size());
    return payload;
}

void ServerStore::put(const std::string& token, VaultSlot slot, const Bytes& payload) {
    require_available();
    Identity id = identity_from_token(token);
    std::unique_lock lock(mutex_);
    VaultRecord rec = encrypt_record(id, slot, payload);
    records_[{id, static_cast<uint8_t>(slot)}] = rec;
    append_record(rec);
}

Bytes ServerStore::get(const std::string& token, VaultSlot slot) {
    require_available();
    Identity id = identity_from_token(token);
    std::shared_lock lock(mutex_);
    auto it = records_.find({id, static_cast<uint8_t>(slot)});
    if (it == records_.end()) raise(ErrorClass::NOT_FOUND, "no record for slot");
    return decrypt_record(it->second);
}

void ServerStore::put_vault(const std::string& token, const Bytes& privkey_payload,
                            const Bytes& ekp_payload) {
    require_available();
    Identity id = identity_from_token(token);
    std::unique_lock lock(mutex_);
    VaultRecord a = encrypt_record(id, VaultSlot::PRIVKEY_SHARD, privkey_payload);
    VaultRecord b = encrypt_record(id, VaultSlot::EKP_SHARD, ekp_payload);
    records_[{id, static_cast<uint8_t>(VaultSlot::PRIVKEY_SHARD)}] = a;
    records_[{id, static_cast<uint8_t>(VaultSlot::EKP_SHARD)}] = b;
    append_record(a);
    append_record(b);
}

void ServerStore::delete_vault(const std::string& token) {
    require_available();
    Identity id = identity_from_token(token);
    std::unique_lock lock(mutex_);
    for (VaultSlot slot : {VaultSlot::PRIVKEY_SHARD, VaultSlot::EKP_SHARD}) {
        auto key = std::make_pair(id, static_cast<uint8_t>(slot));
        if (records_.erase(key) > 0) {
            VaultRecord stub;
            stub.identity = id;
            stub.slot = slot;
            std::ofstream out(dir_ / kLogName, std::ios::binary | std::ios::app);
            Bytes frame;
            append_length_prefixed(frame, encode_record(kFrameDelete, stub));
            out.write(reinterpret_cast<const char*>(frame.data()),
                      static_cast<std::streamsize>(frame.size()));
        }
    }
}

bool ServerStore::has_vault(const std::string& token) {
    require_available();
    Identity id = identity_from_token(token);
    std::shared_lock lock(mutex_);
    return records_.count({id, static_cast<uint8_t>(VaultSlot::PRIVKEY_SHARD)}) > 0 ||
           records_.count({id, static_cast<uint8_t>(VaultSlot::EKP_SHARD)}) > 0;
}

Bytes ServerStore::issue_entropy(const std::string& token) {
    require_available();
    (void)identity_from_token(token);
    std::unique_lock lock(mutex_);
    return rng_->bytes(32);
}

uint32_t ServerStore::rotate_at_rest() {
    require_available();
    std::unique_lock lock(mutex_);
    uint32_t old_epoch = epoch_;
    Digest32 old_secret = derive_epoch_secret(master_secret_, old_epoch);
    epoch_ += 1;
    Digest32 new_secret = derive_epoch_secret(master_secret_, epoch_);
    for (auto& [key, rec] : records_) {
        Digest32 old_key = derive_record_key(old_secret, rec.identity, rec.slot);
        Bytes payload = aead_open(old_key, rec.nonce, rec.at_rest_ciphertext, rec.tag);
        rng_->fill(rec.nonce);
        Digest32 new_key = derive_record_key(new_secret, rec.identity, rec.slot);
        AeadSealed sealed = aead_seal(new_key, rec.nonce, payload);
        rec.at_rest_ciphertext = std::move(sealed.ciphertext);
        rec.tag = sealed.tag;
        rec.at_rest_epoch = epoch_;
        secure_wipe(payload);
    }
    persist_all();  // compaction; the retired secret is never written out
    return epoch_;
}

uint32_t ServerStore::epoch() const {
    std::shared_lock lock(mutex_);
    return epoch_;
}

size_t ServerStore::record_count() const {
    std::shared_lock lock(mutex_);
    return records_.size();
}

void ServerStore::set_available(bool available) { available_ = available; }
bool ServerStore::available() const { return available_; }

std::vector<VaultRecord> ServerStore::raw_records() const {
    std::shared_lock lock(mutex_);
    std::vector<VaultRecord> out;
    out.reserve(records_.size());
    for (const auto& [key, rec] : records_) out.push_back(rec);
    return out;
}

Digest32 ServerStore::current_epoch_secret() const {
    std::shared_lock lock(mutex_);
    return derive_epoch_secret(master_secret_, epoch_);
}

// ---------------------------------------------------------------------------
// DeviceStore
// ---------------------------------------------------------------------------

DeviceStore::DeviceStore(std::filesystem::path root_dir) : root_(std::move(root_dir)) {
    std::filesystem::create_directories(root_);
}

std::filesystem::path DeviceStore::device_path(const std::string& device_id) const {
    if (device_id.empty()) raise(ErrorClass::INVALID_ARGUMENT, "empty device id");
    return root_ / (to_hex(str_bytes(device_id)) + ".json");
}

void DeviceStore::put(const std::string& device_id, VaultSlot slot, const Bytes& payload) {
    std::lock_guard lock(mutex_);
    std::filesystem::path p = device_path(device_id);
    nlohmann::json j;
    if (std::filesystem::exists(p)) {
        j = nlohmann::json::parse(bytes_str(read_file(p)));
    } else {
        j = nlohmann::json{{"device_id", device_id}, {"slots", nlohmann::json::object()}};
    }
    j["slots"][std::to_string(static_cast<int>(slot))] = to_hex(payload);
    write_file(p, str_bytes(j.dump(2)));
}

Bytes DeviceStore::get(const std::string& device_id, VaultSlot slot) {
    std::lock_guard lock(mutex_);
    std::filesystem::path p = device_path(device_id);
    if (!std::filesystem::exists(p)) {
        raise(ErrorClass::UNPROVISIONED, "device '" + device_id + "' has no store");
    }
    auto j = nlohmann::json::parse(bytes_str(read_file(p)));
    std::string key = std::to_string(static_cast<int>(slot));
    if (!j.at("slots").contains(key)) raise(ErrorClass::NOT_FOUND, "empty device slot");
    return from_hex(j.at("slots").at(key).get<std::string>());
}

void DeviceStore::put_all(const std::string& device_id, const Bytes& privkey_payload,
                          const Bytes& ekp_payload) {
    std::lock_guard lock(mutex_);
    nlohmann::json j{{"device_id", device_id}, {"slots", nlohmann::json::object()}};
    j["slots"][std::to_string(static_cast<int>(VaultSlot::PRIVKEY_SHARD))] =
        to_hex(privkey_payload);
    j["slots"][std::to_string(static_cast<int>(VaultSlot::EKP_SHARD))] = to_hex(ekp_payload);
    write_file(device_path(device_id), str_bytes(j.dump(2)));
}

bool DeviceStore::provisioned(const std::string& device_id) const {
    std::lock_guard lock(mutex_);
    return std::filesystem::exists(device_path(device_id));
}

void DeviceStore::remove(const std::string& device_id) {
    std::lock_guard lock(mutex_);
    std::filesystem::remove(device_path(device_id));
}

// ---------------------------------------------------------------------------
// InProcessServerClient
// ---------------------------------------------------------------------------

Bytes InProcessServerClient::issue_entropy(const std::string& token, CallMeter& meter) {
    ++meter.server_calls;
    return store_->issue_entropy(token);
}

void InProcessServerClient::put_vault(const std::string& token, const Bytes& privkey_payload,
                                      const Bytes& ekp_payload, CallMeter& meter) {
    ++meter.server_calls;
    store_->put_vault(token, privkey_payload, ekp_payload);
}

Bytes InProcessServerClient::get_shard(const std::string& token, CallMeter& meter) {
    ++meter.server_calls;
    return store_->get(token, VaultSlot::PRIVKEY_SHARD);
}

Bytes InProcessServerClient::get_ekp(const std::string& token, CallMeter& meter) {
    ++meter.server_calls;
    return store_->get(token, VaultSlot::EKP_SHARD);
}

bool InProcessServerClient::has_vault(const std::string& token, CallMeter& meter) {
    ++meter.server_calls;
    return store_->has_vault(token);
}

void InProcessServerClient::delete_vault(const std::string& token, CallMeter& meter) {
    ++meter.server_calls;
    store_->delete_vault(token);
}

uint32_t InProcessServerClient::rotate_at_rest(CallMeter& meter) {
    ++meter.server_calls;
    return store_->rotate_at_rest();
}

uint32_t InProcessServerClient::epoch(CallMeter& meter) {
    ++meter.server_calls;
    return store_->epoch();
}

}  // namespace skms
