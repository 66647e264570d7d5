#include "skms/kms.hpp"

#include <algorithm>

#include "skms/errors.hpp"

namespace skms {

namespace {

constexpr uint8_t kPayloadVersion = 0x01;

FieldPtr order_field() { return Field::secp256k1_order(); }

FieldElement share_x(unsigned index) { return FieldElement::from_u64(order_field(), index); }

SharePolicy vault_policy() { return SharePolicy::make(order_field(), 2, 3); }

Bytes e_network_bytes(const EcPoint& postbox_pub) {
    Bytes input = str_bytes("skms/e-net/v1");
    Bytes pt = postbox_pub.encode_compressed();
    append(input, pt);
    Digest32 d = sha256(input);
    return Bytes(d.begin(), d.end());
}

Bytes e_device_bytes(const std::string& device_id, EntropySource& rng) {
    Bytes input = str_bytes("skms/e-dev/v1");
    Bytes rand = rng.bytes(32);
    append(input, rand);
    append_length_prefixed(input, str_bytes(device_id));
    Digest32 d = sha256(input);
    return Bytes(d.begin(), d.end());
}

FieldElement share_y_from_bytes(const Bytes& b) {
    if (b.size() != 32) raise(ErrorClass::MALFORMED, "bad share encoding");
    return FieldElement::from_bytes_exact(order_field(), b);
}

// Canonical three points P(1), P(2), P(3) from any two known points.
std::vector<SharePoint> canonical_points(const std::vector<SharePoint>& known) {
    std::vector<SharePoint> out;
    for (unsigned x = kNetworkShareX; x <= kDeviceShareX; ++x) {
        FieldElement fx = share_x(x);
        bool found = false;
        for (const auto& p : known) {
            if (p.x == fx) {
                out.push_back(p);
                found = true;
                break;
            }
        }
        if (!found) out.push_back(SharePoint{fx, interpolate_at(known, fx)});
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Payload codecs
// ---------------------------------------------------------------------------

Bytes build_sealed_payload(uint32_t vault_epoch, const Bytes& sealed_wire) {
    Bytes out{kPayloadVersion};
    append_u32be(out, vault_epoch);
    append(out, sealed_wire);
    return out;
}

std::pair<uint32_t, Bytes> parse_sealed_payload(const Bytes& payload) {
    ByteReader r(payload);
    if (r.u8() != kPayloadVersion) raise(ErrorClass::MALFORMED, "bad payload version");
    uint32_t epoch = r.u32be();
    return {epoch, r.take(r.remaining())};
}

Bytes build_ekp_payload(uint32_t vault_epoch, const FieldElement& y) {
    Bytes out{kPayloadVersion};
    append_u32be(out, vault_epoch);
    Bytes yb = y.to_bytes();
    append(out, yb);
    return out;
}

std::pair<uint32_t, FieldElement> parse_ekp_payload(const Bytes& payload) {
    ByteReader r(payload);
    if (r.u8() != kPayloadVersion) raise(ErrorClass::MALFORMED, "bad payload version");
    uint32_t epoch = r.u32be();
    return {epoch, share_y_from_bytes(r.take(32))};
}

Bytes build_network_vault(uint32_t vault_epoch, const Bytes& sealed_wire, const FieldElement& y) {
    Bytes out{kPayloadVersion};
    append_u32be(out, vault_epoch);
    append_length_prefixed(out, sealed_wire);
    Bytes yb = y.to_bytes();
    append(out, yb);
    return out;
}

NetworkVault parse_network_vault(const Bytes& payload) {
    ByteReader r(payload);
    if (r.u8() != kPayloadVersion) raise(ErrorClass::MALFORMED, "bad network vault version");
    NetworkVault v;
    v.vault_epoch = r.u32be();
    v.sealed_share_wire = r.length_prefixed();
    v.ekp_share_y = share_y_from_bytes(r.take(32));
    return v;
}

// ---------------------------------------------------------------------------
// KeyHandle
// ---------------------------------------------------------------------------

KeyHandle::KeyHandle(FieldElement scalar) : scalar_(std::move(scalar)) {
    if (scalar_.is_zero()) raise(ErrorClass::INTERNAL, "zero master scalar");
    public_point_ = ec_base_mul(scalar_.value());
}

KeyHandle::~KeyHandle() { wipe(); }

void KeyHandle::wipe() {
    if (scalar_.field()) scalar_ = FieldElement(scalar_.field(), 0);
}

Signature KeyHandle::sign(const Digest32& digest) const {
    if (!live()) raise(ErrorClass::INVALID_ARGUMENT, "key handle already wiped");
    return sign_digest(digest, scalar_);
}

Bytes KeyHandle::entropy32() const {
    if (!live()) raise(ErrorClass::INVALID_ARGUMENT, "key handle already wiped");
    return scalar_.to_bytes();
}

// ---------------------------------------------------------------------------
// Kms
// ---------------------------------------------------------------------------

Kms::Kms(std::shared_ptr<NodeNetworkClient> network, std::shared_ptr<ServerStoreClient> server,
         std::shared_ptr<DeviceStore> devices)
    : network_(std::move(network)), server_(std::move(server)), devices_(std::move(devices)) {}

std::shared_ptr<std::mutex> Kms::identity_lock(const Identity& identity) {
    std::lock_guard g(locks_mutex_);
    auto& slot = identity_locks_[identity];
    if (!slot) slot = std::make_shared<std::mutex>();
    return slot;
}

namespace {
Identity session_identity(Session& session, const std::string& token) {
    IdToken t = TokenVerifier::parse(token);
    Identity id{t.issuer, t.subject};
    session.identity = id;
    return id;
}
}  // namespace

// One storage's artifacts as fetched during a flow.
struct Kms::StorageView {
    unsigned x = 0;                 // 1 network, 2 server, 3 device
    uint32_t vault_epoch = 0;
    Bytes sealed_share_wire;        // Ekp-sealed (network: double-wrapped)
    FieldElement ekp_share_y;
    FieldElement postbox_scalar;    // network view only, when requested
};

Kms::StorageView Kms::fetch_network_view(Session& session, const std::string& token,
                                         bool need_postbox_scalar) {
    StorageView v;
    v.x = kNetworkShareX;
    NetworkVault vault = parse_network_vault(network_->retrieve_blob(token, session.meter));
    v.vault_epoch = vault.vault_epoch;
    v.sealed_share_wire = std::move(vault.sealed_share_wire);
    v.ekp_share_y = vault.ekp_share_y;
    if (need_postbox_scalar) {
        auto shares = network_->fetch_postbox_shares(token, session.meter);
        v.postbox_scalar = reconstruct_secret(shares, network_->threshold());
    }
    return v;
}

Kms::StorageView Kms::fetch_server_view(Session& session, const std::string& token) {
    StorageView v;
    v.x = kServerShareX;
    auto [epoch_a, sealed] = parse_sealed_payload(server_->get_shard(token, session.meter));
    auto [epoch_b, y] = parse_ekp_payload(server_->get_ekp(token, session.meter));
    if (epoch_a != epoch_b) raise(ErrorClass::EPOCH_MISMATCH, "torn server vault");
    v.vault_epoch = epoch_a;
    v.sealed_share_wire = std::move(sealed);
    v.ekp_share_y = y;
    return v;
}

Kms::StorageView Kms::fetch_device_view(Session& session) {
    StorageView v;
    v.x = kDeviceShareX;
    auto [epoch_a, sealed] =
        parse_sealed_payload(devices_->get(session.device_id, VaultSlot::PRIVKEY_SHARD));
    auto [epoch_b, y] = parse_ekp_payload(devices_->get(session.device_id, VaultSlot::EKP_SHARD));
    if (epoch_a != epoch_b) raise(ErrorClass::EPOCH_MISMATCH, "torn device vault");
    v.vault_epoch = epoch_a;
    v.sealed_share_wire = std::move(sealed);
    v.ekp_share_y = y;
    return v;
}

void Kms::place_vault(Session& session, const std::string& token, uint32_t vault_epoch,
                      const EcPoint& postbox_pub, const EncKeypair& ekp,
                      const std::vector<SharePoint>& s_shares,
                      const std::vector<SharePoint>& e_shares, EntropySource& rng) {
    // All sealing happens before any storage is touched.
    Bytes y_t = s_shares[0].y.to_bytes();
    Bytes y_s = s_shares[1].y.to_bytes();
    Bytes y_d = s_shares[2].y.to_bytes();
    Bytes inner = seal(y_t, postbox_pub, rng).encode();
    Bytes sealed_t = seal(inner, ekp.public_point, rng).encode();
    Bytes sealed_s = seal(y_s, ekp.public_point, rng).encode();
    Bytes sealed_d = seal(y_d, ekp.public_point, rng).encode();
    secure_wipe(y_t);
    secure_wipe(y_s);
    secure_wipe(y_d);

    devices_->put_all(session.device_id, build_sealed_payload(vault_epoch, sealed_d),
                      build_ekp_payload(vault_epoch, e_shares[2].y));
    server_->put_vault(token, build_sealed_payload(vault_epoch, sealed_s),
                       build_ekp_payload(vault_epoch, e_shares[1].y), session.meter);
    network_->store_blob(token, build_network_vault(vault_epoch, sealed_t, e_shares[0].y),
                         vault_epoch, rng, session.meter);
}

EcPoint Kms::signup(Session& session, const std::string& token, EntropySource& rng) {
    Identity id = session_identity(session, token);
    auto lock = identity_lock(id);
    std::lock_guard g(*lock);

    if (server_->has_vault(token, session.meter)) {
        raise(ErrorClass::ALREADY_ENROLLED, "identity already has a vault");
    }

    // A postbox with no vault is a prior signup that failed after dealing;
    // resume by recovering the postbox public point from threshold shares.
    EcPoint postbox_pub;
    try {
        postbox_pub = network_->assign_postbox(token, session.meter);
    } catch (const KmsError& e) {
        if (e.error_class() != ErrorClass::ALREADY_ASSIGNED) throw;
        auto shares = network_->fetch_postbox_shares(token, session.meter);
        FieldElement scalar = reconstruct_secret(shares, network_->threshold());
        postbox_pub = ec_base_mul(scalar.value());
    }

    Bytes e_net = e_network_bytes(postbox_pub);
    Bytes e_srv = server_->issue_entropy(token, session.meter);
    Bytes e_dev = e_device_bytes(session.device_id, rng);
    FieldElement master = combine_entropy(e_net, e_srv, e_dev);
    secure_wipe(e_srv);
    secure_wipe(e_dev);
    EcPoint master_pub = ec_base_mul(master.value());

    std::vector<SharePoint> s_shares = split_secret(master, vault_policy(), rng);
    master = FieldElement(order_field(), 0);
    EncKeypair ekp = EncKeypair::generate(rng);
    std::vector<SharePoint> e_shares = split_secret(ekp.private_scalar, vault_policy(), rng);

    try {
        place_vault(session, token, 1, postbox_pub, ekp, s_shares, e_shares, rng);
    } catch (...) {
        // all-or-nothing: compensating deletes, then rethrow
        try { devices_->remove(session.device_id); } catch (...) {}
        try { server_->delete_vault(token, session.meter); } catch (...) {}
        try { network_->delete_blob(token, session.meter); } catch (...) {}
        throw;
    }
    return master_pub;
}

KeyHandle Kms::signin(Session& session, const std::string& token) {
    Identity id = session_identity(session, token);
    auto lock = identity_lock(id);
    std::lock_guard g(*lock);

    if (!devices_->provisioned(session.device_id)) {
        raise(ErrorClass::UNPROVISIONED, "device not provisioned; run device recovery");
    }
    StorageView server_view = fetch_server_view(session, token);
    StorageView device_view = fetch_device_view(session);

    FieldElement ekp_scalar = reconstruct_secret(
        {SharePoint{share_x(kServerShareX), server_view.ekp_share_y},
         SharePoint{share_x(kDeviceShareX), device_view.ekp_share_y}},
        2);
    FieldElement s_s =
        share_y_from_bytes(open(SealedBox::decode(server_view.sealed_share_wire), ekp_scalar));
    FieldElement s_d =
        share_y_from_bytes(open(SealedBox::decode(device_view.sealed_share_wire), ekp_scalar));
    FieldElement master = reconstruct_secret({SharePoint{share_x(kServerShareX), s_s},
                                              SharePoint{share_x(kDeviceShareX), s_d}},
                                             2);
    return KeyHandle(std::move(master));
}

Signature Kms::sign_transaction(Session& session, const std::string& token,
                                const Digest32& digest) {
    KeyHandle handle = signin(session, token);
    return handle.sign(digest);
}

uint32_t Kms::rotate_ekp(Session& session, const std::string& token, EntropySource& rng) {
    Identity id = session_identity(session, token);
    auto lock = identity_lock(id);
    std::lock_guard g(*lock);
    return rotate_ekp_locked(session, token, rng);
}

uint32_t Kms::rotate_ekp_locked(Session& session, const std::string& token, EntropySource& rng) {
    // This flow touches every storage: reads whatever pair is consistent,
    // then replaces all six artifacts.
    std::vector<StorageView> views;
    try {
        views.push_back(fetch_network_view(session, token, /*need_postbox_scalar=*/true));
        views.push_back(fetch_server_view(session, token));
        views.push_back(fetch_device_view(session));
    } catch (const KmsError& e) {
        switch (e.error_class()) {
            case ErrorClass::UNAVAILABLE:
            case ErrorClass::INSUFFICIENT_NODES:
            case ErrorClass::NOT_FOUND:
            case ErrorClass::UNPROVISIONED:
                raise(ErrorClass::INSUFFICIENT_STORAGES, "rotation touches all storages");
            default:
                throw;
        }
    }

    // Prefer the newest epoch present on at least two storages (a torn
    // earlier rotation leaves one storage behind).
    uint32_t best_epoch = 0;
    unsigned best_count = 0;
    for (const auto& v : views) {
        unsigned count = 0;
        for (const auto& w : views) {
            if (w.vault_epoch == v.vault_epoch) ++count;
        }
        if (count >= 2 && v.vault_epoch > best_epoch) {
            best_epoch = v.vault_epoch;
            best_count = count;
        }
    }
    if (best_count < 2) raise(ErrorClass::AUTH_FAILURE, "no consistent shard pair");

    std::vector<const StorageView*> chosen;
    for (const auto& v : views) {
        if (v.vault_epoch == best_epoch && chosen.size() < 2) chosen.push_back(&v);
    }

    std::vector<SharePoint> e_known;
    for (const auto* v : chosen) e_known.push_back(SharePoint{share_x(v->x), v->ekp_share_y});
    FieldElement ekp_scalar = reconstruct_secret(e_known, 2);
    const FieldElement& postbox_scalar = views[0].postbox_scalar;

    std::vector<SharePoint> s_known;
    for (const auto* v : chosen) {
        Bytes plain;
        if (v->x == kNetworkShareX) {
            Bytes inner = open(SealedBox::decode(v->sealed_share_wire), ekp_scalar);
            plain = open(SealedBox::decode(inner), postbox_scalar);
        } else {
            plain = open(SealedBox::decode(v->sealed_share_wire), ekp_scalar);
        }
        s_known.push_back(SharePoint{share_x(v->x), share_y_from_bytes(plain)});
        secure_wipe(plain);
    }

    // Same polynomials, fresh seals: canonical points P(1..3), new Ekp.
    std::vector<SharePoint> s_shares = canonical_points(s_known);
    uint32_t max_epoch = 0;
    for (const auto& v : views) max_epoch = std::max(max_epoch, v.vault_epoch);
    uint32_t new_epoch = max_epoch + 1;

    EncKeypair new_ekp = EncKeypair::generate(rng);
    std::vector<SharePoint> e_shares = split_secret(new_ekp.private_scalar, vault_policy(), rng);
    EcPoint postbox_pub = ec_base_mul(postbox_scalar.value());
    place_vault(session, token, new_epoch, postbox_pub, new_ekp, s_shares, e_shares, rng);
    return new_epoch;
}

void Kms::reshare_key(Session& session, const std::string& token, EntropySource& rng) {
    Identity id = session_identity(session, token);
    auto lock = identity_lock(id);
    std::lock_guard g(*lock);

    // Read phase tolerates one unreachable storage; the write phase places a
    // fresh polynomial on all three.
    std::vector<StorageView> views;
    StorageView network_view;
    bool have_network = false;
    try {
        network_view = fetch_network_view(session, token, /*need_postbox_scalar=*/true);
        views.push_back(network_view);
        have_network = true;
    } catch (const KmsError& e) {
        if (e.error_class() != ErrorClass::UNAVAILABLE &&
            e.error_class() != ErrorClass::INSUFFICIENT_NODES &&
            e.error_class() != ErrorClass::NOT_FOUND) {
            throw;
        }
    }
    try {
        views.push_back(fetch_server_view(session, token));
    } catch (const KmsError& e) {
        if (e.error_class() != ErrorClass::UNAVAILABLE && e.error_class() != ErrorClass::NOT_FOUND) {
            throw;
        }
    }
    try {
        views.push_back(fetch_device_view(session));
    } catch (const KmsError& e) {
        if (e.error_class() != ErrorClass::UNPROVISIONED &&
            e.error_class() != ErrorClass::NOT_FOUND) {
            throw;
        }
    }
    if (!have_network) {
        // placement rewraps the network shard under the postbox key
        raise(ErrorClass::INSUFFICIENT_STORAGES, "resharing needs the node network");
    }
    if (views.size() < 2) {
        raise(ErrorClass::INSUFFICIENT_STORAGES, "resharing needs two reachable shards");
    }

    uint32_t best_epoch = 0;
    unsigned best_count = 0;
    for (const auto& v : views) {
        unsigned count = 0;
        for (const auto& w : views) {
            if (w.vault_epoch == v.vault_epoch) ++count;
        }
        if (count >= 2 && v.vault_epoch > best_epoch) {
            best_epoch = v.vault_epoch;
            best_count = count;
        }
    }
    if (best_count < 2) raise(ErrorClass::AUTH_FAILURE, "no consistent shard pair");

    std::vector<const StorageView*> chosen;
    for (const auto& v : views) {
        if (v.vault_epoch == best_epoch && chosen.size() < 2) chosen.push_back(&v);
    }

    std::vector<SharePoint> e_known;
    for (const auto* v : chosen) e_known.push_back(SharePoint{share_x(v->x), v->ekp_share_y});
    FieldElement ekp_scalar = reconstruct_secret(e_known, 2);

    std::vector<SharePoint> s_known;
    for (const auto* v : chosen) {
        Bytes plain;
        if (v->x == kNetworkShareX) {
            Bytes inner = open(SealedBox::decode(v->sealed_share_wire), ekp_scalar);
            plain = open(SealedBox::decode(inner), network_view.postbox_scalar);
        } else {
            plain = open(SealedBox::decode(v->sealed_share_wire), ekp_scalar);
        }
        s_known.push_back(SharePoint{share_x(v->x), share_y_from_bytes(plain)});
        secure_wipe(plain);
    }
    FieldElement master = reconstruct_secret(s_known, 2);

    uint32_t max_epoch = 0;
    for (const auto& v : views) max_epoch = std::max(max_epoch, v.vault_epoch);

    // Fresh polynomial for the same master scalar, fresh Ekp; previously
    // stolen shards become garbage relative to the new set.
    std::vector<SharePoint> s_shares = split_secret(master, vault_policy(), rng);
    master = FieldElement(order_field(), 0);
    EncKeypair new_ekp = EncKeypair::generate(rng);
    std::vector<SharePoint> e_shares = split_secret(new_ekp.private_scalar, vault_policy(), rng);
    EcPoint postbox_pub = ec_base_mul(network_view.postbox_scalar.value());
    place_vault(session, token, max_epoch + 1, postbox_pub, new_ekp, s_shares, e_shares, rng);
}

void Kms::recover_device(Session& session, const std::string& token,
                         const std::string& new_device_id, EntropySource& rng) {
    Identity id = session_identity(session, token);
    auto lock = identity_lock(id);
    std::lock_guard g(*lock);

    StorageView network_view = fetch_network_view(session, token, /*need_postbox_scalar=*/true);
    StorageView server_view = fetch_server_view(session, token);
    if (network_view.vault_epoch != server_view.vault_epoch) {
        raise(ErrorClass::EPOCH_MISMATCH, "network and server vaults disagree");
    }

    FieldElement ekp_scalar = reconstruct_secret(
        {SharePoint{share_x(kNetworkShareX), network_view.ekp_share_y},
         SharePoint{share_x(kServerShareX), server_view.ekp_share_y}},
        2);
    Bytes inner = open(SealedBox::decode(network_view.sealed_share_wire), ekp_scalar);
    Bytes s_t_plain = open(SealedBox::decode(inner), network_view.postbox_scalar);
    Bytes s_s_plain = open(SealedBox::decode(server_view.sealed_share_wire), ekp_scalar);

    std::vector<SharePoint> s_known = {
        SharePoint{share_x(kNetworkShareX), share_y_from_bytes(s_t_plain)},
        SharePoint{share_x(kServerShareX), share_y_from_bytes(s_s_plain)}};
    secure_wipe(s_t_plain);
    secure_wipe(s_s_plain);

    SharePoint s_d = derive_share_at(s_known, 2, share_x(kDeviceShareX));
    std::vector<SharePoint> e_known = {
        SharePoint{share_x(kNetworkShareX), network_view.ekp_share_y},
        SharePoint{share_x(kServerShareX), server_view.ekp_share_y}};
    SharePoint e_d = derive_share_at(e_known, 2, share_x(kDeviceShareX));

    // Provision the new device under the current Ekp, then rotate so the old
    // device's artifacts are orphaned.
    Bytes y_d = s_d.y.to_bytes();
    Bytes sealed_d = seal(y_d, ec_base_mul(ekp_scalar.value()), rng).encode();
    secure_wipe(y_d);
    devices_->put_all(new_device_id, build_sealed_payload(network_view.vault_epoch, sealed_d),
                      build_ekp_payload(network_view.vault_epoch, e_d.y));
    session.device_id = new_device_id;

    rotate_ekp_locked(session, token, rng);
}

std::string Kms::disaster_recover(Session& session, const std::string& token) {
    Identity id = session_identity(session, token);
    auto lock = identity_lock(id);
    std::lock_guard g(*lock);

    // Server-independent by construction: only node and device storages are
    // touched on this path.
    StorageView network_view = fetch_network_view(session, token, /*need_postbox_scalar=*/true);
    StorageView device_view = fetch_device_view(session);

    FieldElement ekp_scalar = reconstruct_secret(
        {SharePoint{share_x(kNetworkShareX), network_view.ekp_share_y},
         SharePoint{share_x(kDeviceShareX), device_view.ekp_share_y}},
        2);
    Bytes inner = open(SealedBox::decode(network_view.sealed_share_wire), ekp_scalar);
    Bytes s_t_plain = open(SealedBox::decode(inner), network_view.postbox_scalar);
    Bytes s_d_plain = open(SealedBox::decode(device_view.sealed_share_wire), ekp_scalar);

    FieldElement master = reconstruct_secret(
        {SharePoint{share_x(kNetworkShareX), share_y_from_bytes(s_t_plain)},
         SharePoint{share_x(kDeviceShareX), share_y_from_bytes(s_d_plain)}},
        2);
    secure_wipe(s_t_plain);
    secure_wipe(s_d_plain);

    KeyHandle handle(std::move(master));
    return export_seed_phrase(handle);
}

std::string Kms::export_seed_phrase(const KeyHandle& handle) {
    Bytes entropy = handle.entropy32();
    std::string mnemonic = bip39::mnemonic_from_entropy(entropy);
    secure_wipe(entropy);
    return mnemonic;
}

bip32::ExtendedKey Kms::derive_chain_key(const KeyHandle& handle,
                                         const std::vector<uint32_t>& path) {
    std::string mnemonic = export_seed_phrase(handle);
    Digest64 seed = bip39::seed_from_mnemonic(mnemonic);
    bip32::ExtendedKey master = bip32::master_from_seed(seed);
    secure_wipe(seed.data(), seed.size());
    return master.derive_path(path);
}

}  // namespace skms
