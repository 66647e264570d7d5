#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "skms/errors.hpp"
#include "skms/storage.hpp"

using namespace skms;

namespace {

constexpr int64_t kNow = 1700000000;
int64_t test_clock() { return kNow; }

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("skms-test-" + std::to_string(::getpid()) + "-" +
                std::to_string(reinterpret_cast<uintptr_t>(this)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

struct Fixture {
    TempDir tmp;
    Bytes idp_secret = Bytes(32, 0x33);
    MockIdp idp{idp_secret};
    Identity user{"https://idp.test", "alice"};
    std::shared_ptr<ServerStore> store;

    Fixture() { store = ServerStore::open(tmp.path, idp_secret, test_clock, 777); }
    std::string token() const { return idp.issue_token(user, kKmsAudience, 3600, kNow); }
};

bool contains_subsequence(const Bytes& haystack, const Bytes& needle) {
    if (needle.empty() || haystack.size() < needle.size()) return false;
    return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) !=
           haystack.end();
}

}  // namespace

TEST_CASE("server store: put/get round-trip, NOT_FOUND, token gating") {
    Fixture fx;
    Bytes payload = {1, 2, 3, 4, 5};
    fx.store->put(fx.token(), VaultSlot::PRIVKEY_SHARD, payload);
    CHECK(fx.store->get(fx.token(), VaultSlot::PRIVKEY_SHARD) == payload);

    try {
        (void)fx.store->get(fx.token(), VaultSlot::EKP_SHARD);
        CHECK(false);
    } catch (const KmsError& e) {
        CHECK(e.error_class() == ErrorClass::NOT_FOUND);
    }

    std::string expired = fx.idp.issue_token(fx.user, kKmsAudience, 10, kNow - 100);
    try {
        (void)fx.store->get(expired, VaultSlot::PRIVKEY_SHARD);
        CHECK(false);
    } catch (const KmsError& e) {
        CHECK(e.error_class() == ErrorClass::EXPIRED);
    }
    // payload untouched by the failed request
    CHECK(fx.store->get(fx.token(), VaultSlot::PRIVKEY_SHARD) == payload);
}

TEST_CASE("server store: at-rest layer hides payload bytes on disk") {
    Fixture fx;
    SeededEntropy rng(3);
    Bytes payload = rng.bytes(64);
    fx.store->put(fx.token(), VaultSlot::PRIVKEY_SHARD, payload);

    // neither the in-memory records nor the log file contain the payload
    for (const auto& rec : fx.store->raw_records()) {
        CHECK(!contains_subsequence(rec.at_rest_ciphertext, payload));
        CHECK(rec.at_rest_ciphertext != payload);
    }
    std::ifstream in(fx.tmp.path / "server_store.bin", std::ios::binary);
    Bytes disk((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(!contains_subsequence(disk, payload));
}

TEST_CASE("server store: rotation keeps reads working and orphans old snapshots") {
    Fixture fx;
    SeededEntropy rng(4);
    Bytes p1 = rng.bytes(40), p2 = rng.bytes(40);
    fx.store->put(fx.token(), VaultSlot::PRIVKEY_SHARD, p1);
    fx.store->put(fx.token(), VaultSlot::EKP_SHARD, p2);

    auto snapshot = fx.store->raw_records();  // adversary copies ciphertexts
    uint32_t epoch0 = fx.store->epoch();
    uint32_t epoch1 = fx.store->rotate_at_rest();
    CHECK(epoch1 == epoch0 + 1);

    CHECK(fx.store->get(fx.token(), VaultSlot::PRIVKEY_SHARD) == p1);
    CHECK(fx.store->get(fx.token(), VaultSlot::EKP_SHARD) == p2);
    for (const auto& rec : fx.store->raw_records()) CHECK(rec.at_rest_epoch == epoch1);

    // pre-rotation ciphertext + post-rotation secret fails authentication
    Digest32 new_secret = fx.store->current_epoch_secret();
    for (const auto& rec : snapshot) {
        Digest32 key = ServerStore::derive_record_key(new_secret, rec.identity, rec.slot);
        CHECK_THROWS_AS((void)aead_open(key, rec.nonce, rec.at_rest_ciphertext, rec.tag),
                        KmsError);
    }

    // rotation of an empty store is a no-op re-key
    TempDir other;
    auto empty = ServerStore::open(other.path, fx.idp_secret, test_clock, 5);
    CHECK(empty->rotate_at_rest() == 2);
}

TEST_CASE("server store: interleaved puts and rotations stay readable") {
    Fixture fx;
    SeededEntropy rng(6);
    std::map<int, Bytes> expect;
    for (int i = 0; i < 10; ++i) {
        Identity id{"https://idp.test", "user" + std::to_string(i)};
        std::string tok = fx.idp.issue_token(id, kKmsAudience, 3600, kNow);
        Bytes payload = rng.bytes(32);
        fx.store->put(tok, VaultSlot::PRIVKEY_SHARD, payload);
        expect[i] = payload;
        if (i % 3 == 2) fx.store->rotate_at_rest();
    }
    for (int i = 0; i < 10; ++i) {
        Identity id{"https://idp.test", "user" + std::to_string(i)};
        std::string tok = fx.idp.issue_token(id, kKmsAudience, 3600, kNow);
        CHECK(fx.store->get(tok, VaultSlot::PRIVKEY_SHARD) == expect[i]);
        for (const auto& rec : fx.store->raw_records()) {
            CHECK(rec.at_rest_epoch == fx.store->epoch());
        }
    }
}

TEST_CASE("server store: persistence across reopen, including epoch") {
    Bytes idp_secret(32, 0x33);
    MockIdp idp{idp_secret};
    Identity user{"https://idp.test", "alice"};
    std::string token = idp.issue_token(user, kKmsAudience, 3600, kNow);
    TempDir tmp;
    SeededEntropy rng(7);
    Bytes payload = rng.bytes(48);
    uint32_t epoch = 0;
    {
        auto store = ServerStore::open(tmp.path, idp_secret, test_clock, 8);
        store->put(token, VaultSlot::PRIVKEY_SHARD, payload);
        store->rotate_at_rest();
        epoch = store->rotate_at_rest();
    }
    auto store = ServerStore::open(tmp.path, idp_secret, test_clock, 9);
    CHECK(store->epoch() == epoch);
    CHECK(store->get(token, VaultSlot::PRIVKEY_SHARD) == payload);
    CHECK(store->record_count() == 1);
}

TEST_CASE("server store: unavailability refuses everything") {
    Fixture fx;
    fx.store->put(fx.token(), VaultSlot::PRIVKEY_SHARD, {1});
    fx.store->set_available(false);
    auto expect_unavailable = [&](const std::function<void()>& fn) {
        try {
            fn();
            CHECK(false);
        } catch (const KmsError& e) {
            CHECK(e.error_class() == ErrorClass::UNAVAILABLE);
        }
    };
    expect_unavailable([&] { (void)fx.store->get(fx.token(), VaultSlot::PRIVKEY_SHARD); });
    expect_unavailable([&] { fx.store->put(fx.token(), VaultSlot::EKP_SHARD, {2}); });
    expect_unavailable([&] { (void)fx.store->issue_entropy(fx.token()); });
    expect_unavailable([&] { (void)fx.store->rotate_at_rest(); });
    fx.store->set_available(true);
    CHECK(fx.store->get(fx.token(), VaultSlot::PRIVKEY_SHARD) == Bytes{1});
}

TEST_CASE("server store: every token error class rejected on every endpoint") {
    Fixture fx;
    fx.store->put(fx.token(), VaultSlot::PRIVKEY_SHARD, {7});

    std::string bad_mac = fx.token();
    bad_mac.back() = bad_mac.back() == '0' ? '1' : '0';
    std::string expired = fx.idp.issue_token(fx.user, kKmsAudience, 10, kNow - 100);
    std::string wrong_aud = fx.idp.issue_token(fx.user, "web", 3600, kNow);
    const std::pair<std::string, ErrorClass> cases[] = {
        {bad_mac, ErrorClass::BAD_SIGNATURE},
        {expired, ErrorClass::EXPIRED},
        {wrong_aud, ErrorClass::AUDIENCE_MISMATCH},
    };
    for (const auto& [tok, expected] : cases) {
        auto expect = [&, expected = expected](const std::function<void()>& fn) {
            try {
                fn();
                CHECK(false);
            } catch (const KmsError& e) {
                CHECK(e.error_class() == expected);
            }
        };
        expect([&] { (void)fx.store->get(tok, VaultSlot::PRIVKEY_SHARD); });
        expect([&] { fx.store->put(tok, VaultSlot::EKP_SHARD, {1}); });
        expect([&] { fx.store->put_vault(tok, {1}, {2}); });
        expect([&] { (void)fx.store->has_vault(tok); });
        expect([&] { fx.store->delete_vault(tok); });
        expect([&] { (void)fx.store->issue_entropy(tok); });
    }
    // nothing was disturbed by the rejected calls
    CHECK(fx.store->get(fx.token(), VaultSlot::PRIVKEY_SHARD) == Bytes{7});
}

TEST_CASE("server store: vault pair put/delete and entropy issuance") {
    Fixture fx;
    CHECK(!fx.store->has_vault(fx.token()));
    fx.store->put_vault(fx.token(), {1, 1}, {2, 2});
    CHECK(fx.store->has_vault(fx.token()));
    CHECK(fx.store->get(fx.token(), VaultSlot::PRIVKEY_SHARD) == Bytes{1, 1});
    CHECK(fx.store->get(fx.token(), VaultSlot::EKP_SHARD) == Bytes{2, 2});
    fx.store->delete_vault(fx.token());
    CHECK(!fx.store->has_vault(fx.token()));

    Bytes e1 = fx.store->issue_entropy(fx.token());
    Bytes e2 = fx.store->issue_entropy(fx.token());
    CHECK(e1.size() == 32);
    CHECK(e1 != e2);
}

TEST_CASE("device store: round-trip, provisioning, isolation") {
    TempDir tmp;
    DeviceStore dev(tmp.path / "devices");

    try {
        (void)dev.get("laptop", VaultSlot::PRIVKEY_SHARD);
        CHECK(false);
    } catch (const KmsError& e) {
        CHECK(e.error_class() == ErrorClass::UNPROVISIONED);
    }

    dev.put_all("laptop", {1, 2}, {3, 4});
    CHECK(dev.provisioned("laptop"));
    CHECK(dev.get("laptop", VaultSlot::PRIVKEY_SHARD) == Bytes{1, 2});
    CHECK(dev.get("laptop", VaultSlot::EKP_SHARD) == Bytes{3, 4});

    // namespaces are fully isolated
    dev.put_all("phone", {9}, {8});
    CHECK(dev.get("phone", VaultSlot::PRIVKEY_SHARD) == Bytes{9});
    CHECK(dev.get("laptop", VaultSlot::PRIVKEY_SHARD) == Bytes{1, 2});

    dev.remove("laptop");
    CHECK(!dev.provisioned("laptop"));
    CHECK(dev.provisioned("phone"));
}
