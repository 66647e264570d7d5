#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "skms/errors.hpp"
#include "skms/shamir.hpp"

using namespace skms;

namespace {

FieldPtr f17() {
    static FieldPtr f = Field::make(17);
    return f;
}
FieldPtr f101() {
    static FieldPtr f = Field::make(101);
    return f;
}
FieldPtr f257() {
    static FieldPtr f = Field::make(257);
    return f;
}

FieldElement fe(const FieldPtr& f, uint64_t v) { return FieldElement::from_u64(f, v); }

SharePoint pt(const FieldPtr& f, uint64_t x, uint64_t y) {
    return SharePoint{fe(f, x), fe(f, y)};
}

// Enumerate all k-subsets of [0, n).
void for_each_subset(size_t n, size_t k, const std::function<void(const std::vector<size_t>&)>& fn) {
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

}  // namespace

TEST_CASE("field arithmetic basics") {
    auto f = f17();
    CHECK(fe(f, 20).value() == 3);  // canonical reduction
    CHECK((fe(f, 9) + fe(f, 12)).value() == 4);
    CHECK((fe(f, 3) - fe(f, 9)).value() == 11);
    CHECK((fe(f, 5) * fe(f, 7)).value() == 1);  // 35 = 2*17 + 1
    CHECK((fe(f, 5).inverse() * fe(f, 5)).value() == 1);
    CHECK(fe(f, 0).negate().value() == 0);
    CHECK_THROWS_AS(fe(f, 0).inverse(), KmsError);
    CHECK_THROWS_AS((void)Field::make(15), KmsError);  // composite modulus
    CHECK_THROWS_AS(fe(f17(), 1) + fe(f101(), 1), KmsError);  // mixed fields
}

TEST_CASE("field element byte round-trip") {
    auto order = Field::secp256k1_order();
    SeededEntropy rng(7);
    for (int i = 0; i < 32; ++i) {
        FieldElement e = FieldElement::random(order, rng);
        Bytes b = e.to_bytes();
        CHECK(b.size() == 32);
        CHECK(FieldElement::from_bytes_exact(order, b) == e);
    }
    // value >= modulus rejected by exact decoding
    Bytes all_ff(32, 0xFF);
    CHECK_THROWS_AS((void)FieldElement::from_bytes_exact(order, all_ff), KmsError);
}

TEST_CASE("split: hand-computed vector p=17, secret=5, a1=3") {
    auto f = f17();
    auto policy = SharePolicy::make(f, 2, 3);
    auto shares = split_secret_with_coefficients(fe(f, 5), policy, {fe(f, 3)});
    REQUIRE(shares.size() == 3);
    CHECK(shares[0].x.value() == 1);
    CHECK(shares[0].y.value() == 8);
    CHECK(shares[1].x.value() == 2);
    CHECK(shares[1].y.value() == 11);
    CHECK(shares[2].x.value() == 3);
    CHECK(shares[2].y.value() == 14);
}

TEST_CASE("split: degree-0 polynomial replicates the secret") {
    auto f = f17();
    SeededEntropy rng(1);
    auto shares = split_secret(fe(f, 9), SharePolicy::make(f, 1, 3), rng);
    for (const auto& s : shares) CHECK(s.y.value() == 9);
}

TEST_CASE("split: zero secret with k=2 lies on y = a1*x") {
    auto f = f101();
    SeededEntropy rng(2);
    auto shares = split_secret(fe(f, 0), SharePolicy::make(f, 2, 3), rng);
    // slope from first two points, then check the zero intercept on the third
    FieldElement a1 = (shares[1].y - shares[0].y) / (shares[1].x - shares[0].x);
    for (const auto& s : shares) CHECK(s.y == a1 * s.x);
}

TEST_CASE("split: invalid policies") {
    auto f = f17();
    SeededEntropy rng(3);
    CHECK_THROWS_AS((void)SharePolicy::make(f, 4, 3), KmsError);  // k > n
    CHECK_THROWS_AS((void)SharePolicy::with_xs(2, {fe(f, 1), fe(f, 1)}), KmsError);
    CHECK_THROWS_AS((void)SharePolicy::with_xs(1, {fe(f, 0)}), KmsError);
}

TEST_CASE("reconstruct: hand vectors over p=17") {
    auto f = f17();
    CHECK(reconstruct_secret({pt(f, 1, 8), pt(f, 3, 14)}, 2).value() == 5);
    // order independent after sorting
    CHECK(reconstruct_secret({pt(f, 2, 11), pt(f, 1, 8)}, 2).value() == 5);
    // constant polynomial
    CHECK(reconstruct_secret({pt(f101(), 7, 42)}, 1).value() == 42);
    CHECK_THROWS_AS((void)reconstruct_secret({pt(f, 1, 8)}, 2), KmsError);
    CHECK_THROWS_AS((void)reconstruct_secret({pt(f, 1, 8), pt(f, 1, 9)}, 2), KmsError);
}

TEST_CASE("interpolate_at: quadratic through (1,1),(2,4),(3,9)") {
    auto f = f101();
    std::vector<SharePoint> pts = {pt(f, 1, 1), pt(f, 2, 4), pt(f, 3, 9)};
    CHECK(interpolate_at(pts, fe(f, 0)).value() == 0);
    CHECK(interpolate_at(pts, fe(f, 4)).value() == 16);
    // single point: degree 0
    CHECK(interpolate_at({pt(f, 5, 33)}, fe(f, 77)).value() == 33);
    // evaluation at an input x returns that y exactly
    for (const auto& p : pts) CHECK(interpolate_at(pts, p.x) == p.y);
}

TEST_CASE("derive_share_at: consistent replacement shards") {
    auto f = f17();
    std::vector<SharePoint> shares = {pt(f, 1, 8), pt(f, 2, 11)};
    SharePoint s3 = derive_share_at(shares, 2, fe(f, 3));
    CHECK(s3.x.value() == 3);
    CHECK(s3.y.value() == 14);
    SharePoint s4 = derive_share_at(shares, 2, fe(f, 4));
    CHECK(s4.y.value() == 0);  // 5 + 3*4 = 17 = 0 mod 17
    // replacement shard reconstructs the original secret with a survivor
    CHECK(reconstruct_secret({pt(f, 1, 8), s4}, 2).value() == 5);
    CHECK_THROWS_AS((void)derive_share_at(shares, 2, fe(f, 2)), KmsError);   // collision
    CHECK_THROWS_AS((void)derive_share_at(shares, 2, fe(f, 0)), KmsError);   // reserved
    CHECK_THROWS_AS((void)derive_share_at({pt(f, 1, 8)}, 2, fe(f, 5)), KmsError);
}

TEST_CASE("property: every k-subset reconstructs over test primes") {
    SeededEntropy rng(42);
    for (FieldPtr f : {f17(), f101(), f257()}) {
        for (unsigned n = 1; n <= 6; ++n) {
            for (unsigned k = 1; k <= n; ++k) {
                FieldElement secret = FieldElement::random(f, rng);
                auto shares = split_secret(secret, SharePolicy::make(f, k, n), rng);
                for_each_subset(n, k, [&](const std::vector<size_t>& idx) {
                    std::vector<SharePoint> subset;
                    for (size_t i : idx) subset.push_back(shares[i]);
                    CHECK(reconstruct_secret(subset, k) == secret);
                });
            }
        }
    }
}

TEST_CASE("property: production-field round-trip") {
    auto order = Field::secp256k1_order();
    SeededEntropy rng(43);
    for (int trial = 0; trial < 16; ++trial) {
        FieldElement secret = FieldElement::random(order, rng);
        auto shares = split_secret(secret, SharePolicy::make(order, 2, 3), rng);
        for_each_subset(3, 2, [&](const std::vector<size_t>& idx) {
            CHECK(reconstruct_secret({shares[idx[0]], shares[idx[1]]}, 2) == secret);
        });
    }
}

TEST_CASE("property: single-share marginal uniformity (chi-square, p=257)") {
    auto f = f257();
    SeededEntropy rng(4242);
    FieldElement secret = fe(f, 123);
    auto policy = SharePolicy::make(f, 2, 3);
    std::vector<unsigned> counts(257, 0);
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        auto shares = split_secret(secret, policy, rng);
        counts[shares[0].y.value().get_ui()]++;
    }
    double expected = static_cast<double>(trials) / 257.0;
    double chi2 = 0;
    for (unsigned c : counts) {
        double d = c - expected;
        chi2 += d * d / expected;
    }
    // critical value for df=256 at significance 0.001
    CHECK(chi2 < 331.657);
}

TEST_CASE("property: shares mixed across independent splits do not reconstruct") {
    auto order = Field::secp256k1_order();
    SeededEntropy rng(77);
    FieldElement secret = FieldElement::random(order, rng);
    auto policy = SharePolicy::make(order, 2, 3);
    int collisions = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        auto a = split_secret(secret, policy, rng);
        auto b = split_secret(secret, policy, rng);
        FieldElement mixed = reconstruct_secret({a[0], b[1]}, 2);
        if (mixed == secret) ++collisions;
    }
    CHECK(collisions <= 1);  // >= 9999/10000 trials must differ
}

TEST_CASE("property: derived share pairs with any original share") {
    auto order = Field::secp256k1_order();
    SeededEntropy rng(99);
    for (int trial = 0; trial < 8; ++trial) {
        FieldElement secret = FieldElement::random(order, rng);
        auto shares = split_secret(secret, SharePolicy::make(order, 2, 3), rng);
        SharePoint extra = derive_share_at(shares, 2, FieldElement::from_u64(order, 9));
        for (const auto& s : shares) {
            CHECK(reconstruct_secret({s, extra}, 2) == secret);
        }
    }
}
