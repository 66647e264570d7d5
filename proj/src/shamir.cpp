#include "skms/shamir.hpp"

#include <algorithm>

#include "skms/errors.hpp"

namespace skms {

SharePolicy SharePolicy::make(const FieldPtr& field, unsigned k, unsigned n) {
    std::vector<FieldElement> xs;
    xs.reserve(n);
    for (unsigned i = 1; i <= n; ++i) xs.push_back(FieldElement::from_u64(field, i));
    return with_xs(k, std::move(xs));
}

SharePolicy SharePolicy::with_xs(unsigned k, std::vector<FieldElement> xs) {
    SharePolicy p;
    p.k = k;
    p.n = static_cast<unsigned>(xs.size());
    p.xs = std::move(xs);
    p.validate();
    return p;
}

void SharePolicy::validate() const {
    if (k < 1 || k > n) raise(ErrorClass::INVALID_ARGUMENT, "threshold out of range");
    if (xs.size() != n) raise(ErrorClass::INVALID_ARGUMENT, "x-coordinate count mismatch");
    for (size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].is_zero()) raise(ErrorClass::INVALID_ARGUMENT, "x = 0 is reserved");
        for (size_t j = i + 1; j < xs.size(); ++j) {
            if (xs[i] == xs[j]) raise(ErrorClass::INVALID_ARGUMENT, "duplicate x-coordinate");
        }
    }
}

namespace {

// Horner evaluation of secret + c1 x + ... + c_{k-1} x^{k-1}.
FieldElement eval_poly(const FieldElement& secret, const std::vector<FieldElement>& coeffs,
                       const FieldElement& x) {
    FieldElement acc = FieldElement(x.field(), 0);
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * x + *it;
    return acc * x + secret;
}

std::vector<SharePoint> sorted_distinct_prefix(const std::vector<SharePoint>& shares, unsigned k) {
    if (shares.size() < k) raise(ErrorClass::INVALID_ARGUMENT, "fewer shares than threshold");
    std::vector<SharePoint> sorted = shares;
    std::sort(sorted.begin(), sorted.end(),
              [](const SharePoint& a, const SharePoint& b) { return a.x.value() < b.x.value(); });
    for (size_t i = 0; i + 1 < sorted.size(); ++i) {
        if (sorted[i].x == sorted[i + 1].x) {
            raise(ErrorClass::INVALID_ARGUMENT, "duplicate x-coordinate among shares");
        }
    }
    sorted.resize(k);
    return sorted;
}

}  // namespace

std::vector<SharePoint> split_secret_with_coefficients(
    const FieldElement& secret, const SharePolicy& policy,
    const std::vector<FieldElement>& coefficients) {
    policy.validate();
    if (coefficients.size() != policy.k - 1) {
        raise(ErrorClass::INVALID_ARGUMENT, "need exactly k-1 coefficients");
    }
    std::vector<SharePoint> shares;
    shares.reserve(policy.n);
    for (const auto& x : policy.xs) {
        shares.push_back(SharePoint{x, eval_poly(secret, coefficients, x)});
    }
    return shares;
}

std::vector<SharePoint> split_secret(const FieldElement& secret, const SharePolicy& policy,
                                     EntropySource& rng) {
    policy.validate();
    std::vector<FieldElement> coeffs;
    coeffs.reserve(policy.k - 1);
    for (unsigned i = 1; i < policy.k; ++i) {
        coeffs.push_back(FieldElement::random(secret.field(), rng));
    }
    return split_secret_with_coefficients(secret, policy, coeffs);
}

FieldElement interpolate_at(const std::vector<SharePoint>& points, const FieldElement& x) {
    if (points.empty()) raise(ErrorClass::INVALID_ARGUMENT, "no points to interpolate");
    for (size_t i = 0; i < points.size(); ++i) {
        for (size_t j = i + 1; j < points.size(); ++j) {
            if (points[i].x == points[j].x) {
                raise(ErrorClass::INVALID_ARGUMENT, "duplicate x-coordinate among points");
            }
        }
    }
    FieldPtr field = x.field();
    FieldElement sum(field, 0);
    for (size_t i = 0; i < points.size(); ++i) {
        FieldElement num(field, 1);
        FieldElement den(field, 1);
        for (size_t j = 0; j < points.size(); ++j) {
            if (j == i) continue;
            num = num * (x - points[j].x);
            den = den * (points[i].x - points[j].x);
        }
        sum = sum + points[i].y * num / den;
    }
    return sum;
}

FieldElement reconstruct_secret(const std::vector<SharePoint>& shares, unsigned k) {
    if (k < 1) raise(ErrorClass::INVALID_ARGUMENT, "threshold must be positive");
    std::vector<SharePoint> chosen = sorted_distinct_prefix(shares, k);
    FieldElement zero(chosen.front().x.field(), 0);
    return interpolate_at(chosen, zero);
}

SharePoint derive_share_at(const std::vector<SharePoint>& shares, unsigned k,
                           const FieldElement& new_x) {
    if (new_x.is_zero()) raise(ErrorClass::INVALID_ARGUMENT, "x = 0 is reserved");
    for (const auto& s : shares) {
        if (s.x == new_x) raise(ErrorClass::INVALID_ARGUMENT, "new x collides with a share");
    }
    std::vector<SharePoint> chosen = sorted_distinct_prefix(shares, k);
    return SharePoint{new_x, interpolate_at(chosen, new_x)};
}

}  // namespace skms
