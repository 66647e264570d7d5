#pragma once

#include <vector>

#include "skms/field.hpp"
#include "skms/rng.hpp"

namespace skms {

// One evaluation point of a secret-bearing polynomial. x = 0 is reserved for
// the secret itself and is rejected everywhere.
struct SharePoint {
    FieldElement x;
    FieldElement y;
};

// Threshold policy: k-of-n at the given distinct nonzero evaluation points.
struct SharePolicy {
    unsigned k = 0;
    unsigned n = 0;
    std::vector<FieldElement> xs;

    static SharePolicy make(const FieldPtr& field, unsigned k, unsigned n);
    static SharePolicy with_xs(unsigned k, std::vector<FieldElement> xs);

    void validate() const;  // throws INVALID_ARGUMENT
};

// Shares of `secret` on a uniformly random polynomial of degree k-1 with
// P(0) = secret, evaluated at policy.xs.
std::vector<SharePoint> split_secret(const FieldElement& secret, const SharePolicy& policy,
                                     EntropySource& rng);

// Same, with the non-constant coefficients pinned (degree k-1 needs exactly
// k-1 of them). Used by hand-computed vectors and by tests.
std::vector<SharePoint> split_secret_with_coefficients(const FieldElement& secret,
                                                       const SharePolicy& policy,
                                                       const std::vector<FieldElement>& coefficients);

// P(0) of the unique degree-(k-1) polynomial through the first k shares after
// sorting by x ascending. Throws on duplicates or fewer than k shares.
FieldElement reconstruct_secret(const std::vector<SharePoint>& shares, unsigned k);

// Evaluate the unique interpolating polynomial through all points at x.
FieldElement interpolate_at(const std::vector<SharePoint>& points, const FieldElement& x);

// (new_x, P(new_x)) on the polynomial defined by the first k shares (sorted
// by x). new_x must be nonzero and distinct from every input x.
SharePoint derive_share_at(const std::vector<SharePoint>& shares, unsigned k,
                           const FieldElement& new_x);

}  // namespace skms
