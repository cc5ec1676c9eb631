#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "gproto/errors.hpp"
#include "gproto/model.hpp"
#include "gproto/rng.hpp"
#include "gproto/tape.hpp"
#include "gproto/types.hpp"

namespace gproto {

// Linear-interpolation empirical quantile at `level` in [0, 1]: position
// p = (n-1) * level between order statistics, result x_(i) + frac * (x_(i+1)
// - x_(i)). Continuous in both the data and the level, so gradients flow to
// the two active order statistics and to a learnable level. Ordering is
// decided on plain values with index tie-break, keeping the pick
// deterministic.
template <class S>
S quantile_interp(const std::vector<S>& values, const S& level) {
    if (values.empty()) throw InputError("quantile_interp: empty sample");
    const size_t n = values.size();
    if (n == 1) return values[0];

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&values](size_t a, size_t b) {
        const double va = scalar_value(values[a]);
        const double vb = scalar_value(values[b]);
        return va < vb || (va == vb && a < b);
    });

    const S p = static_cast<double>(n - 1) * level;
    int i = static_cast<int>(std::floor(scalar_value(p)));
    i = std::max(0, std::min(i, static_cast<int>(n) - 2));
    const S frac = p - static_cast<double>(i);
    const S& lo = values[order[static_cast<size_t>(i)]];
    const S& hi = values[order[static_cast<size_t>(i) + 1]];
    return lo + frac * (hi - lo);
}

// Prototype range: the level-(1 - tau1) quantile of the positive support
// distances, so that with small tau1 most positives fall inside the range.
template <class S>
S compute_range(const std::vector<S>& positive_distances, const S& tau1) {
    if (positive_distances.empty()) throw InputError("compute_range: no positive distances");
    const S level = 1.0 - tau1;
    return quantile_interp(positive_distances, level);
}

// Adaptive margin: the level-tau2 quantile of the negative distance offsets
// (d - R_c), clamped at zero. With small tau2 most negatives
// land beyond R_c + M_c; the clamp keeps the NOTA buffer outside the
// acceptance region.
template <class S>
S compute_margin(const std::vector<S>& negative_distances, const S& range, const S& tau2) {
    if (negative_distances.empty()) throw InputError("compute_margin: no negative distances");
    std::vector<S> offsets;
    offsets.reserve(negative_distances.size());
    for (const S& d : negative_distances) offsets.push_back(d - range);
    return max0(quantile_interp(offsets, tau2));
}

// Dual-threshold open-set rule: among classes whose range contains the query
// (d <= R_c), pick the smallest distance, lowest class index on ties;
// otherwise NOTA. The margin band (R_c, R_c + M_c] is already outside every
// acceptance region, so it classifies as NOTA.
Prediction classify(const std::vector<double>& distances, const std::vector<double>& ranges);
Prediction classify(const std::vector<double>& distances,
                    const std::vector<ClassPrototype>& prototypes);

// Pseudo-negative sampling (training-time device). Candidates are support
// view-vectors plus isotropic Gaussian noise with standard deviation
// noise_scale * sqrt(mean range), rejection-resampled (at most 50 attempts
// per slot) until they land outside R_c + M_c of every class.
std::vector<FourViews> pns_candidates(const std::vector<ClassPrototype>& prototypes,
                                      const std::vector<const FourViews*>& support,
                                      int count_pool, double noise_scale, DistanceMode mode,
                                      Rng& rng);

// Synthetic negatives with their boundary-proximity selection distribution.
struct PseudoNegativeSet {
    std::vector<FourViews> points;
    std::vector<double> scores;         // inverse summed normalized boundary gap
    std::vector<double> probabilities;  // softmax over scores, sums to 1
};

// score = [sum_c |d(p, r_c) - (R_c + M_c)| / R_c]^-1, then a softmax over the
// candidate pool. Candidates nearer the boundaries score higher.
PseudoNegativeSet pns_probabilities(const std::vector<FourViews>& candidates,
                                    const std::vector<ClassPrototype>& prototypes,
                                    DistanceMode mode);

// Draws ceil(ratio * n_way * k_shot) points without replacement, probability
// proportional to the selection distribution.
std::vector<FourViews> select_pns(const PseudoNegativeSet& pset, double ratio, int n_way,
                                  int k_shot, Rng& rng);

}  // namespace gproto
