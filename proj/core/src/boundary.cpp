#include "gproto/boundary.hpp"

#include <cmath>
#include <string>

#include "gproto/metric.hpp"

namespace gproto {

Prediction classify(const std::vector<double>& distances, const std::vector<double>& ranges) {
    Prediction pred;
    for (size_t c = 0; c < distances.size(); ++c) {
        if (distances[c] > ranges[c]) continue;
        if (pred.is_nota() || distances[c] < distances[static_cast<size_t>(pred.class_index)]) {
            pred.class_index = static_cast<int>(c);
        }
    }
    return pred;
}

Prediction classify(const std::vector<double>& distances,
                    const std::vector<ClassPrototype>& prototypes) {
    std::vector<double> ranges;
    ranges.reserve(prototypes.size());
    for (const ClassPrototype& p : prototypes) ranges.push_back(p.range);
    return classify(distances, ranges);
}

namespace {

bool outside_all_boundaries(const FourViews& point, const std::vector<ClassPrototype>& prototypes,
                            DistanceMode mode) {
    for (const ClassPrototype& p : prototypes) {
        if (prototype_distance(p, point, mode) <= p.range + p.margin) return false;
    }
    return true;
}

}  // namespace

std::vector<FourViews> pns_candidates(const std::vector<ClassPrototype>& prototypes,
                                      const std::vector<const FourViews*>& support,
                                      int count_pool, double noise_scale, DistanceMode mode,
                                      Rng& rng) {
    if (count_pool < 1) throw ConfigError("pns_candidates: count_pool must be >= 1");
    if (!(noise_scale > 0.0)) {
        throw ConfigError("pns_candidates: noise_scale must be > 0 (zero noise keeps candidates "
                          "inside the class boundaries)");
    }
    if (prototypes.empty() || support.empty()) {
        throw InputError("pns_candidates: need prototypes and support anchors");
    }

    double mean_range = 0.0;
    for (const ClassPrototype& p : prototypes) mean_range += p.range;
    mean_range /= static_cast<double>(prototypes.size());
    const double stddev = noise_scale * std::sqrt(std::max(mean_range, 0.0));

    constexpr int kMaxAttempts = 50;
    std::vector<FourViews> out;
    out.reserve(static_cast<size_t>(count_pool));
    for (int i = 0; i < count_pool; ++i) {
        bool accepted = false;
        for (int attempt = 0; attempt < kMaxAttempts && !accepted; ++attempt) {
            const FourViews& anchor = *support[rng.uniform_index(support.size())];
            FourViews candidate;
            for (int j = 0; j < kNumViews; ++j) {
                auto& vec = candidate[static_cast<size_t>(j)];
                vec.reserve(anchor[static_cast<size_t>(j)].size());
                for (double x : anchor[static_cast<size_t>(j)]) {
                    vec.push_back(x + rng.normal(0.0, stddev));
                }
            }
            if (outside_all_boundaries(candidate, prototypes, mode)) {
                out.push_back(std::move(candidate));
                accepted = true;
            }
        }
        if (!accepted) {
            throw SamplingError("pns_candidates: rejection failed " + std::to_string(kMaxAttempts) +
                                " times; class boundaries cover the sampling region");
        }
    }
    return out;
}

PseudoNegativeSet pns_probabilities(const std::vector<FourViews>& candidates,
                                    const std::vector<ClassPrototype>& prototypes,
                                    DistanceMode mode) {
    if (candidates.empty()) throw InputError("pns_probabilities: no candidates");
    for (const ClassPrototype& p : prototypes) {
        if (!(p.range > 0.0)) {
            throw NumericError("pns_probabilities: degenerate prototype '" + p.relation +
                               "' with zero range");
        }
    }
    PseudoNegativeSet pset;
    pset.points = candidates;
    pset.scores.reserve(candidates.size());
    for (const FourViews& point : candidates) {
        double gap = 0.0;
        for (const ClassPrototype& p : prototypes) {
            gap += std::abs(prototype_distance(p, point, mode) - (p.range + p.margin)) / p.range;
        }
        pset.scores.push_back(1.0 / gap);
    }
    pset.probabilities = softmax(pset.scores);
    return pset;
}

std::vector<FourViews> select_pns(const PseudoNegativeSet& pset, double ratio, int n_way,
                                  int k_shot, Rng& rng) {
    if (ratio < 0.0) throw ConfigError("select_pns: ratio must be >= 0");
    const int need = static_cast<int>(std::ceil(ratio * n_way * k_shot));
    if (need == 0) return {};
    if (static_cast<int>(pset.points.size()) < need) {
        throw SamplingError("select_pns: need " + std::to_string(need) + " points, pool has " +
                            std::to_string(pset.points.size()));
    }

    std::vector<size_t> alive(pset.points.size());
    std::iota(alive.begin(), alive.end(), size_t{0});
    std::vector<double> weight(pset.probabilities);
    std::vector<FourViews> out;
    out.reserve(static_cast<size_t>(need));
    for (int k = 0; k < need; ++k) {
        double total = 0.0;
        for (size_t idx : alive) total += weight[idx];
        const double u = rng.uniform() * total;
        double cum = 0.0;
        size_t chosen = alive.back();
        size_t chosen_pos = alive.size() - 1;
        for (size_t pos = 0; pos < alive.size(); ++pos) {
            cum += weight[alive[pos]];
            if (u < cum) {
                chosen = alive[pos];
                chosen_pos = pos;
                break;
            }
        }
        out.push_back(pset.points[chosen]);
        alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(chosen_pos));
    }
    return out;
}

}  // namespace gproto
