#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "gproto/encoder.hpp"
#include "gproto/errors.hpp"
#include "gproto/model.hpp"
#include "gproto/tape.hpp"
#include "gproto/types.hpp"

namespace gproto {

// Diagonal Mahalanobis distance of a point to one view's Gaussian. The
// default weights each squared deviation BY the variance (the form the model
// trains against); inverse-variance is the textbook normalization, unit drops
// the variance (squared Euclidean). Z is the point's scalar type, S the
// prototype's; mixing plain data with autodiff prototypes is the common case.
template <class S, class Z>
S mahalanobis_view(const std::vector<Z>& z, const ViewGaussianT<S>& g, DistanceMode mode) {
    if (z.size() != g.mean.size()) {
        throw InputError("mahalanobis_view: dimension mismatch (" + std::to_string(z.size()) +
                         " vs " + std::to_string(g.mean.size()) + ")");
    }
    for (const Z& x : z) {
        if (!std::isfinite(scalar_value(x))) {
            throw NumericError("mahalanobis_view: non-finite input component");
        }
    }
    S acc = (z[0] - g.mean[0]) * (z[0] - g.mean[0]);
    if (mode == DistanceMode::variance_weighted) acc *= g.variance[0];
    if (mode == DistanceMode::inverse_variance) acc = acc / g.variance[0];
    for (size_t i = 1; i < z.size(); ++i) {
        S sq = (z[i] - g.mean[i]) * (z[i] - g.mean[i]);
        if (mode == DistanceMode::variance_weighted) sq *= g.variance[i];
        if (mode == DistanceMode::inverse_variance) sq = sq / g.variance[i];
        acc += sq;
    }
    return acc;
}

// Adaptive view-mixture weights: each view contributes a [mean; variance]
// summary token; tokens pass through a single-head self-attention block and a
// per-token scalar score head; the softmax over the four scores is the weight
// vector. Ablation modes replace this with the score head alone, fixed
// uniform weights, or a one-hot single view.
template <class S>
std::array<S, kNumViews> mixture_weights(const ModelConfig& config, const MixtureParamsT<S>& mix,
                                         const std::array<ViewGaussianT<S>, kNumViews>& gaussians) {
    const S& exemplar = mix.b_score;
    if (config.weights == WeightMode::equal) {
        std::array<S, kNumViews> w;
        for (auto& x : w) x = constant_like(exemplar, 1.0 / kNumViews);
        return w;
    }
    if (config.weights == WeightMode::single_view) {
        std::array<S, kNumViews> w;
        for (int j = 0; j < kNumViews; ++j) {
            w[static_cast<size_t>(j)] = constant_like(exemplar, j == config.single_view ? 1.0 : 0.0);
        }
        return w;
    }

    std::vector<std::vector<S>> tokens;
    tokens.reserve(kNumViews);
    for (const auto& g : gaussians) {
        std::vector<S> tok;
        tok.reserve(g.mean.size() + g.variance.size());
        tok.insert(tok.end(), g.mean.begin(), g.mean.end());
        tok.insert(tok.end(), g.variance.begin(), g.variance.end());
        tokens.push_back(std::move(tok));
    }

    std::vector<S> scores;
    scores.reserve(kNumViews);
    auto score_of = [&mix](const std::vector<S>& row) {
        S acc = mix.b_score + mix.w_score[0] * row[0];
        for (size_t i = 1; i < mix.w_score.size(); ++i) acc += mix.w_score[i] * row[i];
        return acc;
    };
    if (config.weights == WeightMode::attention) {
        static const std::vector<int> kAllRows = {0, 1, 2, 3};
        const auto rows = attention_rows(tokens, kAllRows, mix.aq, mix.ak, mix.av, mix.ao, 1);
        for (const auto& row : rows) scores.push_back(score_of(row));
    } else {  // linear_only: the score head applied straight to the tokens
        for (const auto& tok : tokens) scores.push_back(score_of(tok));
    }

    const std::vector<S> w = softmax(scores);
    return {w[0], w[1], w[2], w[3]};
}

// Weighted sum of the four per-view distances.
template <class S>
S combine_view_distances(const std::array<S, kNumViews>& view_distances,
                         const std::array<S, kNumViews>& w) {
    S acc = w[0] * view_distances[0];
    for (int j = 1; j < kNumViews; ++j) {
        acc += w[static_cast<size_t>(j)] * view_distances[static_cast<size_t>(j)];
    }
    return acc;
}

// Plain-double distance of a four-view point to a frozen class prototype.
inline double prototype_distance(const ClassPrototype& proto, const FourViews& x,
                                 DistanceMode mode) {
    std::array<double, kNumViews> dist;
    for (int j = 0; j < kNumViews; ++j) {
        dist[static_cast<size_t>(j)] = mahalanobis_view(x[static_cast<size_t>(j)],
                                                        proto.gaussians[static_cast<size_t>(j)], mode);
    }
    double acc = 0.0;
    for (int j = 0; j < kNumViews; ++j) {
        acc += proto.weights[static_cast<size_t>(j)] * dist[static_cast<size_t>(j)];
    }
    return acc;
}

}  // namespace gproto
