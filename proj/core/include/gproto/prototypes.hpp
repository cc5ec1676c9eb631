#pragma once

#include <string>
#include <vector>

#include "gproto/encoder.hpp"
#include "gproto/metric.hpp"
#include "gproto/model.hpp"
#include "gproto/types.hpp"

namespace gproto {

// One class's trainable prototype state: four view Gaussians plus the view
// mixture weights derived from them.
template <class S>
struct ClassModelT {
    std::array<ViewGaussianT<S>, kNumViews> gaussians;
    std::array<S, kNumViews> weights;
};

template <class S>
ClassModelT<S> build_class_model(const ModelConfig& config, const ModelParamsT<S>& params,
                                 const std::vector<const Instance*>& support) {
    ClassModelT<S> out;
    for (int j = 0; j < kNumViews; ++j) {
        std::vector<const std::vector<double>*> embeddings;
        embeddings.reserve(support.size());
        for (const Instance* inst : support) {
            embeddings.push_back(&inst->views[static_cast<size_t>(j)]);
        }
        out.gaussians[static_cast<size_t>(j)] = encode_view(config, params, j, embeddings);
    }
    out.weights = mixture_weights(config, params.mix, out.gaussians);
    return out;
}

template <class S>
S class_distance(const ModelConfig& config, const ClassModelT<S>& cm, const FourViews& x) {
    std::array<S, kNumViews> dist;
    for (int j = 0; j < kNumViews; ++j) {
        dist[static_cast<size_t>(j)] =
            mahalanobis_view(x[static_cast<size_t>(j)], cm.gaussians[static_cast<size_t>(j)], config.distance);
    }
    return combine_view_distances(dist, cm.weights);
}

inline const Instance& instance_at(const Dataset& data, int32_t idx) {
    return data.instances[static_cast<size_t>(idx)];
}

inline std::vector<const Instance*> episode_support(const Dataset& data, const Episode& ep,
                                                    int class_idx) {
    std::vector<const Instance*> out;
    out.reserve(ep.support[static_cast<size_t>(class_idx)].size());
    for (int32_t idx : ep.support[static_cast<size_t>(class_idx)]) {
        out.push_back(&instance_at(data, idx));
    }
    return out;
}

// Per-episode state every downstream consumer (loss, pseudo-negative
// sampling, evaluation) starts from: the N class models plus each class's
// positive (own support) and negative (other-class support) distances.
template <class S>
struct EpisodeStateT {
    std::vector<ClassModelT<S>> classes;
    std::vector<std::vector<S>> pos_support;  // [class] -> distances of its own support
    std::vector<std::vector<S>> neg_support;  // [class] -> distances of the other support
};

template <class S>
EpisodeStateT<S> build_episode_state(const ModelConfig& config, const ModelParamsT<S>& params,
                                     const Dataset& data, const Episode& ep) {
    const int n = ep.n_way();
    EpisodeStateT<S> state;
    state.classes.reserve(static_cast<size_t>(n));
    for (int c = 0; c < n; ++c) {
        state.classes.push_back(build_class_model(config, params, episode_support(data, ep, c)));
    }
    state.pos_support.resize(static_cast<size_t>(n));
    state.neg_support.resize(static_cast<size_t>(n));
    for (int c = 0; c < n; ++c) {
        for (int other = 0; other < n; ++other) {
            auto& sink = other == c ? state.pos_support[static_cast<size_t>(c)]
                                    : state.neg_support[static_cast<size_t>(c)];
            for (int32_t idx : ep.support[static_cast<size_t>(other)]) {
                sink.push_back(
                    class_distance(config, state.classes[static_cast<size_t>(c)], instance_at(data, idx).views));
            }
        }
    }
    return state;
}

// Frozen double-valued view of one class, as consumed by the classifier and
// the pseudo-negative sampler.
template <class S>
ClassPrototype snapshot_prototype(const ClassModelT<S>& cm, const std::string& relation,
                                  double range, double margin) {
    ClassPrototype out;
    out.relation = relation;
    for (int j = 0; j < kNumViews; ++j) {
        const auto& g = cm.gaussians[static_cast<size_t>(j)];
        auto& dst = out.gaussians[static_cast<size_t>(j)];
        dst.mean.reserve(g.mean.size());
        dst.variance.reserve(g.variance.size());
        for (const S& x : g.mean) dst.mean.push_back(scalar_value(x));
        for (const S& x : g.variance) dst.variance.push_back(scalar_value(x));
        out.weights[static_cast<size_t>(j)] = scalar_value(cm.weights[static_cast<size_t>(j)]);
    }
    out.range = range;
    out.margin = margin;
    return out;
}

}  // namespace gproto
