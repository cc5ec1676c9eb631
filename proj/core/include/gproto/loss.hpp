#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gproto/boundary.hpp"
#include "gproto/prototypes.hpp"

namespace gproto {

// Everything the trainer and the episode loss consume beyond the
// architecture: loss shape (lambda, alpha, beta), optimizer, episode
// protocol, pseudo-negative sampling, convergence, and the training-time
// ablation switches. Architecture-level ablations (distance and weight modes)
// live in ModelConfig instead, since they change inference too.
struct TrainConfig {
    double lambda = 0.001;  // range-shrinkage weight
    double alpha = 1.0;     // positive-term sharpness
    double beta = 3.0;      // negative-term sharpness

    double lr = 0.0002;
    double weight_decay = 0.0001;
    int episodes = 2000;
    int batch_episodes = 1;  // episodes averaged per optimizer step
    bool train_tau = true;

    int n_way = 5;
    int k_shot = 1;
    int q_known = 10;
    double nota_rate = 0.5;

    double pns_ratio = 0.2;        // ceil(ratio * N * K) negatives per episode
    double pns_noise_scale = 1.0;  // noise std = scale * sqrt(mean range)
    int pns_pool_factor = 10;      // candidate pool = factor * selected count

    // Early stop: quit when the `window`-episode moving-average loss has not
    // improved by `min_improvement` for `patience` episodes.
    int early_stop_window = 100;
    int early_stop_patience = 200;
    double early_stop_min_improvement = 1e-4;

    uint64_t seed = 1;

    // Ablations (boundary-learning toggles; see Model/WeightMode for the rest).
    bool no_margin = false;      // force M_c = 0
    double fixed_margin = -1.0;  // >= 0 bypasses the margin quantile with a constant
    bool no_pns = false;

    void validate() const;  // throws ConfigError
};

// Per-episode byproducts the trainer records into the loss trace.
struct EpisodeDiagnostics {
    double loss = 0.0;
    std::vector<double> ranges;
    std::vector<double> margins;
    int pns_count = 0;

    double mean_range() const {
        double s = 0.0;
        for (double r : ranges) s += r;
        return ranges.empty() ? 0.0 : s / static_cast<double>(ranges.size());
    }
    double mean_margin() const {
        double s = 0.0;
        for (double m : margins) s += m;
        return margins.empty() ? 0.0 : s / static_cast<double>(margins.size());
    }
};

// Margin policy for one class: the adaptive quantile margin by default, a
// constant under the fixed-margin ablation, zero under no-margin or when the
// episode provides no negatives to take a quantile of (1-way, no PNS).
template <class S>
S margin_for_class(const TrainConfig& tc, const std::vector<S>& negative_distances,
                   const S& range, const S& tau2) {
    if (tc.no_margin) return constant_like(range, 0.0);
    if (tc.fixed_margin >= 0.0) return constant_like(range, tc.fixed_margin);
    if (negative_distances.empty()) return constant_like(range, 0.0);
    return compute_margin(negative_distances, range, tau2);
}

// Pseudo-negative generation for one episode, run as a plain-double forward
// pass: build the class models, ranges and margins, then anchor candidates on
// support points, keep those outside every R_c + M_c, and draw the
// boundary-proximity probability-proportional selection. The returned points
// are plain data; the
// loss treats them as fixed negatives, so gradients are conditioned on the
// sampled set.
std::vector<FourViews> sample_episode_pns(const ModelConfig& mc, const TrainConfig& tc,
                                          const ModelParams& params, const Dataset& data,
                                          const Episode& ep, Rng& rng);

// One class's contribution to the contrastive loss: a range-shrinkage term
// lambda * R_c^2, a positive log-sum-exp pulling positive distances inside
// R_c, and a negative log-sum-exp pushing negative distances beyond
// R_c + M_c. Empty sums contribute exactly zero (log 1).
template <class S>
S class_loss_term(const TrainConfig& tc, const S& range, const S& margin,
                  const std::vector<S>& pos_dists, const std::vector<S>& neg_dists) {
    S term = tc.lambda * (range * range);
    if (!pos_dists.empty()) {
        std::vector<S> exps;
        exps.reserve(pos_dists.size());
        for (const S& d : pos_dists) exps.push_back(tc.alpha * (d - range));
        term += log1p_sum_exp(exps) / tc.alpha;
    }
    if (!neg_dists.empty()) {
        const S bound = range + margin;
        std::vector<S> exps;
        exps.reserve(neg_dists.size());
        for (const S& d : neg_dists) exps.push_back(-tc.beta * (d - bound));
        term += log1p_sum_exp(exps) / tc.beta;
    }
    return term;
}

// The per-episode contrastive loss: the class terms above averaged over the
// N classes. Positives for class c are its support and known queries;
// negatives are every other support/known-query instance, all unknown
// queries, and the pseudo-negative points.
template <class S>
S episode_loss(const ModelConfig& mc, const TrainConfig& tc, const ModelParamsT<S>& params,
               const Dataset& data, const Episode& ep, const std::vector<FourViews>& pns,
               EpisodeDiagnostics* diag = nullptr) {
    const int n = ep.n_way();
    EpisodeStateT<S> state = build_episode_state(mc, params, data, ep);

    // Known-query distances, grouped by whether the query belongs to the
    // class; unknown queries and pseudo-negatives are negatives everywhere.
    std::vector<std::vector<S>> pos_query(static_cast<size_t>(n));
    std::vector<std::vector<S>> neg_query(static_cast<size_t>(n));
    for (int32_t idx : ep.query_known) {
        const Instance& inst = instance_at(data, idx);
        for (int c = 0; c < n; ++c) {
            auto& sink = inst.label == ep.known_relations[static_cast<size_t>(c)]
                             ? pos_query[static_cast<size_t>(c)]
                             : neg_query[static_cast<size_t>(c)];
            sink.push_back(class_distance(mc, state.classes[static_cast<size_t>(c)], inst.views));
        }
    }
    for (int32_t idx : ep.query_unknown) {
        const Instance& inst = instance_at(data, idx);
        for (int c = 0; c < n; ++c) {
            neg_query[static_cast<size_t>(c)].push_back(
                class_distance(mc, state.classes[static_cast<size_t>(c)], inst.views));
        }
    }
    std::vector<std::vector<S>> pns_dist(static_cast<size_t>(n));
    for (const FourViews& point : pns) {
        for (int c = 0; c < n; ++c) {
            pns_dist[static_cast<size_t>(c)].push_back(
                class_distance(mc, state.classes[static_cast<size_t>(c)], point));
        }
    }

    if (diag) {
        diag->ranges.clear();
        diag->margins.clear();
        diag->pns_count = static_cast<int>(pns.size());
    }

    S total = constant_like(params.tau1, 0.0);
    for (int c = 0; c < n; ++c) {
        const size_t cls = static_cast<size_t>(c);
        const S range = compute_range(state.pos_support[cls], params.tau1);

        // Margin negatives follow the boundary recipe: the expanded support
        // set (other-class support plus pseudo-negatives), not the queries.
        std::vector<S> boundary_negs = state.neg_support[cls];
        boundary_negs.insert(boundary_negs.end(), pns_dist[cls].begin(), pns_dist[cls].end());
        const S margin = margin_for_class(tc, boundary_negs, range, params.tau2);

        std::vector<S> pos_dists = state.pos_support[cls];
        pos_dists.insert(pos_dists.end(), pos_query[cls].begin(), pos_query[cls].end());
        std::vector<S> neg_dists = std::move(boundary_negs);
        neg_dists.insert(neg_dists.end(), neg_query[cls].begin(), neg_query[cls].end());
        const S term = class_loss_term(tc, range, margin, pos_dists, neg_dists);

        if (!std::isfinite(scalar_value(term))) {
            throw NumericError("episode_loss: non-finite loss for class '" +
                               ep.known_relations[cls] + "'");
        }
        if (diag) {
            diag->ranges.push_back(scalar_value(range));
            diag->margins.push_back(scalar_value(margin));
        }
        total += term;
    }
    total = total / static_cast<double>(n);
    if (diag) diag->loss = scalar_value(total);
    return total;
}

}  // namespace gproto
