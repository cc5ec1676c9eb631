#include "gproto/loss.hpp"

#include <cmath>

#include "gproto/errors.hpp"

namespace gproto {

void TrainConfig::validate() const {
    if (!(alpha > 0.0)) throw ConfigError("train: alpha must be > 0");
    if (!(beta > 0.0)) throw ConfigError("train: beta must be > 0");
    if (!(lambda >= 0.0)) throw ConfigError("train: lambda must be >= 0");
    // lr = 0 is allowed: a null step is the documented no-op case.
    if (!(lr >= 0.0)) throw ConfigError("train: lr must be >= 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
    if (episodes < 1) throw ConfigError("train: episodes must be >= 1");
    if (batch_episodes < 1) throw ConfigError("train: batch_episodes must be >= 1");
    if (n_way < 1) throw ConfigError("train: n_way must be >= 1");
    if (k_shot < 1) throw ConfigError("train: k_shot must be >= 1");
    if (q_known < 1) throw ConfigError("train: q_known must be >= 1");
    if (!(nota_rate >= 0.0 && nota_rate < 1.0)) throw ConfigError("train: nota_rate must be in [0, 1)");
    if (!(pns_ratio >= 0.0)) throw ConfigError("train: pns_ratio must be >= 0");
    if (!no_pns && pns_ratio > 0.0 && !(pns_noise_scale > 0.0)) {
        throw ConfigError("train: pns_noise_scale must be > 0 when PNS is active");
    }
    if (pns_pool_factor < 1) throw ConfigError("train: pns_pool_factor must be >= 1");
    if (early_stop_window < 1) throw ConfigError("train: early_stop_window must be >= 1");
    if (early_stop_patience < 1) throw ConfigError("train: early_stop_patience must be >= 1");
}

std::vector<FourViews> sample_episode_pns(const ModelConfig& mc, const TrainConfig& tc,
                                          const ModelParams& params, const Dataset& data,
                                          const Episode& ep, Rng& rng) {
    if (tc.no_pns || tc.pns_ratio == 0.0) return {};
    const int need =
        static_cast<int>(std::ceil(tc.pns_ratio * ep.n_way() * ep.k_shot()));
    if (need == 0) return {};

    const EpisodeStateT<double> state = build_episode_state(mc, params, data, ep);
    const int n = ep.n_way();
    std::vector<ClassPrototype> prototypes;
    prototypes.reserve(static_cast<size_t>(n));
    for (int c = 0; c < n; ++c) {
        const size_t cls = static_cast<size_t>(c);
        const double range = compute_range(state.pos_support[cls], params.tau1);
        const double margin = margin_for_class(tc, state.neg_support[cls], range, params.tau2);
        prototypes.push_back(snapshot_prototype(state.classes[cls], ep.known_relations[cls],
                                                range, margin));
    }

    std::vector<const FourViews*> anchors;
    for (int c = 0; c < n; ++c) {
        for (int32_t idx : ep.support[static_cast<size_t>(c)]) {
            anchors.push_back(&instance_at(data, idx).views);
        }
    }

    const int pool = need * tc.pns_pool_factor;
    const auto candidates =
        pns_candidates(prototypes, anchors, pool, tc.pns_noise_scale, mc.distance, rng);
    const PseudoNegativeSet pset = pns_probabilities(candidates, prototypes, mc.distance);
    return select_pns(pset, tc.pns_ratio, ep.n_way(), ep.k_shot(), rng);
}

}  // namespace gproto
