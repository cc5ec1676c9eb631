#include "gproto/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "gproto/errors.hpp"

namespace gproto {

int nota_query_count(double nota_rate, int q_known) {
    if (nota_rate == 0.0) return 0;
    return static_cast<int>(std::floor(nota_rate / (1.0 - nota_rate) * q_known + 0.5));
}

Episode sample_episode(const Dataset& pool, int n_way, int k_shot, int q_known,
                       double nota_rate, Rng& rng) {
    if (n_way < 1) throw ConfigError("sample_episode: n_way must be >= 1");
    if (k_shot < 1) throw ConfigError("sample_episode: k_shot must be >= 1");
    if (q_known < 1) throw ConfigError("sample_episode: q_known must be >= 1");
    if (!(nota_rate >= 0.0 && nota_rate < 1.0)) {
        throw ConfigError("sample_episode: nota_rate must be in [0, 1)");
    }

    const int base_q = q_known / n_way;
    const int extra = q_known % n_way;
    const int max_need = k_shot + base_q + (extra > 0 ? 1 : 0);

    std::vector<int32_t> eligible;
    for (int32_t r = 0; r < static_cast<int32_t>(pool.instances_by_relation.size()); ++r) {
        if (static_cast<int>(pool.instances_by_relation[static_cast<size_t>(r)].size()) >= max_need) {
            eligible.push_back(r);
        }
    }
    if (static_cast<int>(eligible.size()) < n_way) {
        throw SamplingError("sample_episode: need " + std::to_string(n_way) + " relations with >= " +
                            std::to_string(max_need) + " instances, pool has " +
                            std::to_string(eligible.size()));
    }

    rng.shuffle(eligible);
    std::vector<int32_t> chosen(eligible.begin(), eligible.begin() + n_way);

    Episode ep;
    ep.support.resize(static_cast<size_t>(n_way));
    for (int c = 0; c < n_way; ++c) {
        const int32_t rel = chosen[static_cast<size_t>(c)];
        ep.known_relations.push_back(pool.relation_names[static_cast<size_t>(rel)]);
        std::vector<int32_t> ids = pool.instances_by_relation[static_cast<size_t>(rel)];
        rng.shuffle(ids);
        const int q = base_q + (c < extra ? 1 : 0);
        ep.support[static_cast<size_t>(c)].assign(ids.begin(), ids.begin() + k_shot);
        ep.query_known.insert(ep.query_known.end(), ids.begin() + k_shot, ids.begin() + k_shot + q);
    }

    const int unknown_need = nota_query_count(nota_rate, q_known);
    if (unknown_need > 0) {
        std::unordered_set<int32_t> known_set(chosen.begin(), chosen.end());
        std::vector<int32_t> outside;
        for (int32_t r = 0; r < static_cast<int32_t>(pool.instances_by_relation.size()); ++r) {
            if (known_set.count(r)) continue;
            const auto& ids = pool.instances_by_relation[static_cast<size_t>(r)];
            outside.insert(outside.end(), ids.begin(), ids.end());
        }
        if (static_cast<int>(outside.size()) < unknown_need) {
            throw SamplingError("sample_episode: need " + std::to_string(unknown_need) +
                                " out-of-episode instances for NOTA queries, pool has " +
                                std::to_string(outside.size()));
        }
        rng.shuffle(outside);
        ep.query_unknown.assign(outside.begin(), outside.begin() + unknown_need);
    }
    return ep;
}

void validate_episode(const Episode& episode, const Dataset& pool) {
    const int n = episode.n_way();
    if (n < 1) throw DataError("episode: no known relations");
    std::unordered_set<std::string> known(episode.known_relations.begin(),
                                          episode.known_relations.end());
    if (static_cast<int>(known.size()) != n) throw DataError("episode: duplicate known relation");
    if (static_cast<int>(episode.support.size()) != n) {
        throw DataError("episode: support group count != n_way");
    }

    const int k = episode.k_shot();
    std::unordered_set<int32_t> seen;
    auto check = [&](int32_t idx) -> const Instance& {
        if (idx < 0 || idx >= static_cast<int32_t>(pool.instances.size())) {
            throw DataError("episode: instance index out of range");
        }
        if (!seen.insert(idx).second) {
            throw DataError("episode: instance " + pool.instances[static_cast<size_t>(idx)].id +
                            " appears twice");
        }
        return pool.instances[static_cast<size_t>(idx)];
    };

    for (int c = 0; c < n; ++c) {
        if (static_cast<int>(episode.support[static_cast<size_t>(c)].size()) != k) {
            throw DataError("episode: ragged support groups");
        }
        for (int32_t idx : episode.support[static_cast<size_t>(c)]) {
            const Instance& inst = check(idx);
            if (inst.label != episode.known_relations[static_cast<size_t>(c)]) {
                throw DataError("episode: support instance " + inst.id + " labeled '" + inst.label +
                                "', expected '" + episode.known_relations[static_cast<size_t>(c)] + "'");
            }
        }
    }
    for (int32_t idx : episode.query_known) {
        const Instance& inst = check(idx);
        if (!known.count(inst.label)) {
            throw DataError("episode: known query " + inst.id + " has out-of-episode label");
        }
    }
    for (int32_t idx : episode.query_unknown) {
        const Instance& inst = check(idx);
        if (known.count(inst.label)) {
            throw DataError("episode: unknown query " + inst.id + " has in-episode label");
        }
    }
}

}  // namespace gproto
