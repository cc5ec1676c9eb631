#pragma once

#include "gproto/rng.hpp"
#include "gproto/types.hpp"

namespace gproto {

// Number of unknown (NOTA) queries implied by a target rate, chosen so that
// rate ~= unknown / (known + unknown). Round-half-up.
int nota_query_count(double nota_rate, int q_known);

// Draws one N-way K-shot episode from the pool. Per relation: K support
// instances plus a share of q_known known queries (q_known/N each, the first
// q_known%N relations take the remainder). Unknown queries are drawn
// uniformly, without replacement, from the instances of all out-of-episode
// relations; the same instance may reappear in later episodes but never twice
// within one. Deterministic given the rng state.
//
// Throws ConfigError for invalid arguments and SamplingError (naming the
// shortfall) when the pool cannot supply the episode.
Episode sample_episode(const Dataset& pool, int n_way, int k_shot, int q_known,
                       double nota_rate, Rng& rng);

// Checks the episode invariants against its source pool: exactly K support
// instances per relation, query labels in/out of the known set as required,
// and no instance index repeated anywhere in the episode. Throws DataError on
// the first violation.
void validate_episode(const Episode& episode, const Dataset& pool);

}  // namespace gproto
