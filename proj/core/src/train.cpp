#include "gproto/train.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <unordered_set>

#include "gproto/dataset.hpp"
#include "gproto/errors.hpp"
#include "gproto/sampler.hpp"
#include "gproto/text.hpp"

namespace gproto {

ModelParams episode_gradients(const ModelConfig& mc, const TrainConfig& tc,
                              const ModelParams& params, const Dataset& data, const Episode& ep,
                              const std::vector<FourViews>& pns, double* loss_value,
                              EpisodeDiagnostics* diag) {
    // Reusing one tape per thread keeps its node storage warm across the
    // thousands of episodes a training run records on it.
    static thread_local Tape tape;
    tape.clear();
    const ModelParamsT<Var> lifted = lift_params(params, tape);
    const Var loss = episode_loss(mc, tc, lifted, data, ep, pns, diag);
    if (loss_value) *loss_value = loss.val();
    const std::vector<double> adjoints = tape.backward(loss.index());
    return read_gradients(lifted, adjoints, mc);
}

void sgd_step(ModelParams& params, const ModelParams& grads, const TrainConfig& tc) {
    auto prefs = flatten_params(params);
    const auto grefs = flatten_params(grads);
    for (size_t i = 0; i < prefs.size(); ++i) {
        const ParamBlock block = prefs[i].block;
        if (!tc.train_tau && (block == ParamBlock::tau1 || block == ParamBlock::tau2)) continue;
        double& p = *prefs[i].value;
        const double decay = prefs[i].decays ? tc.weight_decay * p : 0.0;
        p -= tc.lr * (*grefs[i].value + decay);
    }
    params.tau1 = std::clamp(params.tau1, 0.01, 0.99);
    params.tau2 = std::clamp(params.tau2, 0.01, 0.99);
}

TrainResult train(const Dataset& pool, const ModelConfig& mc, ModelParams params,
                  const TrainConfig& tc) {
    mc.validate();
    tc.validate();

    TrainResult result;
    Rng episode_rng(derive_seed(tc.seed, 10));
    Rng pns_rng(derive_seed(tc.seed, 11));

    ModelParams batch_grads = zeros_like(mc);
    auto batch_refs = flatten_params(batch_grads);
    int in_batch = 0;

    std::deque<double> window;
    double window_sum = 0.0;
    double best_ma = std::numeric_limits<double>::infinity();
    int last_improvement = tc.early_stop_window - 1;

    for (int e = 0; e < tc.episodes; ++e) {
        try {
            const Episode episode = sample_episode(pool, tc.n_way, tc.k_shot, tc.q_known,
                                                   tc.nota_rate, episode_rng);
            const std::vector<FourViews> pns =
                sample_episode_pns(mc, tc, params, pool, episode, pns_rng);
            EpisodeDiagnostics diag;
            double loss = 0.0;
            const ModelParams grads =
                episode_gradients(mc, tc, params, pool, episode, pns, &loss, &diag);
            if (!std::isfinite(loss)) {
                throw NumericError("episode " + std::to_string(e) + ": non-finite loss");
            }

            const auto grefs = flatten_params(grads);
            for (size_t i = 0; i < batch_refs.size(); ++i) *batch_refs[i].value += *grefs[i].value;
            ++in_batch;
            if (in_batch == tc.batch_episodes || e == tc.episodes - 1) {
                if (in_batch > 1) {
                    for (auto& ref : batch_refs) *ref.value /= static_cast<double>(in_batch);
                }
                sgd_step(params, batch_grads, tc);
                for (auto& ref : batch_refs) *ref.value = 0.0;
                in_batch = 0;
            }

            result.trace.push_back({e, loss, diag.mean_range(), diag.mean_margin()});
            result.episodes_run = e + 1;

            window.push_back(loss);
            window_sum += loss;
            if (static_cast<int>(window.size()) > tc.early_stop_window) {
                window_sum -= window.front();
                window.pop_front();
            }
            if (static_cast<int>(window.size()) == tc.early_stop_window) {
                const double ma = window_sum / tc.early_stop_window;
                if (ma < best_ma - tc.early_stop_min_improvement) {
                    best_ma = ma;
                    last_improvement = e;
                } else if (e - last_improvement >= tc.early_stop_patience) {
                    result.early_stopped = true;
                    break;
                }
            }
        } catch (const NumericError& err) {
            result.diverged = true;
            result.divergence_reason = err.what();
            break;
        }
    }

    result.params = std::move(params);
    return result;
}

std::string trace_csv(const std::vector<TraceRow>& trace) {
    std::string out = "episode,loss,R_mean,M_mean\n";
    for (const TraceRow& row : trace) {
        out += std::to_string(row.episode);
        out += ',';
        out += format_double(row.loss);
        out += ',';
        out += format_double(row.r_mean);
        out += ',';
        out += format_double(row.m_mean);
        out += '\n';
    }
    return out;
}

namespace {

// Quantile interpolation is piecewise linear; central differences are only
// meaningful away from the pieces' joints. These guards reject episodes whose
// quantile inputs could cross a joint within a finite-difference step.
struct KnotGuards {
    double min_gap = 0.1;          // between adjacent sorted quantile inputs
    double min_margin_raw = 0.05;  // distance of the raw margin from the zero clamp
    double min_level_pos = 0.02;   // distance of the position p from an integer
};

bool list_clears_knots(std::vector<double> values, double level, const KnotGuards& g) {
    if (values.size() < 2) return true;
    std::sort(values.begin(), values.end());
    for (size_t i = 0; i + 1 < values.size(); ++i) {
        if (values[i + 1] - values[i] < g.min_gap) return false;
    }
    const double p = static_cast<double>(values.size() - 1) * level;
    return std::abs(p - std::round(p)) >= g.min_level_pos;
}

bool episode_clears_knots(const ModelConfig& mc, const TrainConfig& tc, const ModelParams& params,
                          const Dataset& pool, const Episode& ep,
                          const std::vector<FourViews>& pns, const KnotGuards& g) {
    const EpisodeStateT<double> state = build_episode_state(mc, params, pool, ep);
    for (int c = 0; c < ep.n_way(); ++c) {
        const size_t cls = static_cast<size_t>(c);
        if (!list_clears_knots(state.pos_support[cls], 1.0 - params.tau1, g)) return false;
        const double range = compute_range(state.pos_support[cls], params.tau1);

        std::vector<double> negs = state.neg_support[cls];
        for (const FourViews& point : pns) {
            negs.push_back(class_distance(mc, state.classes[cls], point));
        }
        if (tc.no_margin || tc.fixed_margin >= 0.0 || negs.empty()) continue;
        std::vector<double> offsets;
        offsets.reserve(negs.size());
        for (double d : negs) offsets.push_back(d - range);
        if (!list_clears_knots(offsets, params.tau2, g)) return false;
        if (std::abs(quantile_interp(offsets, params.tau2)) < g.min_margin_raw) return false;
    }
    return true;
}

// Moves a quantile level until position (n-1)*level sits away from every
// integer for each expected sample size; keeps tau generic so FD never
// straddles an interpolation joint.
double nudge_level_off_knots(double level, const std::vector<size_t>& sizes, bool complement,
                             double min_dist) {
    for (int k = 0; k < 50; ++k) {
        const double cand = level + 0.0137 * k;
        if (cand <= 0.01 || cand >= 0.99) break;
        const double used = complement ? 1.0 - cand : cand;
        bool ok = true;
        for (size_t n : sizes) {
            if (n < 2) continue;
            const double p = static_cast<double>(n - 1) * used;
            if (std::abs(p - std::round(p)) < min_dist) {
                ok = false;
                break;
            }
        }
        if (ok) return cand;
    }
    return level;
}

}  // namespace

GradientReport grad_check(const GradCheckSettings& settings) {
    ModelConfig mc = settings.model;
    TrainConfig tc = settings.train;
    mc.validate();
    tc.validate();

    SyntheticSpec spec;
    spec.relations = std::max(tc.n_way * 2, tc.n_way + 2);
    spec.dim = mc.dim;
    spec.center_scale = 2.0;
    spec.sigma = 0.5;
    spec.instances_per_relation = tc.k_shot + tc.q_known + 4;
    spec.seed = derive_seed(settings.seed, 40);
    const Dataset pool = generate_synthetic(spec);

    ModelParams params = init_params(mc, settings.seed);
    const int pns_need = (tc.no_pns || tc.pns_ratio == 0.0)
                             ? 0
                             : static_cast<int>(std::ceil(tc.pns_ratio * tc.n_way * tc.k_shot));
    const size_t margin_n = static_cast<size_t>((tc.n_way - 1) * tc.k_shot + pns_need);
    const size_t pos_n = static_cast<size_t>(tc.k_shot);
    params.tau1 = nudge_level_off_knots(params.tau1, {pos_n}, true, 0.02);
    params.tau2 = nudge_level_off_knots(params.tau2, {margin_n}, false, 0.02);

    Rng episode_rng(derive_seed(settings.seed, 30));
    Rng pns_rng(derive_seed(settings.seed, 31));
    Rng probe_rng(derive_seed(settings.seed, 32));

    const auto refs = flatten_params(params);
    std::array<std::vector<size_t>, kParamBlocks.size()> block_coords;
    for (size_t i = 0; i < refs.size(); ++i) {
        block_coords[static_cast<size_t>(refs[i].block)].push_back(i);
    }

    GradientReport report;
    const KnotGuards guards;
    const int max_attempts = settings.trials * 50;
    int attempts = 0;
    while (report.episodes < settings.trials) {
        if (++attempts > max_attempts) {
            throw SamplingError("grad_check: could not find enough knot-free episodes");
        }
        const Episode ep =
            sample_episode(pool, tc.n_way, tc.k_shot, tc.q_known, tc.nota_rate, episode_rng);
        const std::vector<FourViews> pns = sample_episode_pns(mc, tc, params, pool, ep, pns_rng);
        if (!episode_clears_knots(mc, tc, params, pool, ep, pns, guards)) {
            ++report.episodes_skipped;
            continue;
        }

        const ModelParams analytic = episode_gradients(mc, tc, params, pool, ep, pns);
        const auto arefs = flatten_params(analytic);

        ModelParams probe = params;
        auto prefs = flatten_params(probe);
        auto loss_at = [&]() { return episode_loss<double>(mc, tc, probe, pool, ep, pns); };

        for (size_t b = 0; b < kParamBlocks.size(); ++b) {
            const auto& coords = block_coords[b];
            if (coords.empty()) continue;
            std::vector<size_t> chosen;
            if (static_cast<int>(coords.size()) <= settings.coords_per_block) {
                chosen = coords;
            } else {
                std::unordered_set<size_t> seen;
                while (static_cast<int>(chosen.size()) < settings.coords_per_block) {
                    const size_t pick = coords[probe_rng.uniform_index(coords.size())];
                    if (seen.insert(pick).second) chosen.push_back(pick);
                }
            }
            for (size_t coord : chosen) {
                const double saved = *prefs[coord].value;
                *prefs[coord].value = saved + settings.epsilon;
                const double up = loss_at();
                *prefs[coord].value = saved - settings.epsilon;
                const double down = loss_at();
                *prefs[coord].value = saved;
                const double fd = (up - down) / (2.0 * settings.epsilon);
                const double an = *arefs[coord].value;
                const double denom = std::max({std::abs(an), std::abs(fd), 1e-3});
                const double rel = std::abs(an - fd) / denom;
                report.max_rel_error[b] = std::max(report.max_rel_error[b], rel);
                report.coords_checked[b] += 1;
            }
        }
        ++report.episodes;
    }
    return report;
}

}  // namespace gproto
