#pragma once

#include <array>
#include <string>
#include <vector>

#include "gproto/loss.hpp"
#include "gproto/model.hpp"
#include "gproto/types.hpp"

namespace gproto {

struct TraceRow {
    int episode = 0;
    double loss = 0.0;
    double r_mean = 0.0;
    double m_mean = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<TraceRow> trace;
    int episodes_run = 0;
    bool early_stopped = false;
    bool diverged = false;
    std::string divergence_reason;
};

// Analytic gradients of the episode loss: one tape forward pass, one reverse
// scan, read back in parameter shape. The pseudo-negative points are fixed
// inputs here; sample them first with sample_episode_pns.
ModelParams episode_gradients(const ModelConfig& mc, const TrainConfig& tc,
                              const ModelParams& params, const Dataset& data, const Episode& ep,
                              const std::vector<FourViews>& pns, double* loss_value = nullptr,
                              EpisodeDiagnostics* diag = nullptr);

// One SGD update: p -= lr * g, plus decoupled weight decay lr * wd * p on the
// projection/head matrices only (never tau, prompts or biases). Tau is frozen
// when train_tau is off and clamped to [0.01, 0.99] afterwards.
void sgd_step(ModelParams& params, const ModelParams& grads, const TrainConfig& tc);

// Algorithm: per episode sample -> encode -> weights -> distances -> range and
// margin -> pseudo-negative expansion -> recomputed boundaries -> loss ->
// gradient step (averaged over batch_episodes). Stops early when the
// moving-average loss stalls; marks divergence instead of throwing so the
// partial trace survives.
TrainResult train(const Dataset& pool, const ModelConfig& mc, ModelParams params,
                  const TrainConfig& tc);

// Loss trace as CSV with header `episode,loss,R_mean,M_mean`.
std::string trace_csv(const std::vector<TraceRow>& trace);

// Central finite-difference verification of the analytic gradients on
// random small episodes over a self-generated synthetic pool.
struct GradCheckSettings {
    ModelConfig model;
    TrainConfig train;
    int trials = 10;
    int coords_per_block = 20;  // probes per block per trial (capped by block size)
    double epsilon = 1e-4;
    uint64_t seed = 1;
};

struct GradientReport {
    std::array<double, kParamBlocks.size()> max_rel_error{};
    std::array<int, kParamBlocks.size()> coords_checked{};
    int episodes = 0;
    int episodes_skipped = 0;  // rejected by the quantile knot guard

    double worst() const {
        double w = 0.0;
        for (double e : max_rel_error) w = std::max(w, e);
        return w;
    }
};

// Runs `trials` episodes, comparing analytic gradients against central
// differences at `epsilon` on sampled coordinates of every parameter block.
// Episodes whose quantile inputs sit near a sort knot or the margin clamp are
// skipped (a quantile is piecewise linear; finite differences straddling a
// knot measure a secant between pieces, not the gradient), and the tau levels
// are nudged off exact interpolation knots for the same reason.
GradientReport grad_check(const GradCheckSettings& settings);

}  // namespace gproto
