#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gproto/tape.hpp"
#include "gproto/types.hpp"

namespace gproto {

// How per-view distances weight the prototype variance (printed form weights
// BY v; standard Mahalanobis divides by it; unit drops it entirely, which is
// the squared-Euclidean ablation).
enum class DistanceMode : uint8_t { variance_weighted, inverse_variance, unit };

// How the four per-view distances are mixed: attention scoring (default),
// the linear score head alone (no-self-attention ablation), fixed uniform
// weights, or a single view.
enum class WeightMode : uint8_t { attention, linear_only, equal, single_view };

const char* to_string(DistanceMode mode);
const char* to_string(WeightMode mode);
DistanceMode distance_mode_from_string(const std::string& s);
WeightMode weight_mode_from_string(const std::string& s);

// Architecture knobs. Persisted in checkpoints so a saved model evaluates
// without re-supplying flags.
struct ModelConfig {
    int dim = 16;
    int prompt_len = 8;
    int heads = 2;
    bool pool_all = false;  // pool over the whole sequence instead of the prompt positions
    DistanceMode distance = DistanceMode::variance_weighted;
    WeightMode weights = WeightMode::attention;
    int single_view = 0;  // which view when weights == single_view

    void validate() const;  // throws ConfigError
};

// Dense row-major matrix of scalars; S is double or Var.
template <class S>
struct MatT {
    int rows = 0;
    int cols = 0;
    std::vector<S> a;

    MatT() = default;
    MatT(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * static_cast<size_t>(c)) {}

    S& operator()(int r, int c) { return a[static_cast<size_t>(r) * static_cast<size_t>(cols) + static_cast<size_t>(c)]; }
    const S& operator()(int r, int c) const {
        return a[static_cast<size_t>(r) * static_cast<size_t>(cols) + static_cast<size_t>(c)];
    }
};

// Set-encoder parameters, shared across the four views: one self-attention
// block (query/key/value/output projections) plus the two linear heads that
// read the pooled representation out into a Gaussian's mean and raw variance.
template <class S>
struct EncoderParamsT {
    MatT<S> wq, wk, wv, wo;    // d x d
    MatT<S> w_mean, w_var;     // d x d
    std::vector<S> b_mean, b_var;
};

// View-mixture parameters: a single-head self-attention block over the four
// [mean; variance] summary tokens (each 2d-dim) and the per-token scalar
// score head whose softmax yields the view weights.
template <class S>
struct MixtureParamsT {
    MatT<S> aq, ak, av, ao;    // 2d x 2d
    std::vector<S> w_score;    // 2d
    S b_score{};
};

// Every learnable symbol: per-view prompts, encoder, mixture scorer and the
// two quantile levels.
template <class S>
struct ModelParamsT {
    std::array<MatT<S>, kNumViews> prompts;  // prompt_len x d each
    EncoderParamsT<S> enc;
    MixtureParamsT<S> mix;
    S tau1{};
    S tau2{};
};

using ModelParams = ModelParamsT<double>;

// Parameter blocks as reported by the gradient checker and used to scope
// weight decay.
enum class ParamBlock : uint8_t { prompts, theta, phi1, phi2, tau1, tau2 };
inline constexpr std::array<ParamBlock, 6> kParamBlocks = {
    ParamBlock::prompts, ParamBlock::theta, ParamBlock::phi1,
    ParamBlock::phi2,    ParamBlock::tau1,  ParamBlock::tau2};

const char* to_string(ParamBlock block);

// Visits every scalar parameter in a fixed deterministic order. The visitor
// receives (block, decays, value); `decays` marks projection and head
// matrices, the only parameters weight decay applies to.
template <class Params, class F>
void visit_params(Params&& p, F&& f) {
    auto mat = [&f](ParamBlock b, bool decays, auto&& m) {
        for (auto&& x : m.a) f(b, decays, x);
    };
    auto vec = [&f](ParamBlock b, bool decays, auto&& v) {
        for (auto&& x : v) f(b, decays, x);
    };
    for (auto&& prompt : p.prompts) mat(ParamBlock::prompts, false, prompt);
    mat(ParamBlock::theta, true, p.enc.wq);
    mat(ParamBlock::theta, true, p.enc.wk);
    mat(ParamBlock::theta, true, p.enc.wv);
    mat(ParamBlock::theta, true, p.enc.wo);
    mat(ParamBlock::theta, true, p.enc.w_mean);
    mat(ParamBlock::theta, true, p.enc.w_var);
    vec(ParamBlock::theta, false, p.enc.b_mean);
    vec(ParamBlock::theta, false, p.enc.b_var);
    mat(ParamBlock::phi1, true, p.mix.aq);
    mat(ParamBlock::phi1, true, p.mix.ak);
    mat(ParamBlock::phi1, true, p.mix.av);
    mat(ParamBlock::phi1, true, p.mix.ao);
    vec(ParamBlock::phi2, true, p.mix.w_score);
    f(ParamBlock::phi2, false, p.mix.b_score);
    f(ParamBlock::tau1, false, p.tau1);
    f(ParamBlock::tau2, false, p.tau2);
}

template <class S>
struct ParamRefT {
    ParamBlock block;
    bool decays;
    S* value;
};

template <class S>
std::vector<ParamRefT<S>> flatten_params(ModelParamsT<S>& p) {
    std::vector<ParamRefT<S>> out;
    visit_params(p, [&out](ParamBlock b, bool decays, S& x) { out.push_back({b, decays, &x}); });
    return out;
}

template <class S>
std::vector<ParamRefT<const S>> flatten_params(const ModelParamsT<S>& p) {
    std::vector<ParamRefT<const S>> out;
    visit_params(p, [&out](ParamBlock b, bool decays, const S& x) { out.push_back({b, decays, &x}); });
    return out;
}

// Fresh parameters: prompt rows on a signed-coordinate grid plus std-0.02
// noise, square projections identity-plus-noise, the variance head
// Xavier-uniform, biases zero, tau at the published initial quantile levels
// (0.1, 0.2). Deterministic in the seed.
ModelParams init_params(const ModelConfig& config, uint64_t seed);

// Copies parameters onto a tape as leaves, in visit_params order.
ModelParamsT<Var> lift_params(const ModelParams& params, Tape& tape);

// Per-parameter gradients in a parameter-shaped bundle, read off a completed
// backward pass.
ModelParams read_gradients(const ModelParamsT<Var>& params, const std::vector<double>& adjoints,
                           const ModelConfig& config);

// Zero-valued parameter bundle with the right shapes for `config`.
ModelParams zeros_like(const ModelConfig& config);

// Binary checkpoint: magic "GPROTOC1", the config, then named tensors with
// shape headers. Doubles are written raw, so a round-trip is bit-exact.
void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const ModelParams& params);
void load_checkpoint(const std::string& path, ModelConfig& config, ModelParams& params);

}  // namespace gproto
