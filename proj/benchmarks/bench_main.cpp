// Microbenchmarks for the hot paths: episode sampling, the set encoder, the
// loss forward pass, the full gradient computation, quantile interpolation
// and one evaluation episode. Run with --benchmark_filter=<name> to isolate.
#include <benchmark/benchmark.h>

#include <vector>

#include "gproto/boundary.hpp"
#include "gproto/dataset.hpp"
#include "gproto/eval.hpp"
#include "gproto/loss.hpp"
#include "gproto/prototypes.hpp"
#include "gproto/rng.hpp"
#include "gproto/sampler.hpp"
#include "gproto/train.hpp"

namespace {

using namespace gproto;

const Dataset& bench_pool() {
    static const Dataset pool = [] {
        SyntheticSpec spec;
        spec.relations = 12;
        spec.dim = 16;
        spec.center_scale = 6.0;
        spec.sigma = 1.0;
        spec.instances_per_relation = 40;
        spec.seed = 7;
        return generate_synthetic(spec);
    }();
    return pool;
}

ModelConfig bench_config() {
    ModelConfig mc;
    mc.dim = 16;
    mc.prompt_len = 8;
    return mc;
}

struct BenchState {
    ModelConfig mc = bench_config();
    TrainConfig tc;
    ModelParams params;
    Episode episode;
    std::vector<FourViews> pns;

    BenchState() {
        tc.n_way = 5;
        tc.k_shot = 2;
        tc.q_known = 10;
        tc.nota_rate = 0.5;
        params = init_params(mc, 3);
        Rng rng(derive_seed(1, 10, 0));
        episode = sample_episode(bench_pool(), tc.n_way, tc.k_shot, tc.q_known, tc.nota_rate, rng);
        Rng pns_rng(derive_seed(1, 11, 0));
        pns = sample_episode_pns(mc, tc, params, bench_pool(), episode, pns_rng);
    }
};

const BenchState& bench_state() {
    static const BenchState state;
    return state;
}

void bm_sample_episode(benchmark::State& state) {
    Rng rng(derive_seed(1, 10, 0));
    for (auto _ : state) {
        Episode ep = sample_episode(bench_pool(), 5, 2, 10, 0.5, rng);
        benchmark::DoNotOptimize(ep);
    }
}
BENCHMARK(bm_sample_episode);

void bm_encode_view(benchmark::State& state) {
    const BenchState& s = bench_state();
    const auto support = episode_support(bench_pool(), s.episode, 0);
    std::vector<const std::vector<double>*> views;
    for (const Instance* inst : support) views.push_back(&inst->views[0]);
    for (auto _ : state) {
        auto g = encode_view(s.mc, s.params, 0, views);
        benchmark::DoNotOptimize(g);
    }
}
BENCHMARK(bm_encode_view);

void bm_quantile_interp(benchmark::State& state) {
    Rng rng(5);
    std::vector<double> values;
    for (int i = 0; i < 64; ++i) values.push_back(rng.normal());
    for (auto _ : state) {
        double q = quantile_interp(values, 0.87);
        benchmark::DoNotOptimize(q);
    }
}
BENCHMARK(bm_quantile_interp);

void bm_episode_loss_forward(benchmark::State& state) {
    const BenchState& s = bench_state();
    for (auto _ : state) {
        double loss = episode_loss(s.mc, s.tc, s.params, bench_pool(), s.episode, s.pns);
        benchmark::DoNotOptimize(loss);
    }
}
BENCHMARK(bm_episode_loss_forward);

void bm_episode_gradients(benchmark::State& state) {
    const BenchState& s = bench_state();
    for (auto _ : state) {
        ModelParams grads = episode_gradients(s.mc, s.tc, s.params, bench_pool(), s.episode, s.pns);
        benchmark::DoNotOptimize(grads);
    }
}
BENCHMARK(bm_episode_gradients);

void bm_evaluate_episode(benchmark::State& state) {
    const BenchState& s = bench_state();
    EvalProtocol proto;
    proto.episodes = 1;
    proto.n_way = 5;
    proto.k_shot = 2;
    uint64_t seed = 1;
    for (auto _ : state) {
        EvalReport report = evaluate(bench_pool(), s.mc, s.params, proto, seed++);
        benchmark::DoNotOptimize(report);
    }
}
BENCHMARK(bm_evaluate_episode);

}  // namespace

BENCHMARK_MAIN();
