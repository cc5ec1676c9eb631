#include <doctest.h>

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "gproto/errors.hpp"
#include "gproto/loss.hpp"
#include "gproto/rng.hpp"
#include "gproto/sampler.hpp"
#include "gproto/train.hpp"
#include "test_helpers.hpp"

using namespace gproto;

namespace {

std::vector<double> param_values(const ModelParams& params) {
    std::vector<double> out;
    for (const auto& ref : flatten_params(params)) out.push_back(*ref.value);
    return out;
}

}  // namespace

TEST_SUITE_BEGIN("loss");

TEST_CASE("class term closed forms") {
    TrainConfig tc;
    tc.lambda = 0.5;
    const std::vector<double> none;

    // Empty sums leave only the range penalty.
    CHECK(class_loss_term(tc, 2.0, 0.3, none, none) == 0.5 * 4.0);

    tc.lambda = 0.0;
    tc.alpha = 1.0;
    const std::vector<double> pos_at_range{1.7};
    CHECK(gt::near(class_loss_term(tc, 1.7, 0.0, pos_at_range, none), std::log(2.0), 1e-12));

    tc.beta = 3.0;
    const std::vector<double> neg_at_edge{2.4};
    CHECK(gt::near(class_loss_term(tc, 1.7, 0.7, none, neg_at_edge), std::log(2.0) / 3.0, 1e-12));

    // Both occupied: terms add.
    tc.lambda = 0.25;
    const double expect = 0.25 * 1.7 * 1.7 + std::log(2.0) + std::log(2.0) / 3.0;
    CHECK(gt::near(class_loss_term(tc, 1.7, 0.7, pos_at_range, neg_at_edge), expect, 1e-12));
}

TEST_CASE("positive term grows with distance, negative term shrinks") {
    TrainConfig tc;
    tc.lambda = 0.0;
    const std::vector<double> none;
    double prev = -1e300;
    for (double d = 0.0; d < 4.0; d += 0.25) {
        const double v = class_loss_term(tc, 1.0, 0.5, std::vector<double>{d}, none);
        CHECK(v > prev);
        prev = v;
    }
    prev = 1e300;
    for (double d = 0.0; d < 4.0; d += 0.25) {
        const double v = class_loss_term(tc, 1.0, 0.5, none, std::vector<double>{d});
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("margin overrides") {
    TrainConfig tc;
    const std::vector<double> negs{3.0, 4.0, 11.0};
    CHECK(gt::near(margin_for_class(tc, negs, 1.0, 0.2), 2.4, 1e-12));

    tc.no_margin = true;
    CHECK(margin_for_class(tc, negs, 1.0, 0.2) == 0.0);

    tc.no_margin = false;
    tc.fixed_margin = 0.7;
    CHECK(margin_for_class(tc, negs, 1.0, 0.2) == 0.7);

    // No negatives and no override: the margin falls back to zero.
    tc.fixed_margin = -1.0;
    CHECK(margin_for_class(tc, std::vector<double>{}, 1.0, 0.2) == 0.0);
}

TEST_CASE("train config validation") {
    TrainConfig tc;
    tc.alpha = 0.0;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
    tc = TrainConfig{};
    tc.beta = -1.0;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
    tc = TrainConfig{};
    tc.lambda = -0.1;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
    tc = TrainConfig{};
    tc.lr = -1e-9;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
    tc = TrainConfig{};
    tc.lr = 0.0;  // the documented null-step case
    CHECK_NOTHROW(tc.validate());
    tc = TrainConfig{};
    tc.nota_rate = 1.0;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
    tc = TrainConfig{};
    tc.pns_noise_scale = 0.0;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
    tc.no_pns = true;  // inactive PNS stops caring about the noise scale
    CHECK_NOTHROW(tc.validate());
}

TEST_CASE("episode loss is finite and diagnosed on a real episode") {
    const Dataset& pool = gt::small_pool();
    ModelConfig mc;
    mc.dim = 8;
    mc.prompt_len = 4;
    const ModelParams params = init_params(mc, 3);
    TrainConfig tc;
    tc.n_way = 3;
    tc.k_shot = 2;
    tc.q_known = 6;

    Rng erng(derive_seed(21, 10));
    const Episode ep = sample_episode(pool, tc.n_way, tc.k_shot, tc.q_known, 0.5, erng);
    Rng prng(derive_seed(21, 11));
    const auto pns = sample_episode_pns(mc, tc, params, pool, ep, prng);
    CHECK(pns.size() == static_cast<size_t>(std::ceil(tc.pns_ratio * tc.n_way * tc.k_shot)));

    EpisodeDiagnostics diag;
    const double loss = episode_loss(mc, tc, params, pool, ep, pns, &diag);
    CHECK(std::isfinite(loss));
    CHECK(loss > 0.0);
    CHECK(diag.ranges.size() == 3);
    CHECK(diag.margins.size() == 3);
    CHECK(diag.pns_count == static_cast<int>(pns.size()));
    for (const double r : diag.ranges) CHECK(r >= 0.0);
    for (const double m : diag.margins) CHECK(m >= 0.0);

    // The no-margin ablation zeroes every margin diagnostic.
    TrainConfig nm = tc;
    nm.no_margin = true;
    EpisodeDiagnostics nmd;
    episode_loss(mc, nm, params, pool, ep, pns, &nmd);
    for (const double m : nmd.margins) CHECK(m == 0.0);
}

TEST_SUITE_END();

TEST_SUITE_BEGIN("train");

TEST_CASE("null learning rate leaves parameters bit-identical") {
    const Dataset& pool = gt::small_pool();
    ModelConfig mc;
    mc.dim = 8;
    mc.prompt_len = 4;
    const ModelParams init = init_params(mc, 17);
    TrainConfig tc;
    tc.lr = 0.0;
    tc.episodes = 3;
    tc.n_way = 3;
    tc.k_shot = 1;
    tc.q_known = 4;
    const TrainResult result = train(pool, mc, init, tc);
    CHECK(result.episodes_run == 3);
    const auto before = param_values(init);
    const auto after = param_values(result.params);
    REQUIRE(before.size() == after.size());
    for (size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
}

TEST_CASE("one seed gives one trace and one parameter vector") {
    const Dataset& pool = gt::small_pool();
    ModelConfig mc;
    mc.dim = 8;
    mc.prompt_len = 4;
    TrainConfig tc;
    tc.episodes = 12;
    tc.n_way = 3;
    tc.k_shot = 2;
    tc.q_known = 5;
    tc.seed = 29;
    const TrainResult a = train(pool, mc, init_params(mc, tc.seed), tc);
    const TrainResult b = train(pool, mc, init_params(mc, tc.seed), tc);
    REQUIRE(a.trace.size() == b.trace.size());
    for (size_t i = 0; i < a.trace.size(); ++i) {
        CHECK(a.trace[i].loss == b.trace[i].loss);
        CHECK(a.trace[i].r_mean == b.trace[i].r_mean);
        CHECK(a.trace[i].m_mean == b.trace[i].m_mean);
    }
    const auto pa = param_values(a.params);
    const auto pb = param_values(b.params);
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
}

TEST_CASE("repeated descent on one fixed episode lowers the smoothed loss") {
    const Dataset& pool = gt::small_pool();
    ModelConfig mc;
    mc.dim = 8;
    mc.prompt_len = 4;
    TrainConfig tc;
    tc.n_way = 3;
    tc.k_shot = 2;
    tc.q_known = 6;
    tc.no_pns = true;
    tc.train_tau = false;
    tc.lr = 2e-4;

    Rng erng(derive_seed(5, 10));
    const Episode ep = sample_episode(pool, tc.n_way, tc.k_shot, tc.q_known, 0.5, erng);
    ModelParams params = init_params(mc, 5);
    const std::vector<FourViews> no_pns;

    std::vector<double> losses;
    for (int step = 0; step < 200; ++step) {
        double loss = 0.0;
        const ModelParams grads = episode_gradients(mc, tc, params, pool, ep, no_pns, &loss, nullptr);
        losses.push_back(loss);
        sgd_step(params, grads, tc);
    }
    auto window_mean = [&](size_t end) {
        double acc = 0.0;
        for (size_t i = end - 20; i < end; ++i) acc += losses[i];
        return acc / 20.0;
    };
    for (size_t end = 21; end <= losses.size(); ++end) {
        CHECK(window_mean(end) < window_mean(end - 1));
    }
}

TEST_CASE("gradient step applies decoupled decay and clamps the levels") {
    ModelConfig mc;
    mc.dim = 4;
    mc.prompt_len = 2;
    ModelParams params = init_params(mc, 8);
    const double p_prompt = params.prompts[0](0, 0);
    const double p_wq = params.enc.wq(1, 2);
    params.tau1 = 0.012;

    ModelParams grads = zeros_like(mc);
    grads.prompts[0](0, 0) = 2.0;
    grads.enc.wq(1, 2) = -1.5;
    grads.tau1 = 10.0;  // pushes tau1 through the lower clamp

    TrainConfig tc;
    tc.lr = 0.1;
    tc.weight_decay = 0.01;
    sgd_step(params, grads, tc);

    // Prompts never decay; projections do.
    CHECK(gt::near(params.prompts[0](0, 0), p_prompt - 0.1 * 2.0, 1e-15));
    CHECK(gt::near(params.enc.wq(1, 2), p_wq - 0.1 * (-1.5 + 0.01 * p_wq), 1e-15));
    CHECK(params.tau1 == 0.01);

    // Frozen levels ignore their gradients entirely.
    ModelParams frozen = init_params(mc, 8);
    const double tau1 = frozen.tau1;
    TrainConfig ftc;
    ftc.train_tau = false;
    sgd_step(frozen, grads, ftc);
    CHECK(frozen.tau1 == tau1);
}

TEST_CASE("stagnation triggers early stop before the budget") {
    const Dataset& pool = gt::small_pool();
    ModelConfig mc;
    mc.dim = 8;
    mc.prompt_len = 4;
    TrainConfig tc;
    tc.episodes = 400;
    tc.n_way = 3;
    tc.k_shot = 1;
    tc.q_known = 4;
    tc.lr = 0.0;  // nothing can improve
    tc.early_stop_window = 5;
    tc.early_stop_patience = 10;
    tc.early_stop_min_improvement = 1e9;
    const TrainResult result = train(pool, mc, init_params(mc, 1), tc);
    CHECK(result.early_stopped);
    CHECK(result.episodes_run < 400);
}

TEST_CASE("trace serializes one row per episode") {
    const Dataset& pool = gt::small_pool();
    ModelConfig mc;
    mc.dim = 8;
    mc.prompt_len = 2;
    TrainConfig tc;
    tc.episodes = 4;
    tc.n_way = 2;
    tc.k_shot = 1;
    tc.q_known = 4;
    const TrainResult result = train(pool, mc, init_params(mc, 2), tc);
    const std::string csv = trace_csv(result.trace);
    size_t lines = 0;
    for (const char c : csv) lines += c == '\n';
    CHECK(lines == 1 + result.trace.size());
    CHECK(csv.rfind("episode,loss,R_mean,M_mean", 0) == 0);
}

TEST_CASE("checkpoints round trip bit-exactly and reject corruption") {
    gt::TempDir dir("ckpt");
    ModelConfig mc;
    mc.dim = 6;
    mc.prompt_len = 3;
    mc.pool_all = true;
    mc.weights = WeightMode::linear_only;
    const ModelParams params = init_params(mc, 77);
    const std::string path = dir.file("model.ckpt");
    save_checkpoint(path, mc, params);

    ModelConfig mc2;
    ModelParams params2;
    load_checkpoint(path, mc2, params2);
    CHECK(mc2.dim == mc.dim);
    CHECK(mc2.prompt_len == mc.prompt_len);
    CHECK(mc2.pool_all == mc.pool_all);
    CHECK(mc2.weights == mc.weights);
    const auto a = param_values(params);
    const auto b = param_values(params2);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

    std::ofstream bad(dir.file("bad.ckpt"), std::ios::binary);
    bad << "NOTACKPT garbage";
    bad.close();
    ModelConfig mc3;
    ModelParams params3;
    CHECK_THROWS_AS(load_checkpoint(dir.file("bad.ckpt"), mc3, params3), SchemaError);
}

TEST_CASE("central differences are near-exact on a quadratic") {
    // The harness differentiates with the same central stencil the full
    // pipeline check uses; on a quadratic the stencil error term vanishes and
    // only rounding remains.
    const double eps = 1e-4;
    auto f = [](double x) { return 3.2 * x * x - 1.7 * x + 0.4; };
    for (double x : {-2.0, -0.5, 0.0, 0.3, 1.9}) {
        const double fd = (f(x + eps) - f(x - eps)) / (2.0 * eps);
        const double exact = 6.4 * x - 1.7;
        CHECK(gt::near(fd, exact, 1e-10 * std::max(1.0, std::fabs(exact))));
    }
}

TEST_CASE("blocks with no influence report zero error") {
    GradCheckSettings settings;
    settings.model.dim = 4;
    settings.model.prompt_len = 2;
    settings.model.weights = WeightMode::equal;  // the mixture stack is dead
    settings.train.n_way = 2;
    settings.train.k_shot = 1;
    settings.train.q_known = 3;
    settings.trials = 1;
    settings.coords_per_block = 4;
    const GradientReport report = grad_check(settings);
    CHECK(report.max_rel_error[static_cast<size_t>(ParamBlock::phi1)] == 0.0);
    CHECK(report.max_rel_error[static_cast<size_t>(ParamBlock::phi2)] == 0.0);
}

TEST_CASE("analytic gradients match finite differences on a small pipeline") {
    GradCheckSettings settings;
    settings.model.dim = 8;
    settings.model.prompt_len = 4;
    settings.train.n_way = 3;
    settings.train.k_shot = 2;
    settings.train.q_known = 4;
    settings.train.nota_rate = 0.5;
    settings.trials = 2;
    settings.coords_per_block = 6;
    settings.seed = 3;
    const GradientReport report = grad_check(settings);
    CHECK(report.episodes > 0);
    for (int b = 0; b < 6; ++b) {
        INFO("block ", to_string(kParamBlocks[static_cast<size_t>(b)]));
        CHECK(report.max_rel_error[static_cast<size_t>(b)] < 1e-4);
    }
    CHECK(report.worst() < 1e-4);
}

TEST_SUITE_END();
