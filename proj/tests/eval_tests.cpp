#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "gproto/errors.hpp"
#include "gproto/eval.hpp"
#include "gproto/sampler.hpp"
#include "test_helpers.hpp"

using namespace gproto;

namespace {

EvalReport hand_report(int64_t known_correct, int64_t known_count, int64_t nota_correct,
                       int64_t nota_count) {
    EvalReport r;
    r.episodes = 2;
    r.n_way = 2;
    r.k_shot = 1;
    r.q_known = static_cast<int>(known_count / 2);
    r.nota_rate = 0.5;
    r.known_count = known_count;
    r.known_correct = known_correct;
    r.nota_count = nota_count;
    r.nota_correct = nota_correct;
    return r;
}

}  // namespace

TEST_SUITE_BEGIN("eval");

TEST_CASE("report accessors reduce to counting") {
    const EvalReport all = hand_report(4, 4, 2, 2);
    CHECK(all.total_accuracy() == 1.0);
    CHECK(all.known_accuracy() == 1.0);
    REQUIRE(all.nota_accuracy().has_value());
    CHECK(*all.nota_accuracy() == 1.0);

    const EvalReport mixed = hand_report(3, 4, 1, 2);
    CHECK(mixed.known_accuracy() == 0.75);
    CHECK(*mixed.nota_accuracy() == 0.5);
    CHECK(gt::near(mixed.total_accuracy(), 4.0 / 6.0, 1e-15));

    const EvalReport closed = hand_report(3, 4, 0, 0);
    CHECK_FALSE(closed.nota_accuracy().has_value());
    CHECK(closed.total_accuracy() == 0.75);
}

TEST_CASE("report emitters carry percentages and the na sentinel") {
    const EvalReport mixed = hand_report(3, 4, 1, 2);
    const std::string csv = report_csv(mixed);
    CHECK(csv.rfind("episodes,n_way,k_shot,q_known,nota_rate,total,known,nota\n", 0) == 0);
    CHECK(csv.find("66.67") != std::string::npos);
    CHECK(csv.find("75.00") != std::string::npos);
    CHECK(csv.find("50.00") != std::string::npos);

    const EvalReport closed = hand_report(3, 4, 0, 0);
    CHECK(report_csv(closed).find("na") != std::string::npos);

    const auto j = nlohmann::json::parse(report_json(mixed));
    CHECK(j["known_correct"] == 3);
    CHECK(j["nota_count"] == 2);
    CHECK(gt::near(j["total"].get<double>(), 400.0 / 6.0, 1e-9));
    const auto j0 = nlohmann::json::parse(report_json(closed));
    CHECK(j0["nota"].is_null());
}

TEST_CASE("a rejecting model scores zero known and perfect nota") {
    const Dataset& pool = gt::small_pool();
    ModelConfig mc;
    mc.dim = 8;
    mc.prompt_len = 1;
    const ModelParams params = gt::reject_all_params(mc);
    EvalProtocol proto;
    proto.episodes = 25;
    const EvalReport report = evaluate(pool, mc, params, proto, 99);

    CHECK(report.known_count == 25 * 10);
    CHECK(report.nota_count == 25 * 10);
    CHECK(report.known_correct == 0);
    CHECK(report.nota_correct == report.nota_count);
    CHECK(report.known_accuracy() == 0.0);
    CHECK(*report.nota_accuracy() == 1.0);
    CHECK(report.total_accuracy() == 0.5);

    // Every query lands in the rejection column of the confusion matrix.
    int64_t rejected = 0;
    for (const auto& [truth, row] : report.confusion) {
        for (const auto& [outcome, count] : row) {
            CHECK(outcome == kNotaLabel);
            rejected += count;
        }
    }
    CHECK(rejected == report.known_count + report.nota_count);
}

TEST_CASE("evaluation bookkeeping stays consistent on a live model") {
    const Dataset& pool = gt::small_pool();
    ModelConfig mc;
    mc.dim = 8;
    mc.prompt_len = 4;
    const ModelParams params = init_params(mc, 12);
    EvalProtocol proto;
    proto.n_way = 4;
    proto.q_known = 8;
    proto.nota_rate = 0.3;
    proto.episodes = 30;
    const EvalReport report = evaluate(pool, mc, params, proto, 5);

    CHECK(report.known_count == 30ll * proto.q_known);
    CHECK(report.nota_count == 30ll * nota_query_count(proto.nota_rate, proto.q_known));
    CHECK(report.known_correct >= 0);
    CHECK(report.known_correct <= report.known_count);

    // Count-weighted decomposition of the total accuracy is exact.
    const double lhs = report.total_accuracy() *
                       static_cast<double>(report.known_count + report.nota_count);
    const double rhs = report.known_accuracy() * static_cast<double>(report.known_count) +
                       *report.nota_accuracy() * static_cast<double>(report.nota_count);
    CHECK(gt::near(lhs, rhs, 1e-9));

    // Confusion mass equals the query mass, and the unknown row holds every
    // ground-truth-unknown query.
    int64_t total_mass = 0;
    int64_t nota_row = 0;
    for (const auto& [truth, row] : report.confusion) {
        for (const auto& [outcome, count] : row) {
            total_mass += count;
            if (truth == kNotaLabel) nota_row += count;
        }
    }
    CHECK(total_mass == report.known_count + report.nota_count);
    CHECK(nota_row == report.nota_count);

    const EvalReport again = evaluate(pool, mc, params, proto, 5);
    CHECK(again.known_correct == report.known_correct);
    CHECK(again.nota_correct == report.nota_correct);
    CHECK(again.confusion == report.confusion);

    const EvalReport other = evaluate(pool, mc, params, proto, 6);
    CHECK((other.known_correct != report.known_correct || other.nota_correct != report.nota_correct ||
           other.confusion != report.confusion));
}

TEST_CASE("protocol validation") {
    EvalProtocol proto;
    proto.episodes = 0;
    CHECK_THROWS_AS(proto.validate(), ConfigError);
    proto = EvalProtocol{};
    proto.nota_rate = 1.0;
    CHECK_THROWS_AS(proto.validate(), ConfigError);
    proto = EvalProtocol{};
    proto.n_way = 0;
    CHECK_THROWS_AS(proto.validate(), ConfigError);

    // Ten known relations leave no unknown source on a ten-relation pool.
    proto = EvalProtocol{};
    proto.n_way = 10;
    ModelConfig mc;
    mc.dim = 8;
    CHECK_THROWS_AS(evaluate(gt::small_pool(), mc, init_params(mc, 1), proto, 1), SamplingError);
}

TEST_CASE("nota-rate sweep emits one report per rate in order") {
    const Dataset& pool = gt::small_pool();
    ModelConfig mc;
    mc.dim = 8;
    mc.prompt_len = 2;
    const ModelParams params = init_params(mc, 4);
    EvalProtocol base;
    base.episodes = 8;
    base.n_way = 3;
    base.q_known = 6;

    const std::vector<double> rates{0.0, 0.15, 0.3, 0.5};
    const SweepResult sweep = sweep_nota(pool, mc, params, rates, base, 77);
    REQUIRE(sweep.entries.size() == 4);
    for (size_t i = 0; i < rates.size(); ++i) {
        CHECK(sweep.entries[i].first == rates[i]);
        CHECK(sweep.entries[i].second.nota_rate == rates[i]);
    }
    CHECK(sweep.entries[0].second.nota_count == 0);
    CHECK_FALSE(sweep.entries[0].second.nota_accuracy().has_value());

    const std::string csv = sweep_csv(sweep);
    CHECK(csv.rfind("nota_rate,total,known,nota\n", 0) == 0);
    CHECK(csv.find(",na\n") != std::string::npos);

    const SweepResult again = sweep_nota(pool, mc, params, rates, base, 77);
    for (size_t i = 0; i < rates.size(); ++i) {
        CHECK(again.entries[i].second.known_correct == sweep.entries[i].second.known_correct);
        CHECK(again.entries[i].second.nota_correct == sweep.entries[i].second.nota_correct);
    }

    CHECK_THROWS_AS(sweep_nota(pool, mc, params, {0.3, 0.3}, base, 1), ConfigError);
    CHECK_THROWS_AS(sweep_nota(pool, mc, params, {0.5, 0.3}, base, 1), ConfigError);
    CHECK_THROWS_AS(sweep_nota(pool, mc, params, {}, base, 1), ConfigError);
}

TEST_CASE("variant names configure the expected switches") {
    ModelConfig mc;
    TrainConfig tc;
    apply_variant("no-margin", mc, tc);
    CHECK(tc.no_margin);

    tc = TrainConfig{};
    apply_variant("fixed-margin=0.25", mc, tc);
    CHECK(tc.fixed_margin == 0.25);

    tc = TrainConfig{};
    apply_variant("no-pns", mc, tc);
    CHECK(tc.no_pns);

    mc = ModelConfig{};
    apply_variant("euclidean", mc, tc);
    CHECK(mc.distance == DistanceMode::unit);
    mc = ModelConfig{};
    apply_variant("euclidean-distance", mc, tc);
    CHECK(mc.distance == DistanceMode::unit);
    mc = ModelConfig{};
    apply_variant("inverse-variance", mc, tc);
    CHECK(mc.distance == DistanceMode::inverse_variance);
    mc = ModelConfig{};
    apply_variant("equal-weights", mc, tc);
    CHECK(mc.weights == WeightMode::equal);
    mc = ModelConfig{};
    apply_variant("no-self-attention", mc, tc);
    CHECK(mc.weights == WeightMode::linear_only);
    mc = ModelConfig{};
    apply_variant("single-view=context", mc, tc);
    CHECK(mc.weights == WeightMode::single_view);
    CHECK(mc.single_view == 3);
    mc = ModelConfig{};
    apply_variant("pool-all", mc, tc);
    CHECK(mc.pool_all);

    CHECK_THROWS_AS(apply_variant("warp-drive", mc, tc), ConfigError);
    CHECK_THROWS_AS(apply_variant("fixed-margin=-2", mc, tc), ConfigError);
    CHECK_THROWS_AS(apply_variant("single-view=9", mc, tc), ConfigError);
}

TEST_CASE("ablation table shape and delta arithmetic") {
    const Dataset& pool = gt::small_pool();
    ModelConfig mc;
    mc.dim = 8;
    mc.prompt_len = 2;
    TrainConfig tc;
    tc.episodes = 20;
    tc.n_way = 2;
    tc.k_shot = 1;
    tc.q_known = 4;
    tc.lr = 1e-3;
    EvalProtocol proto;
    proto.episodes = 10;
    proto.n_way = 2;
    proto.q_known = 4;

    const AblationTable solo = run_ablation(pool, pool, mc, tc, proto, {}, {3});
    REQUIRE(solo.rows.size() == 1);
    CHECK(solo.rows[0].name == "full");
    CHECK(solo.rows[0].total.delta == 0.0);
    CHECK(solo.rows[0].total.stddev == 0.0);
    CHECK(solo.seeds == 1);

    const AblationTable table = run_ablation(
        pool, pool, mc, tc, proto, {"no-margin", "fixed-margin=0.25", "no-pns"}, {3, 4});
    REQUIRE(table.rows.size() == 4);
    CHECK(table.rows[1].name == "no-margin");
    CHECK(table.seeds == 2);
    for (size_t i = 1; i < table.rows.size(); ++i) {
        CHECK(gt::near(table.rows[i].total.delta,
                       table.rows[0].total.mean - table.rows[i].total.mean, 1e-9));
        CHECK(gt::near(table.rows[i].known.delta,
                       table.rows[0].known.mean - table.rows[i].known.mean, 1e-9));
    }
    for (const auto& row : table.rows) {
        CHECK(row.total.mean >= 0.0);
        CHECK(row.total.mean <= 100.0);
        CHECK(row.total.stddev >= 0.0);
    }

    const std::string text = ablation_text(table);
    CHECK(text.find("full") != std::string::npos);
    CHECK(text.find("no-margin") != std::string::npos);
    const std::string csv = ablation_csv(table);
    size_t lines = 0;
    for (const char c : csv) lines += c == '\n';
    CHECK(lines == 1 + table.rows.size());
}

TEST_SUITE_END();
