#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "gproto/boundary.hpp"
#include "gproto/errors.hpp"
#include "gproto/metric.hpp"
#include "gproto/rng.hpp"
#include "gproto/tape.hpp"
#include "test_helpers.hpp"

using namespace gproto;

namespace {

// Two well-separated single-view prototypes with supports hugging the
// centers, the standard stage for pseudo-negative generation tests.
struct PnsStage {
    std::vector<ClassPrototype> prototypes;
    std::vector<FourViews> support_storage;
    std::vector<const FourViews*> support;

    explicit PnsStage(double range = 1.0, double margin = 0.5) {
        prototypes.push_back(gt::make_proto("a", {3.0, 0.0}, {1.0, 1.0}, range, margin));
        prototypes.push_back(gt::make_proto("b", {-3.0, 0.0}, {1.0, 1.0}, range, margin));
        support_storage.push_back(gt::make_views({3.1, 0.1}, 2));
        support_storage.push_back(gt::make_views({2.9, -0.2}, 2));
        support_storage.push_back(gt::make_views({-3.05, 0.15}, 2));
        support_storage.push_back(gt::make_views({-2.95, 0.0}, 2));
        for (const auto& s : support_storage) support.push_back(&s);
    }
};

double boundary_gap_sum(const FourViews& p, const std::vector<ClassPrototype>& prototypes) {
    double acc = 0.0;
    for (const auto& proto : prototypes) {
        const double d = prototype_distance(proto, p, DistanceMode::variance_weighted);
        acc += std::fabs(d - (proto.range + proto.margin)) / proto.range;
    }
    return acc;
}

}  // namespace

TEST_SUITE_BEGIN("boundary");

TEST_CASE("range quantile closed forms") {
    CHECK(compute_range(std::vector<double>{3.0}, 0.25) == 3.0);
    CHECK(gt::near(compute_range(std::vector<double>{1.0, 2.0, 3.0, 4.0, 5.0}, 0.1), 4.6, 1e-12));
    CHECK(gt::near(compute_range(std::vector<double>{1.0, 2.0, 3.0, 4.0, 5.0}, 1e-15), 5.0, 1e-9));
    // Order of the inputs is irrelevant.
    CHECK(gt::near(compute_range(std::vector<double>{5.0, 1.0, 4.0, 2.0, 3.0}, 0.1), 4.6, 1e-12));
    CHECK_THROWS_AS(compute_range(std::vector<double>{}, 0.1), InputError);
}

TEST_CASE("range stays within the sample and shrinks as tau1 grows") {
    Rng rng(314);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> dists;
        const int n = 1 + static_cast<int>(rng.uniform_index(12));
        for (int i = 0; i < n; ++i) dists.push_back(5.0 * rng.uniform());
        const double lo = *std::min_element(dists.begin(), dists.end());
        const double hi = *std::max_element(dists.begin(), dists.end());
        double prev = hi + 1.0;
        for (double tau1 = 0.05; tau1 < 1.0; tau1 += 0.05) {
            const double r = compute_range(dists, tau1);
            CHECK(r >= lo);
            CHECK(r <= hi);
            CHECK(r <= prev + 1e-12);
            prev = r;
        }
    }
}

TEST_CASE("margin quantile closed forms") {
    // Negative distances sit at offsets {2, 3, 10} beyond a range of 1.
    CHECK(gt::near(compute_margin(std::vector<double>{3.0, 4.0, 11.0}, 1.0, 0.2), 2.4, 1e-12));
    // Offsets {-1, 0.5} interpolate to -0.7 before the clamp.
    CHECK(compute_margin(std::vector<double>{0.0, 1.5}, 1.0, 0.2) == 0.0);
    CHECK(compute_margin(std::vector<double>{6.0}, 1.0, 0.2) == 5.0);
    CHECK_THROWS_AS(compute_margin(std::vector<double>{}, 1.0, 0.2), InputError);
}

TEST_CASE("margin grows with tau2 and with any added farther negative") {
    Rng rng(2718);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> negs;
        const int n = 1 + static_cast<int>(rng.uniform_index(10));
        const double range = 0.5 + rng.uniform();
        for (int i = 0; i < n; ++i) negs.push_back(range + 4.0 * rng.uniform());
        double prev = -1.0;
        for (double tau2 = 0.05; tau2 < 1.0; tau2 += 0.05) {
            const double m = compute_margin(negs, range, tau2);
            CHECK(m >= prev - 1e-12);
            prev = m;
        }
        const double before = compute_margin(negs, range, 0.3);
        negs.push_back(range + 9.0);
        CHECK(compute_margin(negs, range, 0.3) >= before - 1e-12);
    }
}

TEST_CASE("quantile level gradient matches central differences away from knots") {
    auto range_at = [](double tau1) {
        return compute_range(std::vector<double>{1.0, 2.5, 2.8, 4.0, 7.5}, tau1);
    };
    Tape tape;
    std::vector<Var> dists;
    for (double d : {1.0, 2.5, 2.8, 4.0, 7.5}) dists.push_back(Var::leaf(tape, d));
    const Var tau = Var::leaf(tape, 0.13);
    const Var r = compute_range(dists, tau);
    const auto adj = tape.backward(r.index());

    const double eps = 1e-6;
    const double fd = (range_at(0.13 + eps) - range_at(0.13 - eps)) / (2.0 * eps);
    CHECK(gt::near(adj[static_cast<size_t>(tau.index())], fd, 1e-4 * std::fabs(fd)));
}

TEST_CASE("classification closed forms") {
    CHECK(classify({0.5}, std::vector<double>{1.0}).class_index == 0);
    CHECK(classify({2.0, 3.0}, std::vector<double>{1.0, 1.0}).is_nota());
    CHECK(classify({0.4, 0.6}, std::vector<double>{1.0, 1.0}).class_index == 0);
    CHECK(classify({0.6, 0.4}, std::vector<double>{1.0, 1.0}).class_index == 1);
    // Membership keeps the boundary itself.
    CHECK(classify({1.0}, std::vector<double>{1.0}).class_index == 0);
    // Equal admitted distances fall to the lowest index.
    CHECK(classify({0.5, 0.5}, std::vector<double>{1.0, 1.0}).class_index == 0);
    // Admitted beats closer-but-rejected.
    CHECK(classify({0.9, 0.2}, std::vector<double>{1.0, 0.1}).class_index == 0);
}

TEST_CASE("classification agrees with brute force on 100000 random setups") {
    Rng rng(161803);
    const double grid[9] = {0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0};
    for (int trial = 0; trial < 100000; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_index(6));
        std::vector<double> d, r;
        std::vector<ClassPrototype> protos;
        for (int c = 0; c < n; ++c) {
            d.push_back(grid[rng.uniform_index(9)]);
            r.push_back(grid[rng.uniform_index(9)]);
            ClassPrototype p;
            p.relation = "c" + std::to_string(c);
            p.range = r.back();
            p.margin = grid[rng.uniform_index(9)];
            protos.push_back(std::move(p));
        }
        int expect = Prediction::kNota;
        for (int c = 0; c < n; ++c) {
            if (d[static_cast<size_t>(c)] > r[static_cast<size_t>(c)]) continue;
            if (expect == Prediction::kNota || d[static_cast<size_t>(c)] < d[static_cast<size_t>(expect)]) {
                expect = c;
            }
        }
        CHECK(classify(d, r).class_index == expect);
        CHECK(classify(d, protos).class_index == expect);
    }
}

TEST_CASE("pseudo-negative generation rejects degenerate requests") {
    PnsStage stage;
    Rng rng(5);
    CHECK_THROWS_AS(pns_candidates(stage.prototypes, stage.support, 10, 0.0,
                                   DistanceMode::variance_weighted, rng),
                    ConfigError);

    // A boundary that covers everything the noise can reach exhausts the
    // rejection budget.
    PnsStage covered(1e18, 0.0);
    CHECK_THROWS_AS(pns_candidates(covered.prototypes, covered.support, 10, 1e-6,
                                   DistanceMode::variance_weighted, rng),
                    SamplingError);
}

TEST_CASE("every candidate lands outside every expanded boundary") {
    PnsStage stage;
    Rng rng(derive_seed(11, 11));
    const auto candidates =
        pns_candidates(stage.prototypes, stage.support, 64, 1.0, DistanceMode::variance_weighted, rng);
    REQUIRE(candidates.size() == 64);
    for (const auto& p : candidates) {
        for (const auto& proto : stage.prototypes) {
            CHECK(prototype_distance(proto, p, DistanceMode::variance_weighted) >
                  proto.range + proto.margin);
        }
    }

    Rng replay(derive_seed(11, 11));
    const auto again =
        pns_candidates(stage.prototypes, stage.support, 64, 1.0, DistanceMode::variance_weighted, replay);
    REQUIRE(again.size() == candidates.size());
    for (size_t i = 0; i < candidates.size(); ++i) {
        CHECK(again[i] == candidates[i]);
    }
}

TEST_CASE("selection scores invert the summed normalized boundary gap") {
    PnsStage stage;
    Rng rng(derive_seed(12, 11));
    const auto candidates =
        pns_candidates(stage.prototypes, stage.support, 32, 1.5, DistanceMode::variance_weighted, rng);
    const PseudoNegativeSet pset =
        pns_probabilities(candidates, stage.prototypes, DistanceMode::variance_weighted);
    REQUIRE(pset.points.size() == candidates.size());
    REQUIRE(pset.scores.size() == candidates.size());
    REQUIRE(pset.probabilities.size() == candidates.size());

    double sum = 0.0;
    for (size_t i = 0; i < candidates.size(); ++i) {
        const double gap = boundary_gap_sum(candidates[i], stage.prototypes);
        CHECK(gt::near(pset.scores[i], 1.0 / gap, 1e-12));
        sum += pset.probabilities[i];
    }
    CHECK(gt::near(sum, 1.0, 1e-12));

    // Monotone: a strictly smaller gap always means a strictly larger
    // selection probability.
    for (size_t a = 0; a < candidates.size(); ++a) {
        for (size_t b = 0; b < candidates.size(); ++b) {
            if (pset.scores[a] > pset.scores[b]) {
                CHECK(pset.probabilities[a] > pset.probabilities[b]);
            }
        }
    }
}

TEST_CASE("selection probability worked example") {
    std::vector<ClassPrototype> protos{gt::make_proto("a", {0.0}, {1.0}, 1.0, 1.0)};
    std::vector<FourViews> candidates{gt::make_views({std::sqrt(3.0)}, 1),
                                      gt::make_views({2.0}, 1)};
    const PseudoNegativeSet pset =
        pns_probabilities(candidates, protos, DistanceMode::variance_weighted);
    CHECK(gt::near(pset.scores[0], 1.0, 1e-12));
    CHECK(gt::near(pset.scores[1], 0.5, 1e-12));
    CHECK(gt::near(pset.probabilities[0], 0.6224593312018546, 1e-9));
    CHECK(gt::near(pset.probabilities[1], 0.3775406687981454, 1e-9));

    // Equal scores split evenly; a single candidate takes everything.
    std::vector<FourViews> pair{gt::make_views({2.0}, 1), gt::make_views({-2.0}, 1)};
    const auto even = pns_probabilities(pair, protos, DistanceMode::variance_weighted);
    CHECK(gt::near(even.probabilities[0], 0.5, 1e-12));
    CHECK(gt::near(even.probabilities[1], 0.5, 1e-12));

    std::vector<FourViews> solo{gt::make_views({2.0}, 1)};
    const auto one = pns_probabilities(solo, protos, DistanceMode::variance_weighted);
    CHECK(one.probabilities[0] == 1.0);

    std::vector<ClassPrototype> degenerate{gt::make_proto("z", {0.0}, {1.0}, 0.0, 0.0)};
    CHECK_THROWS_AS(pns_probabilities(solo, degenerate, DistanceMode::variance_weighted),
                    NumericError);
}

TEST_CASE("selection draws the ceiling count without replacement") {
    PnsStage stage;
    Rng gen(derive_seed(13, 11));
    const auto candidates =
        pns_candidates(stage.prototypes, stage.support, 40, 1.0, DistanceMode::variance_weighted, gen);
    const PseudoNegativeSet pset =
        pns_probabilities(candidates, stage.prototypes, DistanceMode::variance_weighted);

    Rng pick(derive_seed(14, 11));
    const auto chosen = select_pns(pset, 0.2, 5, 1, pick);
    CHECK(chosen.size() == 1);

    Rng pick2(derive_seed(14, 11));
    const auto chosen2 = select_pns(pset, 0.2, 5, 1, pick2);
    CHECK(chosen2 == chosen);

    Rng pick3(derive_seed(14, 11));
    CHECK(select_pns(pset, 0.0, 5, 1, pick3).empty());

    Rng pick4(derive_seed(14, 11));
    const auto seven = select_pns(pset, 0.33, 4, 5, pick4);  // ceil(6.6)
    CHECK(seven.size() == 7);
    for (size_t a = 0; a < seven.size(); ++a) {
        for (size_t b = a + 1; b < seven.size(); ++b) {
            CHECK(seven[a] != seven[b]);
        }
    }

    Rng pick5(derive_seed(14, 11));
    CHECK_THROWS_AS(select_pns(pset, 10.0, 5, 1, pick5), SamplingError);
}

TEST_CASE("thousand seeded generations keep the full contract") {
    PnsStage stage;
    for (uint64_t seed = 0; seed < 1000; ++seed) {
        Rng rng(derive_seed(seed, 11));
        const auto candidates = pns_candidates(stage.prototypes, stage.support, 8, 1.0,
                                               DistanceMode::variance_weighted, rng);
        const auto pset = pns_probabilities(candidates, stage.prototypes,
                                            DistanceMode::variance_weighted);
        double sum = 0.0;
        for (size_t i = 0; i < candidates.size(); ++i) {
            for (const auto& proto : stage.prototypes) {
                CHECK(prototype_distance(proto, candidates[i], DistanceMode::variance_weighted) >
                      proto.range + proto.margin);
            }
            sum += pset.probabilities[i];
        }
        CHECK(gt::near(sum, 1.0, 1e-12));
        Rng pick(derive_seed(seed, 12));
        const auto chosen = select_pns(pset, 0.2, 5, 2, pick);
        CHECK(chosen.size() == 2);
    }
}

TEST_SUITE_END();
