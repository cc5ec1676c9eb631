#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gproto/loss.hpp"
#include "gproto/model.hpp"
#include "gproto/types.hpp"

namespace gproto {

// Episode protocol for evaluation runs. 200 episodes keeps the accuracy
// standard error under a percentage point at desk scale.
struct EvalProtocol {
    int n_way = 5;
    int k_shot = 1;
    int q_known = 10;
    double nota_rate = 0.5;
    int episodes = 200;

    void validate() const;  // throws ConfigError
};

// Open-set evaluation tallies. Accessor accuracies are fractions in [0, 1];
// emitters convert to percentages (the unit every report file uses). The
// confusion matrix is keyed by relation name, with ground-truth-unknown
// queries collected under the "NOTA" row and rejections under the "NOTA"
// column.
struct EvalReport {
    int episodes = 0;
    int n_way = 0;
    int k_shot = 0;
    int q_known = 0;
    double nota_rate = 0.0;
    uint64_t seed = 0;

    int64_t known_count = 0;
    int64_t known_correct = 0;
    int64_t nota_count = 0;
    int64_t nota_correct = 0;
    std::map<std::string, std::map<std::string, int64_t>> confusion;

    double total_accuracy() const {
        const int64_t n = known_count + nota_count;
        return n == 0 ? 0.0 : static_cast<double>(known_correct + nota_correct) / static_cast<double>(n);
    }
    double known_accuracy() const {
        return known_count == 0 ? 0.0 : static_cast<double>(known_correct) / static_cast<double>(known_count);
    }
    // Undefined at NOTA rate 0 (empty denominator): reported as a sentinel,
    // never averaged.
    std::optional<double> nota_accuracy() const {
        if (nota_count == 0) return std::nullopt;
        return static_cast<double>(nota_correct) / static_cast<double>(nota_count);
    }
};

inline constexpr const char* kNotaLabel = "NOTA";

// Samples `episodes` episodes from the pool and runs the inference path:
// encode supports, mixture weights, distances, ranges from support quantiles
// (no pseudo-negative expansion at inference), then the dual-threshold rule.
// The pool must use relations disjoint from the training relations (the
// meta-learning split). Deterministic given the seed.
EvalReport evaluate(const Dataset& pool, const ModelConfig& mc, const ModelParams& params,
                    const EvalProtocol& proto, uint64_t seed);

struct SweepResult {
    std::vector<std::pair<double, EvalReport>> entries;  // rates strictly increasing
};

// One evaluation per NOTA rate, each on its own seed stream derived from
// `seed`. Rates must be strictly increasing, each in [0, 1).
SweepResult sweep_nota(const Dataset& pool, const ModelConfig& mc, const ModelParams& params,
                       const std::vector<double>& rates, EvalProtocol base, uint64_t seed);

// Plot-ready sweep data: `nota_rate,total,known,nota`, accuracies in percent,
// "na" for the rate-0 NOTA column.
std::string sweep_csv(const SweepResult& sweep);

std::string report_csv(const EvalReport& report);   // header plus one row, percent
std::string report_json(const EvalReport& report);  // one object per line (json-lines)

// Ablation orchestration: trains and evaluates the full model plus each
// requested variant across seeds.
struct AblationCell {
    double mean = 0.0;    // percent
    double stddev = 0.0;  // percent, sample standard deviation (0 for one seed)
    double delta = 0.0;   // full-model mean minus this row's mean, percent
    bool defined = true;  // false when the metric has an empty denominator
};

struct AblationRow {
    std::string name;
    AblationCell total, known, nota;
};

struct AblationTable {
    std::vector<AblationRow> rows;  // rows[0] is the full model
    int seeds = 0;
};

// Understood variant names: no-margin, fixed-margin[=m], no-pns,
// euclidean-distance (alias: euclidean), inverse-variance, equal-weights,
// no-self-attention, single-view[=j], pool-all. Throws ConfigError for
// anything else.
void apply_variant(const std::string& variant, ModelConfig& mc, TrainConfig& tc);

AblationTable run_ablation(const Dataset& train_pool, const Dataset& eval_pool,
                           const ModelConfig& mc, const TrainConfig& tc, const EvalProtocol& proto,
                           const std::vector<std::string>& variants,
                           const std::vector<uint64_t>& seeds);

// Aligned text table mirroring the comparison-table style: `mean +- std` cells
// with a `(v delta)` drop marker against the full model.
std::string ablation_text(const AblationTable& table);
std::string ablation_csv(const AblationTable& table);

}  // namespace gproto
