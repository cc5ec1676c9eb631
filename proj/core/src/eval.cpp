#include "gproto/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "gproto/boundary.hpp"
#include "gproto/errors.hpp"
#include "gproto/prototypes.hpp"
#include "gproto/sampler.hpp"
#include "gproto/text.hpp"
#include "gproto/train.hpp"

namespace gproto {
namespace {

// Seed streams, continuing the allocation in rng.hpp.
constexpr uint64_t kStreamEval = 20;
constexpr uint64_t kStreamSweep = 21;
constexpr uint64_t kStreamAblationEval = 22;

std::string percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
    return buf;
}

std::string percent_or_na(const std::optional<double>& fraction) {
    return fraction ? percent(*fraction) : std::string("na");
}

}  // namespace

void EvalProtocol::validate() const {
    if (n_way < 1) throw ConfigError("eval: n_way must be >= 1");
    if (k_shot < 1) throw ConfigError("eval: k_shot must be >= 1");
    if (q_known < 1) throw ConfigError("eval: q_known must be >= 1");
    if (!(nota_rate >= 0.0 && nota_rate < 1.0)) throw ConfigError("eval: nota_rate must be in [0, 1)");
    if (episodes < 1) throw ConfigError("eval: episodes must be >= 1");
}

EvalReport evaluate(const Dataset& pool, const ModelConfig& mc, const ModelParams& params,
                    const EvalProtocol& proto, uint64_t seed) {
    proto.validate();
    mc.validate();

    EvalReport report;
    report.episodes = proto.episodes;
    report.n_way = proto.n_way;
    report.k_shot = proto.k_shot;
    report.q_known = proto.q_known;
    report.nota_rate = proto.nota_rate;
    report.seed = seed;

    Rng rng(derive_seed(seed, kStreamEval));
    for (int e = 0; e < proto.episodes; ++e) {
        const Episode ep =
            sample_episode(pool, proto.n_way, proto.k_shot, proto.q_known, proto.nota_rate, rng);
        const EpisodeStateT<double> state = build_episode_state<double>(mc, params, pool, ep);

        // Inference boundaries come from the support distances alone; no
        // pseudo-negatives and no margin are involved in the accept/reject
        // rule (a query either falls inside some class range or is NOTA).
        const int n = ep.n_way();
        std::vector<double> ranges(static_cast<size_t>(n));
        for (int c = 0; c < n; ++c) {
            ranges[static_cast<size_t>(c)] =
                compute_range(state.pos_support[static_cast<size_t>(c)], params.tau1);
        }

        std::vector<double> dists(static_cast<size_t>(n));
        auto classify_instance = [&](int32_t idx) {
            const Instance& inst = pool.instances[static_cast<size_t>(idx)];
            for (int c = 0; c < n; ++c) {
                dists[static_cast<size_t>(c)] =
                    class_distance(mc, state.classes[static_cast<size_t>(c)], inst.views);
            }
            return classify(dists, ranges);
        };

        for (int32_t idx : ep.query_known) {
            const Prediction pred = classify_instance(idx);
            const std::string& truth = pool.instances[static_cast<size_t>(idx)].label;
            const std::string outcome =
                pred.is_nota() ? std::string(kNotaLabel) : ep.known_relations[static_cast<size_t>(pred.class_index)];
            ++report.known_count;
            if (outcome == truth) ++report.known_correct;
            ++report.confusion[truth][outcome];
        }
        for (int32_t idx : ep.query_unknown) {
            const Prediction pred = classify_instance(idx);
            const std::string outcome =
                pred.is_nota() ? std::string(kNotaLabel) : ep.known_relations[static_cast<size_t>(pred.class_index)];
            ++report.nota_count;
            if (pred.is_nota()) ++report.nota_correct;
            ++report.confusion[kNotaLabel][outcome];
        }
    }
    return report;
}

SweepResult sweep_nota(const Dataset& pool, const ModelConfig& mc, const ModelParams& params,
                       const std::vector<double>& rates, EvalProtocol base, uint64_t seed) {
    if (rates.empty()) throw ConfigError("sweep: need at least one NOTA rate");
    for (size_t i = 0; i < rates.size(); ++i) {
        if (!(rates[i] >= 0.0 && rates[i] < 1.0)) throw ConfigError("sweep: rates must be in [0, 1)");
        if (i > 0 && !(rates[i] > rates[i - 1])) throw ConfigError("sweep: rates must be strictly increasing");
    }
    SweepResult sweep;
    sweep.entries.reserve(rates.size());
    for (size_t i = 0; i < rates.size(); ++i) {
        base.nota_rate = rates[i];
        sweep.entries.emplace_back(rates[i],
                                   evaluate(pool, mc, params, base, derive_seed(seed, kStreamSweep, i)));
    }
    return sweep;
}

std::string sweep_csv(const SweepResult& sweep) {
    std::string out = "nota_rate,total,known,nota\n";
    for (const auto& [rate, report] : sweep.entries) {
        out += format_double(rate);
        out += ',';
        out += percent(report.total_accuracy());
        out += ',';
        out += percent(report.known_accuracy());
        out += ',';
        out += percent_or_na(report.nota_accuracy());
        out += '\n';
    }
    return out;
}

std::string report_csv(const EvalReport& report) {
    std::string out = "episodes,n_way,k_shot,q_known,nota_rate,total,known,nota\n";
    out += std::to_string(report.episodes);
    out += ',';
    out += std::to_string(report.n_way);
    out += ',';
    out += std::to_string(report.k_shot);
    out += ',';
    out += std::to_string(report.q_known);
    out += ',';
    out += format_double(report.nota_rate);
    out += ',';
    out += percent(report.total_accuracy());
    out += ',';
    out += percent(report.known_accuracy());
    out += ',';
    out += percent_or_na(report.nota_accuracy());
    out += '\n';
    return out;
}

std::string report_json(const EvalReport& report) {
    nlohmann::json j;
    j["episodes"] = report.episodes;
    j["n_way"] = report.n_way;
    j["k_shot"] = report.k_shot;
    j["q_known"] = report.q_known;
    j["nota_rate"] = report.nota_rate;
    j["seed"] = report.seed;
    j["known_count"] = report.known_count;
    j["known_correct"] = report.known_correct;
    j["nota_count"] = report.nota_count;
    j["nota_correct"] = report.nota_correct;
    j["total"] = report.total_accuracy() * 100.0;
    j["known"] = report.known_accuracy() * 100.0;
    if (const auto nota = report.nota_accuracy())
        j["nota"] = *nota * 100.0;
    else
        j["nota"] = nullptr;
    nlohmann::json conf = nlohmann::json::object();
    for (const auto& [truth, row] : report.confusion) {
        nlohmann::json r = nlohmann::json::object();
        for (const auto& [outcome, count] : row) r[outcome] = count;
        conf[truth] = std::move(r);
    }
    j["confusion"] = std::move(conf);
    return j.dump() + "\n";
}

void apply_variant(const std::string& variant, ModelConfig& mc, TrainConfig& tc) {
    std::string name = variant;
    std::string value;
    if (const size_t eq = variant.find('='); eq != std::string::npos) {
        name = variant.substr(0, eq);
        value = variant.substr(eq + 1);
    }
    auto numeric_value = [&](double fallback) {
        if (value.empty()) return fallback;
        try {
            size_t pos = 0;
            const double v = std::stod(value, &pos);
            if (pos != value.size()) throw ConfigError("ablate: bad value in '" + variant + "'");
            return v;
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("ablate: bad value in '" + variant + "'");
        }
    };

    if (name == "full") {
        if (!value.empty()) throw ConfigError("ablate: 'full' takes no value");
        return;
    }
    if (name == "no-margin") {
        tc.no_margin = true;
    } else if (name == "fixed-margin") {
        tc.fixed_margin = numeric_value(1.0);
        if (tc.fixed_margin < 0.0) throw ConfigError("ablate: fixed-margin must be >= 0");
    } else if (name == "no-pns") {
        tc.no_pns = true;
    } else if (name == "euclidean-distance" || name == "euclidean") {
        mc.distance = DistanceMode::unit;
    } else if (name == "inverse-variance") {
        mc.distance = DistanceMode::inverse_variance;
    } else if (name == "equal-weights") {
        mc.weights = WeightMode::equal;
    } else if (name == "no-self-attention") {
        mc.weights = WeightMode::linear_only;
    } else if (name == "single-view") {
        mc.weights = WeightMode::single_view;
        if (!value.empty()) {
            int view = -1;
            for (int j = 0; j < kNumViews; ++j) {
                if (value == kViewNames[static_cast<size_t>(j)]) view = j;
            }
            if (view < 0) {
                const double v = numeric_value(0.0);
                view = static_cast<int>(v);
                if (static_cast<double>(view) != v) throw ConfigError("ablate: bad view in '" + variant + "'");
            }
            if (view < 0 || view >= kNumViews) throw ConfigError("ablate: view index out of range in '" + variant + "'");
            mc.single_view = view;
        }
    } else if (name == "pool-all") {
        mc.pool_all = true;
    } else {
        throw ConfigError("ablate: unknown variant '" + variant + "'");
    }
}

namespace {

struct MetricSamples {
    std::vector<double> values;  // fractions
    bool defined = true;

    void add(const std::optional<double>& v) {
        if (v)
            values.push_back(*v);
        else
            defined = false;
    }
    AblationCell cell() const {
        AblationCell c;
        c.defined = defined && !values.empty();
        if (!c.defined) return c;
        double sum = 0.0;
        for (double v : values) sum += v;
        const double mean = sum / static_cast<double>(values.size());
        double ss = 0.0;
        for (double v : values) ss += (v - mean) * (v - mean);
        c.mean = mean * 100.0;
        c.stddev = values.size() > 1
                       ? std::sqrt(ss / static_cast<double>(values.size() - 1)) * 100.0
                       : 0.0;
        return c;
    }
};

}  // namespace

AblationTable run_ablation(const Dataset& train_pool, const Dataset& eval_pool,
                           const ModelConfig& mc, const TrainConfig& tc, const EvalProtocol& proto,
                           const std::vector<std::string>& variants,
                           const std::vector<uint64_t>& seeds) {
    if (seeds.empty()) throw ConfigError("ablate: need at least one seed");

    std::vector<std::string> names;
    names.reserve(variants.size() + 1);
    names.emplace_back("full");
    for (const std::string& v : variants) {
        if (v != "full") names.push_back(v);
    }

    AblationTable table;
    table.seeds = static_cast<int>(seeds.size());
    table.rows.reserve(names.size());

    for (const std::string& name : names) {
        ModelConfig mcv = mc;
        TrainConfig tcv = tc;
        apply_variant(name, mcv, tcv);
        mcv.validate();
        tcv.validate();

        MetricSamples total, known, nota;
        for (uint64_t seed : seeds) {
            tcv.seed = seed;
            TrainResult fit = train(train_pool, mcv, init_params(mcv, seed), tcv);
            if (fit.diverged)
                throw NumericError("ablate: training diverged for variant '" + name + "' seed " +
                                   std::to_string(seed) + ": " + fit.divergence_reason);
            const EvalReport report =
                evaluate(eval_pool, mcv, fit.params, proto, derive_seed(seed, kStreamAblationEval));
            total.add(report.total_accuracy());
            known.add(report.known_accuracy());
            nota.add(report.nota_accuracy());
        }

        AblationRow row;
        row.name = name;
        row.total = total.cell();
        row.known = known.cell();
        row.nota = nota.cell();
        table.rows.push_back(std::move(row));
    }

    const AblationRow& full = table.rows.front();
    for (AblationRow& row : table.rows) {
        auto set_delta = [](AblationCell& cell, const AblationCell& base) {
            if (cell.defined && base.defined) cell.delta = base.mean - cell.mean;
        };
        set_delta(row.total, full.total);
        set_delta(row.known, full.known);
        set_delta(row.nota, full.nota);
    }
    return table;
}

namespace {

std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string cell_text(const AblationCell& cell, bool with_delta) {
    if (!cell.defined) return "na";
    std::string out = fixed2(cell.mean) + " ± " + fixed2(cell.stddev);
    if (with_delta) {
        out += cell.delta >= 0.0 ? " (↓ " + fixed2(cell.delta) + ")" : " (↑ " + fixed2(-cell.delta) + ")";
    }
    return out;
}

}  // namespace

std::string ablation_text(const AblationTable& table) {
    std::vector<std::array<std::string, 4>> cells;
    cells.push_back({std::string("variant"), "total", "known", "nota"});
    for (size_t i = 0; i < table.rows.size(); ++i) {
        const AblationRow& row = table.rows[i];
        const bool with_delta = i > 0;  // the full model is its own baseline
        cells.push_back({row.name, cell_text(row.total, with_delta), cell_text(row.known, with_delta),
                         cell_text(row.nota, with_delta)});
    }

    // The only non-ASCII glyphs are single-column (±, ↓, ↑), so display width
    // is the byte length minus UTF-8 continuation bytes.
    auto display_width = [](const std::string& s) {
        size_t w = 0;
        for (unsigned char ch : s)
            if ((ch & 0xc0) != 0x80) ++w;
        return w;
    };

    std::array<size_t, 4> width{};
    for (const auto& row : cells)
        for (size_t c = 0; c < 4; ++c) width[c] = std::max(width[c], display_width(row[c]));

    std::string out;
    for (const auto& row : cells) {
        for (size_t c = 0; c < 4; ++c) {
            out += row[c];
            if (c + 1 < 4) out.append(width[c] - display_width(row[c]) + 2, ' ');
        }
        out += '\n';
    }
    return out;
}

std::string ablation_csv(const AblationTable& table) {
    std::string out = "variant,total_mean,total_std,total_delta,known_mean,known_std,known_delta,nota_mean,nota_std,nota_delta\n";
    auto cell = [](const AblationCell& c) {
        if (!c.defined) return std::string("na,na,na");
        return fixed2(c.mean) + "," + fixed2(c.stddev) + "," + fixed2(c.delta);
    };
    for (const AblationRow& row : table.rows) {
        out += row.name;
        out += ',';
        out += cell(row.total);
        out += ',';
        out += cell(row.known);
        out += ',';
        out += cell(row.nota);
        out += '\n';
    }
    return out;
}

}  // namespace gproto
