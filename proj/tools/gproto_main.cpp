// Command-line front end: synthetic data generation, hash embedding, episodic
// training, open-set evaluation, NOTA-rate sweeps, ablation tables and
// gradient checking, all over the core library.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gproto/dataset.hpp"
#include "gproto/errors.hpp"
#include "gproto/eval.hpp"
#include "gproto/model.hpp"
#include "gproto/train.hpp"

namespace {

using namespace gproto;

// Architecture flags shared by train, ablate and grad-check. Enum-valued
// options stay strings until resolve_model so CLI11 can echo defaults.
struct ModelFlags {
    ModelConfig config;
    std::string distance = "variance-weighted";
    std::string weights = "attention";
    std::string single_view = "main";
};

void add_model_flags(CLI::App* cmd, ModelFlags& f, bool with_dim) {
    if (with_dim) {
        cmd->add_option("--dim", f.config.dim, "Embedding dimension")->capture_default_str();
    }
    cmd->add_option("--prompt-len", f.config.prompt_len, "Prompt rows per view")
        ->capture_default_str();
    cmd->add_option("--heads", f.config.heads, "Encoder attention heads")->capture_default_str();
    cmd->add_flag("--pool-all", f.config.pool_all,
                  "Pool over prompt and support positions (default: prompt positions only)");
    cmd->add_option("--distance", f.distance,
                    "Per-view distance: variance-weighted | inverse-variance | euclidean")
        ->capture_default_str();
    cmd->add_option("--weights", f.weights,
                    "View mixture: attention | linear-only | equal | single-view")
        ->capture_default_str();
    cmd->add_option("--single-view", f.single_view,
                    "View used with --weights single-view (name or index 0-3)")
        ->capture_default_str();
}

int parse_view(const std::string& s) {
    for (int j = 0; j < kNumViews; ++j) {
        if (s == kViewNames[static_cast<size_t>(j)]) return j;
    }
    int v = -1;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || v < 0 || v >= kNumViews) {
        throw ConfigError("bad view '" + s + "' (main | head | tail | context | 0-3)");
    }
    return v;
}

ModelConfig resolve_model(const ModelFlags& f) {
    ModelConfig mc = f.config;
    mc.distance = distance_mode_from_string(f.distance);
    mc.weights = weight_mode_from_string(f.weights);
    mc.single_view = parse_view(f.single_view);
    mc.validate();
    return mc;
}

struct TrainFlags {
    TrainConfig config;
    bool freeze_tau = false;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
    TrainConfig& tc = f.config;
    cmd->add_option("--lambda", tc.lambda, "Range-shrinkage weight")->capture_default_str();
    cmd->add_option("--alpha", tc.alpha, "Positive-term sharpness")->capture_default_str();
    cmd->add_option("--beta", tc.beta, "Negative-term sharpness")->capture_default_str();
    cmd->add_option("--lr", tc.lr, "SGD learning rate")->capture_default_str();
    cmd->add_option("--weight-decay", tc.weight_decay,
                    "Decoupled weight decay on projection/head matrices")
        ->capture_default_str();
    cmd->add_option("--episodes", tc.episodes, "Training episode budget")->capture_default_str();
    cmd->add_option("--batch-episodes", tc.batch_episodes, "Episodes averaged per step")
        ->capture_default_str();
    cmd->add_flag("--freeze-tau", f.freeze_tau, "Keep the quantile levels at their initial values");
    cmd->add_option("--n-way", tc.n_way, "Known relations per episode")->capture_default_str();
    cmd->add_option("--k-shot", tc.k_shot, "Support instances per relation")->capture_default_str();
    cmd->add_option("--q-known", tc.q_known, "Known queries per episode")->capture_default_str();
    cmd->add_option("--nota-rate", tc.nota_rate, "Unknown-query fraction in [0, 1)")
        ->capture_default_str();
    cmd->add_option("--pns-ratio", tc.pns_ratio, "Pseudo-negatives = ceil(ratio * N * K)")
        ->capture_default_str();
    cmd->add_option("--pns-noise-scale", tc.pns_noise_scale,
                    "Pseudo-negative noise std = scale * sqrt(mean range)")
        ->capture_default_str();
    cmd->add_option("--pns-pool-factor", tc.pns_pool_factor,
                    "Candidate pool size = factor * selected count")
        ->capture_default_str();
    cmd->add_option("--early-stop-window", tc.early_stop_window, "Moving-average window")
        ->capture_default_str();
    cmd->add_option("--early-stop-patience", tc.early_stop_patience,
                    "Episodes without improvement before stopping")
        ->capture_default_str();
    cmd->add_option("--early-stop-min-improvement", tc.early_stop_min_improvement,
                    "Moving-average improvement that resets patience")
        ->capture_default_str();
    cmd->add_option("--seed", tc.seed, "Master seed")->capture_default_str();
    cmd->add_flag("--no-margin", tc.no_margin, "Ablation: force every margin to zero");
    cmd->add_option("--fixed-margin", tc.fixed_margin,
                    "Ablation: constant margin instead of the quantile (>= 0)")
        ->capture_default_str();
    cmd->add_flag("--no-pns", tc.no_pns, "Ablation: disable pseudo-negative sampling");
}

TrainConfig resolve_train(const TrainFlags& f) {
    TrainConfig tc = f.config;
    tc.train_tau = !f.freeze_tau;
    tc.validate();
    return tc;
}

Dataset load_pool(const std::string& path, const std::string& split) {
    Dataset ds = load_embeddings(path);
    if (split == "all") return ds;
    if (split == "train") return ds.split_subset(Split::train);
    if (split == "validation") return ds.split_subset(Split::validation);
    throw ConfigError("unknown split '" + split + "' (train | validation | all)");
}

void require_dim(const Dataset& pool, const ModelConfig& mc, const std::string& what) {
    if (pool.manifest.dim != mc.dim) {
        throw ConfigError(what + ": data dimension " + std::to_string(pool.manifest.dim) +
                          " does not match model dimension " + std::to_string(mc.dim));
    }
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw InputError("failed writing '" + path + "'");
}

// ---- gen-synthetic ----

struct GenArgs {
    SyntheticSpec spec;
    std::vector<double> informativeness;
    std::string out;
};

void run_gen(const GenArgs& a) {
    SyntheticSpec spec = a.spec;
    if (!a.informativeness.empty()) {
        for (int j = 0; j < kNumViews; ++j)
            spec.informativeness[static_cast<size_t>(j)] = a.informativeness[static_cast<size_t>(j)];
    }
    const Dataset ds = generate_synthetic(spec);
    save_embeddings(ds, a.out);
    std::cout << "wrote " << ds.instances.size() << " instances (" << spec.relations
              << " relations, dim " << spec.dim << ") -> " << a.out << "\n";
}

// ---- embed-text ----

struct EmbedArgs {
    std::string in = "-";
    std::string out;
    int dim = 16;
};

size_t parse_index(const std::string& field, size_t line_no, const char* what) {
    size_t v = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size()) {
        throw ParseError("embed-text: bad " + std::string(what) + " on line " +
                         std::to_string(line_no));
    }
    return v;
}

void run_embed(const EmbedArgs& a) {
    std::ifstream file;
    if (a.in != "-") {
        file.open(a.in);
        if (!file) throw InputError("cannot open '" + a.in + "'");
    }
    std::istream& in = a.in == "-" ? std::cin : file;

    Dataset ds;
    ds.manifest.dim = a.dim;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;

        // id \t relation \t sentence \t head_begin \t head_end \t tail_begin \t tail_end
        std::vector<std::string> fields;
        size_t start = 0;
        while (true) {
            const size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != 7) {
            throw ParseError("embed-text: expected 7 tab-separated fields on line " +
                             std::to_string(line_no) + ", got " + std::to_string(fields.size()));
        }

        const TextSpan head{parse_index(fields[3], line_no, "head begin"),
                            parse_index(fields[4], line_no, "head end")};
        const TextSpan tail{parse_index(fields[5], line_no, "tail begin"),
                            parse_index(fields[6], line_no, "tail end")};
        Instance inst;
        inst.id = fields[0];
        inst.label = fields[1];
        inst.meta.sentence = fields[2];
        inst.meta.head = fields[2].substr(head.begin, head.end - head.begin);
        inst.meta.tail = fields[2].substr(tail.begin, tail.end - tail.begin);
        inst.views = hash_embed_text(fields[2], head, tail, a.dim);
        ds.instances.push_back(std::move(inst));
    }

    // Manifest relations in first-seen order, all in the train split.
    for (const Instance& inst : ds.instances) {
        bool seen = false;
        for (RelationInfo& rel : ds.manifest.relations) {
            if (rel.name == inst.label) {
                ++rel.count;
                seen = true;
                break;
            }
        }
        if (!seen) ds.manifest.relations.push_back({inst.label, 1, Split::train});
    }
    ds.rebuild_index();
    save_embeddings(ds, a.out);
    std::cout << "embedded " << ds.instances.size() << " instances ("
              << ds.manifest.relations.size() << " relations, dim " << a.dim << ") -> " << a.out
              << "\n";
}

// ---- train ----

struct TrainArgs {
    std::string data;
    std::string split = "train";
    ModelFlags model;
    TrainFlags train;
    std::string out = "model.ckpt";
    std::string trace;
};

void run_train(const TrainArgs& a) {
    const Dataset pool = load_pool(a.data, a.split);
    ModelFlags mf = a.model;
    mf.config.dim = pool.manifest.dim;
    const ModelConfig mc = resolve_model(mf);
    const TrainConfig tc = resolve_train(a.train);

    TrainResult fit = train(pool, mc, init_params(mc, tc.seed), tc);
    if (!a.trace.empty()) write_text(a.trace, trace_csv(fit.trace));
    if (fit.diverged) {
        throw NumericError("training diverged after " + std::to_string(fit.episodes_run) +
                           " episodes: " + fit.divergence_reason);
    }
    save_checkpoint(a.out, mc, fit.params);

    const double final_loss = fit.trace.empty() ? 0.0 : fit.trace.back().loss;
    std::cout << "trained " << fit.episodes_run << " episodes"
              << (fit.early_stopped ? " (early stop)" : "") << ", final loss " << final_loss
              << ", checkpoint -> " << a.out << "\n";
}

// ---- eval / sweep ----

struct EvalArgs {
    std::string data;
    std::string split = "all";
    std::string checkpoint;
    EvalProtocol proto;
    uint64_t seed = 1;
    std::string format = "csv";
    std::string out;
    std::vector<double> rates = {0.0, 0.15, 0.3, 0.5};  // sweep only
};

void add_eval_flags(CLI::App* cmd, EvalArgs& a, bool with_rate) {
    cmd->add_option("--data", a.data, "Embedding file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--split", a.split, "Pool restriction: train | validation | all")
        ->capture_default_str();
    cmd->add_option("--checkpoint", a.checkpoint, "Trained model checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--n-way", a.proto.n_way, "Known relations per episode")->capture_default_str();
    cmd->add_option("--k-shot", a.proto.k_shot, "Support instances per relation")
        ->capture_default_str();
    cmd->add_option("--q-known", a.proto.q_known, "Known queries per episode")
        ->capture_default_str();
    if (with_rate) {
        cmd->add_option("--nota-rate", a.proto.nota_rate, "Unknown-query fraction in [0, 1)")
            ->capture_default_str();
    }
    cmd->add_option("--episodes", a.proto.episodes, "Evaluation episodes")->capture_default_str();
    cmd->add_option("--seed", a.seed, "Evaluation seed")->capture_default_str();
    cmd->add_option("--format", a.format, "Report format: csv | json-lines")->capture_default_str();
    cmd->add_option("--out", a.out, "Output path (default: stdout)");
}

void run_eval(const EvalArgs& a) {
    ModelConfig mc;
    ModelParams params;
    load_checkpoint(a.checkpoint, mc, params);
    const Dataset pool = load_pool(a.data, a.split);
    require_dim(pool, mc, "eval");

    const EvalReport report = evaluate(pool, mc, params, a.proto, a.seed);
    if (a.format == "csv") {
        write_text(a.out, report_csv(report));
    } else if (a.format == "json-lines") {
        write_text(a.out, report_json(report));
    } else {
        throw ConfigError("unknown format '" + a.format + "' (csv | json-lines)");
    }
}

void run_sweep(const EvalArgs& a) {
    ModelConfig mc;
    ModelParams params;
    load_checkpoint(a.checkpoint, mc, params);
    const Dataset pool = load_pool(a.data, a.split);
    require_dim(pool, mc, "sweep");

    const SweepResult sweep = sweep_nota(pool, mc, params, a.rates, a.proto, a.seed);
    if (a.format == "csv") {
        write_text(a.out, sweep_csv(sweep));
    } else if (a.format == "json-lines") {
        std::string out;
        for (const auto& [rate, report] : sweep.entries) out += report_json(report);
        write_text(a.out, out);
    } else {
        throw ConfigError("unknown format '" + a.format + "' (csv | json-lines)");
    }
}

// ---- ablate ----

struct AblateArgs {
    std::string train_data;
    std::string eval_data;
    std::string train_split = "train";
    std::string eval_split = "all";
    ModelFlags model;
    TrainFlags train;
    int eval_episodes = 200;
    std::vector<std::string> variants = {"no-margin",     "fixed-margin",      "no-pns",
                                         "euclidean-distance", "equal-weights",
                                         "no-self-attention",  "single-view"};
    std::vector<uint64_t> seeds = {1, 2, 3};
    std::string format = "table";
    std::string out;
};

void run_ablate(const AblateArgs& a) {
    const Dataset train_pool = load_pool(a.train_data, a.train_split);
    const Dataset eval_pool = load_pool(a.eval_data, a.eval_split);
    if (train_pool.manifest.dim != eval_pool.manifest.dim) {
        throw ConfigError("ablate: train/eval pools have different dimensions");
    }

    ModelFlags mf = a.model;
    mf.config.dim = train_pool.manifest.dim;
    const ModelConfig mc = resolve_model(mf);
    const TrainConfig tc = resolve_train(a.train);

    EvalProtocol proto;
    proto.n_way = tc.n_way;
    proto.k_shot = tc.k_shot;
    proto.q_known = tc.q_known;
    proto.nota_rate = tc.nota_rate;
    proto.episodes = a.eval_episodes;

    const AblationTable table = run_ablation(train_pool, eval_pool, mc, tc, proto, a.variants, a.seeds);
    if (a.format == "table") {
        write_text(a.out, ablation_text(table));
    } else if (a.format == "csv") {
        write_text(a.out, ablation_csv(table));
    } else if (a.format == "json-lines") {
        std::string out;
        for (const AblationRow& row : table.rows) {
            nlohmann::json j;
            j["variant"] = row.name;
            auto cell = [](const AblationCell& c) {
                nlohmann::json v;
                if (c.defined) {
                    v["mean"] = c.mean;
                    v["std"] = c.stddev;
                    v["delta"] = c.delta;
                } else {
                    v = nullptr;
                }
                return v;
            };
            j["total"] = cell(row.total);
            j["known"] = cell(row.known);
            j["nota"] = cell(row.nota);
            j["seeds"] = table.seeds;
            out += j.dump() + "\n";
        }
        write_text(a.out, out);
    } else {
        throw ConfigError("unknown format '" + a.format + "' (table | csv | json-lines)");
    }
}

// ---- grad-check ----

struct GradArgs {
    ModelFlags model;
    TrainFlags train;
    GradCheckSettings settings;
    double tolerance = 1e-4;
};

int run_grad_check(const GradArgs& a) {
    GradCheckSettings s = a.settings;
    s.model = resolve_model(a.model);
    s.train = resolve_train(a.train);

    const GradientReport report = grad_check(s);
    for (size_t b = 0; b < kParamBlocks.size(); ++b) {
        std::cout << "block " << to_string(kParamBlocks[b]) << ": max relative error "
                  << report.max_rel_error[b] << " over " << report.coords_checked[b]
                  << " coordinates\n";
    }
    std::cout << "episodes checked: " << report.episodes << " (skipped "
              << report.episodes_skipped << " near quantile knots)\n";
    const double worst = report.worst();
    std::cout << "worst relative error: " << worst << " (tolerance " << a.tolerance << ") -> "
              << (worst < a.tolerance ? "OK" : "EXCEEDED") << "\n";
    return worst < a.tolerance ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian-prototype open-set few-shot classification"};
    app.require_subcommand(1);

    GenArgs gen;
    CLI::App* cmd_gen = app.add_subcommand("gen-synthetic", "Generate a synthetic embedding pool");
    cmd_gen->add_option("--relations", gen.spec.relations, "Relation count")->capture_default_str();
    cmd_gen->add_option("--dim", gen.spec.dim, "Embedding dimension")->capture_default_str();
    cmd_gen->add_option("--center-scale", gen.spec.center_scale, "Pairwise center spacing")
        ->capture_default_str();
    cmd_gen->add_option("--sigma", gen.spec.sigma, "Within-cluster standard deviation")
        ->capture_default_str();
    cmd_gen->add_option("--informativeness", gen.informativeness,
                        "Per-view informativeness multipliers (4 values)")
        ->expected(4);
    cmd_gen->add_option("--instances", gen.spec.instances_per_relation, "Instances per relation")
        ->capture_default_str();
    cmd_gen->add_option("--seed", gen.spec.seed, "Generator seed")->capture_default_str();
    cmd_gen->add_option("--label-prefix", gen.spec.label_prefix, "Relation label prefix")
        ->capture_default_str();
    cmd_gen->add_option("--validation-relations", gen.spec.validation_relations,
                        "Trailing relations assigned to the validation split")
        ->capture_default_str();
    cmd_gen->add_option("--out", gen.out, "Output embedding file")->required();

    EmbedArgs embed;
    CLI::App* cmd_embed =
        app.add_subcommand("embed-text", "Hash-embed tab-separated sentences (smoke-test device)");
    cmd_embed->add_option("--in", embed.in, "Input TSV (id, relation, sentence, head/tail "
                                            "character spans); '-' for stdin")
        ->capture_default_str();
    cmd_embed->add_option("--dim", embed.dim, "Embedding dimension")->capture_default_str();
    cmd_embed->add_option("--out", embed.out, "Output embedding file")->required();

    TrainArgs tr;
    CLI::App* cmd_train = app.add_subcommand("train", "Train on episodic tasks");
    cmd_train->add_option("--data", tr.data, "Embedding file")->required()->check(CLI::ExistingFile);
    cmd_train->add_option("--split", tr.split, "Pool restriction: train | validation | all")
        ->capture_default_str();
    add_model_flags(cmd_train, tr.model, /*with_dim=*/false);
    add_train_flags(cmd_train, tr.train);
    cmd_train->add_option("--out", tr.out, "Checkpoint output path")->capture_default_str();
    cmd_train->add_option("--trace", tr.trace, "Loss trace CSV output path");

    EvalArgs ev;
    CLI::App* cmd_eval = app.add_subcommand("eval", "Evaluate a checkpoint on open-set episodes");
    add_eval_flags(cmd_eval, ev, /*with_rate=*/true);

    EvalArgs sw;
    CLI::App* cmd_sweep = app.add_subcommand("sweep", "Evaluate across a NOTA-rate grid");
    add_eval_flags(cmd_sweep, sw, /*with_rate=*/false);
    cmd_sweep->add_option("--rates", sw.rates, "Strictly increasing NOTA rates in [0, 1)")
        ->expected(-1);

    AblateArgs ab;
    CLI::App* cmd_ablate = app.add_subcommand("ablate", "Train and compare ablation variants");
    cmd_ablate->add_option("--train-data", ab.train_data, "Training embedding file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_ablate->add_option("--eval-data", ab.eval_data, "Evaluation embedding file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_ablate->add_option("--train-split", ab.train_split, "train | validation | all")
        ->capture_default_str();
    cmd_ablate->add_option("--eval-split", ab.eval_split, "train | validation | all")
        ->capture_default_str();
    add_model_flags(cmd_ablate, ab.model, /*with_dim=*/false);
    add_train_flags(cmd_ablate, ab.train);
    cmd_ablate->add_option("--eval-episodes", ab.eval_episodes, "Evaluation episodes per seed")
        ->capture_default_str();
    cmd_ablate->add_option("--variants", ab.variants, "Variants: no-margin fixed-margin=<m> no-pns euclidean-distance inverse-variance equal-weights no-self-attention single-view=<j> pool-all");
    cmd_ablate->add_option("--seeds", ab.seeds, "Seeds (one train+eval run per seed per variant)");
    cmd_ablate->add_option("--format", ab.format, "table | csv | json-lines")->capture_default_str();
    cmd_ablate->add_option("--out", ab.out, "Output path (default: stdout)");

    GradArgs gc;
    gc.model.config.dim = 8;
    gc.train.config.n_way = 3;
    gc.train.config.k_shot = 2;
    gc.train.config.q_known = 4;
    CLI::App* cmd_grad =
        app.add_subcommand("grad-check", "Verify analytic gradients against finite differences");
    add_model_flags(cmd_grad, gc.model, /*with_dim=*/true);
    add_train_flags(cmd_grad, gc.train);
    cmd_grad->add_option("--trials", gc.settings.trials, "Episodes to check")->capture_default_str();
    cmd_grad->add_option("--coords-per-block", gc.settings.coords_per_block,
                         "Probed coordinates per parameter block per episode")
        ->capture_default_str();
    cmd_grad->add_option("--epsilon", gc.settings.epsilon, "Central-difference step")
        ->capture_default_str();
    cmd_grad->add_option("--check-seed", gc.settings.seed, "Episode/probe seed")
        ->capture_default_str();
    cmd_grad->add_option("--tolerance", gc.tolerance, "Worst relative error allowed")
        ->capture_default_str();

    int exit_code = kExitOk;
    try {
        app.parse(argc, argv);
        if (cmd_gen->parsed()) run_gen(gen);
        if (cmd_embed->parsed()) run_embed(embed);
        if (cmd_train->parsed()) run_train(tr);
        if (cmd_eval->parsed()) run_eval(ev);
        if (cmd_sweep->parsed()) run_sweep(sw);
        if (cmd_ablate->parsed()) run_ablate(ab);
        if (cmd_grad->parsed()) exit_code = run_grad_check(gc);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return exit_code;
}
