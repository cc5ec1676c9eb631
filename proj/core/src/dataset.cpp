#include "gproto/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "gproto/errors.hpp"
#include "gproto/rng.hpp"
#include "gproto/text.hpp"

namespace gproto {

namespace {

double parse_double(std::string_view s, int record, const char* what) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ParseError("record " + std::to_string(record) + ": malformed " + what + " '" +
                         std::string(s) + "'");
    }
    return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    size_t start = 0;
    while (true) {
        const size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

const char* split_name(Split s) { return s == Split::train ? "train" : "validation"; }

Split split_from_name(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "validation") return Split::validation;
    throw SchemaError("manifest: unknown split '" + s + "'");
}

}  // namespace

void Dataset::rebuild_index() {
    relation_names.clear();
    instances_by_relation.clear();
    std::unordered_map<std::string, size_t> slot;
    for (const RelationInfo& rel : manifest.relations) {
        slot.emplace(rel.name, relation_names.size());
        relation_names.push_back(rel.name);
        instances_by_relation.emplace_back();
    }
    for (int32_t i = 0; i < static_cast<int32_t>(instances.size()); ++i) {
        auto it = slot.find(instances[static_cast<size_t>(i)].label);
        if (it == slot.end()) {
            slot.emplace(instances[static_cast<size_t>(i)].label, relation_names.size());
            relation_names.push_back(instances[static_cast<size_t>(i)].label);
            instances_by_relation.emplace_back();
            it = slot.find(instances[static_cast<size_t>(i)].label);
        }
        instances_by_relation[it->second].push_back(i);
    }
}

Dataset Dataset::split_subset(Split split) const {
    Dataset out;
    out.manifest.dim = manifest.dim;
    std::unordered_set<std::string> keep;
    for (const RelationInfo& rel : manifest.relations) {
        if (rel.split == split) {
            out.manifest.relations.push_back(rel);
            keep.insert(rel.name);
        }
    }
    for (const Instance& inst : instances) {
        if (keep.count(inst.label)) out.instances.push_back(inst);
    }
    out.rebuild_index();
    return out;
}

std::string manifest_sidecar_path(const std::string& embedding_path) {
    return embedding_path + ".manifest.json";
}

Dataset load_embeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open embedding file '" + path + "'");

    std::string header;
    if (!std::getline(in, header) || header.empty()) {
        throw SchemaError("empty embedding file (no header): '" + path + "'");
    }
    int dim = 0;
    int views = 0;
    {
        std::istringstream hs(header);
        std::string magic, version, dim_kv, views_kv;
        hs >> magic >> version >> dim_kv >> views_kv;
        if (magic != kEmbeddingMagic || version != "v" + std::to_string(kEmbeddingVersion)) {
            throw SchemaError("bad header '" + header + "', expected '" +
                              std::string(kEmbeddingMagic) + " v1 dim=<d> views=4'");
        }
        if (dim_kv.rfind("dim=", 0) != 0 || views_kv.rfind("views=", 0) != 0) {
            throw SchemaError("bad header fields in '" + header + "'");
        }
        dim = std::stoi(dim_kv.substr(4));
        views = std::stoi(views_kv.substr(6));
    }
    if (dim <= 0) throw SchemaError("header declares non-positive dim");
    if (views != kNumViews) {
        throw SchemaError("header declares views=" + std::to_string(views) + ", this reader supports " +
                          std::to_string(kNumViews));
    }

    Dataset ds;
    ds.manifest.dim = dim;
    std::unordered_set<std::string> seen_ids;
    std::unordered_map<std::string, int> counts;
    std::vector<std::string> relation_order;

    std::string line;
    int record = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++record;
        const auto fields = split(line, '\t');
        if (fields.size() != 2 + kNumViews) {
            throw ParseError("record " + std::to_string(record) + ": expected " +
                             std::to_string(2 + kNumViews) + " tab-separated fields, got " +
                             std::to_string(fields.size()));
        }
        Instance inst;
        inst.id = std::string(fields[0]);
        inst.label = std::string(fields[1]);
        if (inst.id.empty()) throw ParseError("record " + std::to_string(record) + ": empty id");
        if (!seen_ids.insert(inst.id).second) {
            throw DataError("record " + std::to_string(record) + ": duplicate id '" + inst.id + "'");
        }
        for (int j = 0; j < kNumViews; ++j) {
            const auto comps = split(fields[static_cast<size_t>(2 + j)], ',');
            if (static_cast<int>(comps.size()) != dim) {
                throw SchemaError("record " + std::to_string(record) + ": view " + kViewNames[static_cast<size_t>(j)] +
                                  " has " + std::to_string(comps.size()) + " components, dim=" +
                                  std::to_string(dim));
            }
            auto& vec = inst.views[static_cast<size_t>(j)];
            vec.reserve(static_cast<size_t>(dim));
            for (const auto& c : comps) {
                const double v = parse_double(c, record, "float");
                if (!std::isfinite(v)) {
                    throw DataError("record " + std::to_string(record) + ": non-finite component in view " +
                                    kViewNames[static_cast<size_t>(j)]);
                }
                vec.push_back(v);
            }
        }
        if (!counts.count(inst.label)) relation_order.push_back(inst.label);
        counts[inst.label] += 1;
        ds.instances.push_back(std::move(inst));
    }

    const std::string sidecar = manifest_sidecar_path(path);
    if (std::filesystem::exists(sidecar)) {
        std::ifstream ms(sidecar);
        nlohmann::json j;
        try {
            ms >> j;
        } catch (const std::exception& e) {
            throw SchemaError("manifest '" + sidecar + "': " + e.what());
        }
        if (j.value("dim", -1) != dim) {
            throw SchemaError("manifest dim " + j.value("dim", nlohmann::json(-1)).dump() +
                              " disagrees with file dim " + std::to_string(dim));
        }
        for (const auto& rel : j.at("relations")) {
            RelationInfo info;
            info.name = rel.at("name").get<std::string>();
            info.count = rel.at("count").get<int>();
            info.split = split_from_name(rel.value("split", "train"));
            auto it = counts.find(info.name);
            if (it == counts.end() || it->second != info.count) {
                throw SchemaError("manifest count for relation '" + info.name +
                                  "' disagrees with embedding file");
            }
            ds.manifest.relations.push_back(std::move(info));
        }
        if (ds.manifest.relations.size() != counts.size()) {
            throw SchemaError("manifest lists " + std::to_string(ds.manifest.relations.size()) +
                              " relations, embedding file has " + std::to_string(counts.size()));
        }
    } else {
        for (const std::string& name : relation_order) {
            ds.manifest.relations.push_back({name, counts[name], Split::train});
        }
    }

    // Meta-learning split: train and validation relations must be disjoint.
    // (By construction each relation has exactly one split entry; the loop
    // above rejects duplicates implicitly via the size check.)
    ds.rebuild_index();
    return ds;
}

void save_embeddings(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << kEmbeddingMagic << " v" << kEmbeddingVersion << " dim=" << dataset.manifest.dim
        << " views=" << kNumViews << "\n";
    for (const Instance& inst : dataset.instances) {
        out << inst.id << '\t' << inst.label;
        for (int j = 0; j < kNumViews; ++j) {
            out << '\t';
            const auto& vec = inst.views[static_cast<size_t>(j)];
            for (size_t i = 0; i < vec.size(); ++i) {
                if (i) out << ',';
                out << format_double(vec[i]);
            }
        }
        out << '\n';
    }

    nlohmann::json j;
    j["format"] = kEmbeddingMagic;
    j["version"] = kEmbeddingVersion;
    j["dim"] = dataset.manifest.dim;
    j["views"] = kNumViews;
    j["relations"] = nlohmann::json::array();
    for (const RelationInfo& rel : dataset.manifest.relations) {
        j["relations"].push_back(
            {{"name", rel.name}, {"count", rel.count}, {"split", split_name(rel.split)}});
    }
    std::ofstream ms(manifest_sidecar_path(path));
    ms << j.dump(2) << "\n";
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.relations < 1) throw ConfigError("synthetic: relations must be >= 1");
    if (spec.dim < 1) throw ConfigError("synthetic: dim must be >= 1");
    if (spec.instances_per_relation < 1) throw ConfigError("synthetic: instances_per_relation must be >= 1");
    if (!(spec.sigma > 0.0)) throw ConfigError("synthetic: sigma must be > 0");
    if (!(spec.center_scale >= 0.0) || !std::isfinite(spec.center_scale)) {
        throw ConfigError("synthetic: center_scale must be finite and >= 0");
    }
    bool any_signal = false;
    for (double m : spec.informativeness) {
        if (!(m >= 0.0) || !std::isfinite(m)) {
            throw ConfigError("synthetic: informativeness multipliers must be finite and >= 0");
        }
        any_signal = any_signal || m > 0.0;
    }
    if (!any_signal) throw ConfigError("synthetic: all views have zero informativeness (no signal)");
    if (spec.validation_relations < 0 || spec.validation_relations > spec.relations) {
        throw ConfigError("synthetic: validation_relations out of range");
    }

    const int R = spec.relations;
    const int d = spec.dim;
    const double axis = spec.center_scale / std::sqrt(2.0);

    // Centers first, from their own stream, so the instance stream does not
    // depend on how centers were produced.
    Rng center_rng(derive_seed(spec.seed, 1));
    std::array<std::vector<std::vector<double>>, kNumViews> centers;
    for (int j = 0; j < kNumViews; ++j) {
        centers[static_cast<size_t>(j)].assign(static_cast<size_t>(R), std::vector<double>(static_cast<size_t>(d), 0.0));
        if (R <= 2 * d) {
            // Distinct signed axes: +/-axis on coordinate k for slot k and
            // k + d. Distinct coordinates sit center_scale apart, mirrored
            // signs on one coordinate sqrt(2) times that, so the pairwise
            // spacing never drops below center_scale.
            std::vector<int> slots(static_cast<size_t>(2 * d));
            std::iota(slots.begin(), slots.end(), 0);
            center_rng.shuffle(slots);
            for (int r = 0; r < R; ++r) {
                const int slot = slots[static_cast<size_t>(r)];
                const double sign = slot < d ? 1.0 : -1.0;
                centers[static_cast<size_t>(j)][static_cast<size_t>(r)][static_cast<size_t>(slot % d)] =
                    sign * axis;
            }
        } else {
            const double coord_std = spec.center_scale / std::sqrt(2.0 * d);
            for (int r = 0; r < R; ++r) {
                for (int i = 0; i < d; ++i) {
                    centers[static_cast<size_t>(j)][static_cast<size_t>(r)][static_cast<size_t>(i)] =
                        center_rng.normal(0.0, coord_std);
                }
            }
        }
    }

    Dataset ds;
    ds.manifest.dim = d;
    Rng rng(derive_seed(spec.seed, 2));
    int name_width = 2;
    for (int x = R - 1; x >= 100; x /= 10) ++name_width;
    for (int r = 0; r < R; ++r) {
        std::string num = std::to_string(r);
        while (static_cast<int>(num.size()) < name_width) num.insert(num.begin(), '0');
        const std::string label = spec.label_prefix + num;
        const Split split = r >= R - spec.validation_relations ? Split::validation : Split::train;
        ds.manifest.relations.push_back({label, spec.instances_per_relation, split});
        for (int i = 0; i < spec.instances_per_relation; ++i) {
            Instance inst;
            inst.label = label;
            inst.id = label + "-" + std::to_string(i);
            for (int j = 0; j < kNumViews; ++j) {
                auto& vec = inst.views[static_cast<size_t>(j)];
                vec.resize(static_cast<size_t>(d));
                const double m = spec.informativeness[static_cast<size_t>(j)];
                if (m > 0.0) {
                    const double sd = spec.sigma / m;
                    const auto& c = centers[static_cast<size_t>(j)][static_cast<size_t>(r)];
                    for (int t = 0; t < d; ++t) vec[static_cast<size_t>(t)] = c[static_cast<size_t>(t)] + rng.normal(0.0, sd);
                } else {
                    for (int t = 0; t < d; ++t) vec[static_cast<size_t>(t)] = rng.normal(0.0, spec.sigma);
                }
            }
            ds.instances.push_back(std::move(inst));
        }
    }
    ds.rebuild_index();
    return ds;
}

namespace {

uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        size_t start = i;
        while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        if (i > start) out.emplace_back(s.substr(start, i - start));
    }
    return out;
}

void hash_into(const std::vector<std::string>& tokens, std::vector<double>& vec) {
    for (const std::string& t : tokens) {
        const uint64_t h = fnv1a64(t);
        const size_t idx = static_cast<size_t>(h % vec.size());
        const double sign = (h >> 32) & 1 ? 1.0 : -1.0;
        vec[idx] += sign;
    }
    double norm = 0.0;
    for (double v : vec) norm += v * v;
    if (norm == 0.0) throw DataError("hash_embed_text: view hashed to the zero vector");
    norm = std::sqrt(norm);
    for (double& v : vec) v /= norm;
}

}  // namespace

std::array<std::vector<double>, kNumViews> hash_embed_text(const std::string& sentence,
                                                           TextSpan head, TextSpan tail,
                                                           int dim) {
    if (dim < 1) throw ConfigError("hash_embed_text: dim must be >= 1");
    if (head.begin > head.end || tail.begin > tail.end || head.end > sentence.size() ||
        tail.end > sentence.size()) {
        throw InputError("hash_embed_text: span out of sentence bounds");
    }
    const bool head_first = head.begin <= tail.begin;
    const TextSpan& a = head_first ? head : tail;
    const TextSpan& b = head_first ? tail : head;
    if (a.end > b.begin) throw InputError("hash_embed_text: head and tail spans overlap");

    const auto pre = tokenize(std::string_view(sentence).substr(0, a.begin));
    const auto first = tokenize(std::string_view(sentence).substr(a.begin, a.end - a.begin));
    const auto mid = tokenize(std::string_view(sentence).substr(a.end, b.begin - a.end));
    const auto second = tokenize(std::string_view(sentence).substr(b.begin, b.end - b.begin));
    const auto post = tokenize(std::string_view(sentence).substr(b.end));

    // Marked token stream; either entity segment can be swapped for the
    // placeholder to form the debiased views.
    const std::vector<std::string> placeholder = {"<ent>"};
    auto build = [&](bool mask_head, bool mask_tail) {
        const auto& head_toks = mask_head ? placeholder : (head_first ? first : second);
        const auto& tail_toks = mask_tail ? placeholder : (head_first ? second : first);
        std::vector<std::string> toks = pre;
        auto append = [&toks](const std::vector<std::string>& more) {
            toks.insert(toks.end(), more.begin(), more.end());
        };
        if (head_first) {
            append({"<h>"});
            append(head_toks);
            append({"</h>"});
            append(mid);
            append({"<t>"});
            append(tail_toks);
            append({"</t>"});
        } else {
            append({"<t>"});
            append(tail_toks);
            append({"</t>"});
            append(mid);
            append({"<h>"});
            append(head_toks);
            append({"</h>"});
        }
        append(post);
        return toks;
    };

    const auto main_toks = build(false, false);
    const auto head_view_toks = build(true, false);
    const auto tail_view_toks = build(false, true);
    std::vector<std::string> ctx_toks;
    ctx_toks.reserve(main_toks.size());
    for (const std::string& t : main_toks) {
        std::string lowered;
        for (char c : t) {
            if (c >= '0' && c <= '9') continue;
            lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
        if (!lowered.empty()) ctx_toks.push_back(std::move(lowered));
    }

    std::array<std::vector<double>, kNumViews> views;
    for (auto& v : views) v.assign(static_cast<size_t>(dim), 0.0);
    hash_into(main_toks, views[0]);
    hash_into(head_view_toks, views[1]);
    hash_into(tail_view_toks, views[2]);
    hash_into(ctx_toks, views[3]);
    return views;
}

}  // namespace gproto
