#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gproto {

// The four embedding channels per instance: main, head-debiased,
// tail-debiased and context-debiased.
inline constexpr int kNumViews = 4;
inline constexpr std::array<const char*, kNumViews> kViewNames = {"main", "head", "tail",
                                                                  "context"};

struct InstanceMeta {
    std::string head;
    std::string tail;
    std::string sentence;
};

// A bare four-view embedding point (the payload of an Instance, and the shape
// of pseudo-negative samples).
using FourViews = std::array<std::vector<double>, kNumViews>;

// One labeled example: a relation label plus four view-embedding vectors of
// shared dimension d. Text fields are carried as opaque metadata only.
struct Instance {
    std::string id;
    std::string label;
    FourViews views;
    InstanceMeta meta;

    int dim() const { return static_cast<int>(views[0].size()); }
};

enum class Split : uint8_t { train, validation };

struct RelationInfo {
    std::string name;
    int count = 0;
    Split split = Split::train;
};

struct DatasetManifest {
    int dim = 0;
    std::vector<RelationInfo> relations;
};

// An instance pool plus manifest, with a relation -> instance-index lookup.
struct Dataset {
    DatasetManifest manifest;
    std::vector<Instance> instances;

    std::vector<std::string> relation_names;                // in manifest order
    std::vector<std::vector<int32_t>> instances_by_relation;  // parallel to relation_names

    void rebuild_index();
    // Subset restricted to one split; instance order is preserved.
    Dataset split_subset(Split split) const;
};

// One N-way K-shot meta-task. Instances are referenced by index into the
// dataset the episode was sampled from.
struct Episode {
    std::vector<std::string> known_relations;       // N distinct labels
    std::vector<std::vector<int32_t>> support;      // N x K, grouped by relation
    std::vector<int32_t> query_known;
    std::vector<int32_t> query_unknown;             // ground-truth NOTA

    int n_way() const { return static_cast<int>(known_relations.size()); }
    int k_shot() const { return support.empty() ? 0 : static_cast<int>(support[0].size()); }
};

// Configuration for the synthetic episode-distribution generator. Relation
// r's view-j embeddings are isotropic Gaussians around a per-(relation, view)
// center with standard deviation sigma / informativeness[j]; a zero
// multiplier degrades that view to centerless noise.
struct SyntheticSpec {
    int relations = 10;
    int dim = 16;
    double center_scale = 8.0;   // pairwise center spacing per view
    double sigma = 1.0;          // within-cluster standard deviation
    std::array<double, kNumViews> informativeness = {1.0, 1.0, 1.0, 1.0};
    int instances_per_relation = 50;
    uint64_t seed = 1;
    std::string label_prefix = "rel_";
    int validation_relations = 0;  // trailing relations assigned to the validation split
};

// Per-view Gaussian prototype parameters; variance is strictly positive.
// Templated on the scalar so the same structure carries plain values or
// autodiff variables.
template <class S>
struct ViewGaussianT {
    std::vector<S> mean;
    std::vector<S> variance;
};
using ViewGaussian = ViewGaussianT<double>;

// Softmax-normalized mixture over the four views.
using ViewWeights = std::array<double, kNumViews>;

// Per-class bundle used at inference time.
struct ClassPrototype {
    std::string relation;
    std::array<ViewGaussian, kNumViews> gaussians;
    ViewWeights weights = {0.25, 0.25, 0.25, 0.25};
    double range = 0.0;   // acceptance radius R_c
    double margin = 0.0;  // NOTA buffer M_c
};

// Classification outcome: a known class index or NOTA (rejection).
struct Prediction {
    static constexpr int kNota = -1;
    int class_index = kNota;

    bool is_nota() const { return class_index == kNota; }
};

}  // namespace gproto
