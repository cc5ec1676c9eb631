#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "gproto/types.hpp"

namespace gproto {

// Line-oriented embedding file, version 1:
//   GPROTO-EMB v1 dim=<d> views=4
//   <id>\t<relation>\t<view floats comma-separated>   (x4 views per record)
// A structured manifest sidecar lives next to the file at
// `<path>.manifest.json` and carries relation counts and the train/validation
// split. Loading without a sidecar assigns every relation to the train split.
inline constexpr const char* kEmbeddingMagic = "GPROTO-EMB";
inline constexpr int kEmbeddingVersion = 1;

std::string manifest_sidecar_path(const std::string& embedding_path);

// Order-preserving, deterministic load. Throws ParseError (malformed record,
// with its 1-based record index), SchemaError (bad header, dimension or
// manifest mismatch) or DataError (non-finite component, duplicate id).
Dataset load_embeddings(const std::string& path);

// Writes the embedding file plus its manifest sidecar. Floats are emitted
// with shortest round-trip precision, so save/load is bit-exact.
void save_embeddings(const Dataset& dataset, const std::string& path);

// Synthetic episode-distribution generator. Per (relation, view) centers are
// placed on distinct scaled signed basis vectors under a per-view random
// draw when relations <= 2 * dim, which keeps the pairwise center distance
// at least `center_scale` within every view (exactly that for distinct
// coordinates, sqrt(2) times it for mirrored signs); with more relations
// the centers fall back to Gaussian placement with matching expected
// spacing. Bit-identical output for identical specs.
Dataset generate_synthetic(const SyntheticSpec& spec);

// Character spans [begin, end) into `sentence`.
struct TextSpan {
    size_t begin = 0;
    size_t end = 0;
};

// Deterministic feature-hash embedder for smoke tests (never a benchmark
// device). Main view hashes whitespace tokens with entity-marker tokens
// inserted; head/tail views replace the respective entity tokens with a
// single placeholder; the context view lowercases every token and strips
// digits. All four vectors are L2-normalized.
std::array<std::vector<double>, kNumViews> hash_embed_text(const std::string& sentence,
                                                           TextSpan head, TextSpan tail,
                                                           int dim);

}  // namespace gproto
