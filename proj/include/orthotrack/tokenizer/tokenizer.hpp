#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "orthotrack/attention/block_map.hpp"
#include "orthotrack/core/tensor.hpp"
#include "orthotrack/events/types.hpp"

namespace orthotrack {

enum class Modality : std::uint8_t { Rgb, Event };
enum class Region : std::uint8_t { Template, Search };

Group group_of(Modality m, Region r);

struct TokenTag {
    Modality modality = Modality::Rgb;
    Region region = Region::Template;
    int row = 0;
    int col = 0;

    friend bool operator==(const TokenTag&, const TokenTag&) = default;
};

/// Tokens of one (modality, region) pair, possibly empty.
struct TokenFragment {
    Modality modality = Modality::Rgb;
    Region region = Region::Template;
    Tensor tokens; ///< n × D
    std::vector<TokenTag> tags;
};

/// Tagged token sequence in canonical T_I | T_E | S_I | S_E order.
struct TokenBatch {
    Tensor tokens; ///< N × D
    std::vector<TokenTag> tags;
    std::vector<bool> alive;

    std::size_t size() const { return tags.size(); }
};

/// Learned linear patch embedding for one modality.
struct PatchEmbedding {
    Tensor proj;     ///< (C·p²) × D
    Tensor bias;     ///< 1 × D
    Tensor modality; ///< 1 × D, added to every token of this modality
};

/// Non-overlapping p×p patches flattened channel-major, row-major over the
/// patch grid: [G² × C·p²]. Throws InputError unless p divides the side.
Tensor patch_matrix(const events::Planar& region, std::size_t patch);

/// Patch tokens: patch_matrix·proj + bias + positions + modality embedding.
/// `positions` is the [G² × D] table of the region's grid, shared by both
/// modalities.
TokenFragment patchify(const events::Planar& region, std::size_t patch, const PatchEmbedding& embed,
                       const Tensor& positions, Modality modality, Region region_kind);

/// Concatenates fragments in canonical order. Missing groups are empty;
/// duplicate (modality, region) fragments throw InputError.
TokenBatch assemble_one_stream(const std::vector<TokenFragment>& fragments);

/// Two-stream layout: separate template and search batches, each ordered
/// RGB then event, for fusion by the masking module.
struct TwoStreamTokens {
    TokenBatch template_tokens;
    TokenBatch search_tokens;
};
TwoStreamTokens assemble_two_stream(const std::vector<TokenFragment>& fragments);

/// Group boundaries of a canonical one-stream batch (all four groups, zero
/// sized ones included).
BlockMap block_map(const TokenBatch& batch);

} // namespace orthotrack
