#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "orthotrack/core/tensor.hpp"
#include "orthotrack/tokenizer/tokenizer.hpp"

namespace orthotrack {

/// Modality-masking and high-rank-regularization knobs.
struct AugmentationConfig {
    double delta_i = 0.1;           ///< masked fraction of RGB cells
    double delta_e = 0.1;           ///< masked fraction of event cells
    double granularity = 1.0 / 8.0; ///< mask cell side as a fraction of the grid side
    bool mask_template = true;      ///< false restricts masking to search tokens
    double alpha = 1.2;             ///< weight of the rank loss
    std::optional<double> tau;      ///< singular value target; unset means 1/sqrt(min(n, m)) per block

    /// Throws InputError on out-of-range values.
    void validate() const;

    static AugmentationConfig one_stream_defaults();
    static AugmentationConfig two_stream_defaults();
    /// Both augmentations off; training reduces to the task loss alone.
    static AugmentationConfig disabled();
};

/// Per-token-cell mask for one (modality, region) grid.
struct GridMask {
    std::size_t grid = 0;
    std::vector<bool> masked; ///< grid² flags, row-major

    std::size_t masked_count() const;
    double masked_fraction() const;
    bool is_masked(int row, int col) const { return masked[static_cast<std::size_t>(row) * grid + col]; }

    static GridMask none(std::size_t grid) { return {grid, std::vector<bool>(grid * grid, false)}; }
};

struct MaskSet {
    GridMask template_rgb;
    GridMask template_event;
    GridMask search_rgb;
    GridMask search_event;

    const GridMask& get(Modality m, Region r) const;
    bool any() const;
    static MaskSet none(std::size_t template_grid, std::size_t search_grid);
};

/// Number of masked cells out of `cells`: delta·cells rounded half up.
std::size_t mask_count(double delta, std::size_t cells);

/// Mask cells per grid side: min(round(1/granularity), grid). Throws
/// InputError when that does not divide the grid.
std::size_t mask_cells_per_side(std::size_t grid, double granularity);

/// Draws the four masks independently from one seeded stream, in the order
/// T_I, T_E, S_I, S_E.
MaskSet sample_masks(std::size_t template_grid, std::size_t search_grid, const AugmentationConfig& config,
                     std::uint64_t seed);

/// Removes masked tokens, keeping survivor order and values. Throws
/// InputError if nothing survives.
TokenBatch apply_one_stream(const TokenBatch& batch, const MaskSet& masks);

/// Per-cell fusion of aligned RGB and event tokens: the mean when both are
/// visible, the survivor when one is, zeros when both are masked.
Tensor apply_two_stream(const Tensor& rgb, const Tensor& event, const GridMask& rgb_mask,
                        const GridMask& event_mask);

} // namespace orthotrack
