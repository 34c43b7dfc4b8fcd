#include "orthotrack/masking/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "orthotrack/core/errors.hpp"
#include "orthotrack/core/ops.hpp"

namespace orthotrack {

void AugmentationConfig::validate() const {
    auto fraction = [](double v, const char* name) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw InputError(std::string(name) + " must lie in [0, 1], got " + std::to_string(v));
        }
    };
    fraction(delta_i, "delta_i");
    fraction(delta_e, "delta_e");
    if (!(granularity > 0.0 && granularity <= 1.0)) {
        throw InputError("granularity must lie in (0, 1], got " + std::to_string(granularity));
    }
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
        throw InputError("alpha must be finite and non-negative, got " + std::to_string(alpha));
    }
    if (tau && (!(*tau >= 0.0) || !std::isfinite(*tau))) {
        throw InputError("tau must be finite and non-negative, got " + std::to_string(*tau));
    }
}

AugmentationConfig AugmentationConfig::one_stream_defaults() {
    return {};
}

AugmentationConfig AugmentationConfig::two_stream_defaults() {
    AugmentationConfig c;
    c.delta_i = 0.4;
    c.delta_e = 0.3;
    c.alpha = 1.0;
    return c;
}

AugmentationConfig AugmentationConfig::disabled() {
    AugmentationConfig c;
    c.delta_i = 0.0;
    c.delta_e = 0.0;
    c.alpha = 0.0;
    return c;
}

std::size_t GridMask::masked_count() const {
    return static_cast<std::size_t>(std::count(masked.begin(), masked.end(), true));
}

double GridMask::masked_fraction() const {
    return masked.empty() ? 0.0 : static_cast<double>(masked_count()) / static_cast<double>(masked.size());
}

const GridMask& MaskSet::get(Modality m, Region r) const {
    if (r == Region::Template) {
        return m == Modality::Rgb ? template_rgb : template_event;
    }
    return m == Modality::Rgb ? search_rgb : search_event;
}

bool MaskSet::any() const {
    return template_rgb.masked_count() + template_event.masked_count() + search_rgb.masked_count() +
               search_event.masked_count() >
           0;
}

MaskSet MaskSet::none(std::size_t template_grid, std::size_t search_grid) {
    return {GridMask::none(template_grid), GridMask::none(template_grid), GridMask::none(search_grid),
            GridMask::none(search_grid)};
}

std::size_t mask_count(double delta, std::size_t cells) {
    return static_cast<std::size_t>(std::floor(delta * static_cast<double>(cells) + 0.5));
}

std::size_t mask_cells_per_side(std::size_t grid, double granularity) {
    if (grid == 0) {
        throw InputError("mask grid must be non-empty");
    }
    if (!(granularity > 0.0 && granularity <= 1.0)) {
        throw InputError("granularity must lie in (0, 1], got " + std::to_string(granularity));
    }
    const auto wanted = static_cast<std::size_t>(std::llround(1.0 / granularity));
    const std::size_t cells = std::min(std::max<std::size_t>(wanted, 1), grid);
    if (grid % cells != 0) {
        throw InputError("granularity " + std::to_string(granularity) + " gives " + std::to_string(cells) +
                         " mask cells per side, which does not divide the " + std::to_string(grid) +
                         "-token grid");
    }
    return cells;
}

namespace {

GridMask draw(std::size_t grid, double delta, double granularity, std::mt19937_64& rng) {
    const std::size_t side = mask_cells_per_side(grid, granularity);
    const std::size_t cells = side * side;
    const std::size_t k = mask_count(delta, cells);
    // Partial Fisher-Yates: the first k entries are a uniform k-subset.
    std::vector<std::size_t> order(cells);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, cells - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    GridMask out = GridMask::none(grid);
    const std::size_t span = grid / side;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t mr = order[i] / side;
        const std::size_t mc = order[i] % side;
        for (std::size_t r = mr * span; r < (mr + 1) * span; ++r) {
            for (std::size_t c = mc * span; c < (mc + 1) * span; ++c) {
                out.masked[r * grid + c] = true;
            }
        }
    }
    return out;
}

} // namespace

MaskSet sample_masks(std::size_t template_grid, std::size_t search_grid, const AugmentationConfig& config,
                     std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    const double ti = config.mask_template ? config.delta_i : 0.0;
    const double te = config.mask_template ? config.delta_e : 0.0;
    MaskSet out;
    out.template_rgb = draw(template_grid, ti, config.granularity, rng);
    out.template_event = draw(template_grid, te, config.granularity, rng);
    out.search_rgb = draw(search_grid, config.delta_i, config.granularity, rng);
    out.search_event = draw(search_grid, config.delta_e, config.granularity, rng);
    return out;
}

TokenBatch apply_one_stream(const TokenBatch& batch, const MaskSet& masks) {
    std::vector<std::size_t> keep;
    keep.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const TokenTag& tag = batch.tags[i];
        const GridMask& mask = masks.get(tag.modality, tag.region);
        if (tag.row < 0 || tag.col < 0 || static_cast<std::size_t>(tag.row) >= mask.grid ||
            static_cast<std::size_t>(tag.col) >= mask.grid) {
            throw InputError("apply_one_stream: token cell (" + std::to_string(tag.row) + ", " +
                             std::to_string(tag.col) + ") outside its " + std::to_string(mask.grid) + " grid");
        }
        if (batch.alive[i] && !mask.is_masked(tag.row, tag.col)) {
            keep.push_back(i);
        }
    }
    if (keep.empty()) {
        throw InputError("apply_one_stream: every token is masked");
    }
    if (keep.size() == batch.size()) {
        return batch;
    }
    TokenBatch out;
    out.tokens = index_rows(batch.tokens, keep);
    for (std::size_t i : keep) {
        out.tags.push_back(batch.tags[i]);
    }
    out.alive.assign(keep.size(), true);
    return out;
}

Tensor apply_two_stream(const Tensor& rgb, const Tensor& event, const GridMask& rgb_mask,
                        const GridMask& event_mask) {
    if (rgb.shape() != event.shape() || rgb.rank() != 2) {
        throw DimensionError("apply_two_stream: token shapes " + shape_str(rgb.shape()) + " and " +
                             shape_str(event.shape()) + " differ");
    }
    if (rgb_mask.masked.size() != rgb.rows() || event_mask.masked.size() != rgb.rows()) {
        throw DimensionError("apply_two_stream: masks cover " + std::to_string(rgb_mask.masked.size()) + " and " +
                             std::to_string(event_mask.masked.size()) + " cells for " +
                             std::to_string(rgb.rows()) + " tokens");
    }
    std::vector<double> wr(rgb.rows());
    std::vector<double> we(rgb.rows());
    for (std::size_t i = 0; i < rgb.rows(); ++i) {
        const bool r = !rgb_mask.masked[i];
        const bool e = !event_mask.masked[i];
        wr[i] = r ? (e ? 0.5 : 1.0) : 0.0;
        we[i] = e ? (r ? 0.5 : 1.0) : 0.0;
    }
    return add(scale_rows(rgb, wr), scale_rows(event, we));
}

} // namespace orthotrack
