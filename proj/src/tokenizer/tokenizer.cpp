#include "orthotrack/tokenizer/tokenizer.hpp"

#include <array>
#include <string>

#include "orthotrack/core/errors.hpp"
#include "orthotrack/core/ops.hpp"

namespace orthotrack {

Group group_of(Modality m, Region r) {
    if (r == Region::Template) {
        return m == Modality::Rgb ? Group::TemplateRgb : Group::TemplateEvent;
    }
    return m == Modality::Rgb ? Group::SearchRgb : Group::SearchEvent;
}

Tensor patch_matrix(const events::Planar& region, std::size_t patch) {
    if (patch == 0) {
        throw InputError("patch_matrix: patch size must be positive");
    }
    if (region.height() != region.width()) {
        throw InputError("patch_matrix: region must be square, got " + std::to_string(region.height()) + "x" +
                         std::to_string(region.width()));
    }
    if (region.width() % patch != 0) {
        throw InputError("patch_matrix: side " + std::to_string(region.width()) + " not divisible by patch " +
                         std::to_string(patch));
    }
    const std::size_t grid = region.width() / patch;
    const std::size_t c = region.channels();
    const std::size_t feat = c * patch * patch;
    std::vector<double> out(grid * grid * feat);
    for (std::size_t gr = 0; gr < grid; ++gr) {
        for (std::size_t gc = 0; gc < grid; ++gc) {
            double* row = out.data() + (gr * grid + gc) * feat;
            std::size_t k = 0;
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t py = 0; py < patch; ++py) {
                    for (std::size_t px = 0; px < patch; ++px) {
                        row[k++] = region(ch, gr * patch + py, gc * patch + px);
                    }
                }
            }
        }
    }
    return Tensor({grid * grid, feat}, std::move(out));
}

TokenFragment patchify(const events::Planar& region, std::size_t patch, const PatchEmbedding& embed,
                       const Tensor& positions, Modality modality, Region region_kind) {
    Tensor patches = patch_matrix(region, patch);
    if (embed.proj.rank() != 2 || embed.proj.rows() != patches.cols()) {
        throw DimensionError("patchify: projection expects " + std::to_string(patches.cols()) +
                             " input features, got " + shape_str(embed.proj.shape()));
    }
    if (positions.rank() != 2 || positions.rows() != patches.rows() || positions.cols() != embed.proj.cols()) {
        throw DimensionError("patchify: position table " + shape_str(positions.shape()) + " does not match " +
                             std::to_string(patches.rows()) + " tokens of width " +
                             std::to_string(embed.proj.cols()));
    }
    Tensor tokens = add_row(matmul(patches, embed.proj), embed.bias);
    tokens = add(tokens, positions);
    tokens = add_row(tokens, embed.modality);

    TokenFragment out;
    out.modality = modality;
    out.region = region_kind;
    out.tokens = tokens;
    const int grid = static_cast<int>(region.width() / patch);
    for (int r = 0; r < grid; ++r) {
        for (int c = 0; c < grid; ++c) {
            out.tags.push_back({modality, region_kind, r, c});
        }
    }
    return out;
}

namespace {

std::size_t fragment_width(const std::vector<TokenFragment>& fragments) {
    std::size_t width = 0;
    bool found = false;
    for (const auto& f : fragments) {
        if (!f.tokens.defined()) {
            continue;
        }
        if (f.tokens.rank() != 2) {
            throw DimensionError("assemble: fragment tokens must be 2-D, got " + shape_str(f.tokens.shape()));
        }
        if (f.tokens.rows() != f.tags.size()) {
            throw DimensionError("assemble: fragment has " + std::to_string(f.tokens.rows()) + " tokens but " +
                                 std::to_string(f.tags.size()) + " tags");
        }
        if (found && f.tokens.cols() != width) {
            throw DimensionError("assemble: token width mismatch " + std::to_string(width) + " vs " +
                                 std::to_string(f.tokens.cols()));
        }
        width = f.tokens.cols();
        found = true;
    }
    if (!found) {
        throw InputError("assemble: no fragment carries a token tensor");
    }
    return width;
}

/// Slots in canonical order; throws on duplicates.
std::array<const TokenFragment*, 4> index_fragments(const std::vector<TokenFragment>& fragments) {
    std::array<const TokenFragment*, 4> slots{};
    for (const auto& f : fragments) {
        const auto g = static_cast<std::size_t>(group_of(f.modality, f.region));
        if (slots[g] != nullptr) {
            throw InputError(std::string("assemble: duplicate fragment for group ") +
                             group_name(group_of(f.modality, f.region)));
        }
        for (const auto& tag : f.tags) {
            if (tag.modality != f.modality || tag.region != f.region) {
                throw InputError("assemble: tag does not match its fragment group");
            }
        }
        slots[g] = &f;
    }
    return slots;
}

TokenBatch concat(const std::vector<const TokenFragment*>& parts, std::size_t width) {
    TokenBatch out;
    std::vector<Tensor> tensors;
    for (const TokenFragment* f : parts) {
        if (f == nullptr || f->tags.empty()) {
            continue;
        }
        tensors.push_back(f->tokens);
        out.tags.insert(out.tags.end(), f->tags.begin(), f->tags.end());
    }
    out.tokens = tensors.empty() ? Tensor(Shape{0, width}) : tensors.size() == 1 ? tensors.front() : concat_rows(tensors);
    out.alive.assign(out.tags.size(), true);
    return out;
}

} // namespace

TokenBatch assemble_one_stream(const std::vector<TokenFragment>& fragments) {
    const std::size_t width = fragment_width(fragments);
    auto slots = index_fragments(fragments);
    return concat({slots[0], slots[1], slots[2], slots[3]}, width);
}

TwoStreamTokens assemble_two_stream(const std::vector<TokenFragment>& fragments) {
    const std::size_t width = fragment_width(fragments);
    auto slots = index_fragments(fragments);
    return {concat({slots[0], slots[1]}, width), concat({slots[2], slots[3]}, width)};
}

BlockMap block_map(const TokenBatch& batch) {
    std::array<std::size_t, 4> counts{};
    std::size_t last = 0;
    for (const auto& tag : batch.tags) {
        const auto g = static_cast<std::size_t>(group_of(tag.modality, tag.region));
        if (g < last) {
            throw InputError("block_map: batch is not in canonical T_I, T_E, S_I, S_E order");
        }
        last = g;
        ++counts[g];
    }
    return BlockMap({Group::TemplateRgb, Group::TemplateEvent, Group::SearchRgb, Group::SearchEvent},
                    {counts[0], counts[1], counts[2], counts[3]});
}

} // namespace orthotrack
