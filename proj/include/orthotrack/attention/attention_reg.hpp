#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "orthotrack/attention/block_map.hpp"
#include "orthotrack/core/matrix.hpp"
#include "orthotrack/core/tensor.hpp"
#include "orthotrack/events/types.hpp"

namespace orthotrack {

enum class StreamKind { OneStream, TwoStream };

/// Row-stochastic attention of one head, with the token layout shared by
/// its query and key axes.
struct AttentionRecord {
    int layer = 0;
    int head = 0;
    Tensor matrix; ///< N × N
    BlockMap block_map;
};

/// Sub-matrix of queries in `query` attending to keys in `key`. Returns
/// nullopt when either group is empty; throws InputError when a group is
/// absent from the layout.
std::optional<Tensor> extract_block(const AttentionRecord& record, Group query, Group key);

/// Query/key group pairs that receive the rank loss.
std::vector<std::pair<Group, Group>> regularized_pairs(StreamKind kind);

struct SelectedBlock {
    Group query;
    Group key;
    Tensor matrix;

    std::string label() const { return std::string(group_name(query)) + "->" + group_name(key); }
};

/// Non-empty blocks of `regularized_pairs(kind)`, in that order.
std::vector<SelectedBlock> select_blocks(const AttentionRecord& record, StreamKind kind);

/// Axis-aligned box in token-grid units (one unit per patch).
struct GridBox {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;
};

GridBox to_grid_box(const events::BBox& crop_box, double patch_size);

/// Row-major indices of grid cells whose centers lie inside the box.
std::vector<std::size_t> cells_inside(std::size_t grid, const GridBox& box);

/// Restricts a search-to-template block to target cells on both axes.
/// Returns nullopt when either side has no target cell.
std::optional<Tensor> mask_non_target(const Tensor& block, std::size_t search_grid, const GridBox& search_box,
                                      std::size_t template_grid, const GridBox& template_box);

/// Same restriction expressed as a full-size block with non-target entries
/// zeroed, so those entries receive zero gradient.
Tensor zero_non_target(const Tensor& block, std::size_t search_grid, const GridBox& search_box,
                       std::size_t template_grid, const GridBox& template_box);

/// Target singular value for an n × m block: `tau` if set, else 1/sqrt(min(n, m)).
double block_tau(std::size_t rows, std::size_t cols, std::optional<double> tau);

struct RegBlock {
    std::string label;
    Tensor matrix;
};

/// Mean over blocks of sum_i |sigma_i - tau|. SVD failures are rethrown as
/// NumericError naming the block label. Throws InputError on an empty list.
Tensor high_rank_loss(const std::vector<RegBlock>& blocks, std::optional<double> tau);

/// Uniform layer index in [0, num_layers), a pure function of (step, seed).
int pick_layer(int num_layers, std::uint64_t step, std::uint64_t seed);

struct BlockDiagnostics {
    int layer = 0;
    int head = 0;
    std::string label;
    std::vector<double> sigma;
    double stable_rank = 0.0;
    Matrix gram; ///< MᵀM
};

std::vector<BlockDiagnostics> diagnose(const AttentionRecord& record, StreamKind kind);

/// Little-endian attention dump: magic "OTAT", version, layer, head,
/// rows, cols, group count, (group id, size) pairs, then row-major f64 data.
void write_attention(std::ostream& os, const AttentionRecord& record);
AttentionRecord read_attention(std::istream& is);
void write_attention_file(const std::string& path, const AttentionRecord& record);
AttentionRecord read_attention_file(const std::string& path);

/// CSV with header `layer,head,block,sv_index,sigma`.
void write_sigma_csv(std::ostream& os, const std::vector<BlockDiagnostics>& diagnostics);

/// Little-endian Gram dump: magic "OTGM", rows, cols, row-major f64 data.
void write_gram_file(const std::string& path, const Matrix& gram);
Matrix read_gram_file(const std::string& path);

} // namespace orthotrack
