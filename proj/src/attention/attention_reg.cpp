#include "orthotrack/attention/attention_reg.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "orthotrack/core/binary_io.hpp"
#include "orthotrack/core/errors.hpp"
#include "orthotrack/core/ops.hpp"
#include "orthotrack/core/random.hpp"
#include "orthotrack/core/svd.hpp"

namespace orthotrack {

std::optional<Tensor> extract_block(const AttentionRecord& record, Group query, Group key) {
    const Tensor& m = record.matrix;
    const std::size_t n = record.block_map.total();
    if (m.rank() != 2 || m.rows() != n || m.cols() != n) {
        throw DimensionError("extract_block: attention " + shape_str(m.shape()) + " does not match layout of " +
                             std::to_string(n) + " tokens");
    }
    auto [r0, r1] = record.block_map.range(query);
    auto [c0, c1] = record.block_map.range(key);
    if (r0 == r1 || c0 == c1) {
        return std::nullopt;
    }
    return block(m, r0, r1, c0, c1);
}

std::vector<std::pair<Group, Group>> regularized_pairs(StreamKind kind) {
    if (kind == StreamKind::TwoStream) {
        return {{Group::Search, Group::Template}};
    }
    return {{Group::SearchRgb, Group::TemplateEvent},
            {Group::SearchRgb, Group::SearchEvent},
            {Group::SearchEvent, Group::TemplateRgb},
            {Group::SearchEvent, Group::SearchRgb}};
}

std::vector<SelectedBlock> select_blocks(const AttentionRecord& record, StreamKind kind) {
    std::vector<SelectedBlock> out;
    for (auto [q, k] : regularized_pairs(kind)) {
        if (auto b = extract_block(record, q, k)) {
            out.push_back({q, k, *b});
        }
    }
    return out;
}

GridBox to_grid_box(const events::BBox& crop_box, double patch_size) {
    if (!(patch_size > 0.0)) {
        throw InputError("to_grid_box: patch size must be positive");
    }
    return {crop_box.x0() / patch_size, crop_box.y0() / patch_size, crop_box.x1() / patch_size,
            crop_box.y1() / patch_size};
}

std::vector<std::size_t> cells_inside(std::size_t grid, const GridBox& box) {
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < grid; ++r) {
        const double cy = static_cast<double>(r) + 0.5;
        if (cy < box.y0 || cy > box.y1) {
            continue;
        }
        for (std::size_t c = 0; c < grid; ++c) {
            const double cx = static_cast<double>(c) + 0.5;
            if (cx >= box.x0 && cx <= box.x1) {
                out.push_back(r * grid + c);
            }
        }
    }
    return out;
}

namespace {

void check_block(const Tensor& block, std::size_t search_grid, std::size_t template_grid) {
    if (block.rank() != 2 || block.rows() != search_grid * search_grid ||
        block.cols() != template_grid * template_grid) {
        throw DimensionError("mask_non_target: block " + shape_str(block.shape()) + " is not " +
                             std::to_string(search_grid * search_grid) + "x" +
                             std::to_string(template_grid * template_grid));
    }
}

} // namespace

std::optional<Tensor> mask_non_target(const Tensor& block, std::size_t search_grid, const GridBox& search_box,
                                      std::size_t template_grid, const GridBox& template_box) {
    check_block(block, search_grid, template_grid);
    auto rows = cells_inside(search_grid, search_box);
    auto cols = cells_inside(template_grid, template_box);
    if (rows.empty() || cols.empty()) {
        return std::nullopt;
    }
    return index_cols(index_rows(block, rows), cols);
}

Tensor zero_non_target(const Tensor& block, std::size_t search_grid, const GridBox& search_box,
                       std::size_t template_grid, const GridBox& template_box) {
    check_block(block, search_grid, template_grid);
    std::vector<double> keep(block.numel(), 0.0);
    for (std::size_t r : cells_inside(search_grid, search_box)) {
        for (std::size_t c : cells_inside(template_grid, template_box)) {
            keep[r * block.cols() + c] = 1.0;
        }
    }
    return mul(block, Tensor(block.shape(), std::move(keep)));
}

double block_tau(std::size_t rows, std::size_t cols, std::optional<double> tau) {
    if (tau) {
        return *tau;
    }
    return 1.0 / std::sqrt(static_cast<double>(std::min(rows, cols)));
}

Tensor high_rank_loss(const std::vector<RegBlock>& blocks, std::optional<double> tau) {
    if (blocks.empty()) {
        throw InputError("high_rank_loss: no blocks to regularize");
    }
    Tensor total;
    for (const auto& b : blocks) {
        Tensor sigma;
        try {
            sigma = singular_values(b.matrix);
        } catch (const NumericError& e) {
            throw NumericError("high_rank_loss: SVD failed on " + b.label + ": " + e.what());
        }
        Tensor term = l1_to_threshold(sigma, block_tau(b.matrix.rows(), b.matrix.cols(), tau));
        total = total.defined() ? add(total, term) : term;
    }
    return scale(total, 1.0 / static_cast<double>(blocks.size()));
}

int pick_layer(int num_layers, std::uint64_t step, std::uint64_t seed) {
    if (num_layers <= 0) {
        throw InputError("pick_layer: need at least one layer");
    }
    std::mt19937_64 rng(mix_seed(seed, step));
    std::uniform_int_distribution<int> dist(0, num_layers - 1);
    return dist(rng);
}

std::vector<BlockDiagnostics> diagnose(const AttentionRecord& record, StreamKind kind) {
    std::vector<BlockDiagnostics> out;
    for (const auto& b : select_blocks(record, kind)) {
        Matrix m = Matrix::from_span(b.matrix.rows(), b.matrix.cols(), b.matrix.values());
        SvdResult f = svd(m);
        BlockDiagnostics d;
        d.layer = record.layer;
        d.head = record.head;
        d.label = b.label();
        d.sigma = f.sigma;
        d.stable_rank = stable_rank(f.sigma);
        d.gram = gram(m);
        out.push_back(std::move(d));
    }
    return out;
}

void write_attention(std::ostream& os, const AttentionRecord& record) {
    binary::write_magic(os, "OTAT");
    binary::write_u32(os, 1);
    binary::write_u32(os, static_cast<std::uint32_t>(record.layer));
    binary::write_u32(os, static_cast<std::uint32_t>(record.head));
    binary::write_u32(os, static_cast<std::uint32_t>(record.matrix.rows()));
    binary::write_u32(os, static_cast<std::uint32_t>(record.matrix.cols()));
    const auto& groups = record.block_map.groups();
    const auto sizes = record.block_map.sizes();
    binary::write_u32(os, static_cast<std::uint32_t>(groups.size()));
    for (std::size_t i = 0; i < groups.size(); ++i) {
        binary::write_u32(os, static_cast<std::uint32_t>(groups[i]));
        binary::write_u64(os, sizes[i]);
    }
    for (double v : record.matrix.values()) {
        binary::write_f64(os, v);
    }
}

AttentionRecord read_attention(std::istream& is) {
    binary::expect_magic(is, "OTAT");
    const auto version = binary::read_u32(is);
    if (version != 1) {
        throw InputError("read_attention: unsupported version " + std::to_string(version));
    }
    AttentionRecord r;
    r.layer = static_cast<int>(binary::read_u32(is));
    r.head = static_cast<int>(binary::read_u32(is));
    const std::size_t rows = binary::read_u32(is);
    const std::size_t cols = binary::read_u32(is);
    const std::size_t count = binary::read_u32(is);
    std::vector<Group> groups;
    std::vector<std::size_t> sizes;
    for (std::size_t i = 0; i < count; ++i) {
        const auto id = binary::read_u32(is);
        if (id > static_cast<std::uint32_t>(Group::Search)) {
            throw InputError("read_attention: unknown group id " + std::to_string(id));
        }
        groups.push_back(static_cast<Group>(id));
        sizes.push_back(binary::read_u64(is));
    }
    r.block_map = BlockMap(std::move(groups), std::move(sizes));
    std::vector<double> data(rows * cols);
    for (double& v : data) {
        v = binary::read_f64(is);
    }
    r.matrix = Tensor({rows, cols}, std::move(data));
    return r;
}

void write_attention_file(const std::string& path, const AttentionRecord& record) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw InputError("cannot open " + path + " for writing");
    }
    write_attention(os, record);
}

AttentionRecord read_attention_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw InputError("cannot open " + path);
    }
    return read_attention(is);
}

void write_sigma_csv(std::ostream& os, const std::vector<BlockDiagnostics>& diagnostics) {
    os << "layer,head,block,sv_index,sigma\n";
    os.precision(17);
    for (const auto& d : diagnostics) {
        for (std::size_t i = 0; i < d.sigma.size(); ++i) {
            os << d.layer << ',' << d.head << ',' << d.label << ',' << i << ',' << d.sigma[i] << '\n';
        }
    }
}

void write_gram_file(const std::string& path, const Matrix& gram_matrix) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw InputError("cannot open " + path + " for writing");
    }
    binary::write_magic(os, "OTGM");
    binary::write_u32(os, static_cast<std::uint32_t>(gram_matrix.rows()));
    binary::write_u32(os, static_cast<std::uint32_t>(gram_matrix.cols()));
    for (double v : gram_matrix.data()) {
        binary::write_f64(os, v);
    }
}

Matrix read_gram_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw InputError("cannot open " + path);
    }
    binary::expect_magic(is, "OTGM");
    const std::size_t rows = binary::read_u32(is);
    const std::size_t cols = binary::read_u32(is);
    Matrix m(rows, cols);
    for (double& v : m.storage()) {
        v = binary::read_f64(is);
    }
    return m;
}

} // namespace orthotrack
