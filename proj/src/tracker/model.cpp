#include "orthotrack/tracker/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "orthotrack/core/errors.hpp"
#include "orthotrack/core/ops.hpp"
#include "orthotrack/core/random.hpp"

namespace orthotrack {

TrackerModel::TrackerModel(ModelConfig config) : config_(config), rng_state_(config.init_seed) {
    config_.validate();
    const std::size_t d = config_.dim;
    const std::size_t p2 = config_.patch * config_.patch;
    const double s = config_.init_std;
    const auto backbone = ParamGroup::Backbone;

    rgb_embedding.proj = add("embed.rgb.proj", {3 * p2, d}, backbone, s);
    rgb_embedding.bias = add("embed.rgb.bias", {1, d}, backbone, 0.0);
    rgb_embedding.modality = add("embed.rgb.modality", {1, d}, backbone, s);
    event_embedding.proj = add("embed.event.proj", {config_.event_channels() * p2, d}, backbone, s);
    event_embedding.bias = add("embed.event.bias", {1, d}, backbone, 0.0);
    event_embedding.modality = add("embed.event.modality", {1, d}, backbone, s);
    template_positions = add("embed.pos.template", {config_.template_grid() * config_.template_grid(), d}, backbone, s);
    search_positions = add("embed.pos.search", {config_.search_grid() * config_.search_grid(), d}, backbone, s);

    auto make_layer = [&](const std::string& prefix, ParamGroup group) {
        const std::size_t hidden = d * config_.mlp_ratio;
        EncoderLayer l;
        l.ln1_gamma = add(prefix + ".ln1.gamma", {1, d}, group, 0.0, 1.0);
        l.ln1_beta = add(prefix + ".ln1.beta", {1, d}, group, 0.0);
        l.qkv_w = add(prefix + ".attn.qkv.w", {d, 3 * d}, group, s);
        l.qkv_b = add(prefix + ".attn.qkv.b", {1, 3 * d}, group, 0.0);
        l.out_w = add(prefix + ".attn.out.w", {d, d}, group, s);
        l.out_b = add(prefix + ".attn.out.b", {1, d}, group, 0.0);
        l.ln2_gamma = add(prefix + ".ln2.gamma", {1, d}, group, 0.0, 1.0);
        l.ln2_beta = add(prefix + ".ln2.beta", {1, d}, group, 0.0);
        l.fc1_w = add(prefix + ".mlp.fc1.w", {d, hidden}, group, s);
        l.fc1_b = add(prefix + ".mlp.fc1.b", {1, hidden}, group, 0.0);
        l.fc2_w = add(prefix + ".mlp.fc2.w", {hidden, d}, group, s);
        l.fc2_b = add(prefix + ".mlp.fc2.b", {1, d}, group, 0.0);
        return l;
    };
    for (std::size_t i = 0; i < config_.layers; ++i) {
        encoder.push_back(make_layer("encoder." + std::to_string(i), backbone));
    }
    if (config_.stream == StreamKind::TwoStream) {
        for (std::size_t i = 0; i < config_.relation_layers; ++i) {
            relation.push_back(make_layer("relation." + std::to_string(i), ParamGroup::Head));
        }
    }
    const auto h = ParamGroup::Head;
    head.norm_gamma = add("head.norm.gamma", {1, d}, h, 0.0, 1.0);
    head.norm_beta = add("head.norm.beta", {1, d}, h, 0.0);
    head.hidden_w = add("head.hidden.w", {d, d}, h, s);
    head.hidden_b = add("head.hidden.b", {1, d}, h, 0.0);
    head.cls_w = add("head.cls.w", {d, 1}, h, s);
    head.cls_b = add("head.cls.b", {1, 1}, h, 0.0);
    head.box_w = add("head.box.w", {d, 4}, h, s);
    head.box_b = add("head.box.b", {1, 4}, h, 0.0);
}

Tensor TrackerModel::add(const std::string& name, Shape shape, ParamGroup group, double std_dev, double fill) {
    std::vector<double> values(shape_numel(shape), fill);
    if (std_dev > 0.0) {
        // Each tensor gets its own stream so adding parameters never shifts
        // the draws of earlier ones.
        std::mt19937_64 rng(mix_seed(rng_state_, params_.size()));
        std::normal_distribution<double> dist(0.0, std_dev);
        for (double& v : values) {
            v = dist(rng);
        }
    }
    Tensor t(std::move(shape), std::move(values), true);
    params_.push_back({name, t, group});
    return t;
}

const Tensor& TrackerModel::parameter(const std::string& name) const {
    for (const auto& p : params_) {
        if (p.name == name) {
            return p.value;
        }
    }
    throw InputError("TrackerModel: no parameter named " + name);
}

std::size_t TrackerModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p.value.numel();
    }
    return n;
}

void TrackerModel::zero_grad() {
    for (const auto& p : params_) {
        Tensor t = p.value;
        t.zero_grad();
    }
}

Tensor encoder_layer(const EncoderLayer& layer, const Tensor& x, std::size_t heads,
                     std::vector<Tensor>* attention) {
    const std::size_t d = x.cols();
    const std::size_t dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor h = layer_norm(x, layer.ln1_gamma, layer.ln1_beta);
    Tensor qkv = add_row(matmul(h, layer.qkv_w), layer.qkv_b);
    std::vector<Tensor> outs;
    for (std::size_t i = 0; i < heads; ++i) {
        Tensor q = slice_cols(qkv, i * dh, (i + 1) * dh);
        Tensor k = slice_cols(qkv, d + i * dh, d + (i + 1) * dh);
        Tensor v = slice_cols(qkv, 2 * d + i * dh, 2 * d + (i + 1) * dh);
        Tensor a = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt));
        if (attention != nullptr) {
            attention->push_back(a);
        }
        outs.push_back(matmul(a, v));
    }
    Tensor merged = heads == 1 ? outs.front() : concat_cols(outs);
    Tensor y = add(x, add_row(matmul(merged, layer.out_w), layer.out_b));
    Tensor h2 = layer_norm(y, layer.ln2_gamma, layer.ln2_beta);
    Tensor mlp = add_row(matmul(gelu(add_row(matmul(h2, layer.fc1_w), layer.fc1_b)), layer.fc2_w), layer.fc2_b);
    return add(y, mlp);
}

namespace {

void check_region(const RegionPair& r, std::size_t size, std::size_t event_channels, const char* what) {
    if (r.rgb.channels() != 3 || r.rgb.height() != size || r.rgb.width() != size) {
        throw DimensionError(std::string(what) + " RGB crop must be 3x" + std::to_string(size) + "x" +
                             std::to_string(size));
    }
    if (r.events.channels() != event_channels || r.events.height() != size || r.events.width() != size) {
        throw DimensionError(std::string(what) + " event crop must be " + std::to_string(event_channels) + "x" +
                             std::to_string(size) + "x" + std::to_string(size));
    }
}

std::vector<AttentionRecord> make_records(std::size_t layer, const std::vector<Tensor>& mats,
                                          const BlockMap& map) {
    std::vector<AttentionRecord> out;
    for (std::size_t h = 0; h < mats.size(); ++h) {
        out.push_back({static_cast<int>(layer), static_cast<int>(h), mats[h], map});
    }
    return out;
}

/// Per-cell mean of the surviving search tokens of both modalities; cells
/// with no survivor stay zero.
Tensor search_features(const TokenBatch& batch, const Tensor& x, std::size_t grid) {
    const std::size_t cells = grid * grid;
    std::vector<std::size_t> rows[2];
    std::vector<std::size_t> cell_of[2];
    std::vector<double> count(cells, 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const TokenTag& t = batch.tags[i];
        if (t.region != Region::Search) {
            continue;
        }
        const int m = t.modality == Modality::Rgb ? 0 : 1;
        const std::size_t cell = static_cast<std::size_t>(t.row) * grid + static_cast<std::size_t>(t.col);
        rows[m].push_back(i);
        cell_of[m].push_back(cell);
        count[cell] += 1.0;
    }
    Tensor acc;
    for (int m = 0; m < 2; ++m) {
        if (rows[m].empty()) {
            continue;
        }
        Tensor part = scatter_rows(index_rows(x, rows[m]), cell_of[m], cells);
        acc = acc.defined() ? add(acc, part) : part;
    }
    std::vector<double> weights(cells);
    for (std::size_t c = 0; c < cells; ++c) {
        weights[c] = count[c] > 0.0 ? 1.0 / count[c] : 0.0;
    }
    if (!acc.defined()) {
        return Tensor(Shape{cells, x.cols()});
    }
    return scale_rows(acc, weights);
}

} // namespace

ForwardResult forward(const TrackerModel& model, const RegionPair& templ, const RegionPair& search,
                      const ForwardOptions& options) {
    const ModelConfig& cfg = model.config();
    check_region(templ, cfg.template_size, cfg.event_channels(), "template");
    check_region(search, cfg.search_size, cfg.event_channels(), "search");
    const std::size_t tg = cfg.template_grid();
    const std::size_t sg = cfg.search_grid();
    const MaskSet masks = options.masks != nullptr ? *options.masks : MaskSet::none(tg, sg);
    if (masks.template_rgb.grid != tg || masks.search_rgb.grid != sg || masks.template_event.grid != tg ||
        masks.search_event.grid != sg) {
        throw DimensionError("forward: mask grids do not match the model's token grids");
    }

    std::vector<TokenFragment> fragments{
        patchify(templ.rgb, cfg.patch, model.rgb_embedding, model.template_positions, Modality::Rgb,
                 Region::Template),
        patchify(templ.events, cfg.patch, model.event_embedding, model.template_positions, Modality::Event,
                 Region::Template),
        patchify(search.rgb, cfg.patch, model.rgb_embedding, model.search_positions, Modality::Rgb,
                 Region::Search),
        patchify(search.events, cfg.patch, model.event_embedding, model.search_positions, Modality::Event,
                 Region::Search),
    };

    ForwardResult out;
    Tensor search_tokens;
    if (cfg.stream == StreamKind::OneStream) {
        TokenBatch batch = apply_one_stream(assemble_one_stream(fragments), masks);
        const BlockMap map = block_map(batch);
        Tensor x = batch.tokens;
        for (std::size_t l = 0; l < model.encoder.size(); ++l) {
            std::vector<Tensor> mats;
            x = encoder_layer(model.encoder[l], x, cfg.heads, &mats);
            out.attention.push_back(make_records(l, mats, map));
        }
        search_tokens = search_features(batch, x, sg);
    } else {
        Tensor t = apply_two_stream(fragments[0].tokens, fragments[1].tokens, masks.template_rgb,
                                    masks.template_event);
        Tensor s = apply_two_stream(fragments[2].tokens, fragments[3].tokens, masks.search_rgb,
                                    masks.search_event);
        for (const auto& layer : model.encoder) {
            t = encoder_layer(layer, t, cfg.heads, nullptr);
            s = encoder_layer(layer, s, cfg.heads, nullptr);
        }
        const BlockMap map({Group::Template, Group::Search}, {tg * tg, sg * sg});
        Tensor x = concat_rows({t, s});
        for (std::size_t l = 0; l < model.relation.size(); ++l) {
            std::vector<Tensor> mats;
            x = encoder_layer(model.relation[l], x, cfg.heads, &mats);
            out.attention.push_back(make_records(l, mats, map));
        }
        search_tokens = slice_rows(x, tg * tg, tg * tg + sg * sg);
    }

    const PredictionHead& h = model.head;
    Tensor f = layer_norm(search_tokens, h.norm_gamma, h.norm_beta);
    Tensor hidden = gelu(add_row(matmul(f, h.hidden_w), h.hidden_b));
    out.cls_logits = add_row(matmul(hidden, h.cls_w), h.cls_b);
    out.box_params = sigmoid(add_row(matmul(hidden, h.box_w), h.box_b));
    return out;
}

events::BBox decode_box(std::span<const double> p, std::size_t cell, std::size_t grid, double crop_size) {
    const double r = static_cast<double>(cell / grid);
    const double c = static_cast<double>(cell % grid);
    const double g = static_cast<double>(grid);
    return {(c + p[0]) / g * crop_size, (r + p[1]) / g * crop_size, p[2] * crop_size, p[3] * crop_size};
}

std::size_t target_cell(const events::BBox& crop_box, std::size_t grid, double crop_size) {
    auto index = [&](double v) {
        const double cell = std::floor(v / crop_size * static_cast<double>(grid));
        return static_cast<std::size_t>(std::clamp(cell, 0.0, static_cast<double>(grid - 1)));
    };
    return index(crop_box.cy) * grid + index(crop_box.cx);
}

std::vector<double> hann_window(std::size_t grid) {
    std::vector<double> w1(grid, 1.0);
    if (grid > 1) {
        // Mirrored so equal-distance cells get bitwise equal weights.
        for (std::size_t i = 0; i < (grid + 1) / 2; ++i) {
            w1[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i + 1) /
                                         static_cast<double>(grid + 1));
            w1[grid - 1 - i] = w1[i];
        }
    }
    std::vector<double> out(grid * grid);
    for (std::size_t r = 0; r < grid; ++r) {
        for (std::size_t c = 0; c < grid; ++c) {
            out[r * grid + c] = w1[r] * w1[c];
        }
    }
    return out;
}

Prediction predict(const ForwardResult& result, std::size_t grid, double crop_size) {
    const auto logits = result.cls_logits.values();
    if (logits.size() != grid * grid) {
        throw DimensionError("predict: class map has " + std::to_string(logits.size()) + " cells, expected " +
                             std::to_string(grid * grid));
    }
    const auto window = hann_window(grid);
    Prediction best;
    best.score = -1.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double s = window[i] / (1.0 + std::exp(-logits[i]));
        if (s > best.score) {
            best.score = s;
            best.cell = i;
        }
    }
    if (!(best.score >= 0.0)) {
        throw NumericError("predict: class map has no finite score");
    }
    const auto params = result.box_params.values();
    best.box = decode_box(params.subspan(best.cell * 4, 4), best.cell, grid, crop_size);
    return best;
}

} // namespace orthotrack
