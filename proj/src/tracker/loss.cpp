#include "orthotrack/tracker/loss.hpp"

#include <array>
#include <cmath>
#include <memory>

#include "orthotrack/core/errors.hpp"
#include "orthotrack/core/ops.hpp"
#include "orthotrack/tracker/model.hpp"

namespace orthotrack {

namespace {

/// log(1 + e^x) without overflow.
double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid_value(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

} // namespace

Tensor sigmoid_focal_loss(const Tensor& logits, std::span<const double> targets, double gamma) {
    if (logits.numel() != targets.size()) {
        throw DimensionError("sigmoid_focal_loss: " + std::to_string(logits.numel()) + " logits for " +
                             std::to_string(targets.size()) + " targets");
    }
    double positives = 0.0;
    for (double t : targets) {
        if (t != 0.0 && t != 1.0) {
            throw InputError("sigmoid_focal_loss: targets must be 0 or 1");
        }
        positives += t;
    }
    const double norm = 1.0 / std::max(positives, 1.0);
    const auto x = logits.values();
    double value = 0.0;
    auto dx = std::make_shared<std::vector<double>>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double p = sigmoid_value(x[i]);
        if (targets[i] == 1.0) {
            // -(1-p)^g log p, log p = -softplus(-x)
            const double q = 1.0 - p;
            const double logp = -softplus(-x[i]);
            value += -std::pow(q, gamma) * logp;
            (*dx)[i] = gamma * std::pow(q, gamma) * p * logp - std::pow(q, gamma + 1.0);
        } else {
            // -p^g log(1-p), log(1-p) = -softplus(x)
            const double log1mp = -softplus(x[i]);
            value += -std::pow(p, gamma) * log1mp;
            (*dx)[i] = -gamma * std::pow(p, gamma) * (1.0 - p) * log1mp + std::pow(p, gamma + 1.0);
        }
    }
    Tensor in = logits;
    return make_op({}, {value * norm}, {logits}, [in, dx, norm](std::span<const double> g) mutable {
        auto gx = in.grad_buffer();
        for (std::size_t i = 0; i < dx->size(); ++i) {
            gx[i] += g[0] * norm * (*dx)[i];
        }
    });
}

Tensor l1_loss(const Tensor& prediction, std::span<const double> target) {
    if (prediction.numel() != target.size()) {
        throw DimensionError("l1_loss: size mismatch");
    }
    const auto p = prediction.values();
    double value = 0.0;
    auto sign = std::make_shared<std::vector<double>>(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - target[i];
        value += std::abs(d);
        (*sign)[i] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    }
    Tensor in = prediction;
    return make_op({}, {value}, {prediction}, [in, sign](std::span<const double> g) mutable {
        auto gx = in.grad_buffer();
        for (std::size_t i = 0; i < sign->size(); ++i) {
            gx[i] += g[0] * (*sign)[i];
        }
    });
}

Tensor giou_loss(const Tensor& prediction, const events::BBox& target) {
    if (prediction.numel() != 4) {
        throw DimensionError("giou_loss: prediction must hold (cx, cy, w, h)");
    }
    const auto p = prediction.values();
    // Corners of the prediction (a) and the target (b).
    const double ax0 = p[0] - 0.5 * p[2], ax1 = p[0] + 0.5 * p[2];
    const double ay0 = p[1] - 0.5 * p[3], ay1 = p[1] + 0.5 * p[3];
    const double bx0 = target.x0(), bx1 = target.x1(), by0 = target.y0(), by1 = target.y1();

    const double iw_raw = std::min(ax1, bx1) - std::max(ax0, bx0);
    const double ih_raw = std::min(ay1, by1) - std::max(ay0, by0);
    const double iw = std::max(0.0, iw_raw);
    const double ih = std::max(0.0, ih_raw);
    const double inter = iw * ih;
    const double area_a = (ax1 - ax0) * (ay1 - ay0);
    const double area_b = (bx1 - bx0) * (by1 - by0);
    const double uni = area_a + area_b - inter;
    const double cw = std::max(ax1, bx1) - std::min(ax0, bx0);
    const double ch = std::max(ay1, by1) - std::min(ay0, by0);
    const double hull = cw * ch;
    if (!(uni > 0.0) || !(hull > 0.0)) {
        throw NumericError("giou_loss: degenerate boxes");
    }
    const double value = 2.0 - inter / uni - uni / hull;

    // Partials of inter, union and hull with respect to (ax0, ax1, ay0, ay1).
    std::array<double, 4> d_inter{};
    if (iw_raw > 0.0 && ih_raw > 0.0) {
        d_inter[0] = ax0 > bx0 ? -ih : 0.0;
        d_inter[1] = ax1 < bx1 ? ih : 0.0;
        d_inter[2] = ay0 > by0 ? -iw : 0.0;
        d_inter[3] = ay1 < by1 ? iw : 0.0;
    }
    const std::array<double, 4> d_area{-(ay1 - ay0), ay1 - ay0, -(ax1 - ax0), ax1 - ax0};
    const std::array<double, 4> d_hull{ax0 < bx0 ? -ch : 0.0, ax1 > bx1 ? ch : 0.0, ay0 < by0 ? -cw : 0.0,
                                       ay1 > by1 ? cw : 0.0};
    std::array<double, 4> d_corner{};
    for (int k = 0; k < 4; ++k) {
        const double d_uni = d_area[k] - d_inter[k];
        d_corner[k] = -(d_inter[k] * uni - inter * d_uni) / (uni * uni) - (d_uni * hull - uni * d_hull[k]) / (hull * hull);
    }
    // x0 = cx - w/2, x1 = cx + w/2 (same for y).
    const std::array<double, 4> d_param{d_corner[0] + d_corner[1], d_corner[2] + d_corner[3],
                                        0.5 * (d_corner[1] - d_corner[0]), 0.5 * (d_corner[3] - d_corner[2])};
    Tensor in = prediction;
    return make_op({}, {value}, {prediction}, [in, d_param](std::span<const double> g) mutable {
        auto gx = in.grad_buffer();
        for (std::size_t i = 0; i < 4; ++i) {
            gx[i] += g[0] * d_param[i];
        }
    });
}

TaskLoss task_loss(const Tensor& cls_logits, const Tensor& box_params, const events::BBox& truth_in_crop,
                   std::size_t grid, double crop_size, const TaskLossWeights& weights) {
    const std::size_t cells = grid * grid;
    if (cls_logits.numel() != cells || box_params.rank() != 2 || box_params.rows() != cells ||
        box_params.cols() != 4) {
        throw DimensionError("task_loss: head outputs do not match a " + std::to_string(grid) + "x" +
                             std::to_string(grid) + " grid");
    }
    const std::size_t cell = target_cell(truth_in_crop, grid, crop_size);
    std::vector<double> targets(cells, 0.0);
    targets[cell] = 1.0;
    Tensor cls = sigmoid_focal_loss(cls_logits, targets);

    // Prediction at the positive cell in crop-normalized (cx, cy, w, h).
    const double g = static_cast<double>(grid);
    const std::size_t one_cell[] = {cell};
    Tensor raw = index_rows(box_params, one_cell);
    Tensor scale_vec({1, 4}, {1.0 / g, 1.0 / g, 1.0, 1.0});
    Tensor offset({1, 4}, {static_cast<double>(cell % grid) / g, static_cast<double>(cell / grid) / g, 0.0, 0.0});
    Tensor pred = add(mul(raw, scale_vec), offset);
    const events::BBox truth{truth_in_crop.cx / crop_size, truth_in_crop.cy / crop_size, truth_in_crop.w / crop_size,
                             truth_in_crop.h / crop_size};
    const std::array<double, 4> truth_vec{truth.cx, truth.cy, truth.w, truth.h};
    Tensor l1 = l1_loss(pred, truth_vec);
    Tensor overlap = giou_loss(pred, truth);

    TaskLoss out;
    out.total = add(add(scale(cls, weights.cls), scale(l1, weights.l1)), scale(overlap, weights.overlap));
    out.cls = cls.item();
    out.l1 = l1.item();
    out.overlap = overlap.item();
    return out;
}

} // namespace orthotrack
