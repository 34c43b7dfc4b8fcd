#pragma once

#include <cstddef>
#include <span>

#include "orthotrack/core/tensor.hpp"
#include "orthotrack/events/types.hpp"

namespace orthotrack {

/// Binary focal loss summed over all entries and divided by the number of
/// positive targets (at least one). Targets are 0 or 1.
Tensor sigmoid_focal_loss(const Tensor& logits, std::span<const double> targets, double gamma = 2.0);

/// Sum of absolute differences to a constant target.
Tensor l1_loss(const Tensor& prediction, std::span<const double> target);

/// 1 − GIoU between a 1×4 (cx, cy, w, h) prediction and a constant box in
/// the same units.
Tensor giou_loss(const Tensor& prediction, const events::BBox& target);

struct TaskLossWeights {
    double cls = 1.0;
    double l1 = 5.0;
    double overlap = 2.0;
};

struct TaskLoss {
    Tensor total;
    double cls = 0.0;
    double l1 = 0.0;
    double overlap = 0.0;
};

/// Classification over the search grid plus box regression at the cell that
/// holds the ground-truth center. Boxes are compared in crop-normalized
/// units.
TaskLoss task_loss(const Tensor& cls_logits, const Tensor& box_params, const events::BBox& truth_in_crop,
                   std::size_t grid, double crop_size, const TaskLossWeights& weights = {});

} // namespace orthotrack
