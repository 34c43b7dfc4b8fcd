#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "orthotrack/events/types.hpp"

namespace orthotrack::metrics {

using events::BBox;

/// Intersection over union in [0, 1]; 0 when the union is empty.
double iou(const BBox& a, const BBox& b);

/// Euclidean distance between box centers.
double center_error(const BBox& a, const BBox& b);

/// Center error divided by the diagonal of the ground-truth box.
double normalized_center_error(const BBox& predicted, const BBox& truth);

/// Rates per threshold, in percent.
struct Curve {
    std::vector<double> thresholds;
    std::vector<double> values;

    /// Mean of `values` (the area under the curve on the uniform grid).
    double area() const;
    /// Value at the threshold equal to `t`; throws InputError if absent.
    double at(double t) const;
};

/// 100·fraction of frames with IoU > t for t = 0, 0.05, ..., 1.
Curve success_curve(std::span<const double> ious);

/// 100·fraction of frames with error ≤ t for t = 0, 1, ..., 50 pixels.
Curve precision_curve(std::span<const double> center_errors);

/// 100·fraction of frames with normalized error ≤ t for t = 0, 0.01, ..., 0.5.
Curve normalized_precision_curve(std::span<const double> normalized_errors);

/// 100·fraction of frames with IoU > threshold.
double overlap_precision(std::span<const double> ious, double threshold);

struct EvalResult {
    std::vector<double> ious;
    std::vector<double> center_errors;
    std::vector<double> normalized_errors;
    Curve success;
    Curve precision;
    Curve normalized_precision;
    double sr = 0.0;   ///< success curve area
    double pr = 0.0;   ///< precision at 20 px
    double npr = 0.0;  ///< normalized precision curve area
    double op50 = 0.0; ///< overlap precision at IoU 0.5
    double op75 = 0.0; ///< overlap precision at IoU 0.75
};

/// Scores predictions frame by frame against ground truth of equal length.
EvalResult evaluate(std::span<const BBox> predicted, std::span<const BBox> truth);

nlohmann::json to_json(const EvalResult& result);
void write_metrics_json(const std::string& path, const EvalResult& result);

} // namespace orthotrack::metrics
