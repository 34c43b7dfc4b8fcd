#include "orthotrack/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "orthotrack/core/errors.hpp"

namespace orthotrack::metrics {

double iou(const BBox& a, const BBox& b) {
    const double iw = std::max(0.0, std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0()));
    const double ih = std::max(0.0, std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0()));
    const double inter = iw * ih;
    const double uni = a.w * a.h + b.w * b.h - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

double center_error(const BBox& a, const BBox& b) {
    return std::hypot(a.cx - b.cx, a.cy - b.cy);
}

double normalized_center_error(const BBox& predicted, const BBox& truth) {
    const double diag = std::hypot(truth.w, truth.h);
    if (!(diag > 0.0)) {
        throw InputError("normalized_center_error: ground-truth box has zero size");
    }
    return center_error(predicted, truth) / diag;
}

double Curve::area() const {
    if (values.empty()) {
        return 0.0;
    }
    double acc = 0.0;
    for (double v : values) {
        acc += v;
    }
    return acc / static_cast<double>(values.size());
}

double Curve::at(double t) const {
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        if (thresholds[i] == t) {
            return values[i];
        }
    }
    throw InputError("Curve::at: threshold " + std::to_string(t) + " is not on the grid");
}

namespace {

void require_non_empty(std::span<const double> v, const char* what) {
    if (v.empty()) {
        throw InputError(std::string(what) + ": empty input");
    }
}

double percent(std::size_t count, std::size_t total) {
    return 100.0 * static_cast<double>(count) / static_cast<double>(total);
}

template <typename Pass>
Curve curve(std::span<const double> xs, std::size_t steps, double denom, Pass pass) {
    Curve c;
    for (std::size_t i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) / denom;
        std::size_t n = 0;
        for (double x : xs) {
            n += pass(x, t) ? 1 : 0;
        }
        c.thresholds.push_back(t);
        c.values.push_back(percent(n, xs.size()));
    }
    return c;
}

} // namespace

Curve success_curve(std::span<const double> ious) {
    require_non_empty(ious, "success_curve");
    return curve(ious, 20, 20.0, [](double x, double t) { return x > t; });
}

Curve precision_curve(std::span<const double> center_errors) {
    require_non_empty(center_errors, "precision_curve");
    return curve(center_errors, 50, 1.0, [](double x, double t) { return x <= t; });
}

Curve normalized_precision_curve(std::span<const double> normalized_errors) {
    require_non_empty(normalized_errors, "normalized_precision_curve");
    return curve(normalized_errors, 50, 100.0, [](double x, double t) { return x <= t; });
}

double overlap_precision(std::span<const double> ious, double threshold) {
    require_non_empty(ious, "overlap_precision");
    std::size_t n = 0;
    for (double x : ious) {
        n += x > threshold ? 1 : 0;
    }
    return percent(n, ious.size());
}

EvalResult evaluate(std::span<const BBox> predicted, std::span<const BBox> truth) {
    if (predicted.size() != truth.size()) {
        throw InputError("evaluate: " + std::to_string(predicted.size()) + " predictions for " +
                         std::to_string(truth.size()) + " ground-truth boxes");
    }
    EvalResult r;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        r.ious.push_back(iou(predicted[i], truth[i]));
        r.center_errors.push_back(center_error(predicted[i], truth[i]));
        r.normalized_errors.push_back(normalized_center_error(predicted[i], truth[i]));
    }
    r.success = success_curve(r.ious);
    r.precision = precision_curve(r.center_errors);
    r.normalized_precision = normalized_precision_curve(r.normalized_errors);
    r.sr = r.success.area();
    r.pr = r.precision.at(20.0);
    r.npr = r.normalized_precision.area();
    r.op50 = overlap_precision(r.ious, 0.5);
    r.op75 = overlap_precision(r.ious, 0.75);
    return r;
}

nlohmann::json to_json(const EvalResult& r) {
    auto curve_json = [](const Curve& c) {
        return nlohmann::json{{"thresholds", c.thresholds}, {"values", c.values}};
    };
    return nlohmann::json{
        {"frames", r.ious.size()},
        {"sr", r.sr},
        {"pr", r.pr},
        {"npr", r.npr},
        {"op50", r.op50},
        {"op75", r.op75},
        {"success_curve", curve_json(r.success)},
        {"precision_curve", curve_json(r.precision)},
        {"normalized_precision_curve", curve_json(r.normalized_precision)},
    };
}

void write_metrics_json(const std::string& path, const EvalResult& result) {
    std::ofstream os(path);
    if (!os) {
        throw InputError("cannot open " + path + " for writing");
    }
    os << to_json(result).dump(2) << '\n';
}

} // namespace orthotrack::metrics
