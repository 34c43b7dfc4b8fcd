#pragma once

// Finite-difference oracles shared by the unit and acceptance suites. Kept
// free of any library code path other than reading/writing tensor values.

#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "orthotrack/core/tensor.hpp"

namespace orthotrack::testing {

/// Central differences of f with respect to every entry of every tensor.
inline std::vector<double> central_differences(const std::function<double()>& f,
                                               std::vector<Tensor> params, double h) {
    std::vector<double> out;
    for (auto& p : params) {
        auto vals = p.mutable_values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double saved = vals[i];
            vals[i] = saved + h;
            const double plus = f();
            vals[i] = saved - h;
            const double minus = f();
            vals[i] = saved;
            out.push_back((plus - minus) / (2.0 * h));
        }
    }
    return out;
}

/// Central difference of f along direction d (one entry per parameter value).
inline double directional_difference(const std::function<double()>& f, std::vector<Tensor> params,
                                     std::span<const double> direction, double h) {
    std::vector<std::vector<double>> saved;
    for (auto& p : params) {
        saved.emplace_back(p.values().begin(), p.values().end());
    }
    auto shift = [&](double step) {
        std::size_t k = 0;
        for (std::size_t t = 0; t < params.size(); ++t) {
            auto vals = params[t].mutable_values();
            for (std::size_t i = 0; i < vals.size(); ++i) {
                vals[i] = saved[t][i] + step * direction[k++];
            }
        }
    };
    shift(h);
    const double plus = f();
    shift(-h);
    const double minus = f();
    shift(0.0);
    return (plus - minus) / (2.0 * h);
}

inline std::vector<double> collect_grads(const std::vector<Tensor>& params) {
    std::vector<double> out;
    for (const auto& p : params) {
        if (p.has_grad()) {
            out.insert(out.end(), p.grad().begin(), p.grad().end());
        } else {
            out.insert(out.end(), p.numel(), 0.0);
        }
    }
    return out;
}

/// ‖a − b‖ / max(‖a‖, ‖b‖); 0 when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
    double diff = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(std::max(na, nb));
    return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

inline double relative_error(double a, double b) {
    const double denom = std::max(std::abs(a), std::abs(b));
    return denom == 0.0 ? 0.0 : std::abs(a - b) / denom;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) {
        x = dist(rng);
    }
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

} // namespace orthotrack::testing
