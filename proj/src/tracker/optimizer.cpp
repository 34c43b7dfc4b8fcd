#include "orthotrack/tracker/optimizer.hpp"

#include <cmath>

namespace orthotrack {

AdamW::AdamW(const std::vector<NamedParameter>& params, OptimConfig config)
    : params_(params), config_(config) {
    config_.validate();
    for (const auto& p : params_) {
        m_.emplace_back(p.value.numel(), 0.0);
        v_.emplace_back(p.value.numel(), 0.0);
    }
}

void AdamW::step() {
    ++step_;
    const double t = static_cast<double>(step_);
    const double bc1 = 1.0 - std::pow(config_.beta1, t);
    const double bc2 = 1.0 - std::pow(config_.beta2, t);
    const double bc2_sqrt = std::sqrt(bc2);
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor p = params_[k].value;
        const double lr = params_[k].group == ParamGroup::Head ? config_.lr_head : config_.lr_backbone;
        const double step_size = lr / bc1;
        auto w = p.mutable_values();
        const bool has_grad = p.has_grad();
        auto g = has_grad ? p.grad() : std::span<const double>{};
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = has_grad ? g[i] : 0.0;
            w[i] *= 1.0 - lr * config_.weight_decay;
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
            const double denom = std::sqrt(v[i]) / bc2_sqrt + config_.eps;
            w[i] -= step_size * m[i] / denom;
        }
    }
}

} // namespace orthotrack
