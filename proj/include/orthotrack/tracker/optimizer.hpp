#pragma once

#include <cstddef>
#include <vector>

#include "orthotrack/tracker/config.hpp"
#include "orthotrack/tracker/model.hpp"

namespace orthotrack {

/// Adam with decoupled weight decay. The update order follows the common
/// reference implementation: decay, moment update, bias-corrected step.
class AdamW {
  public:
    AdamW(const std::vector<NamedParameter>& params, OptimConfig config);

    /// Applies one update from the accumulated gradients. Parameters without
    /// a gradient are treated as having a zero gradient.
    void step();
    std::size_t steps() const { return step_; }

  private:
    std::vector<NamedParameter> params_;
    OptimConfig config_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t step_ = 0;
};

} // namespace orthotrack
