#pragma once

#include "milda/model.hpp"

namespace milda {

/// Adaptive-moment gradient step. Moment state lives on each Parameter, so a
/// parameter keeps its statistics across the phases that update it.
struct Adam {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void step(const ParameterList& params) const;
};

}  // namespace milda
