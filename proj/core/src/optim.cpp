#include "milda/optim.hpp"

#include <cmath>

namespace milda {

void Adam::step(const ParameterList& params) const {
    for (auto* p : params) {
        ++p->steps;
        p->moment1 = beta1 * p->moment1 + (1.0 - beta1) * p->grad;
        p->moment2 = beta2 * p->moment2 + (1.0 - beta2) * p->grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(p->steps));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(p->steps));
        p->value.array() -= lr * (p->moment1.array() / c1) / ((p->moment2.array() / c2).sqrt() + eps);
    }
}

}  // namespace milda
