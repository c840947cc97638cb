// SPDX-License-Identifier: Apache-2.0

#include "adaptqa/adam.h"

#include <cmath>

#include "adaptqa/errors.h"

namespace adaptqa {

void Adam::step(ParamStore& store) {
    for (const std::string& name : store.trainable()) {
        if (!store.get(name).has_grad()) {
            throw ContractError("adam: trainable parameter '" + name + "' has no gradient");
        }
    }
    const double b1 = options_.beta1, b2 = options_.beta2;
    for (const std::string& name : store.trainable()) {
        Tensor& param = store.get(name);
        Moments& mom = moments_[name];
        if (mom.m.size() != param.numel()) {
            mom.m.assign(param.numel(), 0.0);
            mom.v.assign(param.numel(), 0.0);
            mom.t = 0;
        }
        ++mom.t;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(mom.t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(mom.t));
        auto data = param.mutable_data();
        const auto grad = param.grad();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double g = grad[i];
            mom.m[i] = b1 * mom.m[i] + (1.0 - b1) * g;
            mom.v[i] = b2 * mom.v[i] + (1.0 - b2) * g * g;
            const double m_hat = mom.m[i] / c1;
            const double v_hat = mom.v[i] / c2;
            data[i] -= options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps);
        }
    }
    ++steps_;
}

}  // namespace adaptqa
