// SPDX-License-Identifier: Apache-2.0

#include "adaptqa/grad_check.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "adaptqa/errors.h"

namespace adaptqa {

double gradient_relative_error(double analytic, double numeric, double scale_floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), scale_floor});
    return std::abs(analytic - numeric) / denom;
}

GradCheckResult finite_diff_check(const std::function<Tensor()>& loss_fn, ParamStore& store, double h,
                                  const std::vector<std::string>& names, double scale_floor) {
    if (!(h > 0.0)) throw ContractError("finite_diff_check: step h must be positive");
    GradCheckResult result;
    if (names.empty()) return result;

    const std::set<std::string> saved_mask = store.trainable();
    store.set_trainable(std::set<std::string>(names.begin(), names.end()));
    store.zero_grad();
    backward(loss_fn());

    std::vector<std::vector<double>> analytic;
    analytic.reserve(names.size());
    for (const auto& n : names) {
        const auto g = store.get(n).grad();
        analytic.emplace_back(g.begin(), g.end());
    }

    {
        NoGradGuard no_grad;
        for (std::size_t k = 0; k < names.size(); ++k) {
            Tensor& p = store.get(names[k]);
            auto data = p.mutable_data();
            for (std::size_t i = 0; i < data.size(); ++i) {
                const double original = data[i];
                data[i] = original + h;
                const double up = loss_fn().item();
                data[i] = original - h;
                const double down = loss_fn().item();
                data[i] = original;
                const double numeric = (up - down) / (2.0 * h);
                const double err = gradient_relative_error(analytic[k][i], numeric, scale_floor);
                ++result.elements_checked;
                if (err > result.max_relative_error || result.worst_name.empty()) {
                    result.max_relative_error = std::max(err, result.max_relative_error);
                    result.worst_name = names[k];
                    result.worst_index = i;
                    result.worst_analytic = analytic[k][i];
                    result.worst_numeric = numeric;
                }
            }
        }
    }

    store.set_trainable(saved_mask);
    store.zero_grad();
    return result;
}

}  // namespace adaptqa
