// SPDX-License-Identifier: Apache-2.0
//
// Central-difference gradient verification against the autodiff tape.

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "adaptqa/param_store.h"

namespace adaptqa {

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::string worst_name;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t elements_checked = 0;
};

/// Error of one element: |analytic - numeric| / max(|analytic|, |numeric|, scale_floor).
/// The floor keeps near-zero gradients from turning roundoff into huge ratios.
double gradient_relative_error(double analytic, double numeric, double scale_floor);

/// Compares autodiff gradients of `loss_fn` with (f(p+h) - f(p-h)) / 2h for
/// every element of the named entries. The store's trainable mask and
/// gradients are restored afterwards; `loss_fn` must be deterministic.
GradCheckResult finite_diff_check(const std::function<Tensor()>& loss_fn, ParamStore& store, double h,
                                  const std::vector<std::string>& names, double scale_floor = 1e-3);

}  // namespace adaptqa
