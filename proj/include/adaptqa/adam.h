// SPDX-License-Identifier: Apache-2.0
//
// Adam with per-parameter moments and bias correction. Only entries in the
// store's trainable mask are touched.

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "adaptqa/param_store.h"

namespace adaptqa {

struct AdamOptions {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamOptions options = {}) : options_(options) {}

    const AdamOptions& options() const { return options_; }
    void set_lr(double lr) { options_.lr = lr; }

    /// One update of every trainable entry. Throws ContractError when a
    /// trainable entry carries no gradient.
    void step(ParamStore& store);

    /// Number of step() calls so far.
    std::size_t steps() const { return steps_; }

private:
    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
        std::size_t t = 0;
    };

    AdamOptions options_;
    std::map<std::string, Moments> moments_;
    std::size_t steps_ = 0;
};

}  // namespace adaptqa
