// SPDX-License-Identifier: Apache-2.0

#include "adaptqa/mlm.h"

#include <string>

#include "adaptqa/errors.h"
#include "adaptqa/rng.h"
#include "adaptqa/tokenizer.h"

namespace adaptqa {

MaskedSequence mlm_mask(std::span<const std::int32_t> ids, std::size_t vocab_size, Rng& rng, double mask_rate) {
    if (!(mask_rate >= 0.0 && mask_rate <= 1.0)) {
        throw ContractError("mlm_mask: mask_rate " + std::to_string(mask_rate) + " outside [0, 1]");
    }
    if (vocab_size <= static_cast<std::size_t>(Vocab::kNumReserved)) {
        throw ContractError("mlm_mask: vocab of size " + std::to_string(vocab_size) + " has no maskable ids");
    }
    MaskedSequence out;
    out.ids.assign(ids.begin(), ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (Vocab::is_reserved(ids[i])) continue;
        if (!(rng.uniform() < mask_rate)) continue;
        out.positions.push_back(static_cast<std::int32_t>(i));
        out.labels.push_back(ids[i]);
        const double kind = rng.uniform();
        if (kind < 0.8) {
            out.ids[i] = Vocab::kMask;
        } else if (kind < 0.9) {
            out.ids[i] = Vocab::kNumReserved +
                         static_cast<std::int32_t>(rng.uniform_int(vocab_size - Vocab::kNumReserved));
        }
    }
    return out;
}

}  // namespace adaptqa
