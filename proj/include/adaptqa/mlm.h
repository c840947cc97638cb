// SPDX-License-Identifier: Apache-2.0
//
// Masked-language-model corruption with the 80/10/10 replacement scheme.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace adaptqa {

class Rng;

struct MaskedSequence {
    std::vector<std::int32_t> ids;
    /// Selected positions in increasing order and the ids they held.
    std::vector<std::int32_t> positions;
    std::vector<std::int32_t> labels;
};

/// Each non-reserved position is selected with probability `mask_rate`;
/// a selected token becomes [MASK] (80%), a random non-reserved id (10%) or
/// stays unchanged (10%). Reserved positions consume no random draws.
/// Draw order per eligible position: selection, then (if selected) the
/// replacement kind, then (if random) the replacement id.
MaskedSequence mlm_mask(std::span<const std::int32_t> ids, std::size_t vocab_size, Rng& rng, double mask_rate);

}  // namespace adaptqa
