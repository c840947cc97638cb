// SPDX-License-Identifier: Apache-2.0
//
// Extractive QA head objectives: span loss, constrained decoding and answer
// extraction.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "adaptqa/encoder.h"
#include "adaptqa/squad.h"
#include "adaptqa/tensor.h"

namespace adaptqa {

inline constexpr std::size_t kDefaultMaxAnswerLen = 30;

struct SpanPrediction {
    std::size_t start_idx = 0;
    std::size_t end_idx = 0;
    double score = 0.0;
    std::string answer_text;
};

/// Mean of the start and end cross-entropies, each softmax restricted to
/// context positions. `logits` is [seq x 2].
Tensor span_loss(const Tensor& logits, std::size_t gold_start, std::size_t gold_end,
                 const std::vector<bool>& context_mask);

/// Best (i, j) by start[i] + end[j] with i <= j, j - i < max_answer_len and
/// both in context; ties go to the smallest i, then the smallest j.
SpanPrediction decode_span(const Tensor& logits, const std::vector<bool>& context_mask,
                           std::size_t max_answer_len = kDefaultMaxAnswerLen);

/// Context substring from the first code point of the start token to the
/// last code point of the end token.
std::string extract_answer_text(const SpanPrediction& pred, const TokenizedFeature& feature);

/// Encoder forward plus QA head, [seq x 2].
Tensor qa_forward(const EncoderModel& model, const TokenizedFeature& feature, const ForwardOptions& options = {});

/// Decode and extract in eval mode.
SpanPrediction predict(const EncoderModel& model, const TokenizedFeature& feature,
                       std::size_t max_answer_len = kDefaultMaxAnswerLen);

}  // namespace adaptqa
