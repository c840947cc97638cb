// SPDX-License-Identifier: Apache-2.0

#include "adaptqa/qa.h"

#include <array>

#include "adaptqa/errors.h"
#include "adaptqa/ops.h"
#include "adaptqa/utf8.h"

namespace adaptqa {

namespace {

void check_logits(const Tensor& logits, const std::vector<bool>& context_mask, const char* who) {
    if (logits.rank() != 2 || logits.dim(1) != 2) {
        throw DimensionError(std::string(who) + ": logits must be [seq x 2], got " + shape_to_string(logits.shape()));
    }
    if (context_mask.size() != logits.dim(0)) {
        throw DimensionError(std::string(who) + ": context mask has " + std::to_string(context_mask.size()) +
                             " entries for " + std::to_string(logits.dim(0)) + " positions");
    }
}

}  // namespace

Tensor span_loss(const Tensor& logits, std::size_t gold_start, std::size_t gold_end,
                 const std::vector<bool>& context_mask) {
    check_logits(logits, context_mask, "span_loss");
    for (std::size_t g : {gold_start, gold_end}) {
        if (g >= context_mask.size() || !context_mask[g]) {
            throw ContractError("span_loss: gold position " + std::to_string(g) + " is not a context position");
        }
    }
    const std::array<std::size_t, 2> targets{gold_start, gold_end};
    return cross_entropy_rows(transpose(logits), targets, context_mask);
}

SpanPrediction decode_span(const Tensor& logits, const std::vector<bool>& context_mask, std::size_t max_answer_len) {
    check_logits(logits, context_mask, "decode_span");
    if (max_answer_len == 0) throw ContractError("decode_span: max_answer_len must be positive");
    const std::size_t n = logits.dim(0);
    const auto& d = logits.data();
    SpanPrediction best;
    bool found = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (!context_mask[i]) continue;
        const std::size_t last = std::min(n, i + max_answer_len);
        for (std::size_t j = i; j < last; ++j) {
            if (!context_mask[j]) continue;
            const double score = d[i * 2] + d[j * 2 + 1];
            if (!found || score > best.score) {
                best.start_idx = i;
                best.end_idx = j;
                best.score = score;
                found = true;
            }
        }
    }
    if (!found) throw ContractError("decode_span: no context position to decode");
    return best;
}

std::string extract_answer_text(const SpanPrediction& pred, const TokenizedFeature& feature) {
    if (feature.char_offsets.size() != feature.size()) {
        throw ContractError("extract_answer_text: feature '" + feature.example_id + "' has no per-token offsets");
    }
    if (pred.start_idx > pred.end_idx || pred.end_idx >= feature.size()) {
        throw ContractError("extract_answer_text: span (" + std::to_string(pred.start_idx) + ", " +
                            std::to_string(pred.end_idx) + ") outside a feature of " + std::to_string(feature.size()) +
                            " tokens");
    }
    const std::u32string context = utf8::decode(feature.context);
    const std::size_t begin = feature.char_offsets[pred.start_idx].first;
    const std::size_t end = std::min(feature.char_offsets[pred.end_idx].second, context.size());
    if (end <= begin) return "";
    return utf8::encode(std::u32string_view(context).substr(begin, end - begin));
}

Tensor qa_forward(const EncoderModel& model, const TokenizedFeature& feature, const ForwardOptions& options) {
    return model.qa_logits(model.encode(feature.token_ids, {}, options));
}

SpanPrediction predict(const EncoderModel& model, const TokenizedFeature& feature, std::size_t max_answer_len) {
    NoGradGuard guard;
    SpanPrediction pred = decode_span(qa_forward(model, feature), feature.context_mask, max_answer_len);
    pred.answer_text = extract_answer_text(pred, feature);
    return pred;
}

}  // namespace adaptqa
