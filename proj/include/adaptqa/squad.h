// SPDX-License-Identifier: Apache-2.0
//
// SQuAD v1.1 examples, featurization into packed encoder inputs, and the
// train/test split built from XQuAD and MLQA files.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "adaptqa/tokenizer.h"

namespace adaptqa {

struct Answer {
    std::string text;
    /// Code-point offset into the context.
    std::size_t answer_start = 0;
    bool operator==(const Answer&) const = default;
};

struct QAExample {
    std::string id;
    std::string language;
    std::string question;
    std::string context;
    std::vector<Answer> answers;
    bool operator==(const QAExample&) const = default;
};

/// Throws ParseError (with a JSON path) on malformed input and
/// ValidationError listing every id whose answer offsets do not match.
std::vector<QAExample> parse_squad_json(std::string_view bytes, const std::string& language);
std::vector<QAExample> load_squad_file(const std::filesystem::path& path, const std::string& language);
/// Consecutive examples sharing a context become one paragraph.
std::string serialize_squad_json(const std::vector<QAExample>& examples, const std::string& title = "");
void save_squad_file(const std::filesystem::path& path, const std::vector<QAExample>& examples,
                     const std::string& title = "");

/// Empty vector when every answer matches its context; otherwise the offending ids.
std::vector<std::string> invalid_answer_ids(const std::vector<QAExample>& examples);

/// Packed [question][SEP][context] input for one example.
struct TokenizedFeature {
    std::string example_id;
    std::vector<std::int32_t> token_ids;
    /// Code-point range in `context` for context tokens; (0, 0) elsewhere.
    std::vector<std::pair<std::size_t, std::size_t>> char_offsets;
    std::vector<bool> context_mask;
    /// Token span of the first answer, when it aligns.
    std::optional<std::pair<std::size_t, std::size_t>> gold_span;
    std::string context;
    std::vector<std::string> gold_answers;

    std::size_t size() const { return token_ids.size(); }
};

struct FeaturizeOptions {
    std::size_t max_seq_len = 128;
    std::size_t max_question_len = 32;
};

TokenizedFeature featurize(const QAExample& example, const Vocab& vocab, const FeaturizeOptions& options = {});

/// Smallest run of context tokens covering code points [start, end). nullopt
/// when either boundary falls inside a token or no context token is covered.
std::optional<std::pair<std::size_t, std::size_t>> align_answer_span(const TokenizedFeature& feature,
                                                                     std::size_t char_start, std::size_t char_end);

struct FeaturizedSet {
    std::vector<TokenizedFeature> features;
    std::size_t skipped_unalignable = 0;
};

/// Training featurization: examples whose first answer does not align are
/// dropped and counted.
FeaturizedSet featurize_for_training(const std::vector<QAExample>& examples, const Vocab& vocab,
                                     const FeaturizeOptions& options = {});
/// Evaluation featurization keeps every example.
std::vector<TokenizedFeature> featurize_for_eval(const std::vector<QAExample>& examples, const Vocab& vocab,
                                                 const FeaturizeOptions& options = {});

struct SourceCount {
    std::string source;
    std::size_t count = 0;
};

struct DatasetSplit {
    std::string language;
    std::vector<QAExample> train;
    std::vector<QAExample> test;
    std::vector<SourceCount> provenance;

    nlohmann::json provenance_json() const;
};

/// train = xquad_test ++ mlqa_test, test = mlqa_dev. Throws ValidationError
/// on mixed language tags or repeated ids.
DatasetSplit build_split(const std::vector<QAExample>& xquad_test, const std::vector<QAExample>& mlqa_test,
                         const std::vector<QAExample>& mlqa_dev);

struct ReferenceSize {
    std::string language;
    std::size_t train = 0;
    std::size_t test = 0;
};

/// Published train/test sizes for the seven evaluation languages.
const std::vector<ReferenceSize>& reference_split_sizes();

/// Empty when the split matches the published size for its language (or no
/// reference exists); otherwise a human-readable mismatch description.
std::string compare_with_reference(const DatasetSplit& split);

}  // namespace adaptqa
