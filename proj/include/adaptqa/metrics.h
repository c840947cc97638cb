// SPDX-License-Identifier: Apache-2.0
//
// QA evaluation metrics: exact match, token F1, Jaccard and word error
// rate over normalized answers, plus per-language aggregation and table
// rendering.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace adaptqa {

/// Lowercase, drop punctuation, drop the words a/an/the, split on whitespace
/// and give every CJK ideograph its own token.
std::vector<std::string> normalize_answer(std::string_view s);

using Tokens = std::vector<std::string>;

// Token-level forms. Each gold list must be non-empty.
double exact_match_tokens(const Tokens& pred, const std::vector<Tokens>& golds);
double token_f1_tokens(const Tokens& pred, const std::vector<Tokens>& golds);
double jaccard_tokens(const Tokens& pred, const std::vector<Tokens>& golds);
/// Minimum over golds of edit distance / gold length. A gold that
/// normalizes to nothing scores 0 against an empty prediction and 1 otherwise.
double wer_tokens(const Tokens& pred, const std::vector<Tokens>& golds);

/// Word-level Levenshtein distance.
std::size_t edit_distance(const Tokens& a, const Tokens& b);

double exact_match(std::string_view pred, const std::vector<std::string>& golds);
double token_f1(std::string_view pred, const std::vector<std::string>& golds);
double jaccard(std::string_view pred, const std::vector<std::string>& golds);
double wer(std::string_view pred, const std::vector<std::string>& golds);

struct ExampleScore {
    std::string id;
    std::string prediction;
    std::vector<std::string> golds;
    double em = 0.0;
    double f1 = 0.0;
    double jaccard = 0.0;
    double wer = 0.0;
    /// Set when every gold normalized to nothing.
    bool empty_gold = false;
};

ExampleScore score_example(std::string id, std::string prediction, std::vector<std::string> golds);

struct EvalReport {
    std::string language;
    std::size_t n_examples = 0;
    /// Percentages.
    double f1 = 0.0;
    double em = 0.0;
    double jaccard = 0.0;
    double wer = 0.0;
    std::vector<ExampleScore> per_example;
    nlohmann::json provenance = nlohmann::json::object();

    nlohmann::json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
};

/// Means times 100. Throws ContractError on an empty list.
EvalReport aggregate(const std::vector<ExampleScore>& scores, const std::string& language,
                     nlohmann::json provenance = nlohmann::json::object());

/// Two decimals with trailing zeros trimmed, keeping at least one:
/// 66.666 -> "66.67", 50 -> "50.0", 104.2 -> "104.2".
std::string format_metric(double value);
std::string format_cell(double a, double b);

struct ReportRow {
    std::string label;
    /// Cells keyed by language; absent languages render blank.
    std::vector<std::pair<std::string, EvalReport>> cells;
};

struct ReportTables {
    std::string f1_em;
    std::string jaccard_wer;
};

/// Aligned text tables with rows in the given order and one column per
/// language, ordered by first appearance unless `columns` is given.
ReportTables render_tables(const std::vector<ReportRow>& rows, std::vector<std::string> columns = {});

}  // namespace adaptqa
