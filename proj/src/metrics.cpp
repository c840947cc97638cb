// SPDX-License-Identifier: Apache-2.0

#include "adaptqa/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "adaptqa/errors.h"
#include "adaptqa/utf8.h"

namespace adaptqa {

namespace {

void require_golds(std::size_t n, const char* who) {
    if (n == 0) throw ContractError(std::string(who) + ": at least one gold answer is required");
}

std::vector<Tokens> normalize_all(const std::vector<std::string>& golds) {
    std::vector<Tokens> out;
    out.reserve(golds.size());
    for (const auto& g : golds) out.push_back(normalize_answer(g));
    return out;
}

double f1_single(const Tokens& pred, const Tokens& gold) {
    if (pred.empty() || gold.empty()) return pred.empty() && gold.empty() ? 1.0 : 0.0;
    std::map<std::string, std::size_t> counts;
    for (const auto& t : gold) ++counts[t];
    std::size_t overlap = 0;
    for (const auto& t : pred) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) return 0.0;
    const double p = static_cast<double>(overlap) / static_cast<double>(pred.size());
    const double r = static_cast<double>(overlap) / static_cast<double>(gold.size());
    return 2.0 * p * r / (p + r);
}

double jaccard_single(const Tokens& pred, const Tokens& gold) {
    const std::set<std::string> a(pred.begin(), pred.end());
    const std::set<std::string> b(gold.begin(), gold.end());
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& t : a) inter += b.count(t);
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

}  // namespace

std::vector<std::string> normalize_answer(std::string_view s) {
    std::u32string cleaned;
    for (char32_t cp : utf8::decode(s)) {
        if (utf8::is_punctuation(cp)) continue;
        cleaned.push_back(utf8::to_lower(cp));
    }
    std::vector<std::string> out;
    std::u32string word;
    auto flush = [&] {
        if (word.empty()) return;
        const std::string w = utf8::encode(word);
        word.clear();
        if (w == "a" || w == "an" || w == "the") return;
        std::u32string run;
        for (char32_t cp : utf8::decode(w)) {
            if (utf8::is_cjk(cp)) {
                if (!run.empty()) out.push_back(utf8::encode(run));
                run.clear();
                out.push_back(utf8::encode(cp));
            } else {
                run.push_back(cp);
            }
        }
        if (!run.empty()) out.push_back(utf8::encode(run));
    };
    for (char32_t cp : cleaned) {
        if (utf8::is_whitespace(cp)) {
            flush();
        } else {
            word.push_back(cp);
        }
    }
    flush();
    return out;
}

double exact_match_tokens(const Tokens& pred, const std::vector<Tokens>& golds) {
    require_golds(golds.size(), "exact_match");
    for (const auto& g : golds) {
        if (g == pred) return 1.0;
    }
    return 0.0;
}

double token_f1_tokens(const Tokens& pred, const std::vector<Tokens>& golds) {
    require_golds(golds.size(), "token_f1");
    double best = 0.0;
    for (const auto& g : golds) best = std::max(best, f1_single(pred, g));
    return best;
}

double jaccard_tokens(const Tokens& pred, const std::vector<Tokens>& golds) {
    require_golds(golds.size(), "jaccard");
    double best = 0.0;
    for (const auto& g : golds) best = std::max(best, jaccard_single(pred, g));
    return best;
}

std::size_t edit_distance(const Tokens& a, const Tokens& b) {
    std::vector<std::size_t> prev(b.size() + 1);
    std::vector<std::size_t> cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double wer_tokens(const Tokens& pred, const std::vector<Tokens>& golds) {
    require_golds(golds.size(), "wer");
    double best = 0.0;
    for (std::size_t k = 0; k < golds.size(); ++k) {
        const Tokens& g = golds[k];
        const double w = g.empty() ? (pred.empty() ? 0.0 : 1.0)
                                   : static_cast<double>(edit_distance(pred, g)) / static_cast<double>(g.size());
        if (k == 0 || w < best) best = w;
    }
    return best;
}

double exact_match(std::string_view pred, const std::vector<std::string>& golds) {
    return exact_match_tokens(normalize_answer(pred), normalize_all(golds));
}

double token_f1(std::string_view pred, const std::vector<std::string>& golds) {
    return token_f1_tokens(normalize_answer(pred), normalize_all(golds));
}

double jaccard(std::string_view pred, const std::vector<std::string>& golds) {
    return jaccard_tokens(normalize_answer(pred), normalize_all(golds));
}

double wer(std::string_view pred, const std::vector<std::string>& golds) {
    return wer_tokens(normalize_answer(pred), normalize_all(golds));
}

ExampleScore score_example(std::string id, std::string prediction, std::vector<std::string> golds) {
    require_golds(golds.size(), "score_example");
    const Tokens p = normalize_answer(prediction);
    const auto g = normalize_all(golds);
    ExampleScore s;
    s.em = exact_match_tokens(p, g);
    s.f1 = token_f1_tokens(p, g);
    s.jaccard = jaccard_tokens(p, g);
    s.wer = wer_tokens(p, g);
    s.empty_gold = std::all_of(g.begin(), g.end(), [](const Tokens& t) { return t.empty(); });
    s.id = std::move(id);
    s.prediction = std::move(prediction);
    s.golds = std::move(golds);
    return s;
}

EvalReport aggregate(const std::vector<ExampleScore>& scores, const std::string& language, nlohmann::json provenance) {
    if (scores.empty()) throw ContractError("aggregate: no examples for language '" + language + "'");
    EvalReport r;
    r.language = language;
    r.n_examples = scores.size();
    std::size_t empty_golds = 0;
    for (const auto& s : scores) {
        r.em += s.em;
        r.f1 += s.f1;
        r.jaccard += s.jaccard;
        r.wer += s.wer;
        empty_golds += s.empty_gold ? 1 : 0;
    }
    const double n = static_cast<double>(scores.size());
    r.em = 100.0 * r.em / n;
    r.f1 = 100.0 * r.f1 / n;
    r.jaccard = 100.0 * r.jaccard / n;
    r.wer = 100.0 * r.wer / n;
    r.per_example = scores;
    r.provenance = std::move(provenance);
    if (empty_golds > 0) r.provenance["empty_gold_examples"] = empty_golds;
    return r;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json examples = nlohmann::json::array();
    for (const auto& s : per_example) {
        examples.push_back({{"id", s.id},
                            {"prediction", s.prediction},
                            {"golds", s.golds},
                            {"em", s.em},
                            {"f1", s.f1},
                            {"jaccard", s.jaccard},
                            {"wer", s.wer},
                            {"empty_gold", s.empty_gold}});
    }
    return {{"language", language}, {"n_examples", n_examples}, {"f1", f1},     {"em", em},
            {"jaccard", jaccard},   {"wer", wer},               {"per_example", examples},
            {"provenance", provenance}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
    EvalReport r;
    try {
        r.language = j.at("language").get<std::string>();
        r.n_examples = j.at("n_examples").get<std::size_t>();
        r.f1 = j.at("f1").get<double>();
        r.em = j.at("em").get<double>();
        r.jaccard = j.at("jaccard").get<double>();
        r.wer = j.at("wer").get<double>();
        for (const auto& e : j.value("per_example", nlohmann::json::array())) {
            ExampleScore s;
            s.id = e.at("id").get<std::string>();
            s.prediction = e.at("prediction").get<std::string>();
            s.golds = e.at("golds").get<std::vector<std::string>>();
            s.em = e.at("em").get<double>();
            s.f1 = e.at("f1").get<double>();
            s.jaccard = e.at("jaccard").get<double>();
            s.wer = e.at("wer").get<double>();
            s.empty_gold = e.value("empty_gold", false);
            r.per_example.push_back(std::move(s));
        }
        r.provenance = j.value("provenance", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("eval report: ") + e.what());
    }
    return r;
}

std::string format_metric(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", value);
    std::string s = buf;
    if (s == "-0.00") s = "0.00";
    while (s.size() > 1 && s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
    return s;
}

std::string format_cell(double a, double b) { return format_metric(a) + " / " + format_metric(b); }

ReportTables render_tables(const std::vector<ReportRow>& rows, std::vector<std::string> columns) {
    if (columns.empty()) {
        for (const auto& row : rows) {
            for (const auto& [lang, report] : row.cells) {
                if (std::find(columns.begin(), columns.end(), lang) == columns.end()) columns.push_back(lang);
            }
        }
    }
    auto render = [&](const std::string& corner, bool first_pair) {
        std::vector<std::vector<std::string>> grid;
        grid.push_back({corner});
        for (const auto& c : columns) grid.back().push_back(c);
        for (const auto& row : rows) {
            std::vector<std::string> line{row.label};
            for (const auto& c : columns) {
                auto it = std::find_if(row.cells.begin(), row.cells.end(), [&](const auto& cell) { return cell.first == c; });
                if (it == row.cells.end()) {
                    line.emplace_back();
                } else {
                    const EvalReport& r = it->second;
                    line.push_back(first_pair ? format_cell(r.f1, r.em) : format_cell(r.jaccard, r.wer));
                }
            }
            grid.push_back(std::move(line));
        }
        std::vector<std::size_t> width(columns.size() + 1, 0);
        for (const auto& line : grid) {
            for (std::size_t k = 0; k < line.size(); ++k) width[k] = std::max(width[k], utf8::length(line[k]));
        }
        std::string out;
        for (const auto& line : grid) {
            std::string text;
            for (std::size_t k = 0; k < line.size(); ++k) {
                if (k > 0) text += "  ";
                text += line[k];
                if (k + 1 < line.size()) text.append(width[k] - utf8::length(line[k]), ' ');
            }
            while (!text.empty() && text.back() == ' ') text.pop_back();
            out += text + "\n";
        }
        return out;
    };
    return {render("F1 / EM", true), render("Jaccard / WER", false)};
}

}  // namespace adaptqa
