// SPDX-License-Identifier: Apache-2.0

#include "adaptqa/squad.h"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "adaptqa/errors.h"
#include "adaptqa/utf8.h"

namespace adaptqa {

namespace {

using nlohmann::json;

const json& require_field(const json& obj, const char* key, json::value_t type, const std::string& path) {
    if (!obj.is_object()) throw ParseError(path + ": expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(path + "." + key + ": missing");
    const bool ok = type == json::value_t::number_unsigned ? it->is_number_unsigned()
                                                            : (it->type() == type);
    if (!ok) {
        throw ParseError(path + "." + key + ": expected " +
                         (type == json::value_t::array    ? std::string("array")
                          : type == json::value_t::string ? std::string("string")
                                                          : std::string("non-negative integer")) +
                         ", got " + it->type_name());
    }
    return *it;
}

bool answer_matches(const std::u32string& context, const Answer& a) {
    const std::u32string text = utf8::decode(a.text);
    return a.answer_start + text.size() <= context.size() &&
           context.compare(a.answer_start, text.size(), text) == 0;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

std::vector<std::string> invalid_answer_ids(const std::vector<QAExample>& examples) {
    std::vector<std::string> bad;
    for (const auto& ex : examples) {
        const std::u32string context = utf8::decode(ex.context);
        for (const auto& a : ex.answers) {
            if (!answer_matches(context, a)) {
                bad.push_back(ex.id);
                break;
            }
        }
    }
    return bad;
}

std::vector<QAExample> parse_squad_json(std::string_view bytes, const std::string& language) {
    json root;
    try {
        root = json::parse(bytes);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("$: ") + e.what());
    }
    std::vector<QAExample> out;
    const json& data = require_field(root, "data", json::value_t::array, "$");
    for (std::size_t d = 0; d < data.size(); ++d) {
        const std::string dpath = "$.data[" + std::to_string(d) + "]";
        const json& paragraphs = require_field(data[d], "paragraphs", json::value_t::array, dpath);
        for (std::size_t p = 0; p < paragraphs.size(); ++p) {
            const std::string ppath = dpath + ".paragraphs[" + std::to_string(p) + "]";
            const std::string context =
                require_field(paragraphs[p], "context", json::value_t::string, ppath).get<std::string>();
            const json& qas = require_field(paragraphs[p], "qas", json::value_t::array, ppath);
            for (std::size_t q = 0; q < qas.size(); ++q) {
                const std::string qpath = ppath + ".qas[" + std::to_string(q) + "]";
                QAExample ex;
                ex.language = language;
                ex.context = context;
                ex.id = require_field(qas[q], "id", json::value_t::string, qpath).get<std::string>();
                ex.question = require_field(qas[q], "question", json::value_t::string, qpath).get<std::string>();
                const json& answers = require_field(qas[q], "answers", json::value_t::array, qpath);
                for (std::size_t a = 0; a < answers.size(); ++a) {
                    const std::string apath = qpath + ".answers[" + std::to_string(a) + "]";
                    Answer ans;
                    ans.text = require_field(answers[a], "text", json::value_t::string, apath).get<std::string>();
                    ans.answer_start =
                        require_field(answers[a], "answer_start", json::value_t::number_unsigned, apath)
                            .get<std::size_t>();
                    ex.answers.push_back(std::move(ans));
                }
                out.push_back(std::move(ex));
            }
        }
    }
    const auto bad = invalid_answer_ids(out);
    if (!bad.empty()) {
        std::string msg = "answer offsets do not match the context for " + std::to_string(bad.size()) +
                          " example(s):";
        for (const auto& id : bad) msg += " " + id;
        throw ValidationError(msg);
    }
    return out;
}

std::vector<QAExample> load_squad_file(const std::filesystem::path& path, const std::string& language) {
    try {
        return parse_squad_json(read_file(path), language);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

std::string serialize_squad_json(const std::vector<QAExample>& examples, const std::string& title) {
    json paragraphs = json::array();
    for (const auto& ex : examples) {
        if (paragraphs.empty() || paragraphs.back()["context"] != ex.context) {
            paragraphs.push_back({{"context", ex.context}, {"qas", json::array()}});
        }
        json answers = json::array();
        for (const auto& a : ex.answers) answers.push_back({{"answer_start", a.answer_start}, {"text", a.text}});
        paragraphs.back()["qas"].push_back({{"answers", answers}, {"id", ex.id}, {"question", ex.question}});
    }
    json root{{"data", json::array({json{{"paragraphs", paragraphs}, {"title", title}}})}, {"version", "1.1"}};
    return root.dump(1) + "\n";
}

void save_squad_file(const std::filesystem::path& path, const std::vector<QAExample>& examples,
                     const std::string& title) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << serialize_squad_json(examples, title);
}

TokenizedFeature featurize(const QAExample& example, const Vocab& vocab, const FeaturizeOptions& options) {
    if (options.max_seq_len < 2) throw ContractError("featurize: max_seq_len must be at least 2");
    const Tokenized q = tokenize(example.question, vocab);
    const Tokenized c = tokenize(example.context, vocab);
    if (c.ids.empty()) throw ValidationError("example '" + example.id + "' has an empty context");

    std::size_t q_len = std::min(q.ids.size(), options.max_question_len);
    q_len = std::min(q_len, options.max_seq_len - 2);
    const std::size_t c_len = std::min(c.ids.size(), options.max_seq_len - q_len - 1);

    TokenizedFeature f;
    f.example_id = example.id;
    f.context = example.context;
    for (std::size_t i = 0; i < q_len; ++i) {
        f.token_ids.push_back(q.ids[i]);
        f.char_offsets.emplace_back(0, 0);
        f.context_mask.push_back(false);
    }
    f.token_ids.push_back(Vocab::kSeparator);
    f.char_offsets.emplace_back(0, 0);
    f.context_mask.push_back(false);
    for (std::size_t i = 0; i < c_len; ++i) {
        f.token_ids.push_back(c.ids[i]);
        f.char_offsets.push_back(c.offsets[i]);
        f.context_mask.push_back(true);
    }
    for (const auto& a : example.answers) f.gold_answers.push_back(a.text);
    if (!example.answers.empty()) {
        const Answer& a = example.answers.front();
        f.gold_span = align_answer_span(f, a.answer_start, a.answer_start + utf8::length(a.text));
    }
    return f;
}

std::optional<std::pair<std::size_t, std::size_t>> align_answer_span(const TokenizedFeature& feature,
                                                                     std::size_t char_start, std::size_t char_end) {
    if (feature.char_offsets.size() != feature.size() || feature.context_mask.size() != feature.size()) {
        throw ContractError("align_answer_span: feature '" + feature.example_id + "' lacks per-token offsets");
    }
    if (char_end <= char_start) return std::nullopt;
    std::optional<std::size_t> first;
    std::optional<std::size_t> last;
    for (std::size_t i = 0; i < feature.size(); ++i) {
        if (!feature.context_mask[i]) continue;
        const auto [s, e] = feature.char_offsets[i];
        if (e <= char_start || s >= char_end) continue;
        if (!first) first = i;
        last = i;
    }
    if (!first) return std::nullopt;
    if (feature.char_offsets[*first].first != char_start || feature.char_offsets[*last].second != char_end) {
        return std::nullopt;
    }
    return std::make_pair(*first, *last);
}

FeaturizedSet featurize_for_training(const std::vector<QAExample>& examples, const Vocab& vocab,
                                     const FeaturizeOptions& options) {
    FeaturizedSet out;
    for (const auto& ex : examples) {
        TokenizedFeature f = featurize(ex, vocab, options);
        if (!f.gold_span) {
            ++out.skipped_unalignable;
            continue;
        }
        out.features.push_back(std::move(f));
    }
    return out;
}

std::vector<TokenizedFeature> featurize_for_eval(const std::vector<QAExample>& examples, const Vocab& vocab,
                                                 const FeaturizeOptions& options) {
    std::vector<TokenizedFeature> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(featurize(ex, vocab, options));
    return out;
}

nlohmann::json DatasetSplit::provenance_json() const {
    json sources = json::array();
    for (const auto& s : provenance) sources.push_back({{"source", s.source}, {"count", s.count}});
    return {{"language", language}, {"train", train.size()}, {"test", test.size()}, {"sources", sources}};
}

DatasetSplit build_split(const std::vector<QAExample>& xquad_test, const std::vector<QAExample>& mlqa_test,
                         const std::vector<QAExample>& mlqa_dev) {
    DatasetSplit split;
    std::set<std::string> languages;
    for (const auto* part : {&xquad_test, &mlqa_test, &mlqa_dev}) {
        for (const auto& ex : *part) languages.insert(ex.language);
    }
    if (languages.size() > 1) {
        std::string msg = "build_split: inputs mix language tags:";
        for (const auto& l : languages) msg += " " + l;
        throw ValidationError(msg);
    }
    split.language = languages.empty() ? "" : *languages.begin();

    split.train = xquad_test;
    split.train.insert(split.train.end(), mlqa_test.begin(), mlqa_test.end());
    split.test = mlqa_dev;
    split.provenance = {{"xquad.test", xquad_test.size()}, {"mlqa.test", mlqa_test.size()}, {"mlqa.dev", mlqa_dev.size()}};

    std::map<std::string, std::size_t> seen;
    std::vector<std::string> repeated;
    for (const auto* part : {&split.train, &split.test}) {
        for (const auto& ex : *part) {
            if (++seen[ex.id] == 2) repeated.push_back(ex.id);
        }
    }
    if (!repeated.empty()) {
        std::string msg = "build_split: ids appear more than once across train/test:";
        for (const auto& id : repeated) msg += " " + id;
        throw ValidationError(msg);
    }
    return split;
}

const std::vector<ReferenceSize>& reference_split_sizes() {
    static const std::vector<ReferenceSize> sizes = {
        {"hi", 6854, 507}, {"de", 5707, 512}, {"es", 6443, 500}, {"ar", 6525, 517},
        {"zh", 6327, 504}, {"vi", 6685, 511}, {"en", 12780, 1148},
    };
    return sizes;
}

std::string compare_with_reference(const DatasetSplit& split) {
    for (const auto& ref : reference_split_sizes()) {
        if (ref.language != split.language) continue;
        if (ref.train == split.train.size() && ref.test == split.test.size()) return "";
        return "split size mismatch for '" + split.language + "': got train " + std::to_string(split.train.size()) +
               " / test " + std::to_string(split.test.size()) + ", reference train " + std::to_string(ref.train) +
               " / test " + std::to_string(ref.test);
    }
    return "";
}

}  // namespace adaptqa
