// SPDX-License-Identifier: Apache-2.0
//
// Synthetic multilingual QA corpus. Every language renders the same
// abstract examples through its own lexicon, so corpora of two languages are
// related by a word-level bijection (a perfect "translation").
//
// Abstract vocabulary: 0 = sentence end, 1 = question mark, 2 = question
// word, then relations, entities and values. A context is a list of facts
// "entity relation value [value] ."; the question "what relation entity ?"
// is answered by the value words of the matching fact.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "adaptqa/squad.h"

namespace adaptqa {

struct SynthSpec {
    std::vector<std::string> languages{"en", "de"};
    /// Abstract symbols, punctuation and question word included.
    std::size_t vocab_size = 120;
    std::size_t n_train = 200;
    std::size_t n_test = 50;
    std::size_t n_unlabeled = 400;
    std::size_t min_facts = 2;
    std::size_t max_facts = 4;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static SynthSpec from_json(const nlohmann::json& j);
};

/// Languages with a built-in lexicon.
const std::vector<std::string>& synth_languages();
std::string synth_language_tag(const std::string& language);

class SynthLexicon {
public:
    SynthLexicon(std::string language, std::size_t vocab_size);

    const std::string& language() const { return language_; }
    std::size_t size() const { return surfaces_.size(); }
    const std::string& surface(std::size_t symbol) const;
    std::optional<std::size_t> symbol(std::string_view surface) const;

    /// Text for a symbol sequence; `starts`, when given, receives the
    /// code-point offset of every symbol.
    std::string render(const std::vector<std::size_t>& symbols, std::vector<std::size_t>* starts = nullptr) const;
    /// Inverse of render(). Throws ValidationError on a foreign word.
    std::vector<std::size_t> parse(std::string_view text) const;

private:
    std::string language_;
    bool spaced_ = true;
    std::vector<std::string> surfaces_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct SynthLanguageCorpus {
    std::string language;
    std::vector<QAExample> train;
    std::vector<QAExample> test;
    std::vector<std::string> unlabeled;
};

struct SynthCorpus {
    SynthSpec spec;
    std::vector<SynthLanguageCorpus> languages;

    const SynthLanguageCorpus& get(const std::string& language) const;
};

SynthCorpus synth_corpus(const SynthSpec& spec);

/// Writes <lang>.train.json, <lang>.test.json, <lang>.mlm.txt per language and
/// synth.json with the spec. Returns the written paths.
std::vector<std::filesystem::path> write_synth_corpus(const std::filesystem::path& dir, const SynthCorpus& corpus);

/// Word-by-word translation of one synthetic example; answer offsets are
/// recomputed in the target rendering.
QAExample translate_example(const QAExample& example, const SynthLexicon& from, const SynthLexicon& to);
std::string translate_text(std::string_view text, const SynthLexicon& from, const SynthLexicon& to);

}  // namespace adaptqa
