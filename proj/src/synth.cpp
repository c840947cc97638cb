// SPDX-License-Identifier: Apache-2.0

#include "adaptqa/synth.h"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "adaptqa/errors.h"
#include "adaptqa/rng.h"
#include "adaptqa/tokenizer.h"
#include "adaptqa/utf8.h"

namespace adaptqa {

namespace {

constexpr std::size_t kPeriod = 0;
constexpr std::size_t kQuestionMark = 1;
constexpr std::size_t kWhat = 2;
constexpr std::size_t kFirstWord = 3;

struct Script {
    std::vector<std::string> syllables;
    std::string suffix;
    std::size_t min_syllables = 2;
    std::string period = ".";
    std::string question_mark = "?";
    bool spaced = true;
};

std::vector<std::string> split_cps(std::u32string_view cps) {
    std::vector<std::string> out;
    for (char32_t cp : cps) out.push_back(utf8::encode(cp));
    return out;
}

std::vector<std::string> cross(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::string> out;
    for (const auto& x : a) {
        for (const auto& y : b) out.push_back(x + y);
    }
    return out;
}

// Endings keep the Latin lexicons disjoint: en words end in a plain vowel,
// de words in "ch", es words in "s", vi words in "ng".
Script script_for(const std::string& language) {
    Script s;
    if (language == "en") {
        s.syllables = cross(split_cps(U"bdfgklmnprstvz"), split_cps(U"aeiou"));
    } else if (language == "de") {
        s.syllables = cross(split_cps(U"bdfgklmnprstwz"), split_cps(U"aeiouäöü"));
        s.suffix = "ch";
    } else if (language == "es") {
        s.syllables = cross(split_cps(U"bcdfglmnprstv"), split_cps(U"aeiouáéíóú"));
        s.suffix = "s";
    } else if (language == "vi") {
        s.syllables = cross(split_cps(U"bcdghklmnstvx"), split_cps(U"aăâeêioôơuư"));
        s.suffix = "ng";
    } else if (language == "hi") {
        std::vector<std::string> matras{""};
        for (const auto& m : split_cps(U"ािीुूेो")) matras.push_back(m);
        s.syllables = cross(split_cps(U"कखगघचजटडतदनपबमयरलवसह"), matras);
        s.period = "।";
    } else if (language == "ar") {
        s.syllables = split_cps(U"بتثجحخدذرزسشصضطظعغفقكلمنهوي");
        s.min_syllables = 3;
        s.question_mark = "؟";
    } else if (language == "zh") {
        s.min_syllables = 1;
        s.period = "。";
        s.question_mark = "？";
        s.spaced = false;
    } else {
        throw ConfigError("no synthetic lexicon for language '" + language + "'");
    }
    return s;
}

struct AbstractExample {
    std::vector<std::size_t> question;
    std::vector<std::size_t> context;
    std::size_t answer_index = 0;
    std::size_t answer_length = 0;
};

struct Inventory {
    std::size_t relations = 0;
    std::size_t entities = 0;
    std::size_t values = 0;

    explicit Inventory(std::size_t vocab_size) {
        const std::size_t words = vocab_size - kFirstWord;
        relations = std::max<std::size_t>(2, words / 8);
        entities = (words - relations) / 2;
        values = words - relations - entities;
    }
    std::size_t relation(std::size_t i) const { return kFirstWord + i; }
    std::size_t entity(std::size_t i) const { return kFirstWord + relations + i; }
    std::size_t value(std::size_t i) const { return kFirstWord + relations + entities + i; }
};

struct Fact {
    std::size_t entity = 0;
    std::size_t relation = 0;
    std::vector<std::size_t> values;
};

std::vector<Fact> draw_facts(const SynthSpec& spec, const Inventory& inv, Rng& rng) {
    const std::size_t k = spec.min_facts + rng.uniform_int(spec.max_facts - spec.min_facts + 1);
    std::vector<std::size_t> pool(inv.entities);
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    std::vector<Fact> facts(k);
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t j = f + rng.uniform_int(pool.size() - f);
        std::swap(pool[f], pool[j]);
        facts[f].entity = inv.entity(pool[f]);
        facts[f].relation = inv.relation(rng.uniform_int(inv.relations));
        const std::size_t n_values = rng.uniform() < 0.3 ? 2 : 1;
        for (std::size_t v = 0; v < n_values; ++v) facts[f].values.push_back(inv.value(rng.uniform_int(inv.values)));
    }
    return facts;
}

std::vector<std::size_t> render_facts(const std::vector<Fact>& facts, std::vector<std::size_t>* value_starts) {
    std::vector<std::size_t> out;
    for (const auto& f : facts) {
        out.push_back(f.entity);
        out.push_back(f.relation);
        if (value_starts) value_starts->push_back(out.size());
        out.insert(out.end(), f.values.begin(), f.values.end());
        out.push_back(kPeriod);
    }
    return out;
}

AbstractExample draw_example(const SynthSpec& spec, const Inventory& inv, Rng& rng) {
    const auto facts = draw_facts(spec, inv, rng);
    const std::size_t target = rng.uniform_int(facts.size());
    AbstractExample ex;
    std::vector<std::size_t> value_starts;
    ex.context = render_facts(facts, &value_starts);
    ex.answer_index = value_starts[target];
    ex.answer_length = facts[target].values.size();
    ex.question = {kWhat, facts[target].relation, facts[target].entity, kQuestionMark};
    return ex;
}

QAExample realize(const AbstractExample& abs, const SynthLexicon& lex, std::string id) {
    QAExample ex;
    ex.id = std::move(id);
    ex.language = synth_language_tag(lex.language());
    ex.question = lex.render(abs.question);
    std::vector<std::size_t> starts;
    ex.context = lex.render(abs.context, &starts);
    const std::vector<std::size_t> answer(abs.context.begin() + abs.answer_index,
                                          abs.context.begin() + abs.answer_index + abs.answer_length);
    ex.answers.push_back({lex.render(answer), starts[abs.answer_index]});
    return ex;
}

std::string example_id(const char* split, std::size_t i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "synth-%s-%06zu", split, i);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
}

}  // namespace

void SynthSpec::validate() const {
    if (languages.empty()) throw ConfigError("synth: at least one language is required");
    for (std::size_t i = 0; i < languages.size(); ++i) {
        script_for(languages[i]);
        for (std::size_t j = 0; j < i; ++j) {
            if (languages[i] == languages[j]) throw ConfigError("synth: language '" + languages[i] + "' listed twice");
        }
    }
    if (min_facts < 1 || max_facts < min_facts) {
        throw ConfigError("synth: need 1 <= min_facts <= max_facts, got " + std::to_string(min_facts) + ", " +
                          std::to_string(max_facts));
    }
    if (vocab_size < kFirstWord + 8) throw ConfigError("synth: vocab_size must be at least " + std::to_string(kFirstWord + 8));
    if (vocab_size > 20000) throw ConfigError("synth: vocab_size above 20000 is not supported");
    const Inventory inv(vocab_size);
    if (inv.entities < max_facts) {
        throw ConfigError("synth: vocab_size " + std::to_string(vocab_size) + " leaves only " +
                          std::to_string(inv.entities) + " entities for up to " + std::to_string(max_facts) +
                          " facts per context");
    }
}

nlohmann::json SynthSpec::to_json() const {
    return {{"languages", languages}, {"vocab_size", vocab_size}, {"n_train", n_train},
            {"n_test", n_test},       {"n_unlabeled", n_unlabeled}, {"min_facts", min_facts},
            {"max_facts", max_facts}, {"seed", seed}};
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
    SynthSpec s;
    try {
        s.languages = j.value("languages", s.languages);
        s.vocab_size = j.value("vocab_size", s.vocab_size);
        s.n_train = j.value("n_train", s.n_train);
        s.n_test = j.value("n_test", s.n_test);
        s.n_unlabeled = j.value("n_unlabeled", s.n_unlabeled);
        s.min_facts = j.value("min_facts", s.min_facts);
        s.max_facts = j.value("max_facts", s.max_facts);
        s.seed = j.value("seed", s.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("synth spec: ") + e.what());
    }
    return s;
}

const std::vector<std::string>& synth_languages() {
    static const std::vector<std::string> langs{"en", "de", "es", "vi", "hi", "ar", "zh"};
    return langs;
}

std::string synth_language_tag(const std::string& language) { return "synthetic-" + language; }

SynthLexicon::SynthLexicon(std::string language, std::size_t vocab_size) : language_(std::move(language)) {
    const Script s = script_for(language_);
    spaced_ = s.spaced;
    surfaces_.resize(vocab_size);
    surfaces_[kPeriod] = s.period;
    surfaces_[kQuestionMark] = s.question_mark;
    for (std::size_t sym = kFirstWord - 1; sym < vocab_size; ++sym) {
        const std::size_t w = sym - (kFirstWord - 1);
        if (!s.spaced) {
            surfaces_[sym] = utf8::encode(static_cast<char32_t>(0x4E00 + 0x100 + w));
            continue;
        }
        std::string word;
        std::size_t rest = w;
        for (std::size_t k = 0; k < s.min_syllables || rest > 0; ++k) {
            word = s.syllables[rest % s.syllables.size()] + word;
            rest /= s.syllables.size();
        }
        surfaces_[sym] = word + s.suffix;
    }
    for (std::size_t i = 0; i < surfaces_.size(); ++i) {
        if (!index_.emplace(surfaces_[i], i).second) {
            throw ContractError("synthetic lexicon '" + language_ + "' repeats surface '" + surfaces_[i] + "'");
        }
    }
}

const std::string& SynthLexicon::surface(std::size_t symbol) const {
    if (symbol >= surfaces_.size()) {
        throw ContractError("symbol " + std::to_string(symbol) + " outside lexicon of size " +
                            std::to_string(surfaces_.size()));
    }
    return surfaces_[symbol];
}

std::optional<std::size_t> SynthLexicon::symbol(std::string_view surface) const {
    auto it = index_.find(std::string(surface));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::string SynthLexicon::render(const std::vector<std::size_t>& symbols, std::vector<std::size_t>* starts) const {
    std::string out;
    std::size_t pos = 0;
    if (starts) starts->clear();
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        const bool punct = symbols[i] == kPeriod || symbols[i] == kQuestionMark;
        if (spaced_ && i > 0 && !punct) {
            out += ' ';
            ++pos;
        }
        if (starts) starts->push_back(pos);
        const std::string& s = surface(symbols[i]);
        out += s;
        pos += utf8::length(s);
    }
    return out;
}

std::vector<std::size_t> SynthLexicon::parse(std::string_view text) const {
    std::vector<std::size_t> out;
    for (const auto& piece : split_tokens(text)) {
        auto sym = symbol(piece.text);
        if (!sym) throw ValidationError("'" + piece.text + "' is not a word of synthetic language '" + language_ + "'");
        out.push_back(*sym);
    }
    return out;
}

const SynthLanguageCorpus& SynthCorpus::get(const std::string& language) const {
    for (const auto& c : languages) {
        if (c.language == language) return c;
    }
    throw ConfigError("synthetic corpus has no language '" + language + "'");
}

SynthCorpus synth_corpus(const SynthSpec& spec) {
    spec.validate();
    const Inventory inv(spec.vocab_size);
    const Rng root(spec.seed);

    std::vector<AbstractExample> train;
    std::vector<AbstractExample> test;
    std::vector<std::vector<std::size_t>> docs;
    Rng train_rng = root.fork(1);
    for (std::size_t i = 0; i < spec.n_train; ++i) train.push_back(draw_example(spec, inv, train_rng));
    Rng test_rng = root.fork(2);
    for (std::size_t i = 0; i < spec.n_test; ++i) test.push_back(draw_example(spec, inv, test_rng));
    Rng doc_rng = root.fork(3);
    for (std::size_t i = 0; i < spec.n_unlabeled; ++i) docs.push_back(render_facts(draw_facts(spec, inv, doc_rng), nullptr));

    SynthCorpus corpus;
    corpus.spec = spec;
    for (const auto& language : spec.languages) {
        const SynthLexicon lex(language, spec.vocab_size);
        SynthLanguageCorpus c;
        c.language = language;
        for (std::size_t i = 0; i < train.size(); ++i) c.train.push_back(realize(train[i], lex, example_id("train", i)));
        for (std::size_t i = 0; i < test.size(); ++i) c.test.push_back(realize(test[i], lex, example_id("test", i)));
        for (const auto& d : docs) c.unlabeled.push_back(lex.render(d));
        corpus.languages.push_back(std::move(c));
    }
    return corpus;
}

std::vector<std::filesystem::path> write_synth_corpus(const std::filesystem::path& dir, const SynthCorpus& corpus) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    for (const auto& c : corpus.languages) {
        const auto train = dir / (c.language + ".train.json");
        const auto test = dir / (c.language + ".test.json");
        const auto mlm = dir / (c.language + ".mlm.txt");
        save_squad_file(train, c.train, synth_language_tag(c.language) + " train");
        save_squad_file(test, c.test, synth_language_tag(c.language) + " test");
        std::string text;
        for (const auto& line : c.unlabeled) text += line + "\n";
        write_text(mlm, text);
        written.insert(written.end(), {train, test, mlm});
    }
    const auto spec_path = dir / "synth.json";
    write_text(spec_path, corpus.spec.to_json().dump(2) + "\n");
    written.push_back(spec_path);
    return written;
}

std::string translate_text(std::string_view text, const SynthLexicon& from, const SynthLexicon& to) {
    return to.render(from.parse(text));
}

QAExample translate_example(const QAExample& example, const SynthLexicon& from, const SynthLexicon& to) {
    QAExample out;
    out.id = example.id;
    out.language = synth_language_tag(to.language());
    out.question = translate_text(example.question, from, to);
    const auto pieces = split_tokens(example.context);
    std::vector<std::size_t> starts;
    out.context = to.render(from.parse(example.context), &starts);
    for (const auto& a : example.answers) {
        auto it = std::find_if(pieces.begin(), pieces.end(), [&](const TokenPiece& p) { return p.start == a.answer_start; });
        if (it == pieces.end()) {
            throw ValidationError("example '" + example.id + "': answer does not start on a word boundary");
        }
        out.answers.push_back({translate_text(a.text, from, to), starts[static_cast<std::size_t>(it - pieces.begin())]});
    }
    return out;
}

}  // namespace adaptqa
