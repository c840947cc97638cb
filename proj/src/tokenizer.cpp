// SPDX-License-Identifier: Apache-2.0

#include "adaptqa/tokenizer.h"

#include <algorithm>
#include <map>

#include "adaptqa/errors.h"
#include "adaptqa/utf8.h"

namespace adaptqa {

namespace {

const char* const kReservedSymbols[] = {"[PAD]", "[UNK]", "[SEP]", "[MASK]"};

}  // namespace

std::vector<TokenPiece> split_tokens(std::string_view text) {
    const std::u32string cps = utf8::decode(text);
    std::vector<TokenPiece> out;
    std::size_t word_start = 0;
    bool in_word = false;
    auto flush = [&](std::size_t end) {
        if (in_word) {
            out.push_back({utf8::encode(std::u32string_view(cps).substr(word_start, end - word_start)), word_start, end});
            in_word = false;
        }
    };
    for (std::size_t i = 0; i < cps.size(); ++i) {
        const char32_t cp = cps[i];
        if (utf8::is_whitespace(cp)) {
            flush(i);
        } else if (utf8::is_punctuation(cp) || utf8::is_cjk(cp)) {
            flush(i);
            out.push_back({utf8::encode(cp), i, i + 1});
        } else if (!in_word) {
            in_word = true;
            word_start = i;
        }
    }
    flush(cps.size());
    return out;
}

Vocab::Vocab() : Vocab(std::vector<std::string>(std::begin(kReservedSymbols), std::end(kReservedSymbols))) {}

Vocab::Vocab(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
    if (symbols_.size() < static_cast<std::size_t>(kNumReserved)) {
        throw ContractError("vocab needs at least the " + std::to_string(kNumReserved) + " reserved symbols");
    }
    for (std::int32_t i = 0; i < kNumReserved; ++i) {
        if (symbols_[i] != kReservedSymbols[i]) {
            throw ContractError("vocab id " + std::to_string(i) + " must be " + kReservedSymbols[i] + ", got '" +
                                symbols_[i] + "'");
        }
    }
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
        if (!index_.emplace(symbols_[i], static_cast<std::int32_t>(i)).second) {
            throw ContractError("duplicate vocab symbol '" + symbols_[i] + "'");
        }
    }
}

Vocab Vocab::build(const std::vector<std::string>& texts, std::size_t max_size) {
    std::map<std::string, std::size_t> counts;
    for (const auto& text : texts) {
        for (auto& piece : split_tokens(text)) ++counts[std::move(piece.text)];
    }
    for (const char* r : kReservedSymbols) counts.erase(r);
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> symbols(std::begin(kReservedSymbols), std::end(kReservedSymbols));
    for (auto& [sym, count] : ranked) {
        if (symbols.size() >= max_size) break;
        symbols.push_back(sym);
    }
    return Vocab(std::move(symbols));
}

std::int32_t Vocab::id(std::string_view symbol) const {
    auto it = index_.find(std::string(symbol));
    return it == index_.end() ? kUnknown : it->second;
}

const std::string& Vocab::symbol(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
        throw ContractError("vocab id " + std::to_string(id) + " out of range [0, " + std::to_string(symbols_.size()) +
                            ")");
    }
    return symbols_[id];
}

Tokenized tokenize(std::string_view text, const Vocab& vocab) {
    Tokenized out;
    for (const auto& piece : split_tokens(text)) {
        out.ids.push_back(vocab.id(piece.text));
        out.offsets.emplace_back(piece.start, piece.end);
    }
    return out;
}

}  // namespace adaptqa
