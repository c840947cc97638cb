// SPDX-License-Identifier: Apache-2.0
//
// Character-class tokenizer and vocabulary. Whitespace separates words,
// every punctuation character is its own token, and each CJK ideograph is a
// token of its own. Offsets are code-point positions [start, end).

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace adaptqa {

struct TokenPiece {
    std::string text;
    std::size_t start = 0;
    std::size_t end = 0;
};

std::vector<TokenPiece> split_tokens(std::string_view text);

class Vocab {
public:
    static constexpr std::int32_t kPad = 0;
    static constexpr std::int32_t kUnknown = 1;
    static constexpr std::int32_t kSeparator = 2;
    static constexpr std::int32_t kMask = 3;
    static constexpr std::int32_t kNumReserved = 4;

    /// Only the reserved symbols.
    Vocab();
    /// Symbols in id order; the first four must be the reserved ones.
    explicit Vocab(std::vector<std::string> symbols);

    /// Most frequent pieces first (ties broken lexicographically) until
    /// `max_size` ids, reserved ids included, are used.
    static Vocab build(const std::vector<std::string>& texts, std::size_t max_size);

    std::size_t size() const { return symbols_.size(); }
    std::int32_t id(std::string_view symbol) const;
    const std::string& symbol(std::int32_t id) const;
    const std::vector<std::string>& symbols() const { return symbols_; }
    static bool is_reserved(std::int32_t id) { return id >= 0 && id < kNumReserved; }

private:
    std::vector<std::string> symbols_;
    std::unordered_map<std::string, std::int32_t> index_;
};

struct Tokenized {
    std::vector<std::int32_t> ids;
    std::vector<std::pair<std::size_t, std::size_t>> offsets;
};

Tokenized tokenize(std::string_view text, const Vocab& vocab);

}  // namespace adaptqa
