// SPDX-License-Identifier: Apache-2.0
//
// Golden metric cases shared by the metric unit tests and the acceptance run.

#pragma once

#include <string>
#include <vector>

struct GoldenMetricCase {
    const char* pred;
    std::vector<std::string> golds;
    double em;
    double f1;
};

/// Hand-computed EM and token F1 values.
inline const std::vector<GoldenMetricCase>& golden_metric_cases() {
    static const std::vector<GoldenMetricCase> cases{
        {"green cat", {"cat"}, 0, 2.0 / 3.0},
        {"The Cat", {"cat"}, 1, 1},
        {"cats", {"cat"}, 0, 0},
        {"cat", {"cat"}, 1, 1},
        {"dog", {"cat"}, 0, 0},
        {"", {"cat"}, 0, 0},
        {"the", {"a"}, 1, 1},
        {"New Delhi", {"Delhi", "New Delhi"}, 1, 1},
        {"New Delhi India", {"New Delhi"}, 0, 0.8},
        {"Delhi", {"New Delhi"}, 0, 2.0 / 3.0},
        {"cat cat", {"cat"}, 0, 2.0 / 3.0},
        {"cat", {"cat cat"}, 0, 2.0 / 3.0},
        {"a b c d", {"c d e f"}, 0, 4.0 / 7.0},
        {"1,000", {"1000"}, 1, 1},
        {"U.S.A.", {"usa"}, 1, 1},
        {"Hello, World!", {"hello world"}, 1, 1},
        {"big  red   dog", {"big red dog"}, 1, 1},
        {"red dog", {"big red dog", "dog"}, 0, 0.8},
        {"你好", {"你好吗"}, 0, 0.8},
        {"你好吗", {"你 好 吗"}, 1, 1},
        {"Mumbai", {"Delhi", "Chennai"}, 0, 0},
        {"an apple", {"apple"}, 1, 1},
        {"x y", {"y x"}, 0, 1},
        {"one two three", {"three"}, 0, 0.5},
        {"Straße", {"STRASSE"}, 0, 0},
    };
    return cases;
}
