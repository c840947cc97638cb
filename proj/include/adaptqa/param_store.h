// SPDX-License-Identifier: Apache-2.0
//
// Named parameter collection with a trainable mask.

#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "adaptqa/tensor.h"

namespace adaptqa {

class ParamStore {
public:
    /// Adds a new entry; names must be unique.
    void add(const std::string& name, Tensor tensor);
    /// Replaces the tensor under an existing name (shape may not change).
    void replace(const std::string& name, Tensor tensor);
    void remove(const std::string& name);
    /// Removes every entry whose name starts with `prefix`; returns how many.
    std::size_t remove_prefix(std::string_view prefix);

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    const Tensor& get(const std::string& name) const;
    Tensor& get(const std::string& name);

    std::size_t size() const { return entries_.size(); }
    /// Names in lexicographic order (also the serialization order).
    std::vector<std::string> names() const;
    std::vector<std::string> names_with_prefix(std::string_view prefix) const;
    const std::map<std::string, Tensor>& entries() const { return entries_; }

    /// Sets the trainable mask; every other entry stops requiring gradients.
    void set_trainable(const std::set<std::string>& names);
    const std::set<std::string>& trainable() const { return trainable_; }
    bool is_trainable(const std::string& name) const { return trainable_.count(name) != 0; }

    /// Zero-fills gradients of trainable entries and drops the rest.
    void zero_grad();

    /// Total scalar count over all entries, or over entries with `prefix`.
    std::size_t count_params() const;
    std::size_t count_params(std::string_view prefix) const;
    std::size_t count_trainable() const;

private:
    std::map<std::string, Tensor> entries_;
    std::set<std::string> trainable_;
};

}  // namespace adaptqa
