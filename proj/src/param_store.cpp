// SPDX-License-Identifier: Apache-2.0

#include "adaptqa/param_store.h"

#include "adaptqa/errors.h"

namespace adaptqa {

namespace {

bool starts_with(const std::string& s, std::string_view prefix) {
    return s.size() >= prefix.size() && std::string_view(s).substr(0, prefix.size()) == prefix;
}

}  // namespace

void ParamStore::add(const std::string& name, Tensor tensor) {
    if (name.empty()) throw ContractError("parameter name must be non-empty");
    if (!tensor.defined()) throw ContractError("parameter '" + name + "' is undefined");
    if (!entries_.emplace(name, std::move(tensor)).second) {
        throw ContractError("duplicate parameter name '" + name + "'");
    }
    entries_.at(name).set_requires_grad(false);
}

void ParamStore::replace(const std::string& name, Tensor tensor) {
    Tensor& slot = get(name);
    if (slot.shape() != tensor.shape()) {
        throw DimensionError("parameter '" + name + "' has shape " + shape_to_string(slot.shape()) +
                             ", replacement has " + shape_to_string(tensor.shape()));
    }
    tensor.set_requires_grad(is_trainable(name));
    slot = std::move(tensor);
}

void ParamStore::remove(const std::string& name) {
    if (entries_.erase(name) == 0) {
        throw ContractError("no parameter named '" + name + "'");
    }
    trainable_.erase(name);
}

std::size_t ParamStore::remove_prefix(std::string_view prefix) {
    std::size_t removed = 0;
    for (auto it = entries_.begin(); it != entries_.end();) {
        if (starts_with(it->first, prefix)) {
            trainable_.erase(it->first);
            it = entries_.erase(it);
            ++removed;
        } else {
            ++it;
        }
    }
    return removed;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("no parameter named '" + name + "'");
    return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("no parameter named '" + name + "'");
    return it->second;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, _] : entries_) out.push_back(name);
    return out;
}

std::vector<std::string> ParamStore::names_with_prefix(std::string_view prefix) const {
    std::vector<std::string> out;
    for (const auto& [name, _] : entries_)
        if (starts_with(name, prefix)) out.push_back(name);
    return out;
}

void ParamStore::set_trainable(const std::set<std::string>& names) {
    for (const auto& n : names) {
        if (!contains(n)) throw ContractError("trainable mask names unknown parameter '" + n + "'");
    }
    trainable_ = names;
    for (auto& [name, tensor] : entries_) {
        tensor.set_requires_grad(trainable_.count(name) != 0);
    }
}

void ParamStore::zero_grad() {
    for (auto& [name, tensor] : entries_) {
        if (trainable_.count(name)) {
            tensor.zero_grad();
        } else {
            tensor.clear_grad();
        }
    }
}

std::size_t ParamStore::count_params() const {
    std::size_t n = 0;
    for (const auto& [_, t] : entries_) n += t.numel();
    return n;
}

std::size_t ParamStore::count_params(std::string_view prefix) const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_)
        if (starts_with(name, prefix)) n += t.numel();
    return n;
}

std::size_t ParamStore::count_trainable() const {
    std::size_t n = 0;
    for (const auto& name : trainable_) n += entries_.at(name).numel();
    return n;
}

}  // namespace adaptqa
