// SPDX-License-Identifier: Apache-2.0

#include "adaptqa/adapters.h"

#include <fstream>

#include "adaptqa/container.h"
#include "adaptqa/errors.h"

namespace adaptqa {

std::size_t PlacementConfig::occupied_slots(std::size_t num_blocks) const {
    return num_blocks * ((occupies(SlotKind::PostAttention) ? 1 : 0) + (occupies(SlotKind::PostFfn) ? 1 : 0));
}

void attach(EncoderModel& model, const AdapterStackSpec& stack, const PlacementConfig& placement) {
    // Validate everything before touching the model so a refused attach leaves it unchanged.
    for (const auto* set : {&stack.language, &stack.task}) {
        if (!*set) continue;
        const AdapterManifest& m = (*set)->manifest();
        const AdapterKind expected = set == &stack.language ? AdapterKind::Language : AdapterKind::Task;
        if (m.kind != expected) {
            throw ContractError("adapter '" + m.name + "' is a " + to_string(m.kind) + " adapter but was given for the " +
                                to_string(expected) + " position of the stack");
        }
        if (m.scheme != placement.scheme) {
            throw ContractError("adapter '" + m.name + "' was built for " + to_string(m.scheme) +
                                " placement, attach requested " + to_string(placement.scheme));
        }
        if (m.hidden_dim != model.config().hidden_dim || m.num_blocks != model.config().num_blocks) {
            throw ContractError("adapter '" + m.name + "' is sized for H=" + std::to_string(m.hidden_dim) + ", " +
                                std::to_string(m.num_blocks) + " blocks; model has H=" +
                                std::to_string(model.config().hidden_dim) + ", " +
                                std::to_string(model.config().num_blocks) + " blocks");
        }
        if (model.adapter(m.kind)) {
            throw ContractError("double attach: slot for the " + to_string(m.kind) + " adapter (block.0." +
                                to_string(SlotKind::PostFfn) + ") already holds '" +
                                model.adapter(m.kind)->manifest().name + "'");
        }
    }
    if (stack.language) model.install_adapter(stack.language);
    if (stack.task) model.install_adapter(stack.task);
}

void swap_language_adapter(EncoderModel& model, std::shared_ptr<AdapterSet> replacement) {
    const auto& current = model.adapter(AdapterKind::Language);
    if (!current) throw ContractError("swap_language_adapter: model has no language adapter attached");
    if (!replacement) throw ContractError("swap_language_adapter: replacement is null");
    const AdapterManifest& old_m = current->manifest();
    const AdapterManifest& new_m = replacement->manifest();
    if (new_m.kind != AdapterKind::Language) {
        throw ContractError("swap_language_adapter: '" + new_m.name + "' is a " + to_string(new_m.kind) + " adapter");
    }
    if (new_m.hidden_dim != old_m.hidden_dim || new_m.bottleneck_dim != old_m.bottleneck_dim ||
        new_m.num_blocks != old_m.num_blocks || new_m.scheme != old_m.scheme) {
        throw ContractError("swap_language_adapter: '" + new_m.name + "' (" + new_m.to_json().dump() +
                            ") does not match attached '" + old_m.name + "' (" + old_m.to_json().dump() + ")");
    }
    model.uninstall_adapter(AdapterKind::Language);
    model.install_adapter(std::move(replacement));
}

std::size_t count_params(const BottleneckAdapter& unit) { return unit.count_params(); }
std::size_t count_params(const InvertibleAdapter& unit) { return unit.count_params(); }
std::size_t count_params(const AdapterSet& set) { return set.count_params(); }

std::size_t count_params(const AdapterStackSpec& stack) {
    return (stack.language ? stack.language->count_params() : 0) + (stack.task ? stack.task->count_params() : 0);
}

std::string to_string(FreezeSetup setup) {
    switch (setup) {
        case FreezeSetup::A: return "A";
        case FreezeSetup::B: return "B";
        case FreezeSetup::CLang: return "C_lang";
        case FreezeSetup::CStack: return "C_stack";
        case FreezeSetup::DTrain: return "D_train";
        case FreezeSetup::DTransfer: return "D_transfer";
        case FreezeSetup::MlmLanguage: return "MLM_language";
    }
    return "?";
}

std::set<std::string> trainable_names(const EncoderModel& model, FreezeSetup setup) {
    const ParamStore& store = model.params();
    auto with_prefix = [&](std::set<std::string>& out, const std::string& prefix) {
        for (auto& n : store.names_with_prefix(prefix)) out.insert(std::move(n));
    };
    auto require = [&](AdapterKind kind) {
        if (!model.adapter(kind)) {
            throw ContractError("freeze policy " + to_string(setup) + " needs a " + to_string(kind) +
                                " adapter, none is attached");
        }
    };
    std::set<std::string> out;
    switch (setup) {
        case FreezeSetup::A:
            for (auto& n : store.names()) out.insert(std::move(n));
            break;
        case FreezeSetup::B:
        case FreezeSetup::CStack:
        case FreezeSetup::DTrain:
            require(AdapterKind::Task);
            if (setup != FreezeSetup::B) require(AdapterKind::Language);
            with_prefix(out, EncoderModel::adapter_prefix(AdapterKind::Task));
            with_prefix(out, "qa_head.");
            break;
        case FreezeSetup::CLang:
            require(AdapterKind::Language);
            with_prefix(out, EncoderModel::adapter_prefix(AdapterKind::Language));
            with_prefix(out, "qa_head.");
            break;
        case FreezeSetup::MlmLanguage:
            require(AdapterKind::Language);
            with_prefix(out, EncoderModel::adapter_prefix(AdapterKind::Language));
            break;
        case FreezeSetup::DTransfer:
            break;
    }
    return out;
}

void apply_freeze_policy(EncoderModel& model, FreezeSetup setup) {
    model.params().set_trainable(trainable_names(model, setup));
}

std::map<std::string, std::string> frozen_entry_hashes(const EncoderModel& model) {
    std::vector<std::string> frozen;
    for (const auto& name : model.params().names()) {
        if (!model.params().is_trainable(name)) frozen.push_back(name);
    }
    return entry_hashes(model.params(), frozen);
}

std::filesystem::path adapter_manifest_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".json");
}

void save_adapter(const std::filesystem::path& path, const AdapterSet& adapter) {
    save_params(path, adapter.params());
    std::ofstream out(adapter_manifest_path(path), std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + adapter_manifest_path(path).string() + "'");
    out << adapter.manifest().to_json().dump(2) << '\n';
}

AdapterSet load_adapter(const std::filesystem::path& path) {
    const auto manifest_path = adapter_manifest_path(path);
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("adapter manifest '" + manifest_path.string() + "' not found");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("adapter manifest '" + manifest_path.string() + "': " + e.what());
    }
    return AdapterSet::from_params(AdapterManifest::from_json(j), load_params(path));
}

std::shared_ptr<AdapterSet> load_adapter_for(const EncoderModel& model, const std::filesystem::path& path,
                                             AdapterKind expected_kind) {
    auto adapter = std::make_shared<AdapterSet>(load_adapter(path));
    const AdapterManifest& m = adapter->manifest();
    const auto& cfg = model.config();
    std::string problem;
    if (m.kind != expected_kind) {
        problem = "adapter kind is " + to_string(m.kind) + " but the target slot takes " + to_string(expected_kind);
    } else if (m.hidden_dim != cfg.hidden_dim) {
        problem = "adapter hidden dim " + std::to_string(m.hidden_dim) + " != model hidden dim " +
                  std::to_string(cfg.hidden_dim);
    } else if (m.num_blocks != cfg.num_blocks) {
        problem = "adapter covers " + std::to_string(m.num_blocks) + " blocks, model has " +
                  std::to_string(cfg.num_blocks);
    } else if (auto placement = model.placement(); placement && *placement != m.scheme) {
        problem = "adapter placement " + to_string(m.scheme) + " differs from the model's " + to_string(*placement);
    }
    if (!problem.empty()) {
        nlohmann::json model_manifest{{"encoder", cfg.to_json()},
                                      {"placement", model.placement() ? to_string(*model.placement()) : "none"}};
        throw ContractError("refusing to load '" + path.string() + "': " + problem + "\n  adapter manifest: " +
                            m.to_json().dump() + "\n  model manifest:   " + model_manifest.dump());
    }
    return adapter;
}

}  // namespace adaptqa
