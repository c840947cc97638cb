// SPDX-License-Identifier: Apache-2.0
//
// Adapter composition on an EncoderModel: placement, stacking, freezing,
// language-adapter swapping, and adapter files.

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>

#include "adaptqa/adapter_units.h"
#include "adaptqa/encoder.h"

namespace adaptqa {

struct PlacementConfig {
    PlacementScheme scheme = PlacementScheme::Pfeiffer;

    bool occupies(SlotKind slot) const { return scheme_occupies(scheme, slot); }
    /// Occupied (block, slot) pairs for a model with `num_blocks` blocks.
    std::size_t occupied_slots(std::size_t num_blocks) const;
};

/// Language adapter feeds the task adapter inside every occupied slot.
struct AdapterStackSpec {
    std::shared_ptr<AdapterSet> language;
    std::shared_ptr<AdapterSet> task;
};

/// Populates the model's slots. Every adapter in the stack must match the
/// model's hidden size and block count and use `placement`'s scheme.
void attach(EncoderModel& model, const AdapterStackSpec& stack, const PlacementConfig& placement);

/// Replaces every language-kind unit (block units and the invertible unit)
/// with `replacement`. Task adapter and backbone tensors are untouched.
void swap_language_adapter(EncoderModel& model, std::shared_ptr<AdapterSet> replacement);

std::size_t count_params(const BottleneckAdapter& unit);
std::size_t count_params(const InvertibleAdapter& unit);
std::size_t count_params(const AdapterSet& set);
std::size_t count_params(const AdapterStackSpec& stack);

/// Which parameters train in each experimental phase.
enum class FreezeSetup {
    A,           // full fine-tune: everything
    B,           // task adapter + QA head
    CLang,       // language adapter + QA head
    CStack,      // task adapter + QA head (language adapter frozen)
    DTrain,      // task adapter + QA head (source language adapter frozen)
    DTransfer,   // nothing
    MlmLanguage  // language adapter only (masked-LM adapter training)
};

std::string to_string(FreezeSetup setup);

/// Trainable mask for `setup`. Throws ContractError when the setup needs an
/// adapter kind the model does not carry.
std::set<std::string> trainable_names(const EncoderModel& model, FreezeSetup setup);
/// Applies trainable_names() to the model's store.
void apply_freeze_policy(EncoderModel& model, FreezeSetup setup);

/// SHA-256 per entry for every parameter outside the current trainable mask.
std::map<std::string, std::string> frozen_entry_hashes(const EncoderModel& model);

/// Adapter file = parameter container at `path` plus "<path>.json" manifest.
void save_adapter(const std::filesystem::path& path, const AdapterSet& adapter);
AdapterSet load_adapter(const std::filesystem::path& path);
std::filesystem::path adapter_manifest_path(const std::filesystem::path& path);

/// Loads an adapter and checks it against the model and the slot kind it is
/// meant for; on mismatch the error message carries both manifests.
std::shared_ptr<AdapterSet> load_adapter_for(const EncoderModel& model, const std::filesystem::path& path,
                                             AdapterKind expected_kind);

}  // namespace adaptqa
