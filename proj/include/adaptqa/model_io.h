// SPDX-License-Identifier: Apache-2.0
//
// Model files: "<path>.params" holds backbone and QA head, "<path>.json" the
// manifest (encoder config, vocabulary, slot occupancy), and attached
// adapters are written next to it as "<path>.<kind>.adapter".

#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "adaptqa/encoder.h"
#include "adaptqa/tokenizer.h"

namespace adaptqa {

struct LoadedModel {
    std::unique_ptr<EncoderModel> model;
    Vocab vocab;
    nlohmann::json manifest;
};

nlohmann::json model_manifest(const EncoderModel& model, const Vocab& vocab);

/// Returns every file written.
std::vector<std::filesystem::path> save_model(const std::filesystem::path& path, const EncoderModel& model,
                                              const Vocab& vocab, const nlohmann::json& provenance = {});

/// Loads backbone, QA head and vocabulary. Adapters recorded in the manifest
/// are attached when `with_adapters` is set.
LoadedModel load_model(const std::filesystem::path& path, bool with_adapters = false);

std::filesystem::path model_params_path(const std::filesystem::path& path);
std::filesystem::path model_manifest_path(const std::filesystem::path& path);
std::filesystem::path model_adapter_path(const std::filesystem::path& path, AdapterKind kind);

}  // namespace adaptqa
