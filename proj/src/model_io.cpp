// SPDX-License-Identifier: Apache-2.0

#include "adaptqa/model_io.h"

#include <fstream>

#include "adaptqa/adapters.h"
#include "adaptqa/container.h"
#include "adaptqa/errors.h"

namespace adaptqa {

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& path, const std::string& suffix) {
    return std::filesystem::path(path.string() + suffix);
}

}  // namespace

std::filesystem::path model_params_path(const std::filesystem::path& path) { return with_suffix(path, ".params"); }
std::filesystem::path model_manifest_path(const std::filesystem::path& path) { return with_suffix(path, ".json"); }
std::filesystem::path model_adapter_path(const std::filesystem::path& path, AdapterKind kind) {
    return with_suffix(path, "." + to_string(kind) + ".adapter");
}

nlohmann::json model_manifest(const EncoderModel& model, const Vocab& vocab) {
    nlohmann::json adapters = nlohmann::json::object();
    for (AdapterKind kind : {AdapterKind::Language, AdapterKind::Task}) {
        if (const auto& a = model.adapter(kind)) adapters[to_string(kind)] = a->manifest().to_json();
    }
    return {{"encoder", model.config().to_json()},
            {"placement", model.placement() ? to_string(*model.placement()) : "none"},
            {"occupied_slots", model.occupied_slots()},
            {"adapters", adapters},
            {"vocab", vocab.symbols()}};
}

std::vector<std::filesystem::path> save_model(const std::filesystem::path& path, const EncoderModel& model,
                                              const Vocab& vocab, const nlohmann::json& provenance) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::vector<std::filesystem::path> written;
    save_params(model_params_path(path), model.backbone_store());
    written.push_back(model_params_path(path));
    for (AdapterKind kind : {AdapterKind::Language, AdapterKind::Task}) {
        if (const auto& a = model.adapter(kind)) {
            save_adapter(model_adapter_path(path, kind), *a);
            written.push_back(model_adapter_path(path, kind));
            written.push_back(adapter_manifest_path(model_adapter_path(path, kind)));
        }
    }
    nlohmann::json manifest = model_manifest(model, vocab);
    if (!provenance.is_null()) manifest["provenance"] = provenance;
    std::ofstream out(model_manifest_path(path), std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + model_manifest_path(path).string() + "'");
    out << manifest.dump(2) << '\n';
    written.push_back(model_manifest_path(path));
    return written;
}

LoadedModel load_model(const std::filesystem::path& path, bool with_adapters) {
    std::ifstream in(model_manifest_path(path));
    if (!in) throw ConfigError("model manifest '" + model_manifest_path(path).string() + "' not found");
    LoadedModel loaded;
    try {
        in >> loaded.manifest;
        const EncoderConfig config = EncoderConfig::from_json(loaded.manifest.at("encoder"));
        loaded.vocab = Vocab(loaded.manifest.at("vocab").get<std::vector<std::string>>());
        if (loaded.vocab.size() > config.vocab_size) {
            throw ValidationError("model '" + path.string() + "': vocabulary of " +
                                  std::to_string(loaded.vocab.size()) + " symbols exceeds encoder vocab_size " +
                                  std::to_string(config.vocab_size));
        }
        loaded.model = std::make_unique<EncoderModel>(config, load_params(model_params_path(path)));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("model manifest '" + model_manifest_path(path).string() + "': " + e.what());
    }
    if (with_adapters) {
        const auto& adapters = loaded.manifest.value("adapters", nlohmann::json::object());
        AdapterStackSpec stack;
        std::optional<PlacementScheme> scheme;
        for (AdapterKind kind : {AdapterKind::Language, AdapterKind::Task}) {
            if (!adapters.contains(to_string(kind))) continue;
            auto set = load_adapter_for(*loaded.model, model_adapter_path(path, kind), kind);
            scheme = set->manifest().scheme;
            (kind == AdapterKind::Language ? stack.language : stack.task) = std::move(set);
        }
        if (scheme) attach(*loaded.model, stack, {*scheme});
    }
    return loaded;
}

}  // namespace adaptqa
