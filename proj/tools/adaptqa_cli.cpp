// SPDX-License-Identifier: Apache-2.0
//
// adaptqa: command-line driver for corpus generation, masked-LM training,
// the QA setups, zero-shot transfer and report tables.
//
// Exit codes: 0 success, 1 other failure, 2 bad configuration or input,
// 3 invariant violation (frozen weights changed, updates after a swap, ...).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "adaptqa/errors.h"
#include "adaptqa/experiments.h"
#include "adaptqa/synth.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace adaptqa;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string output;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c, const std::string& output_help) {
    cmd->add_option("-c,--config", c.config, "JSON config file");
    cmd->add_option("--seed", c.seed, "Run seed (overrides the config; default 0)");
    cmd->add_option("-o,--output", c.output, output_help);
    cmd->add_option("--set", c.overrides, "Override a config key, e.g. --set optimizer.lr=0.001")->take_all();
}

// key.path=value; the value is parsed as JSON when possible, else kept as a string.
void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("--set: empty key segment in '" + key + "'");
        if (!node->is_object()) throw ConfigError("--set: '" + key + "' descends into a non-object");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

struct LoadedJson {
    json value = json::object();
    fs::path base_dir;
};

LoadedJson load_with_overrides(const Common& c) {
    LoadedJson out;
    if (!c.config.empty()) {
        out.value = read_json_file(c.config);
        out.base_dir = fs::path(c.config).parent_path();
    }
    for (const auto& o : c.overrides) apply_override(out.value, o);
    if (c.seed) out.value["seed"] = *c.seed;
    return out;
}

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

int cmd_synth(const Common& c) {
    if (c.output.empty()) throw ConfigError("synth: --output directory is required");
    const LoadedJson cfg = load_with_overrides(c);
    SynthSpec spec;
    try {
        spec = SynthSpec::from_json(cfg.value);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("synth config: ") + e.what());
    }
    const auto paths = write_synth_corpus(c.output, synth_corpus(spec));
    for (const auto& p : paths) std::cout << p.string() << '\n';
    return 0;
}

int cmd_pretrain(const Common& c) {
    LoadedJson cfg = load_with_overrides(c);
    if (!c.output.empty()) cfg.value["output"] = c.output;
    const PretrainConfig config = PretrainConfig::from_json(cfg.value, cfg.base_dir);
    const PretrainResult result = pretrain_backbone(config);
    json out = result.to_json();
    out["config"] = config.to_json();
    write_json(config.output.string() + ".pretrain.json", out);
    std::cout << "backbone " << config.output.string() << ": vocab " << result.vocab_size << ", " << result.steps
              << " steps, final loss " << (result.loss_curve.empty() ? 0.0 : result.loss_curve.back()) << '\n';
    return 0;
}

int cmd_train_mlm(const Common& c) {
    LoadedJson cfg = load_with_overrides(c);
    if (!c.output.empty()) cfg.value["output"] = c.output;
    const MlmAdapterConfig config = MlmAdapterConfig::from_json(cfg.value, cfg.base_dir);
    const MlmAdapterResult result = train_language_adapter(config);
    json out = result.to_json();
    out["config"] = config.to_json();
    write_json(config.output.string() + ".train.json", out);
    std::cout << "language adapter " << config.output.string() << ": held-out MLM loss "
              << result.held_out_loss_before << " -> " << result.held_out_loss_after << '\n';
    return 0;
}

int cmd_run(const Common& c, const std::string& setup) {
    LoadedJson cfg = load_with_overrides(c);
    if (!setup.empty()) cfg.value["setup"] = setup;
    if (!c.output.empty()) cfg.value["output_dir"] = c.output;
    const ExperimentConfig config = ExperimentConfig::from_json(cfg.value, cfg.base_dir);
    const RunManifest manifest = run_setup(config);
    const ReportTables tables = build_report({manifest});
    std::cout << tables.f1_em << '\n' << tables.jaccard_wer;
    return 0;
}

int cmd_transfer(const Common& c) {
    LoadedJson cfg = load_with_overrides(c);
    cfg.value.erase("seed");
    if (!c.output.empty()) cfg.value["output_dir"] = c.output;
    const TransferConfig config = TransferConfig::from_json(cfg.value, cfg.base_dir);
    const RunManifest manifest = transfer(config);
    const ReportTables tables = build_report({manifest});
    std::cout << tables.f1_em << '\n' << tables.jaccard_wer;
    return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& output) {
    std::vector<RunManifest> manifests;
    for (const auto& input : inputs) {
        fs::path p(input);
        if (fs::is_directory(p)) p /= "manifest.json";
        manifests.push_back(RunManifest::from_json(read_json_file(p)));
    }
    if (manifests.empty()) throw ConfigError("report: at least one manifest is required");
    const ReportTables tables = build_report(manifests);
    const std::string text = tables.f1_em + "\n" + tables.jaccard_wer;
    if (output.empty()) {
        std::cout << text;
    } else {
        std::ofstream out(output, std::ios::trunc | std::ios::binary);
        if (!out) throw std::runtime_error("cannot write '" + output + "'");
        out << text;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adapter-based cross-lingual extractive QA experiments"};
    app.require_subcommand(1);

    Common synth_opts, pretrain_opts, mlm_opts, run_opts, transfer_opts;
    auto* synth = app.add_subcommand("synth", "Generate synthetic multilingual QA corpora");
    add_common(synth, synth_opts, "Output directory");
    auto* pretrain = app.add_subcommand("pretrain", "Masked-LM pre-training of a fresh backbone");
    add_common(pretrain, pretrain_opts, "Model path prefix");
    auto* mlm = app.add_subcommand("train-mlm", "Train a language adapter with masked-LM on unlabeled text");
    add_common(mlm, mlm_opts, "Adapter file");
    auto* run = app.add_subcommand("run", "Run one QA setup");
    add_common(run, run_opts, "Output directory");
    std::string setup;
    run->add_option("--setup", setup, "A | B | C-lang | C-stack | D")->required();
    auto* xfer = app.add_subcommand("transfer", "Swap the language adapter of a saved stack and evaluate");
    add_common(xfer, transfer_opts, "Output directory");
    auto* report = app.add_subcommand("report", "Render F1 / EM and Jaccard / WER tables from run manifests");
    std::vector<std::string> report_inputs;
    std::string report_output;
    report->add_option("manifests", report_inputs, "manifest.json files or run directories")->required();
    report->add_option("-o,--output", report_output, "Write the tables to a file instead of stdout");

    CLI11_PARSE(app, argc, argv);
    try {
        if (synth->parsed()) return cmd_synth(synth_opts);
        if (pretrain->parsed()) return cmd_pretrain(pretrain_opts);
        if (mlm->parsed()) return cmd_train_mlm(mlm_opts);
        if (run->parsed()) return cmd_run(run_opts, setup);
        if (xfer->parsed()) return cmd_transfer(transfer_opts);
        if (report->parsed()) return cmd_report(report_inputs, report_output);
    } catch (const InvariantViolation& e) {
        std::cerr << "invariant violation: " << e.what() << '\n';
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
