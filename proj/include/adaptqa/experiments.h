// SPDX-License-Identifier: Apache-2.0
//
// Experiment drivers: backbone pre-training, masked-LM language adapter
// training, the four QA setups, zero-shot transfer and report tables.
//
// Every driver verifies its freeze policy itself (SHA-256 of each frozen
// entry before and after training) and throws InvariantViolation on a
// mismatch, so a finished run always carries a passed check.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adaptqa/adam.h"
#include "adaptqa/adapters.h"
#include "adaptqa/encoder.h"
#include "adaptqa/metrics.h"
#include "adaptqa/squad.h"
#include "adaptqa/tokenizer.h"

namespace adaptqa {

enum class Setup { A, B, CLang, CStack, D };

std::string to_string(Setup setup);
/// Accepts "A", "B", "C_lang"/"C-lang", "C_stack"/"C-stack", "D".
Setup parse_setup(const std::string& text);

/// QA data for one language, either a ready train/test pair or the three
/// files the split is built from (train = xquad_test ++ mlqa_test,
/// test = mlqa_dev).
struct DataConfig {
    std::string language;
    std::filesystem::path train;
    std::filesystem::path test;
    std::filesystem::path xquad_test;
    std::filesystem::path mlqa_test;
    std::filesystem::path mlqa_dev;

    bool uses_split() const { return !xquad_test.empty() || !mlqa_test.empty() || !mlqa_dev.empty(); }
    bool empty() const { return train.empty() && test.empty() && !uses_split(); }
    nlohmann::json to_json() const;
    static DataConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
};

struct ExperimentConfig {
    Setup setup = Setup::A;
    /// Used when no backbone is given; otherwise the backbone's own config wins.
    EncoderConfig encoder;
    std::optional<PlacementScheme> placement;
    /// 0 selects hidden_dim / 8.
    std::size_t bottleneck_dim = 0;
    /// Training data (source language for D).
    DataConfig data;
    /// Setup D: target-language test data.
    DataConfig target_data;
    std::filesystem::path backbone;
    /// Setups C and D: adapter of the training language.
    std::filesystem::path language_adapter;
    /// Setup D.
    std::filesystem::path target_language_adapter;
    std::string source_language;
    std::string target_language;
    AdamOptions optimizer;
    std::size_t epochs = 5;
    std::size_t batch_size = 8;
    /// 0 means no limit beyond `epochs`.
    std::size_t max_steps = 0;
    /// Use only the first N training examples; 0 keeps all.
    std::size_t train_limit = 0;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir;
    FeaturizeOptions featurize;
    std::size_t max_answer_len = 30;
    /// Also score the training set after training.
    bool evaluate_train = false;

    /// Throws ConfigError naming the first missing or inconsistent field.
    void validate() const;
    nlohmann::json to_json() const;
    /// Relative paths are resolved against `base_dir`.
    static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
};

/// Reads a JSON config file; relative paths resolve against its directory.
nlohmann::json read_json_file(const std::filesystem::path& path);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct FreezeCheck {
    std::string policy;
    std::size_t frozen_entries = 0;
    bool passed = false;
    nlohmann::json to_json() const;
};

struct SwapRecord {
    std::string source_adapter_sha256;
    std::string target_adapter_sha256;
    std::string task_adapter_sha256_before;
    std::string task_adapter_sha256_after;
    std::string backbone_sha256_before;
    std::string backbone_sha256_after;
    std::size_t post_swap_steps = 0;
    nlohmann::json to_json() const;
    static SwapRecord from_json(const nlohmann::json& j);
};

struct RunManifest {
    std::string setup;
    std::string row_label;
    nlohmann::json config;
    /// File path -> SHA-256, for data, backbone and adapter inputs.
    std::map<std::string, std::string> input_hashes;
    /// Written adapter files -> SHA-256.
    std::map<std::string, std::string> adapter_hashes;
    /// Mean training loss of each epoch.
    std::vector<double> loss_curve;
    std::size_t optimizer_steps = 0;
    EvalReport eval_report;
    std::optional<EvalReport> train_report;
    double wall_clock_seconds = 0.0;
    std::uint64_t seed = 0;
    std::vector<FreezeCheck> freeze_checks;
    std::size_t occupied_slots = 0;
    std::size_t trainable_params = 0;
    std::size_t backbone_params = 0;
    bool fresh_backbone = false;
    std::size_t skipped_unalignable = 0;
    std::optional<SwapRecord> swap;
    nlohmann::json split_provenance;
    /// Empty when the split matches the published size or none is known.
    std::string reference_size_check;
    nlohmann::json extra = nlohmann::json::object();

    double trainable_ratio() const {
        return backbone_params == 0 ? 0.0 : static_cast<double>(trainable_params) / static_cast<double>(backbone_params);
    }
    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
};

/// Deterministic QA training loop shared by all setups.
struct TrainOptions {
    std::size_t epochs = 5;
    std::size_t batch_size = 8;
    std::size_t max_steps = 0;
    std::uint64_t seed = 0;
};

struct TrainResult {
    std::vector<double> loss_curve;
    std::size_t steps = 0;
    FreezeCheck freeze;
};

/// Applies `policy`, trains with mini-batch Adam (per-epoch shuffle), then
/// compares every frozen entry's hash with its value before training.
/// Features without a gold span are ignored.
TrainResult train_qa(EncoderModel& model, const std::vector<TokenizedFeature>& features, FreezeSetup policy,
                     Adam& optimizer, const TrainOptions& options);

EvalReport evaluate(const EncoderModel& model, const std::vector<TokenizedFeature>& features,
                    const std::string& language, std::size_t max_answer_len,
                    const nlohmann::json& provenance = nlohmann::json::object());

/// Re-draws the QA head from `seed` (weights N(0, 1/sqrt(H)), zero bias).
void reset_qa_head(EncoderModel& model, std::uint64_t seed);

/// Everything a setup needs before training: model, vocabulary and
/// featurized data. Missing files raise ConfigError before any work.
struct PreparedRun {
    std::unique_ptr<EncoderModel> model;
    Vocab vocab;
    DatasetSplit split;
    FeaturizedSet train;
    std::vector<TokenizedFeature> test;
    std::string test_language;
    std::map<std::string, std::string> input_hashes;
    bool fresh_backbone = false;
};

PreparedRun prepare_run(const ExperimentConfig& config);

DatasetSplit load_split(const DataConfig& data);

RunManifest run_setup_a(const ExperimentConfig& config);
RunManifest run_setup_b(const ExperimentConfig& config);
/// Dispatches on config.setup (CLang or CStack).
RunManifest run_setup_c(const ExperimentConfig& config);
RunManifest run_setup_d(const ExperimentConfig& config);
RunManifest run_setup(const ExperimentConfig& config);

/// Swap-and-evaluate on a saved language+task stack, no training.
struct TransferConfig {
    std::filesystem::path stack;
    std::filesystem::path target_language_adapter;
    DataConfig target_data;
    std::string target_language;
    std::size_t max_answer_len = 30;
    FeaturizeOptions featurize;
    std::filesystem::path output_dir;

    void validate() const;
    nlohmann::json to_json() const;
    static TransferConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
};

RunManifest transfer(const TransferConfig& config);

/// Masked-LM pre-training of a fresh backbone on unlabeled text.
struct PretrainConfig {
    EncoderConfig encoder;
    std::vector<std::filesystem::path> texts;
    std::size_t vocab_limit = 0;  // 0 = encoder.vocab_size
    std::size_t epochs = 3;
    std::size_t batch_size = 8;
    std::size_t max_steps = 0;
    double lr = 1e-3;
    double mask_rate = 0.15;
    std::uint64_t seed = 0;
    std::filesystem::path output;  // model path prefix

    void validate() const;
    nlohmann::json to_json() const;
    static PretrainConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
};

struct PretrainResult {
    std::vector<double> loss_curve;
    std::size_t steps = 0;
    std::size_t vocab_size = 0;
    std::string params_sha256;
    nlohmann::json to_json() const;
};

PretrainResult pretrain_backbone(const PretrainConfig& config);

/// Language adapter trained with masked-LM on one language's text, backbone
/// frozen. The last `held_out_fraction` of documents is used only to measure
/// the loss before and after training.
struct MlmAdapterConfig {
    std::filesystem::path backbone;
    std::filesystem::path text;
    std::string language;
    PlacementScheme placement = PlacementScheme::Pfeiffer;
    std::size_t bottleneck_dim = 0;
    std::size_t epochs = 3;
    std::size_t batch_size = 8;
    std::size_t max_steps = 0;
    double lr = 1e-3;
    double mask_rate = 0.15;
    double held_out_fraction = 0.1;
    std::uint64_t seed = 0;
    std::filesystem::path output;  // adapter file

    void validate() const;
    nlohmann::json to_json() const;
    static MlmAdapterConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
};

struct MlmAdapterResult {
    std::vector<double> loss_curve;
    std::size_t steps = 0;
    double held_out_loss_before = 0.0;
    double held_out_loss_after = 0.0;
    std::string backbone_sha256_before;
    std::string backbone_sha256_after;
    FreezeCheck freeze;
    std::string adapter_sha256;
    /// The trained adapter, as saved.
    std::shared_ptr<AdapterSet> adapter;
    nlohmann::json to_json() const;
};

MlmAdapterResult train_language_adapter(const MlmAdapterConfig& config);

/// Mean masked-token cross-entropy over `docs` with masks drawn from `seed`.
double mlm_loss(const EncoderModel& model, const Vocab& vocab, const std::vector<std::string>& docs,
                double mask_rate, std::uint64_t seed);

/// Reads one document per non-empty line.
std::vector<std::string> read_documents(const std::filesystem::path& path);

/// Row label used in report tables, e.g. "Task Adapter (pfeiffer)".
std::string report_row_label(Setup setup, std::optional<PlacementScheme> placement);

/// F1 / EM and Jaccard / WER tables over the manifests' eval reports. Rows
/// follow the setup order, columns the evaluation languages; a cell without
/// a run stays blank (e.g. MAD-X for the transfer source language).
ReportTables build_report(const std::vector<RunManifest>& manifests);

/// Writes manifest.json and eval_report.json (and train_report.json) into `dir`.
void write_run_outputs(const std::filesystem::path& dir, const RunManifest& manifest);

}  // namespace adaptqa
