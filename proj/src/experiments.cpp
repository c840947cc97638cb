// SPDX-License-Identifier: Apache-2.0

#include "adaptqa/experiments.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

#include "adaptqa/container.h"
#include "adaptqa/errors.h"
#include "adaptqa/hashing.h"
#include "adaptqa/mlm.h"
#include "adaptqa/model_io.h"
#include "adaptqa/ops.h"
#include "adaptqa/qa.h"
#include "adaptqa/rng.h"

namespace adaptqa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Sub-stream ids of the run seed.
constexpr std::uint64_t kStreamHead = 10;
constexpr std::uint64_t kStreamShuffle = 11;
constexpr std::uint64_t kStreamDropout = 12;
constexpr std::uint64_t kStreamMask = 13;
constexpr std::uint64_t kStreamHeldOut = 14;
constexpr std::uint64_t kStreamTaskAdapter = 20;
constexpr std::uint64_t kStreamLanguageAdapter = 30;

fs::path resolve(const fs::path& base, const fs::path& p) {
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return base / p;
}

fs::path path_field(const json& j, const char* key, const fs::path& base) {
    if (!j.contains(key) || j.at(key).is_null()) return {};
    return resolve(base, fs::path(j.at(key).get<std::string>()));
}

void reject_unknown_keys(const json& j, const std::set<std::string>& known, const std::string& what) {
    if (!j.is_object()) throw ConfigError(what + ": expected a JSON object");
    for (const auto& item : j.items()) {
        if (!known.count(item.key())) throw ConfigError(what + ": unknown key '" + item.key() + "'");
    }
}

void require_file(const fs::path& path, const std::string& what) {
    if (path.empty()) throw ConfigError(what + " is not set");
    if (!fs::is_regular_file(path)) throw ConfigError(what + " '" + path.string() + "' does not exist");
}

void require_model_files(const fs::path& path, const std::string& what) {
    require_file(model_manifest_path(path), what + " manifest");
    require_file(model_params_path(path), what + " parameters");
}

void require_adapter_files(const fs::path& path, const std::string& what) {
    require_file(path, what);
    require_file(adapter_manifest_path(path), what + " manifest");
}

void require_data_files(const DataConfig& data, const std::string& what, bool need_train) {
    if (data.uses_split()) {
        require_file(data.xquad_test, what + ".xquad_test");
        require_file(data.mlqa_test, what + ".mlqa_test");
        require_file(data.mlqa_dev, what + ".mlqa_dev");
        return;
    }
    if (need_train) require_file(data.train, what + ".train");
    require_file(data.test, what + ".test");
}

template <typename F>
auto with_config_errors(const std::string& what, F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

std::string now_hash(const fs::path& path) { return sha256_file(path); }

void hash_model_files(const fs::path& path, std::map<std::string, std::string>& out) {
    out[model_manifest_path(path).string()] = now_hash(model_manifest_path(path));
    out[model_params_path(path).string()] = now_hash(model_params_path(path));
}

void hash_adapter_files(const fs::path& path, std::map<std::string, std::string>& out) {
    out[path.string()] = now_hash(path);
    out[adapter_manifest_path(path).string()] = now_hash(adapter_manifest_path(path));
}

void hash_data_files(const DataConfig& data, std::map<std::string, std::string>& out) {
    for (const fs::path* p : {&data.train, &data.test, &data.xquad_test, &data.mlqa_test, &data.mlqa_dev}) {
        if (!p->empty()) out[p->string()] = now_hash(*p);
    }
}

std::size_t resolved_bottleneck(std::size_t requested, std::size_t hidden_dim) {
    return requested == 0 ? std::max<std::size_t>(1, hidden_dim / 8) : requested;
}

std::string file_label(const fs::path& p) { return p.filename().string(); }

std::string trained_on(const DataConfig& data) {
    if (data.uses_split()) {
        return file_label(data.xquad_test) + "+" + file_label(data.mlqa_test);
    }
    return file_label(data.train);
}

std::shared_ptr<AdapterSet> fresh_task_adapter(const EncoderModel& model, PlacementScheme scheme, std::size_t d,
                                               const ExperimentConfig& config) {
    AdapterManifest m;
    m.name = "task." + config.data.language;
    m.kind = AdapterKind::Task;
    m.scheme = scheme;
    m.hidden_dim = model.config().hidden_dim;
    m.bottleneck_dim = d;
    m.num_blocks = model.config().num_blocks;
    m.source_language = config.data.language;
    m.trained_on = trained_on(config.data);
    m.seed = config.seed;
    Rng rng = Rng(config.seed).fork(kStreamTaskAdapter);
    return std::make_shared<AdapterSet>(AdapterSet::create(m, rng));
}

std::string adapter_hash(const AdapterSet& set) { return params_hash(set.params()); }

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<std::size_t> to_targets(const std::vector<std::int32_t>& labels) {
    return {labels.begin(), labels.end()};
}

std::vector<std::int32_t> doc_ids(const std::string& doc, const Vocab& vocab, std::size_t max_len) {
    std::vector<std::int32_t> ids = tokenize(doc, vocab).ids;
    if (ids.size() > max_len) ids.resize(max_len);
    return ids;
}

// Masked-LM loss of one document, or an undefined tensor when nothing was masked.
Tensor doc_mlm_loss(const EncoderModel& model, const std::vector<std::int32_t>& ids, std::size_t vocab_size,
                    Rng& mask_rng, double mask_rate, const ForwardOptions& options) {
    if (ids.empty()) return {};
    MaskedSequence masked = mlm_mask(ids, vocab_size, mask_rng, mask_rate);
    if (masked.positions.empty()) return {};
    Tensor hidden = model.encode(masked.ids, {}, options);
    Tensor logits = model.mlm_logits(hidden, masked.positions);
    const auto targets = to_targets(masked.labels);
    return cross_entropy_rows(logits, targets);
}

// Runs `fn(batch)` over shuffled mini-batches for `epochs`, stopping after
// `max_steps` batches when nonzero. Returns per-epoch mean of fn's losses.
struct LoopStats {
    std::vector<double> curve;
    std::size_t steps = 0;
};

template <typename BatchFn>
LoopStats run_epochs(std::size_t n_items, std::size_t epochs, std::size_t batch_size, std::size_t max_steps,
                     Rng& shuffle_rng, BatchFn&& fn) {
    LoopStats stats;
    std::vector<std::size_t> order(n_items);
    for (std::size_t i = 0; i < n_items; ++i) order[i] = i;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double total = 0.0;
        std::size_t counted = 0;
        bool stop = false;
        for (std::size_t b = 0; b < order.size(); b += batch_size) {
            if (max_steps != 0 && stats.steps >= max_steps) {
                stop = true;
                break;
            }
            const std::size_t end = std::min(order.size(), b + batch_size);
            std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(b),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
            const auto [sum, count] = fn(batch);
            total += sum;
            counted += count;
            ++stats.steps;
        }
        if (counted > 0) stats.curve.push_back(total / static_cast<double>(counted));
        if (stop || (max_steps != 0 && stats.steps >= max_steps)) break;
    }
    return stats;
}

FreezeCheck verify_frozen(const EncoderModel& model, const std::map<std::string, std::string>& before,
                          const std::string& policy) {
    std::vector<std::string> names;
    for (const auto& [name, hash] : before) names.push_back(name);
    const auto after = entry_hashes(model.params(), names);
    std::vector<std::string> changed;
    for (const auto& [name, hash] : before) {
        if (after.at(name) != hash) changed.push_back(name);
    }
    if (!changed.empty()) {
        std::string list;
        for (std::size_t i = 0; i < changed.size() && i < 10; ++i) list += (i ? ", " : "") + changed[i];
        throw InvariantViolation("freeze policy " + policy + " violated: " + std::to_string(changed.size()) +
                                 " frozen entries changed (" + list + ")");
    }
    return {policy, before.size(), true};
}

json report_summary(const EvalReport& r) {
    return {{"language", r.language}, {"n_examples", r.n_examples}, {"f1", r.f1},
            {"em", r.em},             {"jaccard", r.jaccard},       {"wer", r.wer}};
}

bool slot_order_language_first(const EncoderModel& model, const TokenizedFeature& feature) {
    ForwardTrace trace;
    ForwardOptions options;
    options.trace = &trace;
    NoGradGuard guard;
    model.encode(feature.token_ids, {}, options);
    std::map<std::string, std::vector<std::string>> per_slot;
    for (const auto& e : trace.events) {
        const auto colon = e.rfind(':');
        per_slot[e.substr(0, colon)].push_back(e.substr(colon + 1));
    }
    for (const auto& [slot, kinds] : per_slot) {
        if (kinds.size() == 2 && !(kinds[0] == "language" && kinds[1] == "task")) return false;
    }
    return true;
}

// Shared tail of every setup: evaluation, output files, manifest fields.
void finish_run(RunManifest& manifest, PreparedRun& run, const ExperimentConfig& config,
                std::chrono::steady_clock::time_point start) {
    EncoderModel& model = *run.model;
    json provenance{{"setup", manifest.setup}, {"seed", config.seed}};
    json adapters = json::object();
    for (AdapterKind kind : {AdapterKind::Language, AdapterKind::Task}) {
        if (const auto& a = model.adapter(kind)) adapters[to_string(kind)] = a->manifest().to_json();
    }
    provenance["adapters"] = adapters;
    manifest.eval_report = evaluate(model, run.test, run.test_language, config.max_answer_len, provenance);
    if (config.evaluate_train) {
        manifest.train_report =
            evaluate(model, featurize_for_eval(run.split.train, run.vocab,
                                               {std::min(config.featurize.max_seq_len, model.config().max_seq_len),
                                                config.featurize.max_question_len}),
                     run.split.language, config.max_answer_len, provenance);
    }
    manifest.config = config.to_json();
    manifest.seed = config.seed;
    manifest.input_hashes.insert(run.input_hashes.begin(), run.input_hashes.end());
    manifest.occupied_slots = model.occupied_slots();
    manifest.backbone_params = model.backbone_param_count();
    manifest.fresh_backbone = run.fresh_backbone;
    manifest.skipped_unalignable = run.train.skipped_unalignable;
    manifest.split_provenance = run.split.provenance_json();
    manifest.reference_size_check = compare_with_reference(run.split);
    if (!config.output_dir.empty()) {
        const fs::path model_path = config.output_dir / "model";
        for (const auto& p : save_model(model_path, model, run.vocab, {{"setup", manifest.setup}})) {
            if (p.string().find(".adapter") != std::string::npos) manifest.adapter_hashes[p.string()] = now_hash(p);
        }
    }
    manifest.wall_clock_seconds = seconds_since(start);
    if (!config.output_dir.empty()) write_run_outputs(config.output_dir, manifest);
}

RunManifest start_manifest(const ExperimentConfig& config) {
    RunManifest m;
    m.setup = to_string(config.setup);
    m.row_label = report_row_label(config.setup, config.placement);
    return m;
}

TrainOptions train_options(const ExperimentConfig& config) {
    return {config.epochs, config.batch_size, config.max_steps, config.seed};
}

void record_training(RunManifest& manifest, const TrainResult& result, const EncoderModel& model) {
    manifest.loss_curve = result.loss_curve;
    manifest.optimizer_steps = result.steps;
    manifest.freeze_checks.push_back(result.freeze);
    manifest.trainable_params = model.params().count_trainable();
}

}  // namespace

// ---------------------------------------------------------------------------
// Configs

std::string to_string(Setup setup) {
    switch (setup) {
        case Setup::A: return "A";
        case Setup::B: return "B";
        case Setup::CLang: return "C_lang";
        case Setup::CStack: return "C_stack";
        case Setup::D: return "D";
    }
    return "?";
}

Setup parse_setup(const std::string& text) {
    if (text == "A") return Setup::A;
    if (text == "B") return Setup::B;
    if (text == "C_lang" || text == "C-lang") return Setup::CLang;
    if (text == "C_stack" || text == "C-stack") return Setup::CStack;
    if (text == "D") return Setup::D;
    throw ConfigError("unknown setup '" + text + "' (expected A, B, C-lang, C-stack or D)");
}

json DataConfig::to_json() const {
    json j{{"language", language}};
    auto put = [&](const char* key, const fs::path& p) {
        if (!p.empty()) j[key] = p.string();
    };
    put("train", train);
    put("test", test);
    put("xquad_test", xquad_test);
    put("mlqa_test", mlqa_test);
    put("mlqa_dev", mlqa_dev);
    return j;
}

DataConfig DataConfig::from_json(const json& j, const fs::path& base_dir) {
    reject_unknown_keys(j, {"language", "train", "test", "xquad_test", "mlqa_test", "mlqa_dev"}, "data");
    return with_config_errors("data", [&] {
        DataConfig d;
        d.language = j.value("language", std::string());
        d.train = path_field(j, "train", base_dir);
        d.test = path_field(j, "test", base_dir);
        d.xquad_test = path_field(j, "xquad_test", base_dir);
        d.mlqa_test = path_field(j, "mlqa_test", base_dir);
        d.mlqa_dev = path_field(j, "mlqa_dev", base_dir);
        return d;
    });
}

void ExperimentConfig::validate() const {
    encoder.validate();
    if (epochs == 0) throw ConfigError("epochs must be at least 1");
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (!(optimizer.lr >= 0.0)) throw ConfigError("optimizer.lr must be non-negative");
    if (max_answer_len == 0) throw ConfigError("max_answer_len must be at least 1");
    if (featurize.max_seq_len < 3) throw ConfigError("max_seq_len must be at least 3");
    if (data.empty()) throw ConfigError("data: no training data configured");
    if (data.language.empty()) throw ConfigError("data.language is not set");
    if (data.uses_split()) {
        if (data.xquad_test.empty() || data.mlqa_test.empty() || data.mlqa_dev.empty()) {
            throw ConfigError("data: split construction needs xquad_test, mlqa_test and mlqa_dev");
        }
    } else if (data.train.empty() || data.test.empty()) {
        throw ConfigError("data: both train and test files are required");
    }
    switch (setup) {
        case Setup::A: break;
        case Setup::B:
            if (!placement) throw ConfigError("setup B: placement scheme (houlsby or pfeiffer) is required");
            break;
        case Setup::CLang:
        case Setup::CStack:
            if (backbone.empty()) throw ConfigError("setup " + to_string(setup) + ": backbone is required");
            if (language_adapter.empty()) {
                throw ConfigError("setup " + to_string(setup) + ": language_adapter is required");
            }
            break;
        case Setup::D:
            if (backbone.empty()) throw ConfigError("setup D: backbone is required");
            if (source_language.empty()) throw ConfigError("setup D: source_language is required");
            if (target_language.empty()) throw ConfigError("setup D: target_language is required");
            if (language_adapter.empty()) throw ConfigError("setup D: language_adapter (source) is required");
            if (target_language_adapter.empty()) throw ConfigError("setup D: target_language_adapter is required");
            if (target_data.empty() || target_data.language.empty()) {
                throw ConfigError("setup D: target_data with a language and test file is required");
            }
            break;
    }
}

json ExperimentConfig::to_json() const {
    json j{{"setup", to_string(setup)},
           {"encoder", encoder.to_json()},
           {"placement", placement ? json(to_string(*placement)) : json(nullptr)},
           {"bottleneck_dim", bottleneck_dim},
           {"data", data.to_json()},
           {"optimizer", {{"lr", optimizer.lr}, {"beta1", optimizer.beta1}, {"beta2", optimizer.beta2},
                          {"eps", optimizer.eps}}},
           {"epochs", epochs},
           {"batch_size", batch_size},
           {"max_steps", max_steps},
           {"train_limit", train_limit},
           {"seed", seed},
           {"max_seq_len", featurize.max_seq_len},
           {"max_question_len", featurize.max_question_len},
           {"max_answer_len", max_answer_len},
           {"evaluate_train", evaluate_train}};
    if (!target_data.empty()) j["target_data"] = target_data.to_json();
    if (!backbone.empty()) j["backbone"] = backbone.string();
    if (!language_adapter.empty()) j["language_adapter"] = language_adapter.string();
    if (!target_language_adapter.empty()) j["target_language_adapter"] = target_language_adapter.string();
    if (!source_language.empty()) j["source_language"] = source_language;
    if (!target_language.empty()) j["target_language"] = target_language;
    if (!output_dir.empty()) j["output_dir"] = output_dir.string();
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
    reject_unknown_keys(j,
                        {"setup", "encoder", "placement", "bottleneck_dim", "data", "target_data", "backbone",
                         "language_adapter", "target_language_adapter", "source_language", "target_language",
                         "optimizer", "epochs", "batch_size", "max_steps", "train_limit", "seed", "output_dir",
                         "max_seq_len", "max_question_len", "max_answer_len", "evaluate_train"},
                        "experiment config");
    return with_config_errors("experiment config", [&] {
        ExperimentConfig c;
        if (j.contains("setup")) c.setup = parse_setup(j.at("setup").get<std::string>());
        if (j.contains("encoder")) c.encoder = EncoderConfig::from_json(j.at("encoder"));
        if (j.contains("placement") && !j.at("placement").is_null()) {
            try {
                c.placement = parse_placement_scheme(j.at("placement").get<std::string>());
            } catch (const ContractError& e) {
                throw ConfigError(e.what());
            }
        }
        c.bottleneck_dim = j.value("bottleneck_dim", c.bottleneck_dim);
        if (j.contains("data")) c.data = DataConfig::from_json(j.at("data"), base_dir);
        if (j.contains("target_data")) c.target_data = DataConfig::from_json(j.at("target_data"), base_dir);
        c.backbone = path_field(j, "backbone", base_dir);
        c.language_adapter = path_field(j, "language_adapter", base_dir);
        c.target_language_adapter = path_field(j, "target_language_adapter", base_dir);
        c.source_language = j.value("source_language", std::string());
        c.target_language = j.value("target_language", std::string());
        if (j.contains("optimizer")) {
            const json& o = j.at("optimizer");
            reject_unknown_keys(o, {"lr", "beta1", "beta2", "eps"}, "optimizer");
            c.optimizer.lr = o.value("lr", c.optimizer.lr);
            c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
            c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
            c.optimizer.eps = o.value("eps", c.optimizer.eps);
        }
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.max_steps = j.value("max_steps", c.max_steps);
        c.train_limit = j.value("train_limit", c.train_limit);
        c.seed = j.value("seed", c.seed);
        c.output_dir = path_field(j, "output_dir", {});
        c.featurize.max_seq_len = j.value("max_seq_len", c.featurize.max_seq_len);
        c.featurize.max_question_len = j.value("max_question_len", c.featurize.max_question_len);
        c.max_answer_len = j.value("max_answer_len", c.max_answer_len);
        c.evaluate_train = j.value("evaluate_train", c.evaluate_train);
        return c;
    });
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("'" + path.string() + "': " + e.what());
    }
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    return ExperimentConfig::from_json(read_json_file(path), path.parent_path());
}

// ---------------------------------------------------------------------------
// Manifest records

json FreezeCheck::to_json() const {
    return {{"policy", policy}, {"frozen_entries", frozen_entries}, {"passed", passed}};
}

json SwapRecord::to_json() const {
    return {{"source_adapter_sha256", source_adapter_sha256},
            {"target_adapter_sha256", target_adapter_sha256},
            {"task_adapter_sha256_before", task_adapter_sha256_before},
            {"task_adapter_sha256_after", task_adapter_sha256_after},
            {"backbone_sha256_before", backbone_sha256_before},
            {"backbone_sha256_after", backbone_sha256_after},
            {"post_swap_steps", post_swap_steps}};
}

SwapRecord SwapRecord::from_json(const json& j) {
    SwapRecord s;
    s.source_adapter_sha256 = j.at("source_adapter_sha256").get<std::string>();
    s.target_adapter_sha256 = j.at("target_adapter_sha256").get<std::string>();
    s.task_adapter_sha256_before = j.at("task_adapter_sha256_before").get<std::string>();
    s.task_adapter_sha256_after = j.at("task_adapter_sha256_after").get<std::string>();
    s.backbone_sha256_before = j.at("backbone_sha256_before").get<std::string>();
    s.backbone_sha256_after = j.at("backbone_sha256_after").get<std::string>();
    s.post_swap_steps = j.at("post_swap_steps").get<std::size_t>();
    return s;
}

json RunManifest::to_json() const {
    json checks = json::array();
    for (const auto& c : freeze_checks) checks.push_back(c.to_json());
    json j{{"setup", setup},
           {"row_label", row_label},
           {"config", config},
           {"input_hashes", input_hashes},
           {"adapter_hashes", adapter_hashes},
           {"loss_curve", loss_curve},
           {"optimizer_steps", optimizer_steps},
           {"eval_report", eval_report.to_json()},
           {"wall_clock_seconds", wall_clock_seconds},
           {"seed", seed},
           {"freeze_checks", checks},
           {"occupied_slots", occupied_slots},
           {"trainable_params", trainable_params},
           {"backbone_params", backbone_params},
           {"trainable_ratio", trainable_ratio()},
           {"fresh_backbone", fresh_backbone},
           {"skipped_unalignable", skipped_unalignable},
           {"split_provenance", split_provenance},
           {"reference_size_check", reference_size_check},
           {"extra", extra}};
    if (train_report) j["train_report"] = train_report->to_json();
    if (swap) j["swap"] = swap->to_json();
    return j;
}

RunManifest RunManifest::from_json(const json& j) {
    try {
        RunManifest m;
        m.setup = j.at("setup").get<std::string>();
        m.row_label = j.at("row_label").get<std::string>();
        m.config = j.value("config", json::object());
        m.input_hashes = j.value("input_hashes", std::map<std::string, std::string>{});
        m.adapter_hashes = j.value("adapter_hashes", std::map<std::string, std::string>{});
        m.loss_curve = j.value("loss_curve", std::vector<double>{});
        m.optimizer_steps = j.value("optimizer_steps", std::size_t{0});
        m.eval_report = EvalReport::from_json(j.at("eval_report"));
        if (j.contains("train_report")) m.train_report = EvalReport::from_json(j.at("train_report"));
        m.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
        m.seed = j.value("seed", std::uint64_t{0});
        for (const auto& c : j.value("freeze_checks", json::array())) {
            m.freeze_checks.push_back({c.at("policy").get<std::string>(), c.at("frozen_entries").get<std::size_t>(),
                                       c.at("passed").get<bool>()});
        }
        m.occupied_slots = j.value("occupied_slots", std::size_t{0});
        m.trainable_params = j.value("trainable_params", std::size_t{0});
        m.backbone_params = j.value("backbone_params", std::size_t{0});
        m.fresh_backbone = j.value("fresh_backbone", false);
        m.skipped_unalignable = j.value("skipped_unalignable", std::size_t{0});
        if (j.contains("swap")) m.swap = SwapRecord::from_json(j.at("swap"));
        m.split_provenance = j.value("split_provenance", json());
        m.reference_size_check = j.value("reference_size_check", std::string());
        m.extra = j.value("extra", json::object());
        return m;
    } catch (const json::exception& e) {
        throw ParseError(std::string("run manifest: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Training and evaluation

void reset_qa_head(EncoderModel& model, std::uint64_t seed) {
    Rng rng = Rng(seed).fork(kStreamHead);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(model.config().hidden_dim));
    for (double& v : model.params().get("qa_head.weight").mutable_data()) v = rng.normal(0.0, stddev);
    for (double& v : model.params().get("qa_head.bias").mutable_data()) v = 0.0;
}

TrainResult train_qa(EncoderModel& model, const std::vector<TokenizedFeature>& features, FreezeSetup policy,
                     Adam& optimizer, const TrainOptions& options) {
    std::vector<const TokenizedFeature*> usable;
    for (const auto& f : features) {
        if (f.gold_span) usable.push_back(&f);
    }
    if (usable.empty()) throw ValidationError("train_qa: no training feature has an aligned answer span");
    if (options.batch_size == 0) throw ConfigError("train_qa: batch_size must be at least 1");

    apply_freeze_policy(model, policy);
    const auto frozen_before = frozen_entry_hashes(model);
    Rng shuffle_rng = Rng(options.seed).fork(kStreamShuffle);
    Rng dropout_rng = Rng(options.seed).fork(kStreamDropout);
    ForwardOptions forward;
    forward.training = true;
    forward.dropout_rng = &dropout_rng;
    ParamStore& store = model.params();

    TrainResult result;
    const LoopStats stats = run_epochs(
        usable.size(), options.epochs, options.batch_size, options.max_steps, shuffle_rng,
        [&](const std::vector<std::size_t>& batch) {
            store.zero_grad();
            double total = 0.0;
            const double weight = 1.0 / static_cast<double>(batch.size());
            for (std::size_t idx : batch) {
                const TokenizedFeature& f = *usable[idx];
                Tensor loss = span_loss(qa_forward(model, f, forward), f.gold_span->first, f.gold_span->second,
                                        f.context_mask);
                total += loss.item();
                backward(scale(loss, weight));
            }
            optimizer.step(store);
            return std::pair<double, std::size_t>{total, batch.size()};
        });
    result.loss_curve = stats.curve;
    result.steps = stats.steps;
    result.freeze = verify_frozen(model, frozen_before, to_string(policy));
    return result;
}

EvalReport evaluate(const EncoderModel& model, const std::vector<TokenizedFeature>& features,
                    const std::string& language, std::size_t max_answer_len, const json& provenance) {
    std::vector<ExampleScore> scores;
    scores.reserve(features.size());
    for (const auto& f : features) {
        const SpanPrediction pred = predict(model, f, max_answer_len);
        scores.push_back(score_example(f.example_id, pred.answer_text, f.gold_answers));
    }
    return aggregate(scores, language, provenance);
}

// ---------------------------------------------------------------------------
// Data and model preparation

DatasetSplit load_split(const DataConfig& data) {
    if (data.uses_split()) {
        return build_split(load_squad_file(data.xquad_test, data.language),
                           load_squad_file(data.mlqa_test, data.language),
                           load_squad_file(data.mlqa_dev, data.language));
    }
    DatasetSplit split;
    split.language = data.language;
    if (!data.train.empty()) {
        split.train = load_squad_file(data.train, data.language);
        split.provenance.push_back({data.train.string(), split.train.size()});
    }
    if (!data.test.empty()) {
        split.test = load_squad_file(data.test, data.language);
        split.provenance.push_back({data.test.string(), split.test.size()});
    }
    std::set<std::string> train_ids;
    for (const auto& ex : split.train) train_ids.insert(ex.id);
    std::vector<std::string> shared;
    for (const auto& ex : split.test) {
        if (train_ids.count(ex.id)) shared.push_back(ex.id);
    }
    if (!shared.empty()) {
        std::string list;
        for (std::size_t i = 0; i < shared.size() && i < 10; ++i) list += (i ? ", " : "") + shared[i];
        throw ValidationError("ids present in both train and test: " + list);
    }
    return split;
}

PreparedRun prepare_run(const ExperimentConfig& config) {
    config.validate();
    require_data_files(config.data, "data", true);
    if (!config.backbone.empty()) require_model_files(config.backbone, "backbone");
    if (!config.language_adapter.empty()) require_adapter_files(config.language_adapter, "language_adapter");
    if (!config.target_language_adapter.empty()) {
        require_adapter_files(config.target_language_adapter, "target_language_adapter");
    }
    if (config.setup == Setup::D) require_data_files(config.target_data, "target_data", false);

    PreparedRun run;
    run.split = load_split(config.data);
    if (config.train_limit != 0 && run.split.train.size() > config.train_limit) {
        run.split.train.resize(config.train_limit);
    }
    hash_data_files(config.data, run.input_hashes);

    if (!config.backbone.empty()) {
        LoadedModel loaded = load_model(config.backbone);
        run.model = std::move(loaded.model);
        run.vocab = std::move(loaded.vocab);
        hash_model_files(config.backbone, run.input_hashes);
    } else {
        std::vector<std::string> texts;
        for (const auto& ex : run.split.train) {
            texts.push_back(ex.question);
            texts.push_back(ex.context);
        }
        run.vocab = Vocab::build(texts, config.encoder.vocab_size);
        run.model = std::make_unique<EncoderModel>(config.encoder);
        run.fresh_backbone = true;
    }
    if (!config.language_adapter.empty()) hash_adapter_files(config.language_adapter, run.input_hashes);
    if (!config.target_language_adapter.empty()) hash_adapter_files(config.target_language_adapter, run.input_hashes);
    reset_qa_head(*run.model, config.seed);

    const FeaturizeOptions fo{std::min(config.featurize.max_seq_len, run.model->config().max_seq_len),
                              config.featurize.max_question_len};
    run.train = featurize_for_training(run.split.train, run.vocab, fo);
    if (config.setup == Setup::D) {
        const DatasetSplit target = load_split(config.target_data);
        hash_data_files(config.target_data, run.input_hashes);
        run.test = featurize_for_eval(target.test, run.vocab, fo);
        run.test_language = config.target_data.language;
    } else {
        run.test = featurize_for_eval(run.split.test, run.vocab, fo);
        run.test_language = config.data.language;
    }
    if (run.test.empty()) throw ConfigError("test set is empty");
    return run;
}

// ---------------------------------------------------------------------------
// Setups

RunManifest run_setup_a(const ExperimentConfig& config) {
    if (config.setup != Setup::A) throw ConfigError("run_setup_a called with setup " + to_string(config.setup));
    const auto start = std::chrono::steady_clock::now();
    PreparedRun run = prepare_run(config);
    RunManifest manifest = start_manifest(config);
    Adam adam(config.optimizer);
    const TrainResult result = train_qa(*run.model, run.train.features, FreezeSetup::A, adam, train_options(config));
    record_training(manifest, result, *run.model);
    finish_run(manifest, run, config, start);
    return manifest;
}

RunManifest run_setup_b(const ExperimentConfig& config) {
    if (config.setup != Setup::B) throw ConfigError("run_setup_b called with setup " + to_string(config.setup));
    const auto start = std::chrono::steady_clock::now();
    PreparedRun run = prepare_run(config);
    RunManifest manifest = start_manifest(config);
    EncoderModel& model = *run.model;
    const std::size_t d = resolved_bottleneck(config.bottleneck_dim, model.config().hidden_dim);
    auto task = fresh_task_adapter(model, *config.placement, d, config);
    attach(model, {nullptr, task}, {*config.placement});
    Adam adam(config.optimizer);
    const TrainResult result = train_qa(model, run.train.features, FreezeSetup::B, adam, train_options(config));
    record_training(manifest, result, model);
    manifest.extra["task_adapter_params"] = count_params(*task);
    finish_run(manifest, run, config, start);
    return manifest;
}

RunManifest run_setup_c(const ExperimentConfig& config) {
    if (config.setup != Setup::CLang && config.setup != Setup::CStack) {
        throw ConfigError("run_setup_c called with setup " + to_string(config.setup));
    }
    const auto start = std::chrono::steady_clock::now();
    PreparedRun run = prepare_run(config);
    EncoderModel& model = *run.model;
    auto language = load_adapter_for(model, config.language_adapter, AdapterKind::Language);
    const PlacementScheme scheme = config.placement.value_or(language->manifest().scheme);
    ExperimentConfig effective = config;
    effective.placement = scheme;
    RunManifest manifest = start_manifest(effective);

    AdapterStackSpec stack{language, nullptr};
    if (config.setup == Setup::CStack) {
        const std::size_t d = resolved_bottleneck(config.bottleneck_dim, model.config().hidden_dim);
        stack.task = fresh_task_adapter(model, scheme, d, config);
    }
    attach(model, stack, {scheme});
    const std::string language_before = adapter_hash(*language);
    Adam adam(config.optimizer);
    const FreezeSetup policy = config.setup == Setup::CLang ? FreezeSetup::CLang : FreezeSetup::CStack;
    const TrainResult result = train_qa(model, run.train.features, policy, adam, train_options(config));
    record_training(manifest, result, model);
    const std::string language_after = adapter_hash(*language);
    if (config.setup == Setup::CStack && language_before != language_after) {
        throw InvariantViolation("C_stack: language adapter changed during task-adapter training");
    }
    manifest.extra["language_adapter_sha256_before"] = language_before;
    manifest.extra["language_adapter_sha256_after"] = language_after;
    if (config.setup == Setup::CStack && !run.train.features.empty()) {
        const bool ordered = slot_order_language_first(model, run.train.features.front());
        manifest.extra["slot_order_language_then_task"] = ordered;
        if (!ordered) throw InvariantViolation("C_stack: a slot applied the task unit before the language unit");
    }
    finish_run(manifest, run, effective, start);
    return manifest;
}

RunManifest run_setup_d(const ExperimentConfig& config) {
    if (config.setup != Setup::D) throw ConfigError("run_setup_d called with setup " + to_string(config.setup));
    const auto start = std::chrono::steady_clock::now();
    PreparedRun run = prepare_run(config);
    EncoderModel& model = *run.model;

    auto source = load_adapter_for(model, config.language_adapter, AdapterKind::Language);
    auto target = load_adapter_for(model, config.target_language_adapter, AdapterKind::Language);
    auto check_language = [](const AdapterSet& a, const std::string& expected, const char* role) {
        const auto& lang = a.manifest().source_language;
        if (lang && *lang != expected) {
            throw ConfigError(std::string("setup D: ") + role + " adapter '" + a.manifest().name +
                              "' was trained on '" + *lang + "', config says '" + expected + "'");
        }
    };
    check_language(*source, config.source_language, "source");
    check_language(*target, config.target_language, "target");

    const PlacementScheme scheme = config.placement.value_or(source->manifest().scheme);
    ExperimentConfig effective = config;
    effective.placement = scheme;
    RunManifest manifest = start_manifest(effective);

    // Steps 1-2: source language adapter stacked under a fresh task adapter.
    const std::size_t d = resolved_bottleneck(config.bottleneck_dim, model.config().hidden_dim);
    auto task = fresh_task_adapter(model, scheme, d, config);
    attach(model, {source, task}, {scheme});
    Adam adam(config.optimizer);
    const TrainResult result = train_qa(model, run.train.features, FreezeSetup::DTrain, adam, train_options(config));
    record_training(manifest, result, model);

    const FeaturizeOptions fo{std::min(config.featurize.max_seq_len, model.config().max_seq_len),
                              config.featurize.max_question_len};
    if (!run.split.test.empty()) {
        const EvalReport source_eval = evaluate(model, featurize_for_eval(run.split.test, run.vocab, fo),
                                                run.split.language, config.max_answer_len);
        manifest.extra["source_eval"] = report_summary(source_eval);
    }
    if (!config.output_dir.empty()) {
        const fs::path stack_path = config.output_dir / "stack";
        for (const auto& p : save_model(stack_path, model, run.vocab, {{"setup", "D_train"}})) {
            if (p.string().find(".adapter") != std::string::npos) manifest.adapter_hashes[p.string()] = now_hash(p);
        }
    }

    // Step 3: zero-shot swap to the target language adapter.
    SwapRecord swap;
    swap.source_adapter_sha256 = sha256_file(config.language_adapter);
    swap.target_adapter_sha256 = sha256_file(config.target_language_adapter);
    swap.task_adapter_sha256_before = adapter_hash(*task);
    swap.backbone_sha256_before = params_hash(model.backbone_store());
    const std::size_t steps_at_swap = adam.steps();
    swap_language_adapter(model, target);
    apply_freeze_policy(model, FreezeSetup::DTransfer);
    const auto frozen_before = frozen_entry_hashes(model);

    // Step 4: evaluation on the target language only.
    finish_run(manifest, run, effective, start);

    manifest.freeze_checks.push_back(verify_frozen(model, frozen_before, to_string(FreezeSetup::DTransfer)));
    swap.task_adapter_sha256_after = adapter_hash(*task);
    swap.backbone_sha256_after = params_hash(model.backbone_store());
    swap.post_swap_steps = adam.steps() - steps_at_swap;
    manifest.swap = swap;
    if (swap.task_adapter_sha256_before != swap.task_adapter_sha256_after) {
        throw InvariantViolation("setup D: task adapter changed across the language-adapter swap");
    }
    if (swap.backbone_sha256_before != swap.backbone_sha256_after) {
        throw InvariantViolation("setup D: backbone changed across the language-adapter swap");
    }
    if (swap.post_swap_steps != 0) {
        throw InvariantViolation("setup D: " + std::to_string(swap.post_swap_steps) + " optimizer steps after the swap");
    }
    manifest.wall_clock_seconds = seconds_since(start);
    if (!config.output_dir.empty()) write_run_outputs(config.output_dir, manifest);
    return manifest;
}

RunManifest run_setup(const ExperimentConfig& config) {
    switch (config.setup) {
        case Setup::A: return run_setup_a(config);
        case Setup::B: return run_setup_b(config);
        case Setup::CLang:
        case Setup::CStack: return run_setup_c(config);
        case Setup::D: return run_setup_d(config);
    }
    throw ConfigError("unknown setup");
}

// ---------------------------------------------------------------------------
// Transfer

void TransferConfig::validate() const {
    if (stack.empty()) throw ConfigError("transfer: stack is required");
    if (target_language_adapter.empty()) throw ConfigError("transfer: target_language_adapter is required");
    if (target_data.empty() || target_data.language.empty()) {
        throw ConfigError("transfer: target_data with a language and test file is required");
    }
    if (max_answer_len == 0) throw ConfigError("transfer: max_answer_len must be at least 1");
}

json TransferConfig::to_json() const {
    json j{{"stack", stack.string()},
           {"target_language_adapter", target_language_adapter.string()},
           {"target_data", target_data.to_json()},
           {"target_language", target_language},
           {"max_answer_len", max_answer_len},
           {"max_seq_len", featurize.max_seq_len},
           {"max_question_len", featurize.max_question_len}};
    if (!output_dir.empty()) j["output_dir"] = output_dir.string();
    return j;
}

TransferConfig TransferConfig::from_json(const json& j, const fs::path& base_dir) {
    reject_unknown_keys(j,
                        {"stack", "target_language_adapter", "target_data", "target_language", "max_answer_len",
                         "max_seq_len", "max_question_len", "output_dir", "seed"},
                        "transfer config");
    return with_config_errors("transfer config", [&] {
        TransferConfig c;
        c.stack = path_field(j, "stack", base_dir);
        c.target_language_adapter = path_field(j, "target_language_adapter", base_dir);
        if (j.contains("target_data")) c.target_data = DataConfig::from_json(j.at("target_data"), base_dir);
        c.target_language = j.value("target_language", std::string());
        c.max_answer_len = j.value("max_answer_len", c.max_answer_len);
        c.featurize.max_seq_len = j.value("max_seq_len", c.featurize.max_seq_len);
        c.featurize.max_question_len = j.value("max_question_len", c.featurize.max_question_len);
        c.output_dir = path_field(j, "output_dir", {});
        return c;
    });
}

RunManifest transfer(const TransferConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    config.validate();
    require_model_files(config.stack, "stack");
    require_adapter_files(config.target_language_adapter, "target_language_adapter");
    require_data_files(config.target_data, "target_data", false);

    LoadedModel loaded = load_model(config.stack, true);
    EncoderModel& model = *loaded.model;
    if (!model.adapter(AdapterKind::Language) || !model.adapter(AdapterKind::Task)) {
        throw ConfigError("transfer: '" + config.stack.string() + "' does not carry a language and a task adapter");
    }
    RunManifest manifest;
    manifest.setup = "D";
    manifest.row_label = report_row_label(Setup::D, model.placement());
    manifest.config = config.to_json();
    hash_model_files(config.stack, manifest.input_hashes);
    hash_adapter_files(config.target_language_adapter, manifest.input_hashes);
    hash_data_files(config.target_data, manifest.input_hashes);

    auto target = load_adapter_for(model, config.target_language_adapter, AdapterKind::Language);
    if (const auto& lang = target->manifest().source_language;
        lang && !config.target_language.empty() && *lang != config.target_language) {
        throw ConfigError("transfer: target adapter was trained on '" + *lang + "', config says '" +
                          config.target_language + "'");
    }
    SwapRecord swap;
    swap.source_adapter_sha256 = sha256_file(model_adapter_path(config.stack, AdapterKind::Language));
    swap.target_adapter_sha256 = sha256_file(config.target_language_adapter);
    swap.task_adapter_sha256_before = adapter_hash(*model.adapter(AdapterKind::Task));
    swap.backbone_sha256_before = params_hash(model.backbone_store());
    swap_language_adapter(model, target);
    apply_freeze_policy(model, FreezeSetup::DTransfer);
    const auto frozen_before = frozen_entry_hashes(model);

    const DatasetSplit split = load_split(config.target_data);
    const FeaturizeOptions fo{std::min(config.featurize.max_seq_len, model.config().max_seq_len),
                              config.featurize.max_question_len};
    const auto features = featurize_for_eval(split.test, loaded.vocab, fo);
    if (features.empty()) throw ConfigError("transfer: target test set is empty");
    json adapters = json::object();
    for (AdapterKind kind : {AdapterKind::Language, AdapterKind::Task}) {
        adapters[to_string(kind)] = model.adapter(kind)->manifest().to_json();
    }
    manifest.eval_report = evaluate(model, features, config.target_data.language, config.max_answer_len,
                                    {{"setup", "D"}, {"adapters", adapters}});

    manifest.freeze_checks.push_back(verify_frozen(model, frozen_before, to_string(FreezeSetup::DTransfer)));
    swap.task_adapter_sha256_after = adapter_hash(*model.adapter(AdapterKind::Task));
    swap.backbone_sha256_after = params_hash(model.backbone_store());
    swap.post_swap_steps = 0;
    if (swap.task_adapter_sha256_before != swap.task_adapter_sha256_after ||
        swap.backbone_sha256_before != swap.backbone_sha256_after) {
        throw InvariantViolation("transfer: task adapter or backbone changed across the swap");
    }
    manifest.swap = swap;
    manifest.occupied_slots = model.occupied_slots();
    manifest.backbone_params = model.backbone_param_count();
    manifest.split_provenance = split.provenance_json();
    manifest.wall_clock_seconds = seconds_since(start);
    if (!config.output_dir.empty()) write_run_outputs(config.output_dir, manifest);
    return manifest;
}

// ---------------------------------------------------------------------------
// Masked-LM training

std::vector<std::string> read_documents(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open text corpus '" + path.string() + "'");
    std::vector<std::string> docs;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") != std::string::npos) docs.push_back(line);
    }
    return docs;
}

double mlm_loss(const EncoderModel& model, const Vocab& vocab, const std::vector<std::string>& docs,
                double mask_rate, std::uint64_t seed) {
    NoGradGuard guard;
    Rng rng(seed);
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& doc : docs) {
        const auto ids = doc_ids(doc, vocab, model.config().max_seq_len);
        if (ids.empty()) continue;
        MaskedSequence masked = mlm_mask(ids, vocab.size(), rng, mask_rate);
        if (masked.positions.empty()) continue;
        Tensor logits = model.mlm_logits(model.encode(masked.ids), masked.positions);
        const auto targets = to_targets(masked.labels);
        total += cross_entropy_rows(logits, targets).item() * static_cast<double>(targets.size());
        count += targets.size();
    }
    if (count == 0) throw ValidationError("mlm_loss: no position was masked");
    return total / static_cast<double>(count);
}

namespace {

// Shared masked-LM loop; the store's trainable mask decides what moves.
LoopStats mlm_train(EncoderModel& model, const Vocab& vocab, const std::vector<std::vector<std::int32_t>>& docs,
                    Adam& adam, std::size_t epochs, std::size_t batch_size, std::size_t max_steps, double mask_rate,
                    std::uint64_t seed) {
    Rng shuffle_rng = Rng(seed).fork(kStreamShuffle);
    Rng dropout_rng = Rng(seed).fork(kStreamDropout);
    Rng mask_rng = Rng(seed).fork(kStreamMask);
    ForwardOptions forward;
    forward.training = true;
    forward.dropout_rng = &dropout_rng;
    ParamStore& store = model.params();
    return run_epochs(docs.size(), epochs, batch_size, max_steps, shuffle_rng, [&](const std::vector<std::size_t>& batch) {
        store.zero_grad();
        std::vector<Tensor> losses;
        for (std::size_t idx : batch) {
            Tensor loss = doc_mlm_loss(model, docs[idx], vocab.size(), mask_rng, mask_rate, forward);
            if (loss.defined()) losses.push_back(loss);
        }
        double total = 0.0;
        for (const Tensor& loss : losses) {
            total += loss.item();
            backward(scale(loss, 1.0 / static_cast<double>(losses.size())));
        }
        adam.step(store);
        return std::pair<double, std::size_t>{total, losses.size()};
    });
}

std::vector<std::vector<std::int32_t>> encode_docs(const std::vector<std::string>& docs, const Vocab& vocab,
                                                   std::size_t max_len) {
    std::vector<std::vector<std::int32_t>> out;
    for (const auto& d : docs) {
        auto ids = doc_ids(d, vocab, max_len);
        if (!ids.empty()) out.push_back(std::move(ids));
    }
    return out;
}

void validate_mlm_common(double lr, double mask_rate, std::size_t epochs, std::size_t batch_size,
                         const std::string& what) {
    if (!(lr >= 0.0)) throw ConfigError(what + ": lr must be non-negative");
    if (!(mask_rate > 0.0 && mask_rate <= 1.0)) throw ConfigError(what + ": mask_rate must be in (0, 1]");
    if (epochs == 0) throw ConfigError(what + ": epochs must be at least 1");
    if (batch_size == 0) throw ConfigError(what + ": batch_size must be at least 1");
}

}  // namespace

void PretrainConfig::validate() const {
    encoder.validate();
    if (texts.empty()) throw ConfigError("pretrain: at least one text file is required");
    if (output.empty()) throw ConfigError("pretrain: output is required");
    validate_mlm_common(lr, mask_rate, epochs, batch_size, "pretrain");
}

json PretrainConfig::to_json() const {
    std::vector<std::string> paths;
    for (const auto& t : texts) paths.push_back(t.string());
    return {{"encoder", encoder.to_json()}, {"texts", paths},     {"vocab_limit", vocab_limit},
            {"epochs", epochs},             {"batch_size", batch_size}, {"max_steps", max_steps},
            {"lr", lr},                     {"mask_rate", mask_rate},   {"seed", seed},
            {"output", output.string()}};
}

PretrainConfig PretrainConfig::from_json(const json& j, const fs::path& base_dir) {
    reject_unknown_keys(j,
                        {"encoder", "texts", "vocab_limit", "epochs", "batch_size", "max_steps", "lr", "mask_rate",
                         "seed", "output"},
                        "pretrain config");
    return with_config_errors("pretrain config", [&] {
        PretrainConfig c;
        if (j.contains("encoder")) c.encoder = EncoderConfig::from_json(j.at("encoder"));
        for (const auto& t : j.value("texts", json::array())) c.texts.push_back(resolve(base_dir, t.get<std::string>()));
        c.vocab_limit = j.value("vocab_limit", c.vocab_limit);
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.max_steps = j.value("max_steps", c.max_steps);
        c.lr = j.value("lr", c.lr);
        c.mask_rate = j.value("mask_rate", c.mask_rate);
        c.seed = j.value("seed", c.seed);
        c.output = path_field(j, "output", {});
        return c;
    });
}

json PretrainResult::to_json() const {
    return {{"loss_curve", loss_curve}, {"steps", steps}, {"vocab_size", vocab_size}, {"params_sha256", params_sha256}};
}

PretrainResult pretrain_backbone(const PretrainConfig& config) {
    config.validate();
    for (const auto& t : config.texts) require_file(t, "pretrain text");
    std::vector<std::string> docs;
    for (const auto& t : config.texts) {
        for (auto& d : read_documents(t)) docs.push_back(std::move(d));
    }
    if (docs.empty()) throw ValidationError("pretrain: the text corpus is empty");

    const std::size_t limit = config.vocab_limit == 0 ? config.encoder.vocab_size
                                                      : std::min(config.vocab_limit, config.encoder.vocab_size);
    Vocab vocab = Vocab::build(docs, limit);
    EncoderModel model(config.encoder);
    std::set<std::string> trainable;
    for (const auto& name : model.params().names()) {
        if (EncoderModel::is_backbone_name(name)) trainable.insert(name);
    }
    model.params().set_trainable(trainable);
    const auto encoded = encode_docs(docs, vocab, config.encoder.max_seq_len);
    Adam adam(AdamOptions{.lr = config.lr});
    const LoopStats stats = mlm_train(model, vocab, encoded, adam, config.epochs, config.batch_size, config.max_steps,
                                      config.mask_rate, config.seed);
    model.params().set_trainable({});

    PretrainResult result;
    result.loss_curve = stats.curve;
    result.steps = stats.steps;
    result.vocab_size = vocab.size();
    save_model(config.output, model, vocab, {{"pretrain", config.to_json()}});
    result.params_sha256 = sha256_file(model_params_path(config.output));
    return result;
}

void MlmAdapterConfig::validate() const {
    if (backbone.empty()) throw ConfigError("train-mlm: backbone is required");
    if (text.empty()) throw ConfigError("train-mlm: text is required");
    if (language.empty()) throw ConfigError("train-mlm: language is required");
    if (output.empty()) throw ConfigError("train-mlm: output is required");
    if (!(held_out_fraction >= 0.0 && held_out_fraction < 1.0)) {
        throw ConfigError("train-mlm: held_out_fraction must be in [0, 1)");
    }
    validate_mlm_common(lr, mask_rate, epochs, batch_size, "train-mlm");
}

json MlmAdapterConfig::to_json() const {
    return {{"backbone", backbone.string()},
            {"text", text.string()},
            {"language", language},
            {"placement", to_string(placement)},
            {"bottleneck_dim", bottleneck_dim},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"max_steps", max_steps},
            {"lr", lr},
            {"mask_rate", mask_rate},
            {"held_out_fraction", held_out_fraction},
            {"seed", seed},
            {"output", output.string()}};
}

MlmAdapterConfig MlmAdapterConfig::from_json(const json& j, const fs::path& base_dir) {
    reject_unknown_keys(j,
                        {"backbone", "text", "language", "placement", "bottleneck_dim", "epochs", "batch_size",
                         "max_steps", "lr", "mask_rate", "held_out_fraction", "seed", "output"},
                        "train-mlm config");
    return with_config_errors("train-mlm config", [&] {
        MlmAdapterConfig c;
        c.backbone = path_field(j, "backbone", base_dir);
        c.text = path_field(j, "text", base_dir);
        c.language = j.value("language", std::string());
        if (j.contains("placement")) {
            try {
                c.placement = parse_placement_scheme(j.at("placement").get<std::string>());
            } catch (const ContractError& e) {
                throw ConfigError(e.what());
            }
        }
        c.bottleneck_dim = j.value("bottleneck_dim", c.bottleneck_dim);
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.max_steps = j.value("max_steps", c.max_steps);
        c.lr = j.value("lr", c.lr);
        c.mask_rate = j.value("mask_rate", c.mask_rate);
        c.held_out_fraction = j.value("held_out_fraction", c.held_out_fraction);
        c.seed = j.value("seed", c.seed);
        c.output = path_field(j, "output", {});
        return c;
    });
}

json MlmAdapterResult::to_json() const {
    return {{"loss_curve", loss_curve},
            {"steps", steps},
            {"held_out_loss_before", held_out_loss_before},
            {"held_out_loss_after", held_out_loss_after},
            {"backbone_sha256_before", backbone_sha256_before},
            {"backbone_sha256_after", backbone_sha256_after},
            {"freeze_check", freeze.to_json()},
            {"adapter_sha256", adapter_sha256}};
}

MlmAdapterResult train_language_adapter(const MlmAdapterConfig& config) {
    config.validate();
    require_model_files(config.backbone, "backbone");
    require_file(config.text, "text corpus");
    std::vector<std::string> docs = read_documents(config.text);
    if (docs.empty()) throw ValidationError("train-mlm: corpus '" + config.text.string() + "' is empty");

    LoadedModel loaded = load_model(config.backbone);
    EncoderModel& model = *loaded.model;
    std::vector<std::string> held_out;
    if (config.held_out_fraction > 0.0) {
        if (docs.size() < 2) throw ValidationError("train-mlm: need at least two documents to hold one out");
        const auto n = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::floor(config.held_out_fraction * static_cast<double>(docs.size()))));
        held_out.assign(docs.end() - static_cast<std::ptrdiff_t>(n), docs.end());
        docs.resize(docs.size() - n);
    }

    AdapterManifest m;
    m.name = "language." + config.language;
    m.kind = AdapterKind::Language;
    m.scheme = config.placement;
    m.hidden_dim = model.config().hidden_dim;
    m.bottleneck_dim = resolved_bottleneck(config.bottleneck_dim, m.hidden_dim);
    m.num_blocks = model.config().num_blocks;
    m.source_language = config.language;
    m.trained_on = file_label(config.text);
    m.seed = config.seed;
    Rng adapter_rng = Rng(config.seed).fork(kStreamLanguageAdapter);
    auto adapter = std::make_shared<AdapterSet>(AdapterSet::create(m, adapter_rng));
    attach(model, {adapter, nullptr}, {config.placement});
    apply_freeze_policy(model, FreezeSetup::MlmLanguage);

    MlmAdapterResult result;
    const auto frozen_before = frozen_entry_hashes(model);
    result.backbone_sha256_before = params_hash(model.backbone_store());
    const std::uint64_t held_seed = Rng(config.seed).fork(kStreamHeldOut).next_u64();
    if (!held_out.empty()) result.held_out_loss_before = mlm_loss(model, loaded.vocab, held_out, config.mask_rate, held_seed);

    const auto encoded = encode_docs(docs, loaded.vocab, model.config().max_seq_len);
    Adam adam(AdamOptions{.lr = config.lr});
    const LoopStats stats = mlm_train(model, loaded.vocab, encoded, adam, config.epochs, config.batch_size,
                                      config.max_steps, config.mask_rate, config.seed);
    result.loss_curve = stats.curve;
    result.steps = stats.steps;
    if (!held_out.empty()) result.held_out_loss_after = mlm_loss(model, loaded.vocab, held_out, config.mask_rate, held_seed);

    result.freeze = verify_frozen(model, frozen_before, to_string(FreezeSetup::MlmLanguage));
    result.backbone_sha256_after = params_hash(model.backbone_store());
    if (result.backbone_sha256_before != result.backbone_sha256_after) {
        throw InvariantViolation("train-mlm: backbone changed during language-adapter training");
    }
    if (config.output.has_parent_path()) fs::create_directories(config.output.parent_path());
    save_adapter(config.output, *adapter);
    result.adapter_sha256 = sha256_file(config.output);
    result.adapter = adapter;
    return result;
}

// ---------------------------------------------------------------------------
// Reports

std::string report_row_label(Setup setup, std::optional<PlacementScheme> placement) {
    switch (setup) {
        case Setup::A: return "Full fine-tune";
        case Setup::B: return "Task Adapter (" + (placement ? to_string(*placement) : std::string("?")) + ")";
        case Setup::CLang: return "Language Adapter";
        case Setup::CStack: return "Task + Language Adapter";
        case Setup::D: return "MAD-X (Multi-Task Adapter)";
    }
    return "?";
}

ReportTables build_report(const std::vector<RunManifest>& manifests) {
    const std::vector<std::string> row_order{"Full fine-tune",   "Task Adapter (houlsby)",  "Task Adapter (pfeiffer)",
                                             "Language Adapter", "Task + Language Adapter", "MAD-X (Multi-Task Adapter)"};
    std::vector<ReportRow> rows;
    auto row_for = [&](const std::string& label) -> ReportRow& {
        for (auto& r : rows) {
            if (r.label == label) return r;
        }
        rows.push_back({label, {}});
        return rows.back();
    };
    for (const auto& m : manifests) {
        ReportRow& row = row_for(m.row_label);
        const std::string& lang = m.eval_report.language;
        auto it = std::find_if(row.cells.begin(), row.cells.end(), [&](const auto& c) { return c.first == lang; });
        // A later manifest for the same cell replaces the earlier one.
        if (it != row.cells.end()) {
            it->second = m.eval_report;
        } else {
            row.cells.emplace_back(lang, m.eval_report);
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [&](const ReportRow& a, const ReportRow& b) {
        auto rank = [&](const std::string& label) {
            return static_cast<std::size_t>(std::find(row_order.begin(), row_order.end(), label) - row_order.begin());
        };
        return rank(a.label) < rank(b.label);
    });

    // Columns: the seven evaluation languages in their usual order, then
    // anything else by first appearance.
    const std::vector<std::string> language_order{"hi", "de", "es", "ar", "zh", "vi", "en"};
    auto base_language = [](const std::string& tag) {
        const std::string prefix = "synthetic-";
        return tag.rfind(prefix, 0) == 0 ? tag.substr(prefix.size()) : tag;
    };
    std::vector<std::string> columns;
    for (const auto& r : rows) {
        for (const auto& [lang, report] : r.cells) {
            if (std::find(columns.begin(), columns.end(), lang) == columns.end()) columns.push_back(lang);
        }
    }
    std::stable_sort(columns.begin(), columns.end(), [&](const std::string& a, const std::string& b) {
        auto rank = [&](const std::string& tag) {
            return static_cast<std::size_t>(std::find(language_order.begin(), language_order.end(), base_language(tag)) -
                                            language_order.begin());
        };
        return rank(a) < rank(b);
    });
    return render_tables(rows, columns);
}

void write_run_outputs(const fs::path& dir, const RunManifest& manifest) {
    fs::create_directories(dir);
    auto write = [&](const fs::path& p, const json& j) {
        std::ofstream out(p, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
        out << j.dump(2) << '\n';
    };
    write(dir / "manifest.json", manifest.to_json());
    write(dir / "eval_report.json", manifest.eval_report.to_json());
    if (manifest.train_report) write(dir / "train_report.json", manifest.train_report->to_json());
}

}  // namespace adaptqa
