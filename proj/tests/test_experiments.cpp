// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <sstream>

#include "adaptqa/container.h"
#include "adaptqa/errors.h"
#include "adaptqa/hashing.h"
#include "adaptqa/model_io.h"
#include "doctest.h"
#include "experiment_fixture.h"

using namespace adaptqa;
namespace fs = std::filesystem;

namespace {

const fixture::Workspace& workspace() {
    static const fixture::Workspace ws = fixture::build_workspace(fixture::scratch_dir("unit"), {});
    return ws;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::map<std::string, std::string> backbone_hashes(const ParamStore& store) {
    std::vector<std::string> names;
    for (const auto& n : store.names()) {
        if (EncoderModel::is_backbone_name(n)) names.push_back(n);
    }
    return entry_hashes(store, names);
}

bool bit_identical(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        if (a.data()[i] != b.data()[i]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("setup names and config validation") {
    CHECK(parse_setup("C-lang") == Setup::CLang);
    CHECK(parse_setup("C_stack") == Setup::CStack);
    CHECK_THROWS_AS(parse_setup("E"), ConfigError);

    const auto& ws = workspace();
    auto b = ws.config(Setup::B);
    b.placement.reset();
    CHECK_THROWS_AS(b.validate(), ConfigError);

    auto d = ws.config(Setup::D);
    d.target_language_adapter.clear();
    CHECK_THROWS_AS(d.validate(), ConfigError);
    d = ws.config(Setup::D);
    d.source_language.clear();
    CHECK_THROWS_AS(d.validate(), ConfigError);

    CHECK_THROWS_AS(ExperimentConfig::from_json({{"setup", "A"}, {"epoch", 3}}), ConfigError);
    const auto a = ws.config(Setup::A);
    const ExperimentConfig back = ExperimentConfig::from_json(a.to_json());
    CHECK(back.to_json() == a.to_json());
}

TEST_CASE("missing data is a config error before any training") {
    const auto& ws = workspace();
    auto c = ws.config(Setup::A);
    c.data.train = ws.dir / "nope.json";
    c.output_dir = ws.dir / "runs" / "missing";
    CHECK_THROWS_AS(run_setup_a(c), ConfigError);
    CHECK_FALSE(fs::exists(c.output_dir));

    auto d = ws.config(Setup::D);
    d.target_language_adapter = ws.dir / "absent.adapter";
    CHECK_THROWS_AS(run_setup_d(d), ConfigError);
}

TEST_CASE("setup A with lr=0 scores exactly like the untrained model") {
    const auto& ws = workspace();
    auto c = ws.config(Setup::A);
    c.optimizer.lr = 0.0;
    c.epochs = 1;
    PreparedRun untrained = prepare_run(c);
    const EvalReport before = evaluate(*untrained.model, untrained.test, untrained.test_language, c.max_answer_len);
    const RunManifest m = run_setup_a(c);
    CHECK(m.eval_report.f1 == before.f1);
    CHECK(m.eval_report.em == before.em);
    CHECK(m.eval_report.jaccard == before.jaccard);
    CHECK(m.eval_report.wer == before.wer);
    CHECK(m.optimizer_steps > 0);
    CHECK(m.loss_curve.size() == 1);
}

TEST_CASE("setup A is deterministic down to the eval report bytes") {
    const auto& ws = workspace();
    auto c = ws.config(Setup::A);
    c.output_dir = ws.dir / "runs" / "a1";
    run_setup_a(c);
    c.output_dir = ws.dir / "runs" / "a2";
    run_setup_a(c);
    CHECK(slurp(ws.dir / "runs" / "a1" / "eval_report.json") == slurp(ws.dir / "runs" / "a2" / "eval_report.json"));
    CHECK(slurp(ws.dir / "runs" / "a1" / "model.params") == slurp(ws.dir / "runs" / "a2" / "model.params"));
}

TEST_CASE("setup B keeps the backbone and records placement and efficiency") {
    const auto& ws = workspace();
    auto c = ws.config(Setup::B);
    c.output_dir = ws.dir / "runs" / "b";
    const RunManifest m = run_setup_b(c);
    REQUIRE(m.freeze_checks.size() == 1);
    CHECK(m.freeze_checks[0].passed);
    CHECK(m.freeze_checks[0].policy == "B");
    CHECK(m.row_label == "Task Adapter (pfeiffer)");
    CHECK(m.trainable_ratio() < 0.05);
    CHECK_FALSE(m.fresh_backbone);

    // Independent check: backbone entries of the saved model equal the input backbone.
    const LoadedModel input = load_model(ws.backbone);
    const LoadedModel output = load_model(c.output_dir / "model");
    CHECK(backbone_hashes(input.model->params()) == backbone_hashes(output.model->params()));
}

TEST_CASE("houlsby and pfeiffer occupy 8 and 4 slots on a 4-block model") {
    const auto& ws = workspace();
    std::map<PlacementScheme, std::size_t> slots;
    for (PlacementScheme scheme : {PlacementScheme::Houlsby, PlacementScheme::Pfeiffer}) {
        auto c = ws.config(Setup::B);
        c.backbone.clear();
        c.encoder.vocab_size = 300;
        c.encoder.max_seq_len = 64;
        c.encoder.hidden_dim = 16;
        c.encoder.num_blocks = 4;
        c.encoder.num_heads = 2;
        c.encoder.ffn_dim = 32;
        c.placement = scheme;
        c.max_steps = 2;
        const RunManifest m = run_setup_b(c);
        CHECK(m.fresh_backbone);
        slots[scheme] = m.occupied_slots;
    }
    CHECK(slots[PlacementScheme::Houlsby] == 8);
    CHECK(slots[PlacementScheme::Pfeiffer] == 4);
}

TEST_CASE("language adapter training lowers held-out loss and reloads exactly") {
    const auto& ws = workspace();
    for (const auto& [lang, result] : ws.adapter_results) {
        INFO(lang);
        CHECK(result.held_out_loss_after < result.held_out_loss_before);
        CHECK(result.backbone_sha256_before == result.backbone_sha256_after);
        CHECK(result.freeze.passed);
        CHECK(sha256_file(ws.adapters.at(lang)) == result.adapter_sha256);
    }

    const auto& trained = ws.adapter_results.at("en").adapter;
    LoadedModel a = load_model(ws.backbone);
    LoadedModel b = load_model(ws.backbone);
    attach(*a.model, {trained, nullptr}, {trained->manifest().scheme});
    auto reloaded = load_adapter_for(*b.model, ws.adapters.at("en"), AdapterKind::Language);
    CHECK(reloaded->manifest().source_language == std::optional<std::string>("synthetic-en"));
    attach(*b.model, {reloaded, nullptr}, {reloaded->manifest().scheme});
    const std::vector<std::int32_t> ids{5, 9, 14, 3, 22, 7};
    NoGradGuard guard;
    CHECK(bit_identical(a.model->encode(ids), b.model->encode(ids)));
}

TEST_CASE("empty MLM corpus is refused") {
    const auto& ws = workspace();
    const fs::path empty = ws.dir / "empty.txt";
    std::ofstream(empty) << "\n  \n";
    MlmAdapterConfig m;
    m.backbone = ws.backbone;
    m.text = empty;
    m.language = "synthetic-en";
    m.output = ws.dir / "never.adapter";
    CHECK_THROWS_AS(train_language_adapter(m), ValidationError);
    CHECK_FALSE(fs::exists(m.output));
}

TEST_CASE("setup C: language-only trains the adapter, the stack keeps it frozen") {
    const auto& ws = workspace();
    const RunManifest lang = run_setup_c(ws.config(Setup::CLang));
    CHECK(lang.row_label == "Language Adapter");
    CHECK(lang.extra.at("language_adapter_sha256_before") != lang.extra.at("language_adapter_sha256_after"));

    const RunManifest stack = run_setup_c(ws.config(Setup::CStack));
    CHECK(stack.row_label == "Task + Language Adapter");
    CHECK(stack.extra.at("language_adapter_sha256_before") == stack.extra.at("language_adapter_sha256_after"));
    CHECK(stack.extra.at("slot_order_language_then_task") == true);
    CHECK(stack.freeze_checks.at(0).passed);

    // Trace oracle on a two-token input, independent of the driver's own check.
    LoadedModel m = load_model(ws.backbone);
    auto language = load_adapter_for(*m.model, ws.adapters.at("en"), AdapterKind::Language);
    AdapterManifest tm = language->manifest();
    tm.kind = AdapterKind::Task;
    tm.name = "task";
    Rng rng(3);
    attach(*m.model, {language, std::make_shared<AdapterSet>(AdapterSet::create(tm, rng))}, {tm.scheme});
    ForwardTrace trace;
    ForwardOptions options;
    options.trace = &trace;
    const std::vector<std::int32_t> ids{5, 6};
    m.model->encode(ids, {}, options);
    const std::vector<std::string> expected{"embedding:language", "block.0.ffn:language", "block.0.ffn:task",
                                            "block.1.ffn:language", "block.1.ffn:task"};
    CHECK(trace.events == expected);

    const ReportTables t = build_report({lang, stack});
    CHECK(t.f1_em.find("Language Adapter") < t.f1_em.find("Task + Language Adapter"));
    CHECK(std::count(t.f1_em.begin(), t.f1_em.end(), '\n') == 3);
}

TEST_CASE("setup C refuses an adapter built for another model") {
    const auto& ws = workspace();
    LoadedModel m = load_model(ws.backbone);
    AdapterManifest bad;
    bad.name = "wrong";
    bad.kind = AdapterKind::Language;
    bad.hidden_dim = m.model->config().hidden_dim * 2;
    bad.bottleneck_dim = 4;
    bad.num_blocks = m.model->config().num_blocks;
    Rng rng(1);
    const fs::path path = ws.dir / "models" / "wrong.adapter";
    save_adapter(path, AdapterSet::create(bad, rng));
    auto c = ws.config(Setup::CLang);
    c.language_adapter = path;
    CHECK_THROWS_AS(run_setup_c(c), ContractError);
}

TEST_CASE("setup D swaps without touching the task adapter and transfer reproduces it") {
    const auto& ws = workspace();
    auto c = ws.config(Setup::D);
    c.output_dir = ws.dir / "runs" / "d";
    const RunManifest m = run_setup_d(c);
    REQUIRE(m.swap);
    CHECK(m.swap->task_adapter_sha256_before == m.swap->task_adapter_sha256_after);
    CHECK(m.swap->backbone_sha256_before == m.swap->backbone_sha256_after);
    CHECK(m.swap->post_swap_steps == 0);
    CHECK(m.swap->source_adapter_sha256 != m.swap->target_adapter_sha256);
    REQUIRE(m.freeze_checks.size() == 2);
    CHECK(m.freeze_checks[0].policy == "D_train");
    CHECK(m.freeze_checks[1].policy == "D_transfer");
    CHECK(m.eval_report.language == "synthetic-de");
    CHECK(m.extra.at("source_eval").at("language") == "synthetic-en");

    TransferConfig t;
    t.stack = c.output_dir / "stack";
    t.target_language_adapter = ws.adapters.at("de");
    t.target_data = c.target_data;
    t.target_language = "synthetic-de";
    const RunManifest again = transfer(t);
    CHECK(again.eval_report.f1 == m.eval_report.f1);
    CHECK(again.eval_report.em == m.eval_report.em);
    CHECK(again.eval_report.per_example.size() == m.eval_report.per_example.size());
    for (std::size_t i = 0; i < m.eval_report.per_example.size(); ++i) {
        CHECK(again.eval_report.per_example[i].prediction == m.eval_report.per_example[i].prediction);
    }

    // A mismatched third-language adapter swaps in just as cleanly.
    t.target_language_adapter = ws.adapters.at("es");
    t.target_language.clear();
    const RunManifest third = transfer(t);
    CHECK(third.swap->task_adapter_sha256_before == third.swap->task_adapter_sha256_after);

    auto wrong = c;
    wrong.target_language = "synthetic-es";
    CHECK_THROWS_AS(run_setup_d(wrong), ConfigError);
}

TEST_CASE("report tables: single cell, blank cells, WER above 100, byte-identical re-emission") {
    EvalReport r;
    r.language = "hi";
    r.n_examples = 3;
    r.f1 = 200.0 / 3.0;
    r.em = 50.0;
    r.jaccard = 40.0;
    r.wer = 104.2;
    RunManifest one;
    one.setup = "A";
    one.row_label = report_row_label(Setup::A, std::nullopt);
    one.eval_report = r;
    const ReportTables single = build_report({one});
    CHECK(single.f1_em == "F1 / EM         hi\nFull fine-tune  66.67 / 50.0\n");
    CHECK(single.jaccard_wer == "Jaccard / WER   hi\nFull fine-tune  40.0 / 104.2\n");

    RunManifest madx = one;
    madx.setup = "D";
    madx.row_label = report_row_label(Setup::D, PlacementScheme::Pfeiffer);
    RunManifest english = one;
    english.eval_report.language = "en";
    const ReportTables both = build_report({madx, english});
    CHECK(both.f1_em ==
          "F1 / EM                     hi            en\n"
          "Full fine-tune                            66.67 / 50.0\n"
          "MAD-X (Multi-Task Adapter)  66.67 / 50.0\n");

    const auto& ws = workspace();
    const fs::path dir = ws.dir / "runs" / "report";
    write_run_outputs(dir, madx);
    const RunManifest loaded = RunManifest::from_json(read_json_file(dir / "manifest.json"));
    CHECK(build_report({loaded, english}).f1_em == both.f1_em);
    CHECK(build_report({loaded, english}).jaccard_wer == both.jaccard_wer);
}
