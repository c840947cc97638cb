// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//
// Set ADAPTQA_REAL_DATA_DIR to a directory holding <lang>/xquad_test.json,
// <lang>/mlqa_test.json and <lang>/mlqa_dev.json to compare real split
// sizes against the published ones (mismatches are reported, not failed).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <string>

#include "adaptqa/adapters.h"
#include "adaptqa/container.h"
#include "adaptqa/errors.h"
#include "adaptqa/grad_check.h"
#include "adaptqa/hashing.h"
#include "adaptqa/metrics.h"
#include "adaptqa/model_io.h"
#include "adaptqa/qa.h"
#include "adaptqa/rng.h"
#include "experiment_fixture.h"
#include "metric_golden.h"

using namespace adaptqa;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, value);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
    return m;
}

std::shared_ptr<AdapterSet> fresh_set(AdapterKind kind, PlacementScheme scheme, const EncoderConfig& c,
                                      std::size_t d, std::uint64_t seed) {
    AdapterManifest m;
    m.name = to_string(kind);
    m.kind = kind;
    m.scheme = scheme;
    m.hidden_dim = c.hidden_dim;
    m.bottleneck_dim = d;
    m.num_blocks = c.num_blocks;
    Rng rng(seed);
    return std::make_shared<AdapterSet>(AdapterSet::create(m, rng));
}

std::map<std::string, std::string> hashes_with_prefix(const ParamStore& store, const std::string& prefix,
                                                      bool strip = false) {
    std::map<std::string, std::string> out;
    for (const auto& name : store.names_with_prefix(prefix)) {
        const std::string key = strip ? name.substr(prefix.size()) : name;
        out[key] = entry_hash(key, store.get(name));
    }
    return out;
}

std::map<std::string, std::string> backbone_hashes(const ParamStore& store) {
    auto out = hashes_with_prefix(store, "embeddings.");
    for (auto& kv : hashes_with_prefix(store, "block.")) out.insert(kv);
    return out;
}

std::map<std::string, std::string> all_hashes(const ParamStore& store) {
    return hashes_with_prefix(store, "");
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::size_t elements = 0;
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        EncoderConfig c;
        c.vocab_size = 12;
        c.max_seq_len = 8;
        c.hidden_dim = 8;
        c.num_blocks = 2;
        c.num_heads = 2;
        c.ffn_dim = 16;
        c.dropout_rate = 0.0;
        c.seed = seed;
        EncoderModel model(c);
        auto task = fresh_set(AdapterKind::Task, PlacementScheme::Houlsby, c, 2, seed + 100);
        // Random up-projections so the down path carries gradient too.
        Rng perturb(seed + 200);
        for (const auto& [name, t] : task->params().entries()) {
            Tensor handle = t;
            for (auto& v : handle.mutable_data()) v = perturb.normal(0.0, 0.3);
        }
        attach(model, {nullptr, task}, {PlacementScheme::Houlsby});

        Rng rng(seed + 300);
        TokenizedFeature f;
        f.example_id = "grad-" + std::to_string(seed);
        const std::size_t seq = 6;
        for (std::size_t i = 0; i < seq; ++i) {
            f.token_ids.push_back(static_cast<std::int32_t>(Vocab::kNumReserved + rng.uniform_int(8)));
            f.context_mask.push_back(i >= 2);
            f.char_offsets.emplace_back(0, 0);
        }
        f.token_ids[1] = Vocab::kSeparator;
        const std::size_t gs = 2 + rng.uniform_int(4);
        const std::size_t ge = gs + rng.uniform_int(seq - gs);
        auto loss = [&] { return span_loss(qa_forward(model, f), gs, ge, f.context_mask); };
        const GradCheckResult r = finite_diff_check(loss, model.params(), 1e-4, model.params().names());
        worst = std::max(worst, r.max_relative_error);
        elements += r.elements_checked;
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-4 && secs < 60.0, "max relative error " + fmt("%.3g", worst) + " over " +
                                             std::to_string(elements) + " elements, 25 seeds, " + fmt("%.1f", secs) +
                                             " s (limits 1e-4, 60 s)"};
}

Outcome identity_at_init() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 7);
        EncoderConfig c;
        c.vocab_size = 50;
        c.max_seq_len = 24;
        c.hidden_dim = 8 * (1 + rng.uniform_int(4));
        c.num_heads = 2;
        c.ffn_dim = 2 * c.hidden_dim;
        c.num_blocks = 1 + rng.uniform_int(4);
        c.dropout_rate = 0.1;
        c.seed = seed;
        const PlacementScheme scheme = seed % 2 == 0 ? PlacementScheme::Pfeiffer : PlacementScheme::Houlsby;
        EncoderModel plain(c);
        EncoderModel stacked(c);
        attach(stacked,
               {fresh_set(AdapterKind::Language, scheme, c, c.hidden_dim / 8, seed + 1),
                fresh_set(AdapterKind::Task, scheme, c, c.hidden_dim / 8, seed + 2)},
               {scheme});
        std::vector<std::int32_t> ids(1 + rng.uniform_int(c.max_seq_len));
        for (auto& id : ids) id = static_cast<std::int32_t>(rng.uniform_int(c.vocab_size));
        NoGradGuard guard;
        worst = std::max(worst, max_abs_diff(plain.encode(ids), stacked.encode(ids)));
    }
    return {worst < 1e-10, "max element-wise change " + fmt("%.3g", worst) + " over 10 models (limit 1e-10)"};
}

Outcome freeze_invariants(const fixture::Workspace& ws) {
    std::string detail;
    bool ok = true;
    const LoadedModel input = load_model(ws.backbone);
    const auto input_backbone = backbone_hashes(input.model->params());
    const AdapterSet source = load_adapter(ws.adapters.at("en"));
    const auto source_language = all_hashes(source.params());

    for (Setup setup : {Setup::B, Setup::CStack, Setup::D}) {
        auto c = ws.config(setup);
        c.epochs = 1000;
        c.max_steps = 100;
        c.output_dir = ws.dir / "runs" / ("freeze-" + to_string(setup));
        const RunManifest m = run_setup(c);
        bool in_run = !m.freeze_checks.empty();
        for (const auto& check : m.freeze_checks) in_run = in_run && check.passed;

        // Independent check on the saved files.
        const fs::path saved = c.output_dir / (setup == Setup::D ? "stack" : "model");
        const LoadedModel out = load_model(saved);
        bool backbone_same = backbone_hashes(out.model->params()) == input_backbone;
        bool language_same = true;
        if (setup != Setup::B) {
            const AdapterSet trained = load_adapter(model_adapter_path(saved, AdapterKind::Language));
            language_same = all_hashes(trained.params()) == source_language;
        }
        const bool pass = in_run && backbone_same && language_same && m.optimizer_steps == 100;
        ok = ok && pass;
        detail += to_string(setup) + (setup == Setup::D ? "_train" : "") + ": " + std::to_string(m.optimizer_steps) +
                  " steps, in-run " + (in_run ? "ok" : "FAILED") + ", backbone " +
                  (backbone_same ? "unchanged" : "CHANGED") +
                  (setup == Setup::B ? "" : std::string(", language adapter ") + (language_same ? "unchanged" : "CHANGED")) +
                  "; ";
    }
    return {ok, detail};
}

Outcome invertibility(const fixture::Workspace& ws) {
    const auto& adapter = ws.adapter_results.at("en").adapter;
    const InvertibleAdapter* inv = adapter->invertible();
    double trained_norm = 0.0;
    for (const Tensor* t : {&inv->f.out, &inv->g.out}) {
        for (double v : t->data()) trained_norm = std::max(trained_norm, std::abs(v));
    }
    Rng rng(4242);
    double worst = 0.0;
    const std::size_t h = inv->hidden_dim();
    NoGradGuard guard;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t rows = 1 + rng.uniform_int(16);
        const double sd = trial % 4 == 3 ? 10.0 : 1.0;
        std::vector<double> d(rows * h);
        for (auto& v : d) v = rng.normal(0.0, sd);
        const Tensor e = Tensor::from_data({rows, h}, d);
        worst = std::max(worst, max_abs_diff(invertible_inverse(invertible_forward(e, *inv), *inv), e));
    }
    return {worst < 1e-8 && trained_norm > 0.0, "max roundtrip error " + fmt("%.3g", worst) +
                                                    " over 1000 matrices (limit 1e-8); trained coupling output max |w| " +
                                                    fmt("%.3g", trained_norm)};
}

Outcome swap_isolation(const fs::path& dir) {
    const auto t0 = std::chrono::steady_clock::now();
    fixture::WorkspaceOptions options;
    options.languages = {"en", "hi"};
    options.n_train = 200;
    options.n_test = 50;
    options.n_unlabeled = 400;
    options.pretrain_epochs = 5;
    options.adapter_epochs = 3;
    options.seed = 11;
    const fixture::Workspace ws = fixture::build_workspace(dir, options);
    auto c = ws.config(Setup::D, "en", "hi");
    c.epochs = 5;
    c.output_dir = dir / "runs" / "d";
    const RunManifest m = run_setup_d(c);
    const double secs = seconds_since(t0);
    const bool ok = m.swap && m.swap->task_adapter_sha256_before == m.swap->task_adapter_sha256_after &&
                    m.swap->backbone_sha256_before == m.swap->backbone_sha256_after && m.swap->post_swap_steps == 0 &&
                    secs < 300.0;
    return {ok, "task adapter " + std::string(m.swap && m.swap->task_adapter_sha256_before ==
                                                            m.swap->task_adapter_sha256_after
                                                  ? "unchanged"
                                                  : "CHANGED") +
                    " across swap, " + std::to_string(m.swap ? m.swap->post_swap_steps : 0) +
                    " post-swap steps, target F1 " + fmt("%.2f", m.eval_report.f1) + ", end to end " +
                    fmt("%.1f", secs) + " s (limit 300 s)"};
}

// Quadratic Levenshtein on integer symbols, written independently of edit_distance().
std::size_t dp_oracle(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
    for (std::size_t i = 0; i <= a.size(); ++i) t[i][0] = i;
    for (std::size_t j = 0; j <= b.size(); ++j) t[0][j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            t[i][j] = std::min({t[i - 1][j] + 1, t[i][j - 1] + 1, t[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        }
    }
    return t[a.size()][b.size()];
}

Outcome metric_oracles() {
    std::size_t golden_ok = 0;
    for (const auto& c : golden_metric_cases()) {
        if (exact_match(c.pred, c.golds) == c.em && std::abs(token_f1(c.pred, c.golds) - c.f1) < 1e-12) ++golden_ok;
    }
    const bool worked = std::abs(token_f1("green cat", {"cat"}) - 2.0 / 3.0) < 1e-15 &&
                        jaccard("green cat", {"cat"}) == 0.5;

    // Every pair of sequences of length <= 6 over a 4-symbol alphabet.
    std::vector<std::vector<int>> seqs{{}};
    for (std::size_t start = 0, len = 1; len <= 6; ++len) {
        const std::size_t end = seqs.size();
        for (std::size_t k = start; k < end; ++k) {
            for (int s = 0; s < 4; ++s) {
                auto next = seqs[k];
                next.push_back(s);
                seqs.push_back(std::move(next));
            }
        }
        start = end;
    }
    const std::vector<std::string> alphabet{"p", "q", "r", "s"};
    std::vector<Tokens> tokens;
    for (const auto& s : seqs) {
        Tokens t;
        for (int v : s) t.push_back(alphabet[static_cast<std::size_t>(v)]);
        tokens.push_back(std::move(t));
    }
    std::size_t wer_pairs = 0, wer_bad = 0;
    for (std::size_t g = 0; g < seqs.size(); ++g) {
        if (seqs[g].empty()) continue;
        const std::vector<Tokens> golds{tokens[g]};
        for (std::size_t p = 0; p < seqs.size(); ++p) {
            const double expected =
                static_cast<double>(dp_oracle(seqs[p], seqs[g])) / static_cast<double>(seqs[g].size());
            if (wer_tokens(tokens[p], golds) != expected) ++wer_bad;
            ++wer_pairs;
        }
    }

    Rng rng(99);
    const std::vector<std::string> words{"The", "cat", "a", "Dog", "dog", "!", "你", "好", "an", "sat"};
    std::size_t em_hits = 0, implication_bad = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        auto sample = [&] {
            std::string s;
            const std::size_t n = rng.uniform_int(4);
            for (std::size_t i = 0; i < n; ++i) s += words[rng.uniform_int(words.size())] + " ";
            return s;
        };
        const std::string pred = sample();
        const std::vector<std::string> golds{sample(), sample()};
        if (exact_match(pred, golds) == 1.0) {
            ++em_hits;
            if (token_f1(pred, golds) != 1.0 || wer(pred, golds) != 0.0) ++implication_bad;
        }
    }

    EvalReport high;
    high.language = "de";
    high.n_examples = 1;
    high.wer = 104.2;
    RunManifest m;
    m.row_label = "Language Adapter";
    m.eval_report = high;
    RunManifest m2 = m;
    m2.eval_report.language = "ar";
    m2.eval_report.wer = 107.0;
    const ReportTables tables = build_report({m, m2});
    const bool renders = tables.jaccard_wer.find("0.0 / 104.2") != std::string::npos &&
                         tables.jaccard_wer.find("0.0 / 107.0") != std::string::npos;

    const bool ok = golden_ok == 25 && golden_metric_cases().size() == 25 && worked && wer_bad == 0 &&
                    implication_bad == 0 && em_hits > 0 && renders;
    return {ok, "golden " + std::to_string(golden_ok) + "/25, WER oracle mismatches " + std::to_string(wer_bad) +
                    " of " + std::to_string(wer_pairs) + " pairs, EM=1 implication violations " +
                    std::to_string(implication_bad) + " (" + std::to_string(em_hits) +
                    " EM hits in 10^4 pairs), WER > 100 rendered: " + (renders ? "yes" : "no")};
}

Outcome overfit(const fixture::Workspace& ws) {
    auto a = ws.config(Setup::A);
    a.train_limit = 20;
    a.epochs = 1000;
    a.max_steps = 200;
    a.batch_size = 4;
    a.evaluate_train = true;
    const RunManifest ma = run_setup_a(a);

    auto b = ws.config(Setup::B);
    b.train_limit = 20;
    b.epochs = 1000;
    b.max_steps = 1000;
    b.batch_size = 4;
    b.evaluate_train = true;
    const RunManifest mb = run_setup_b(b);
    const LoadedModel backbone = load_model(ws.backbone);
    const EncoderConfig& c = backbone.model->config();
    const std::size_t d = c.hidden_dim / 8;
    const std::size_t adapter_closed_form = c.num_blocks * (2 * c.hidden_dim * d + d + c.hidden_dim);
    const std::size_t head = 2 * c.hidden_dim + 2;
    const bool counts = mb.extra.at("task_adapter_params").get<std::size_t>() == adapter_closed_form &&
                        mb.trainable_params == adapter_closed_form + head &&
                        mb.backbone_params == backbone.model->backbone_param_count();
    const double ratio = mb.trainable_ratio();

    const bool ok = ma.train_report && ma.train_report->n_examples == 20 && ma.train_report->em == 100.0 &&
                    ma.optimizer_steps <= 200 && mb.train_report && mb.train_report->n_examples == 20 &&
                    mb.train_report->em >= 90.0 && mb.optimizer_steps <= 1000 && ratio <= 0.05 && counts;
    return {ok, "A: train EM " + fmt("%.1f", ma.train_report ? ma.train_report->em : -1) + " after " +
                    std::to_string(ma.optimizer_steps) + " steps; B (pfeiffer, " + fmt("%.2f", 100 * ratio) +
                    "% trainable, counts " + (counts ? "match" : "MISMATCH") + "): train EM " +
                    fmt("%.1f", mb.train_report ? mb.train_report->em : -1) + " after " +
                    std::to_string(mb.optimizer_steps) + " steps"};
}

Outcome decode_oracle() {
    Rng rng(2024);
    std::size_t mismatches = 0;
    for (int draw = 0; draw < 100; ++draw) {
        const std::size_t seq = 1 + rng.uniform_int(32);
        const std::size_t max_len = 1 + rng.uniform_int(seq + 2);
        std::vector<bool> ctx(seq);
        bool any = false;
        for (std::size_t i = 0; i < seq; ++i) any = (ctx[i] = rng.uniform() < 0.7) || any;
        if (!any) ctx[rng.uniform_int(seq)] = true;
        // Every fourth draw uses small integers so that ties occur.
        std::vector<double> d(2 * seq);
        for (auto& v : d) v = draw % 4 == 0 ? static_cast<double>(rng.uniform_int(3)) : rng.normal();
        const Tensor logits = Tensor::from_data({seq, 2}, d);

        double best = -std::numeric_limits<double>::infinity();
        std::pair<std::size_t, std::size_t> arg{seq, seq};
        for (std::size_t i = 0; i < seq; ++i) {
            for (std::size_t j = i; j < seq && j - i < max_len; ++j) {
                if (!ctx[i] || !ctx[j]) continue;
                const double s = logits.at(i, 0) + logits.at(j, 1);
                if (s > best) {
                    best = s;
                    arg = {i, j};
                }
            }
        }
        const SpanPrediction p = decode_span(logits, ctx, max_len);
        if (p.start_idx != arg.first || p.end_idx != arg.second || p.score != best) ++mismatches;
    }
    return {mismatches == 0, std::to_string(mismatches) + " mismatches against brute force over 100 draws (seq <= 32)"};
}

std::vector<QAExample> synthetic_examples(const std::string& prefix, std::size_t n, const std::string& language) {
    std::vector<QAExample> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({prefix + std::to_string(i), language, "what?", "ab cd", {{"cd", 3}}});
    }
    return out;
}

Outcome split_construction() {
    Rng rng(5);
    std::size_t failures = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t a = rng.uniform_int(30), b = rng.uniform_int(30), dev = rng.uniform_int(30);
        const DatasetSplit s = build_split(synthetic_examples("xq-", a, "hi"), synthetic_examples("mq-", b, "hi"),
                                           synthetic_examples("dev-", dev, "hi"));
        std::set<std::string> train_ids;
        for (const auto& ex : s.train) train_ids.insert(ex.id);
        std::size_t collisions = 0;
        for (const auto& ex : s.test) collisions += train_ids.count(ex.id);
        if (s.train.size() != a + b || s.test.size() != dev || collisions != 0 || train_ids.size() != a + b) ++failures;
    }
    bool collision_refused = false;
    try {
        build_split(synthetic_examples("x-", 3, "hi"), synthetic_examples("m-", 4, "hi"), synthetic_examples("x-", 2, "hi"));
    } catch (const ValidationError&) {
        collision_refused = true;
    }
    const DatasetSplit hindi_like = build_split(synthetic_examples("x-", 3, "hi"), synthetic_examples("m-", 4, "hi"),
                                                synthetic_examples("d-", 2, "hi"));
    const bool mismatch_reported = !compare_with_reference(hindi_like).empty();

    std::string real = "no real data supplied (ADAPTQA_REAL_DATA_DIR unset)";
    if (const char* dir = std::getenv("ADAPTQA_REAL_DATA_DIR")) {
        real.clear();
        for (const auto& ref : reference_split_sizes()) {
            const fs::path base = fs::path(dir) / ref.language;
            DataConfig data;
            data.language = ref.language;
            data.xquad_test = base / "xquad_test.json";
            data.mlqa_test = base / "mlqa_test.json";
            data.mlqa_dev = base / "mlqa_dev.json";
            if (!fs::exists(data.xquad_test) || !fs::exists(data.mlqa_test) || !fs::exists(data.mlqa_dev)) continue;
            const DatasetSplit s = load_split(data);
            const std::string cmp = compare_with_reference(s);
            real += ref.language + " " + std::to_string(s.train.size()) + "/" + std::to_string(s.test.size()) +
                    (cmp.empty() ? " matches; " : " (" + cmp + "); ");
        }
        if (real.empty()) real = "ADAPTQA_REAL_DATA_DIR holds no complete language directory";
    }
    const bool ok = failures == 0 && collision_refused && mismatch_reported;
    return {ok, std::to_string(200 - failures) + "/200 random splits satisfy |train|=|a|+|b| with no collisions, "
                "collision refused: " + (collision_refused ? "yes" : "no") + ", size mismatch reported: " +
                (mismatch_reported ? "yes" : "no") + "; " + real};
}

Outcome directional_transfer(const fs::path& root, const fs::path& report_path) {
    ReportRow matched{"MAD-X, matched adapter (de)", {}};
    ReportRow mismatched{"MAD-X, mismatched adapter (es)", {}};
    double sum_matched = 0.0, sum_mismatched = 0.0;
    std::size_t seed_wins = 0;
    std::string per_seed;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        fixture::WorkspaceOptions options;
        options.n_train = 1000;
        options.n_test = 100;
        options.n_unlabeled = 400;
        options.pretrain_epochs = 8;
        options.adapter_epochs = 4;
        options.seed = 1000 + seed;
        const fixture::Workspace ws = fixture::build_workspace(root / ("seed-" + std::to_string(seed)), options);
        auto c = ws.config(Setup::D, "en", "de");
        c.epochs = 6;
        c.seed = seed;
        c.output_dir = ws.dir / "runs" / "d";
        const RunManifest same = run_setup_d(c);

        TransferConfig t;
        t.stack = c.output_dir / "stack";
        t.target_language_adapter = ws.adapters.at("es");
        t.target_data = c.target_data;
        const RunManifest other = transfer(t);

        const std::string column = "seed " + std::to_string(seed);
        matched.cells.emplace_back(column, same.eval_report);
        mismatched.cells.emplace_back(column, other.eval_report);
        sum_matched += same.eval_report.f1;
        sum_mismatched += other.eval_report.f1;
        if (same.eval_report.f1 >= other.eval_report.f1) ++seed_wins;
        per_seed += fmt("%.2f", same.eval_report.f1) + " vs " + fmt("%.2f", other.eval_report.f1) + "; ";
    }
    const double mean_matched = sum_matched / 5.0, mean_mismatched = sum_mismatched / 5.0;
    const ReportTables tables = render_tables({matched, mismatched});
    std::ofstream out(report_path, std::ios::trunc);
    out << "Zero-shot en -> de, task adapter trained on en with the en language adapter.\n\n"
        << tables.f1_em << '\n'
        << tables.jaccard_wer << '\n'
        << "mean F1 matched " << fmt("%.2f", mean_matched) << ", mismatched " << fmt("%.2f", mean_mismatched) << '\n';
    return {mean_matched >= mean_mismatched,
            "mean target F1 matched " + fmt("%.2f", mean_matched) + " vs mismatched " + fmt("%.2f", mean_mismatched) +
                " (per seed: " + per_seed + "matched ahead on " + std::to_string(seed_wins) + "/5); tables in " +
                report_path.string()};
}

Outcome determinism(const fixture::Workspace& ws) {
    std::string detail;
    bool ok = true;
    for (Setup setup : {Setup::A, Setup::B, Setup::CLang, Setup::CStack, Setup::D}) {
        std::string reports[2];
        for (int k = 0; k < 2; ++k) {
            auto c = ws.config(setup);
            c.output_dir = ws.dir / "runs" / ("det-" + to_string(setup) + "-" + std::to_string(k));
            run_setup(c);
            reports[k] = slurp(c.output_dir / "eval_report.json");
        }
        const bool same = !reports[0].empty() && reports[0] == reports[1];
        ok = ok && same;
        detail += to_string(setup) + (same ? " identical" : " DIFFERS") + ", ";
    }
    {
        TransferConfig t;
        t.stack = ws.dir / "runs" / "det-D-0" / "stack";
        t.target_language_adapter = ws.adapters.at("de");
        t.target_data = ws.config(Setup::D).target_data;
        std::string reports[2];
        for (int k = 0; k < 2; ++k) {
            t.output_dir = ws.dir / "runs" / ("det-transfer-" + std::to_string(k));
            transfer(t);
            reports[k] = slurp(t.output_dir / "eval_report.json");
        }
        const bool same = !reports[0].empty() && reports[0] == reports[1];
        ok = ok && same;
        detail += std::string("transfer") + (same ? " identical" : " DIFFERS") + ", ";
    }
    {
        MlmAdapterConfig m;
        m.backbone = ws.backbone;
        m.text = ws.corpus / "de.mlm.txt";
        m.language = "synthetic-de";
        m.epochs = 2;
        m.lr = 3e-3;
        m.seed = 100;
        std::string hashes[2];
        for (int k = 0; k < 2; ++k) {
            m.output = ws.dir / "runs" / ("det-mlm-" + std::to_string(k) + ".adapter");
            hashes[k] = train_language_adapter(m).adapter_sha256;
        }
        const bool same = hashes[0] == hashes[1];
        ok = ok && same;
        detail += std::string("train-mlm adapter") + (same ? " identical" : " DIFFERS");
    }
    return {ok, "eval_report.json bytes: " + detail};
}

}  // namespace

int main() {
    const fs::path root = fixture::scratch_dir("acceptance");
    const fs::path report_path = fs::current_path() / "directional_transfer_report.txt";
    std::size_t failed = 0;
    auto run = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail << " ("
                  << fmt("%.1f", seconds_since(t0)) << " s)" << std::endl;
    };

    fixture::WorkspaceOptions options;
    options.n_train = 200;
    options.n_test = 50;
    options.n_unlabeled = 400;
    options.pretrain_epochs = 5;
    options.adapter_epochs = 3;
    const fixture::Workspace ws = fixture::build_workspace(root / "shared", options);

    run(1, "Gradient correctness", gradient_correctness);
    run(2, "Identity at init", identity_at_init);
    run(3, "Freeze invariants", [&] { return freeze_invariants(ws); });
    run(4, "Invertibility", [&] { return invertibility(ws); });
    run(5, "Swap isolation and zero-shot contract", [&] { return swap_isolation(root / "setup-d"); });
    run(6, "Metric oracles", metric_oracles);
    run(7, "Overfit sanity", [&] { return overfit(ws); });
    run(8, "Decode oracle", decode_oracle);
    run(9, "Split construction", split_construction);
    run(10, "Directional transfer", [&] { return directional_transfer(root / "transfer", report_path); });
    run(11, "Determinism", [&] { return determinism(ws); });

    std::cout << (failed == 0 ? "all acceptance criteria passed" : std::to_string(failed) + " criteria failed")
              << std::endl;
    fs::remove_all(root);
    return failed == 0 ? 0 : 1;
}
