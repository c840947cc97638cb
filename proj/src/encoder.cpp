// SPDX-License-Identifier: Apache-2.0

#include "adaptqa/encoder.h"

#include <cmath>

#include "adaptqa/errors.h"
#include "adaptqa/ops.h"

namespace adaptqa {

namespace {

std::string block_name(std::size_t b, const std::string& rest) { return "block." + std::to_string(b) + "." + rest; }

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

}  // namespace

void EncoderConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("encoder config: " + msg); };
    if (vocab_size == 0 || max_seq_len == 0 || hidden_dim == 0 || num_heads == 0 || ffn_dim == 0) {
        fail("vocab_size, max_seq_len, hidden_dim, num_heads and ffn_dim must be >= 1");
    }
    if (hidden_dim % num_heads != 0) {
        fail("hidden_dim " + std::to_string(hidden_dim) + " is not divisible by num_heads " +
             std::to_string(num_heads));
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        fail("dropout_rate must lie in [0, 1)");
    }
}

nlohmann::json EncoderConfig::to_json() const {
    return {{"vocab_size", vocab_size}, {"max_seq_len", max_seq_len}, {"hidden_dim", hidden_dim},
            {"num_blocks", num_blocks}, {"num_heads", num_heads},     {"ffn_dim", ffn_dim},
            {"dropout_rate", dropout_rate}, {"seed", seed}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
    EncoderConfig c;
    try {
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
        c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
        c.num_blocks = j.value("num_blocks", c.num_blocks);
        c.num_heads = j.value("num_heads", c.num_heads);
        c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
        c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("encoder config: ") + e.what());
    }
    return c;
}

std::vector<std::pair<std::string, Shape>> backbone_layout(const EncoderConfig& c) {
    const std::size_t h = c.hidden_dim, f = c.ffn_dim;
    std::vector<std::pair<std::string, Shape>> layout{
        {"embeddings.token", {c.vocab_size, h}},
        {"embeddings.position", {c.max_seq_len, h}},
    };
    for (std::size_t b = 0; b < c.num_blocks; ++b) {
        for (const char* proj : {"query", "key", "value", "output"}) {
            layout.push_back({block_name(b, std::string("attention.") + proj + ".weight"), {h, h}});
            layout.push_back({block_name(b, std::string("attention.") + proj + ".bias"), {h}});
        }
        layout.push_back({block_name(b, "attention_norm.gain"), {h}});
        layout.push_back({block_name(b, "attention_norm.bias"), {h}});
        layout.push_back({block_name(b, "ffn.intermediate.weight"), {h, f}});
        layout.push_back({block_name(b, "ffn.intermediate.bias"), {f}});
        layout.push_back({block_name(b, "ffn.output.weight"), {f, h}});
        layout.push_back({block_name(b, "ffn.output.bias"), {h}});
        layout.push_back({block_name(b, "ffn_norm.gain"), {h}});
        layout.push_back({block_name(b, "ffn_norm.bias"), {h}});
    }
    layout.push_back({"qa_head.weight", {h, 2}});
    layout.push_back({"qa_head.bias", {2}});
    return layout;
}

EncoderModel::EncoderModel(const EncoderConfig& config) : config_(config) {
    config_.validate();
    init_params();
}

EncoderModel::EncoderModel(const EncoderConfig& config, ParamStore backbone)
    : config_(config), params_(std::move(backbone)) {
    config_.validate();
    validate_backbone();
}

void EncoderModel::init_params() {
    Rng rng(config_.seed);
    for (const auto& [name, shape] : backbone_layout(config_)) {
        std::vector<double> data(shape_numel(shape), 0.0);
        const bool is_bias = name.ends_with(".bias");
        if (name.ends_with("norm.gain")) {
            std::fill(data.begin(), data.end(), 1.0);
        } else if (!is_bias) {
            // Embedding rows and linear maps: N(0, 1/sqrt(fan)).
            const double fan = static_cast<double>(starts_with(name, "embeddings.") ? shape[1] : shape[0]);
            const double stddev = 1.0 / std::sqrt(fan);
            for (double& v : data) v = rng.normal(0.0, stddev);
        }
        params_.add(name, Tensor::from_data(shape, std::move(data)));
    }
}

void EncoderModel::validate_backbone() const {
    const auto layout = backbone_layout(config_);
    for (const auto& [name, shape] : layout) {
        if (!params_.contains(name)) {
            throw ValidationError("backbone is missing '" + name + "'");
        }
        if (params_.get(name).shape() != shape) {
            throw ValidationError("backbone entry '" + name + "' has shape " +
                                  shape_to_string(params_.get(name).shape()) + ", config implies " +
                                  shape_to_string(shape));
        }
    }
    for (const auto& name : params_.names()) {
        if (!is_backbone_name(name) && !is_head_name(name)) {
            throw ValidationError("backbone store holds unexpected entry '" + name + "'");
        }
    }
    if (params_.size() != layout.size()) {
        throw ValidationError("backbone store holds " + std::to_string(params_.size()) + " entries, config implies " +
                              std::to_string(layout.size()));
    }
}

Tensor EncoderModel::maybe_dropout(const Tensor& x, const ForwardOptions& options) const {
    if (!options.training || config_.dropout_rate == 0.0) return x;
    if (!options.dropout_rng) throw ContractError("training forward with dropout needs a dropout rng");
    return dropout(x, config_.dropout_rate, *options.dropout_rng);
}

Tensor EncoderModel::embed(std::span<const std::int32_t> ids, const ForwardOptions& options) const {
    if (ids.empty()) throw ContractError("embed: empty token sequence");
    if (ids.size() > config_.max_seq_len) {
        throw ContractError("sequence of " + std::to_string(ids.size()) + " tokens exceeds max_seq_len " +
                            std::to_string(config_.max_seq_len));
    }
    for (std::int32_t id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
            throw ContractError("token id " + std::to_string(id) + " outside vocabulary of " +
                                std::to_string(config_.vocab_size));
        }
    }
    std::vector<std::int32_t> positions(ids.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<std::int32_t>(i);
    Tensor e = add(gather_rows(params_.get("embeddings.token"), ids),
                   gather_rows(params_.get("embeddings.position"), positions));
    if (const InvertibleAdapter* inv = embedding_slot()) {
        e = invertible_forward(e, *inv);
        if (options.trace) options.trace->events.push_back("embedding:language");
    }
    return maybe_dropout(e, options);
}

Tensor EncoderModel::apply_slot(std::size_t block, SlotKind slot, Tensor h, const ForwardOptions& options) const {
    for (const std::shared_ptr<AdapterSet>* set : {&language_, &task_}) {
        if (!*set) continue;
        if (const BottleneckAdapter* unit = (*set)->unit(block, slot)) {
            h = bottleneck_forward(h, *unit);
            if (options.trace) {
                options.trace->events.push_back(block_name(block, to_string(slot)) + ":" + to_string(unit->kind));
            }
        }
    }
    return h;
}

Tensor EncoderModel::self_attention(std::size_t block, const Tensor& x, const std::vector<bool>& padding,
                                    const ForwardOptions& options) const {
    const std::size_t seq = x.dim(0), h = config_.hidden_dim, heads = config_.num_heads;
    const std::size_t head_dim = h / heads;
    std::vector<bool> pad(seq, false);
    if (!padding.empty()) {
        if (padding.size() != seq) {
            throw ContractError("padding mask has " + std::to_string(padding.size()) + " entries for " +
                                std::to_string(seq) + " positions");
        }
        pad = padding;
    }

    auto proj = [&](const char* which) {
        return add_bias(matmul(x, params_.get(block_name(block, std::string("attention.") + which + ".weight"))),
                        params_.get(block_name(block, std::string("attention.") + which + ".bias")));
    };
    Tensor q = proj("query"), k = proj("key"), v = proj("value");
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<Tensor> head_outputs;
    head_outputs.reserve(heads);
    for (std::size_t a = 0; a < heads; ++a) {
        Tensor qh = slice_cols(q, a * head_dim, head_dim);
        Tensor kh = slice_cols(k, a * head_dim, head_dim);
        Tensor vh = slice_cols(v, a * head_dim, head_dim);
        Tensor scores = scale(matmul(qh, transpose(kh)), inv_scale);
        head_outputs.push_back(matmul(masked_softmax_rows(scores, pad), vh));
    }
    Tensor merged = heads == 1 ? head_outputs.front() : concat_cols(head_outputs);
    Tensor out = add_bias(matmul(merged, params_.get(block_name(block, "attention.output.weight"))),
                          params_.get(block_name(block, "attention.output.bias")));
    out = apply_slot(block, SlotKind::PostAttention, maybe_dropout(out, options), options);
    return layer_norm(add(x, out), params_.get(block_name(block, "attention_norm.gain")),
                      params_.get(block_name(block, "attention_norm.bias")));
}

Tensor EncoderModel::feed_forward(std::size_t block, const Tensor& x, const ForwardOptions& options) const {
    Tensor inner = gelu(add_bias(matmul(x, params_.get(block_name(block, "ffn.intermediate.weight"))),
                                 params_.get(block_name(block, "ffn.intermediate.bias"))));
    Tensor out = add_bias(matmul(inner, params_.get(block_name(block, "ffn.output.weight"))),
                          params_.get(block_name(block, "ffn.output.bias")));
    out = apply_slot(block, SlotKind::PostFfn, maybe_dropout(out, options), options);
    return layer_norm(add(x, out), params_.get(block_name(block, "ffn_norm.gain")),
                      params_.get(block_name(block, "ffn_norm.bias")));
}

Tensor EncoderModel::encode(std::span<const std::int32_t> ids, const std::vector<bool>& padding,
                            const ForwardOptions& options) const {
    Tensor x = embed(ids, options);
    for (std::size_t b = 0; b < config_.num_blocks; ++b) {
        x = self_attention(b, x, padding, options);
        x = feed_forward(b, x, options);
    }
    return x;
}

Tensor EncoderModel::qa_logits(const Tensor& hidden) const {
    return add_bias(matmul(hidden, params_.get("qa_head.weight")), params_.get("qa_head.bias"));
}

Tensor EncoderModel::mlm_logits(const Tensor& hidden, std::span<const std::int32_t> positions) const {
    Tensor rows = gather_rows(hidden, positions);
    if (const InvertibleAdapter* inv = embedding_slot()) {
        rows = invertible_inverse(rows, *inv);
    }
    return matmul(rows, transpose(params_.get("embeddings.token")));
}

std::string EncoderModel::adapter_prefix(AdapterKind kind) { return "adapter." + to_string(kind) + "."; }

bool EncoderModel::is_backbone_name(const std::string& name) {
    return starts_with(name, "embeddings.") || starts_with(name, "block.");
}

bool EncoderModel::is_head_name(const std::string& name) { return starts_with(name, "qa_head."); }

std::size_t EncoderModel::backbone_param_count() const {
    return params_.count_params("embeddings.") + params_.count_params("block.");
}

ParamStore EncoderModel::backbone_store() const {
    ParamStore out;
    for (const auto& [name, tensor] : params_.entries()) {
        if (is_backbone_name(name) || is_head_name(name)) out.add(name, tensor);
    }
    return out;
}

void EncoderModel::install_adapter(std::shared_ptr<AdapterSet> adapter) {
    if (!adapter) throw ContractError("install_adapter: null adapter");
    const AdapterManifest& m = adapter->manifest();
    auto& slot = m.kind == AdapterKind::Task ? task_ : language_;
    if (slot) {
        const char* where = m.kind == AdapterKind::Language ? "embedding slot and block slots" : "block slots";
        throw ContractError("double attach: " + to_string(m.kind) + " adapter '" + slot->manifest().name +
                            "' already occupies the " + where + "; cannot attach '" + m.name + "'");
    }
    if (m.hidden_dim != config_.hidden_dim) {
        throw ContractError("adapter '" + m.name + "' has hidden dim " + std::to_string(m.hidden_dim) +
                            ", model has " + std::to_string(config_.hidden_dim));
    }
    if (m.num_blocks != config_.num_blocks) {
        throw ContractError("adapter '" + m.name + "' covers " + std::to_string(m.num_blocks) +
                            " blocks, model has " + std::to_string(config_.num_blocks));
    }
    if (auto current = placement(); current && *current != m.scheme) {
        throw ContractError("adapter '" + m.name + "' uses " + to_string(m.scheme) + " placement but the model's " +
                            "occupied slots follow " + to_string(*current));
    }
    const std::string prefix = adapter_prefix(m.kind);
    for (const auto& [name, tensor] : adapter->params().entries()) {
        params_.add(prefix + name, tensor);
    }
    slot = std::move(adapter);
}

std::shared_ptr<AdapterSet> EncoderModel::uninstall_adapter(AdapterKind kind) {
    auto& slot = kind == AdapterKind::Task ? task_ : language_;
    if (!slot) throw ContractError("no " + to_string(kind) + " adapter is attached");
    params_.remove_prefix(adapter_prefix(kind));
    return std::exchange(slot, nullptr);
}

const std::shared_ptr<AdapterSet>& EncoderModel::adapter(AdapterKind kind) const {
    return kind == AdapterKind::Task ? task_ : language_;
}

std::optional<PlacementScheme> EncoderModel::placement() const {
    if (task_) return task_->manifest().scheme;
    if (language_) return language_->manifest().scheme;
    return std::nullopt;
}

std::vector<const BottleneckAdapter*> EncoderModel::slot_units(std::size_t block, SlotKind slot) const {
    std::vector<const BottleneckAdapter*> units;
    for (const auto* set : {&language_, &task_}) {
        if (*set) {
            if (const auto* u = (*set)->unit(block, slot)) units.push_back(u);
        }
    }
    return units;
}

const InvertibleAdapter* EncoderModel::embedding_slot() const {
    return language_ ? language_->invertible() : nullptr;
}

std::size_t EncoderModel::occupied_slots() const {
    std::size_t n = 0;
    for (std::size_t b = 0; b < config_.num_blocks; ++b) {
        for (SlotKind s : {SlotKind::PostAttention, SlotKind::PostFfn}) {
            n += slot_units(b, s).empty() ? 0 : 1;
        }
    }
    return n;
}

}  // namespace adaptqa
