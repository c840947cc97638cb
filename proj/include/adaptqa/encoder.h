// SPDX-License-Identifier: Apache-2.0
//
// Miniature post-norm transformer encoder with adapter slots.
//
// Each block is
//     x = norm1(x + slot_attention(attention(x)))
//     x = norm2(x + slot_ffn(ffn(x)))
// where a slot applies its language unit and then its task unit. The
// post-embedding slot holds the language adapter's invertible unit.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adaptqa/adapter_units.h"
#include "adaptqa/param_store.h"
#include "adaptqa/rng.h"
#include "adaptqa/tensor.h"

namespace adaptqa {

struct EncoderConfig {
    std::size_t vocab_size = 2000;
    std::size_t max_seq_len = 256;
    std::size_t hidden_dim = 64;
    std::size_t num_blocks = 4;
    std::size_t num_heads = 4;
    std::size_t ffn_dim = 128;
    double dropout_rate = 0.1;
    std::uint64_t seed = 0;

    /// Throws ConfigError on an inconsistent config.
    void validate() const;
    nlohmann::json to_json() const;
    /// Missing keys keep their defaults.
    static EncoderConfig from_json(const nlohmann::json& j);
    bool operator==(const EncoderConfig&) const = default;
};

/// Ordered record of the units a forward pass applied, e.g.
/// "block.0.ffn:language" followed by "block.0.ffn:task".
struct ForwardTrace {
    std::vector<std::string> events;
};

struct ForwardOptions {
    bool training = false;
    /// Required when training with dropout_rate > 0.
    Rng* dropout_rng = nullptr;
    ForwardTrace* trace = nullptr;
};

class EncoderModel {
public:
    /// Parameters drawn from Rng(config.seed).
    explicit EncoderModel(const EncoderConfig& config);
    /// Wraps an existing backbone store (names and shapes are validated).
    EncoderModel(const EncoderConfig& config, ParamStore backbone);

    const EncoderConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    /// Token plus position embedding, then the invertible unit if installed. [seq x H]
    Tensor embed(std::span<const std::int32_t> ids, const ForwardOptions& options = {}) const;
    /// Complete attention sublayer of `block`: residual, slot adapters and norm included.
    /// `padding[j] == true` excludes key j from every query.
    Tensor self_attention(std::size_t block, const Tensor& x, const std::vector<bool>& padding,
                          const ForwardOptions& options = {}) const;
    Tensor feed_forward(std::size_t block, const Tensor& x, const ForwardOptions& options = {}) const;
    /// Full forward pass, [seq x H]. An empty `padding` means nothing is padded.
    Tensor encode(std::span<const std::int32_t> ids, const std::vector<bool>& padding = {},
                  const ForwardOptions& options = {}) const;

    /// Start/end logits, [seq x 2].
    Tensor qa_logits(const Tensor& hidden) const;
    /// Vocabulary logits at the given positions, [k x vocab]. Uses the
    /// token embedding as output matrix, after undoing the invertible unit.
    Tensor mlm_logits(const Tensor& hidden, std::span<const std::int32_t> positions) const;

    // Adapter slots. install/uninstall are the low-level primitives behind
    // attach() and swap_language_adapter().
    void install_adapter(std::shared_ptr<AdapterSet> adapter);
    std::shared_ptr<AdapterSet> uninstall_adapter(AdapterKind kind);
    const std::shared_ptr<AdapterSet>& adapter(AdapterKind kind) const;
    std::optional<PlacementScheme> placement() const;
    /// Units applied in a slot, language first.
    std::vector<const BottleneckAdapter*> slot_units(std::size_t block, SlotKind slot) const;
    const InvertibleAdapter* embedding_slot() const;
    /// Number of (block, slot) pairs holding at least one unit.
    std::size_t occupied_slots() const;

    /// Name prefix of installed adapter entries in params().
    static std::string adapter_prefix(AdapterKind kind);
    static bool is_backbone_name(const std::string& name);
    static bool is_head_name(const std::string& name);
    /// Encoder weights only: no adapters, no QA head.
    std::size_t backbone_param_count() const;
    /// Backbone and QA head entries, suitable for save_params().
    ParamStore backbone_store() const;

private:
    void init_params();
    void validate_backbone() const;
    Tensor apply_slot(std::size_t block, SlotKind slot, Tensor h, const ForwardOptions& options) const;
    Tensor maybe_dropout(const Tensor& x, const ForwardOptions& options) const;

    EncoderConfig config_;
    ParamStore params_;
    std::shared_ptr<AdapterSet> language_;
    std::shared_ptr<AdapterSet> task_;
};

/// Expected backbone layout for a config.
std::vector<std::pair<std::string, Shape>> backbone_layout(const EncoderConfig& config);

}  // namespace adaptqa
