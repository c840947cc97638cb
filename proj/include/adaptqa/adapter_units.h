// SPDX-License-Identifier: Apache-2.0
//
// Adapter building blocks: the residual bottleneck adapter, the additive
// coupling (invertible) adapter, and AdapterSet, a named group of units of
// one kind that is trained, saved and swapped as a whole.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adaptqa/param_store.h"
#include "adaptqa/rng.h"
#include "adaptqa/tensor.h"

namespace adaptqa {

enum class AdapterKind { Task, Language };
enum class PlacementScheme { Houlsby, Pfeiffer };
/// Per-block adapter slots; the post-embedding slot is handled separately.
enum class SlotKind { PostAttention, PostFfn };

std::string to_string(AdapterKind kind);
std::string to_string(PlacementScheme scheme);
std::string to_string(SlotKind slot);
AdapterKind parse_adapter_kind(const std::string& text);
PlacementScheme parse_placement_scheme(const std::string& text);

/// h + up(gelu(down(h))). `up` and `up_bias` start at zero.
struct BottleneckAdapter {
    std::string name;
    AdapterKind kind = AdapterKind::Task;
    Tensor down;       // [H x d]
    Tensor down_bias;  // [d]
    Tensor up;         // [d x H]
    Tensor up_bias;    // [H]

    std::size_t hidden_dim() const { return down.dim(0); }
    std::size_t bottleneck_dim() const { return down.dim(1); }
    std::size_t count_params() const;

    static BottleneckAdapter create(std::string name, AdapterKind kind, std::size_t hidden_dim,
                                    std::size_t bottleneck_dim, Rng& rng);
};

Tensor bottleneck_forward(const Tensor& h, const BottleneckAdapter& adapter);

/// Two-layer map H/2 -> inner -> H/2 with a zero-initialized output layer.
struct CouplingMap {
    Tensor in;        // [H/2 x inner]
    Tensor in_bias;   // [inner]
    Tensor out;       // [inner x H/2]
    Tensor out_bias;  // [H/2]

    Tensor apply(const Tensor& x) const;
    std::size_t count_params() const;
};

/// Additive coupling: y1 = e1 + F(e2), y2 = e2 + G(y1).
struct InvertibleAdapter {
    std::string name;
    CouplingMap f;
    CouplingMap g;

    std::size_t hidden_dim() const { return 2 * f.in.dim(0); }
    std::size_t count_params() const { return f.count_params() + g.count_params(); }

    /// Throws ContractError for odd hidden_dim.
    static InvertibleAdapter create(std::string name, std::size_t hidden_dim, Rng& rng);
};

Tensor invertible_forward(const Tensor& e, const InvertibleAdapter& adapter);
Tensor invertible_inverse(const Tensor& y, const InvertibleAdapter& adapter);

/// Sidecar metadata stored next to every adapter file.
struct AdapterManifest {
    std::string name;
    AdapterKind kind = AdapterKind::Task;
    PlacementScheme scheme = PlacementScheme::Pfeiffer;
    std::size_t hidden_dim = 0;
    std::size_t bottleneck_dim = 0;
    std::size_t num_blocks = 0;
    std::optional<std::string> source_language;
    std::string trained_on;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static AdapterManifest from_json(const nlohmann::json& j);
    bool operator==(const AdapterManifest&) const = default;
};

/// Whether `scheme` puts an adapter into `slot` of every block.
bool scheme_occupies(PlacementScheme scheme, SlotKind slot);

/// A complete task or language adapter: one bottleneck unit per occupied
/// slot and, for language adapters, the invertible embedding adapter.
/// Parameter names are relative, e.g. "block.2.ffn.down.weight" or
/// "invertible.f.in.weight".
class AdapterSet {
public:
    /// Fresh, identity-initialized set.
    static AdapterSet create(const AdapterManifest& manifest, Rng& rng);
    /// Wraps existing tensors; names and shapes must match the manifest exactly.
    static AdapterSet from_params(const AdapterManifest& manifest, ParamStore params);

    const AdapterManifest& manifest() const { return manifest_; }
    AdapterManifest& manifest() { return manifest_; }
    const ParamStore& params() const { return params_; }
    ParamStore& params() { return params_; }

    /// Unit in the given slot, or nullptr if the scheme leaves it empty.
    const BottleneckAdapter* unit(std::size_t block, SlotKind slot) const;
    const InvertibleAdapter* invertible() const { return invertible_ ? &*invertible_ : nullptr; }

    std::size_t occupied_slots() const;
    std::size_t count_params() const { return params_.count_params(); }

    /// Parameter names this manifest implies, with shapes.
    static std::vector<std::pair<std::string, Shape>> expected_layout(const AdapterManifest& manifest);

private:
    AdapterSet() = default;
    void bind_units();

    AdapterManifest manifest_;
    ParamStore params_;
    std::vector<std::optional<BottleneckAdapter>> attention_units_;
    std::vector<std::optional<BottleneckAdapter>> ffn_units_;
    std::optional<InvertibleAdapter> invertible_;
};

/// Inner width of each coupling map for hidden size H.
std::size_t coupling_inner_dim(std::size_t hidden_dim);

}  // namespace adaptqa
