// SPDX-License-Identifier: Apache-2.0

#include "adaptqa/adapter_units.h"

#include <cmath>

#include "adaptqa/errors.h"
#include "adaptqa/ops.h"

namespace adaptqa {

namespace {

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = rng.normal(0.0, stddev);
    return Tensor::from_data(std::move(shape), std::move(data));
}

std::string slot_prefix(std::size_t block, SlotKind slot) {
    return "block." + std::to_string(block) + "." + to_string(slot);
}

}  // namespace

std::string to_string(AdapterKind kind) { return kind == AdapterKind::Task ? "task" : "language"; }

std::string to_string(PlacementScheme scheme) {
    return scheme == PlacementScheme::Houlsby ? "houlsby" : "pfeiffer";
}

std::string to_string(SlotKind slot) { return slot == SlotKind::PostAttention ? "attention" : "ffn"; }

AdapterKind parse_adapter_kind(const std::string& text) {
    if (text == "task") return AdapterKind::Task;
    if (text == "language") return AdapterKind::Language;
    throw ConfigError("unknown adapter kind '" + text + "' (expected task|language)");
}

PlacementScheme parse_placement_scheme(const std::string& text) {
    if (text == "houlsby") return PlacementScheme::Houlsby;
    if (text == "pfeiffer") return PlacementScheme::Pfeiffer;
    throw ConfigError("unknown placement scheme '" + text + "' (expected houlsby|pfeiffer)");
}

bool scheme_occupies(PlacementScheme scheme, SlotKind slot) {
    return slot == SlotKind::PostFfn || scheme == PlacementScheme::Houlsby;
}

std::size_t coupling_inner_dim(std::size_t hidden_dim) { return std::max<std::size_t>(1, hidden_dim / 4); }

std::size_t BottleneckAdapter::count_params() const {
    return down.numel() + down_bias.numel() + up.numel() + up_bias.numel();
}

BottleneckAdapter BottleneckAdapter::create(std::string name, AdapterKind kind, std::size_t hidden_dim,
                                            std::size_t bottleneck_dim, Rng& rng) {
    if (bottleneck_dim == 0 || bottleneck_dim >= hidden_dim) {
        throw ContractError("bottleneck dim " + std::to_string(bottleneck_dim) + " must lie in [1, " +
                            std::to_string(hidden_dim) + ")");
    }
    BottleneckAdapter a;
    a.name = std::move(name);
    a.kind = kind;
    a.down = normal_tensor({hidden_dim, bottleneck_dim}, 1.0 / std::sqrt(static_cast<double>(hidden_dim)), rng);
    a.down_bias = Tensor::zeros({bottleneck_dim});
    a.up = Tensor::zeros({bottleneck_dim, hidden_dim});
    a.up_bias = Tensor::zeros({hidden_dim});
    return a;
}

Tensor bottleneck_forward(const Tensor& h, const BottleneckAdapter& adapter) {
    if (h.rank() != 2 || h.dim(1) != adapter.hidden_dim()) {
        throw ContractError("adapter '" + adapter.name + "' expects [seq x " +
                            std::to_string(adapter.hidden_dim()) + "] input, got " + shape_to_string(h.shape()));
    }
    Tensor inner = gelu(add_bias(matmul(h, adapter.down), adapter.down_bias));
    return add(h, add_bias(matmul(inner, adapter.up), adapter.up_bias));
}

Tensor CouplingMap::apply(const Tensor& x) const {
    return add_bias(matmul(gelu(add_bias(matmul(x, in), in_bias)), out), out_bias);
}

std::size_t CouplingMap::count_params() const {
    return in.numel() + in_bias.numel() + out.numel() + out_bias.numel();
}

InvertibleAdapter InvertibleAdapter::create(std::string name, std::size_t hidden_dim, Rng& rng) {
    if (hidden_dim < 2 || hidden_dim % 2 != 0) {
        throw ContractError("invertible adapter needs an even hidden size, got " + std::to_string(hidden_dim));
    }
    const std::size_t half = hidden_dim / 2;
    const std::size_t inner = coupling_inner_dim(hidden_dim);
    auto make_map = [&] {
        CouplingMap m;
        m.in = normal_tensor({half, inner}, 1.0 / std::sqrt(static_cast<double>(half)), rng);
        m.in_bias = Tensor::zeros({inner});
        m.out = Tensor::zeros({inner, half});
        m.out_bias = Tensor::zeros({half});
        return m;
    };
    InvertibleAdapter a;
    a.name = std::move(name);
    a.f = make_map();
    a.g = make_map();
    return a;
}

Tensor invertible_forward(const Tensor& e, const InvertibleAdapter& adapter) {
    const std::size_t hidden = adapter.hidden_dim();
    if (e.rank() != 2 || e.dim(1) != hidden) {
        throw ContractError("invertible adapter '" + adapter.name + "' expects [seq x " + std::to_string(hidden) +
                            "] input, got " + shape_to_string(e.shape()));
    }
    const std::size_t half = hidden / 2;
    Tensor e1 = slice_cols(e, 0, half);
    Tensor e2 = slice_cols(e, half, half);
    Tensor y1 = add(e1, adapter.f.apply(e2));
    Tensor y2 = add(e2, adapter.g.apply(y1));
    return concat_cols({y1, y2});
}

Tensor invertible_inverse(const Tensor& y, const InvertibleAdapter& adapter) {
    const std::size_t hidden = adapter.hidden_dim();
    if (y.rank() != 2 || y.dim(1) != hidden) {
        throw ContractError("invertible adapter '" + adapter.name + "' expects [seq x " + std::to_string(hidden) +
                            "] input, got " + shape_to_string(y.shape()));
    }
    const std::size_t half = hidden / 2;
    Tensor y1 = slice_cols(y, 0, half);
    Tensor y2 = slice_cols(y, half, half);
    Tensor e2 = sub(y2, adapter.g.apply(y1));
    Tensor e1 = sub(y1, adapter.f.apply(e2));
    return concat_cols({e1, e2});
}

nlohmann::json AdapterManifest::to_json() const {
    nlohmann::json j;
    j["name"] = name;
    j["kind"] = to_string(kind);
    j["scheme"] = to_string(scheme);
    j["hidden_dim"] = hidden_dim;
    j["bottleneck_dim"] = bottleneck_dim;
    j["num_blocks"] = num_blocks;
    j["source_language"] = source_language ? nlohmann::json(*source_language) : nlohmann::json(nullptr);
    j["trained_on"] = trained_on;
    j["seed"] = seed;
    return j;
}

AdapterManifest AdapterManifest::from_json(const nlohmann::json& j) {
    try {
        AdapterManifest m;
        m.name = j.at("name").get<std::string>();
        m.kind = parse_adapter_kind(j.at("kind").get<std::string>());
        m.scheme = parse_placement_scheme(j.at("scheme").get<std::string>());
        m.hidden_dim = j.at("hidden_dim").get<std::size_t>();
        m.bottleneck_dim = j.at("bottleneck_dim").get<std::size_t>();
        m.num_blocks = j.at("num_blocks").get<std::size_t>();
        if (j.contains("source_language") && !j.at("source_language").is_null()) {
            m.source_language = j.at("source_language").get<std::string>();
        }
        m.trained_on = j.value("trained_on", std::string());
        m.seed = j.value("seed", std::uint64_t{0});
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("adapter manifest: ") + e.what());
    }
}

std::vector<std::pair<std::string, Shape>> AdapterSet::expected_layout(const AdapterManifest& m) {
    const std::size_t h = m.hidden_dim, d = m.bottleneck_dim;
    std::vector<std::pair<std::string, Shape>> layout;
    for (std::size_t b = 0; b < m.num_blocks; ++b) {
        for (SlotKind slot : {SlotKind::PostAttention, SlotKind::PostFfn}) {
            if (!scheme_occupies(m.scheme, slot)) continue;
            const std::string p = slot_prefix(b, slot);
            layout.push_back({p + ".down.weight", {h, d}});
            layout.push_back({p + ".down.bias", {d}});
            layout.push_back({p + ".up.weight", {d, h}});
            layout.push_back({p + ".up.bias", {h}});
        }
    }
    if (m.kind == AdapterKind::Language) {
        const std::size_t half = h / 2, inner = coupling_inner_dim(h);
        for (const char* map : {"f", "g"}) {
            const std::string p = std::string("invertible.") + map;
            layout.push_back({p + ".in.weight", {half, inner}});
            layout.push_back({p + ".in.bias", {inner}});
            layout.push_back({p + ".out.weight", {inner, half}});
            layout.push_back({p + ".out.bias", {half}});
        }
    }
    return layout;
}

AdapterSet AdapterSet::create(const AdapterManifest& manifest, Rng& rng) {
    if (manifest.num_blocks == 0 && manifest.kind == AdapterKind::Task) {
        throw ContractError("task adapter '" + manifest.name + "' needs at least one block");
    }
    ParamStore store;
    for (std::size_t b = 0; b < manifest.num_blocks; ++b) {
        for (SlotKind slot : {SlotKind::PostAttention, SlotKind::PostFfn}) {
            if (!scheme_occupies(manifest.scheme, slot)) continue;
            auto unit = BottleneckAdapter::create(slot_prefix(b, slot), manifest.kind, manifest.hidden_dim,
                                                  manifest.bottleneck_dim, rng);
            store.add(unit.name + ".down.weight", unit.down);
            store.add(unit.name + ".down.bias", unit.down_bias);
            store.add(unit.name + ".up.weight", unit.up);
            store.add(unit.name + ".up.bias", unit.up_bias);
        }
    }
    if (manifest.kind == AdapterKind::Language) {
        auto inv = InvertibleAdapter::create("invertible", manifest.hidden_dim, rng);
        for (const auto& [tag, map] : {std::pair{"f", &inv.f}, std::pair{"g", &inv.g}}) {
            const std::string p = std::string("invertible.") + tag;
            store.add(p + ".in.weight", map->in);
            store.add(p + ".in.bias", map->in_bias);
            store.add(p + ".out.weight", map->out);
            store.add(p + ".out.bias", map->out_bias);
        }
    }
    return from_params(manifest, std::move(store));
}

AdapterSet AdapterSet::from_params(const AdapterManifest& manifest, ParamStore params) {
    if (manifest.kind == AdapterKind::Language && manifest.hidden_dim % 2 != 0) {
        throw ContractError("language adapter '" + manifest.name + "' needs an even hidden size");
    }
    if (manifest.bottleneck_dim == 0 || manifest.bottleneck_dim >= manifest.hidden_dim) {
        throw ContractError("adapter '" + manifest.name + "': bottleneck dim " +
                            std::to_string(manifest.bottleneck_dim) + " must be below hidden dim " +
                            std::to_string(manifest.hidden_dim));
    }
    const auto layout = expected_layout(manifest);
    if (params.size() != layout.size()) {
        throw ValidationError("adapter '" + manifest.name + "' holds " + std::to_string(params.size()) +
                              " tensors, manifest implies " + std::to_string(layout.size()));
    }
    for (const auto& [name, shape] : layout) {
        if (!params.contains(name)) {
            throw ValidationError("adapter '" + manifest.name + "' is missing tensor '" + name + "'");
        }
        if (params.get(name).shape() != shape) {
            throw ValidationError("adapter '" + manifest.name + "' tensor '" + name + "' has shape " +
                                  shape_to_string(params.get(name).shape()) + ", expected " +
                                  shape_to_string(shape));
        }
    }
    AdapterSet set;
    set.manifest_ = manifest;
    set.params_ = std::move(params);
    set.bind_units();
    return set;
}

void AdapterSet::bind_units() {
    const std::size_t blocks = manifest_.num_blocks;
    attention_units_.assign(blocks, std::nullopt);
    ffn_units_.assign(blocks, std::nullopt);
    for (std::size_t b = 0; b < blocks; ++b) {
        for (SlotKind slot : {SlotKind::PostAttention, SlotKind::PostFfn}) {
            if (!scheme_occupies(manifest_.scheme, slot)) continue;
            BottleneckAdapter unit;
            unit.name = manifest_.name + "/" + slot_prefix(b, slot);
            unit.kind = manifest_.kind;
            const std::string p = slot_prefix(b, slot);
            unit.down = params_.get(p + ".down.weight");
            unit.down_bias = params_.get(p + ".down.bias");
            unit.up = params_.get(p + ".up.weight");
            unit.up_bias = params_.get(p + ".up.bias");
            (slot == SlotKind::PostAttention ? attention_units_ : ffn_units_)[b] = std::move(unit);
        }
    }
    invertible_.reset();
    if (manifest_.kind == AdapterKind::Language) {
        InvertibleAdapter inv;
        inv.name = manifest_.name + "/invertible";
        for (const auto& [tag, map] : {std::pair{"f", &inv.f}, std::pair{"g", &inv.g}}) {
            const std::string p = std::string("invertible.") + tag;
            map->in = params_.get(p + ".in.weight");
            map->in_bias = params_.get(p + ".in.bias");
            map->out = params_.get(p + ".out.weight");
            map->out_bias = params_.get(p + ".out.bias");
        }
        invertible_ = std::move(inv);
    }
}

const BottleneckAdapter* AdapterSet::unit(std::size_t block, SlotKind slot) const {
    const auto& units = slot == SlotKind::PostAttention ? attention_units_ : ffn_units_;
    if (block >= units.size() || !units[block]) return nullptr;
    return &*units[block];
}

std::size_t AdapterSet::occupied_slots() const {
    std::size_t n = 0;
    for (const auto& u : attention_units_) n += u.has_value();
    for (const auto& u : ffn_units_) n += u.has_value();
    return n;
}

}  // namespace adaptqa
