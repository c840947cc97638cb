// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "adaptqa/adam.h"
#include "adaptqa/container.h"
#include "adaptqa/errors.h"
#include "adaptqa/grad_check.h"
#include "adaptqa/hashing.h"
#include "adaptqa/ops.h"
#include "adaptqa/param_store.h"
#include "adaptqa/rng.h"
#include "adaptqa/tensor.h"
#include "doctest.h"

using namespace adaptqa;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false) {
    std::vector<double> d(shape_numel(shape));
    for (auto& v : d) v = rng.normal();
    return Tensor::from_data(std::move(shape), std::move(d), requires_grad);
}

}  // namespace

TEST_CASE("matmul examples") {
    const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
    const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
    const Tensor r1 = matmul(a, eye);
    for (std::size_t i = 0; i < 4; ++i) CHECK(r1.at(i) == a.at(i));

    // Hand multiplication: [1*5+2*7, 1*6+2*8; 3*5+4*7, 3*6+4*8].
    const Tensor r2 = matmul(a, Tensor::matrix({{5, 6}, {7, 8}}));
    CHECK(r2.at(0, 0) == 19);
    CHECK(r2.at(0, 1) == 22);
    CHECK(r2.at(1, 0) == 43);
    CHECK(r2.at(1, 1) == 50);

    const Tensor b23 = Tensor::zeros({2, 3});
    try {
        matmul(b23, b23);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
    }
}

TEST_CASE("matmul agrees with a naive triple loop") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t m = 1 + rng.uniform_int(6), k = 1 + rng.uniform_int(6), n = 1 + rng.uniform_int(6);
        const Tensor a = random_tensor({m, k}, rng);
        const Tensor b = random_tensor({k, n}, rng);
        const Tensor c = matmul(a, b);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t t = 0; t < k; ++t) s += a.at(i, t) * b.at(t, j);
                CHECK(c.at(i, j) == doctest::Approx(s).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("softmax examples") {
    const Tensor s0 = softmax(Tensor::vector({0, 0}), 0);
    CHECK(s0.at(0) == 0.5);
    CHECK(s0.at(1) == 0.5);

    const Tensor s1 = softmax(Tensor::vector({1, 2, 3}), 0);
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    CHECK(s1.at(0) == doctest::Approx(std::exp(1.0) / z).epsilon(1e-12));
    CHECK(s1.at(0) == doctest::Approx(0.0900).epsilon(1e-3));
    CHECK(s1.at(1) == doctest::Approx(0.2447).epsilon(1e-3));
    CHECK(s1.at(2) == doctest::Approx(0.6652).epsilon(1e-3));

    const Tensor s2 = softmax(Tensor::vector({1000, 0}), 0);
    CHECK(s2.all_finite());
    CHECK(s2.at(0) == 1.0);
    CHECK(s2.at(1) == doctest::Approx(0.0));
}

TEST_CASE("softmax rows sum to one for inputs in [-1e3, 1e3]") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = 1 + rng.uniform_int(4), n = 1 + rng.uniform_int(8);
        std::vector<double> d(m * n);
        for (auto& v : d) v = (rng.uniform() * 2.0 - 1.0) * 1e3;
        const Tensor x = Tensor::from_data({m, n}, d);
        for (std::size_t axis : {std::size_t{0}, std::size_t{1}}) {
            const Tensor s = softmax(x, axis);
            const std::size_t outer = axis == 1 ? m : n, inner = axis == 1 ? n : m;
            for (std::size_t o = 0; o < outer; ++o) {
                double total = 0.0;
                for (std::size_t i = 0; i < inner; ++i) total += axis == 1 ? s.at(o, i) : s.at(i, o);
                CHECK(std::abs(total - 1.0) <= 1e-12);
            }
        }
    }
}

TEST_CASE("masked softmax gives exact zeros to excluded columns") {
    const Tensor scores = Tensor::matrix({{1, 2, 3}, {0, 0, 0}});
    const Tensor p = masked_softmax_rows(scores, {false, true, false});
    CHECK(p.at(0, 1) == 0.0);
    CHECK(p.at(1, 1) == 0.0);
    CHECK(p.at(1, 0) == 0.5);
    const Tensor none = masked_softmax_rows(scores, {true, true, true});
    for (double v : none.data()) CHECK(v == 0.0);
}

TEST_CASE("layer_norm examples") {
    const Tensor one = Tensor::vector({1, 1, 1});
    const Tensor zero3 = Tensor::vector({0, 0, 0});
    const Tensor c = layer_norm(Tensor::matrix({{5, 5, 5}}), one, zero3);
    for (double v : c.data()) CHECK(v == 0.0);

    const Tensor r = layer_norm(Tensor::matrix({{1, 3}}), Tensor::vector({1, 1}), Tensor::vector({0, 0}));
    CHECK(r.at(0) == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(r.at(1) == doctest::Approx(1.0).epsilon(1e-6));

    Rng rng(5);
    const Tensor x = random_tensor({3, 4}, rng);
    const Tensor bias = Tensor::vector({0.5, -1, 2, 3});
    const Tensor g0 = layer_norm(x, Tensor::zeros({4}), bias);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 4; ++j) CHECK(g0.at(i, j) == bias.at(j));
    }
}

TEST_CASE("backward examples") {
    Tensor x = Tensor::vector({1, 2, 3}, true);
    backward(sum(mul(x, x)));
    CHECK(x.grad()[0] == 2.0);
    CHECK(x.grad()[1] == 4.0);
    CHECK(x.grad()[2] == 6.0);

    // d/dw sum(x w) = x^T 1: each column of grad_w holds the row sums of x^T.
    Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
    Tensor w = Tensor::matrix({{0.5, -1}, {2, 0}}, true);
    backward(sum(matmul(a, w)));
    CHECK(w.grad()[0] == 4.0);
    CHECK(w.grad()[1] == 4.0);
    CHECK(w.grad()[2] == 6.0);
    CHECK(w.grad()[3] == 6.0);

    Tensor y = Tensor::vector({1, 2}, true);
    backward(add(sum(y), sum(y)));
    CHECK(y.grad()[0] == 2.0);
    CHECK(y.grad()[1] == 2.0);

    CHECK_THROWS_AS(backward(Tensor::vector({1, 2}, true)), ContractError);
}

TEST_CASE("tensor contract") {
    CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), ContractError);
    CHECK_THROWS_AS(Tensor::from_data({0, 2}, {}), ContractError);
    Tensor t = Tensor::vector({1, 2});
    CHECK(t.all_finite());
    t.mutable_data()[0] = std::nan("");
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("embedding gather scatters gradient only into used rows") {
    Rng rng(2);
    Tensor table = random_tensor({5, 3}, rng, true);
    const std::vector<std::int32_t> ids{1, 3, 1};
    backward(sum(gather_rows(table, ids)));
    const auto g = table.grad();
    for (std::size_t r = 0; r < 5; ++r) {
        const double expected = r == 1 ? 2.0 : (r == 3 ? 1.0 : 0.0);
        for (std::size_t c = 0; c < 3; ++c) CHECK(g[r * 3 + c] == expected);
    }
}

TEST_CASE("rng is reproducible and matches the SplitMix64 reference") {
    std::uint64_t state = 0;
    CHECK(splitmix64(state) == 0xe220a8397b1dcdafULL);
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        differs = differs || x != c.next_u64();
    }
    CHECK(differs);
    Rng u(1);
    for (int i = 0; i < 1000; ++i) {
        const double v = u.uniform();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
        CHECK(u.uniform_int(7) < 7);
    }
}

TEST_CASE("finite_diff_check examples") {
    ParamStore store;
    Rng rng(9);
    store.add("w", random_tensor({2, 3}, rng));
    store.add("v", random_tensor({3}, rng));
    auto quadratic = [&] {
        const Tensor& w = store.get("w");
        return add(sum(mul(w, w)), scale(sum(mul(store.get("v"), store.get("v"))), 3.0));
    };
    CHECK(finite_diff_check(quadratic, store, 1e-5, {"w", "v"}).max_relative_error < 1e-8);
    CHECK(finite_diff_check(quadratic, store, 1e-5, {}).max_relative_error == 0.0);
}

TEST_CASE("composed computations pass finite differences") {
    // Every differentiable op, chained, over tensors of total size <= 200.
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        ParamStore store;
        store.add("x", random_tensor({4, 6}, rng));
        store.add("w", random_tensor({6, 6}, rng));
        store.add("b", random_tensor({6}, rng));
        store.add("g", random_tensor({6}, rng));
        store.add("e", random_tensor({5, 6}, rng));
        const std::vector<std::int32_t> ids{0, 4, 2, 4};
        const std::vector<std::size_t> targets{1, 0, 5, 2};
        auto f = [&] {
            Tensor h = add(store.get("x"), gather_rows(store.get("e"), ids));
            h = add_bias(matmul(h, store.get("w")), store.get("b"));
            h = layer_norm(gelu(h), store.get("g"), store.get("b"));
            Tensor att = masked_softmax_rows(matmul(h, transpose(h)), {false, false, true, false});
            h = add(matmul(att, h), softmax(h, 0));
            Tensor left = slice_cols(h, 0, 3);
            Tensor right = slice_cols(h, 3, 3);
            h = concat_cols({sub(right, left), scale(left, 0.5), mul(left, right)});
            return add(cross_entropy_rows(slice_cols(h, 0, 6), targets, {true, true, true, false, true, true}),
                       mean(mul(h, h)));
        };
        const auto r = finite_diff_check(f, store, 1e-4, store.names());
        INFO("seed " << seed << " worst " << r.worst_name << "[" << r.worst_index << "]");
        CHECK(r.max_relative_error < 1e-4);
    }
}

TEST_CASE("adam first step moves each element by lr * sign(g)") {
    ParamStore store;
    store.add("p", Tensor::vector({1.0, -2.0, 0.5}));
    store.add("frozen", Tensor::vector({3.0, 4.0}));
    store.set_trainable({"p"});
    store.zero_grad();
    auto g = store.get("p").mutable_grad();
    g[0] = 0.3;
    g[1] = -5.0;
    g[2] = 1e-3;
    Tensor& frozen = store.get("frozen");
    frozen.zero_grad();
    frozen.mutable_grad()[0] = 10.0;
    const std::string frozen_hash = entry_hash("frozen", frozen);

    Adam adam(AdamOptions{.lr = 0.01});
    adam.step(store);
    const auto p = store.get("p").data();
    CHECK(p[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
    CHECK(p[2] == doctest::Approx(0.5 - 0.01).epsilon(1e-4));
    CHECK(entry_hash("frozen", store.get("frozen")) == frozen_hash);
}

TEST_CASE("adam lr=0 changes nothing and missing grads are refused") {
    ParamStore store;
    store.add("p", Tensor::vector({1.0, 2.0}));
    store.set_trainable({"p"});
    store.zero_grad();
    store.get("p").mutable_grad()[0] = 1.0;
    Adam adam(AdamOptions{.lr = 0.0});
    adam.step(store);
    CHECK(store.get("p").at(0) == 1.0);
    CHECK(store.get("p").at(1) == 2.0);
    store.get("p").clear_grad();
    CHECK_THROWS_AS(adam.step(store), ContractError);
}

TEST_CASE("param store trainable mask stays a subset of entries") {
    ParamStore store;
    store.add("a", Tensor::vector({1}));
    CHECK_THROWS_AS(store.add("a", Tensor::vector({2})), ContractError);
    CHECK_THROWS_AS(store.set_trainable({"missing"}), ContractError);
    store.set_trainable({"a"});
    CHECK(store.is_trainable("a"));
    store.remove("a");
    CHECK(store.trainable().empty());
}

TEST_CASE("container roundtrip is bit-exact and validates its header") {
    Rng rng(4);
    ParamStore store;
    store.add("block.0.weight", random_tensor({3, 2}, rng));
    store.add("a.bias", random_tensor({2}, rng));
    store.add("scalar.like", random_tensor({1}, rng));
    const auto bytes = serialize_params(store);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "AQPC");
    const ParamStore back = deserialize_params(bytes);
    CHECK(back.names() == store.names());
    for (const auto& name : store.names()) {
        CHECK(back.get(name).shape() == store.get(name).shape());
        CHECK(std::equal(back.get(name).data().begin(), back.get(name).data().end(),
                         store.get(name).data().begin()));
    }
    CHECK(serialize_params(back) == bytes);

    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(deserialize_params(truncated), ParseError);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(deserialize_params(bad_magic), ParseError);
    auto bad_version = bytes;
    bad_version[4] = 99;
    CHECK_THROWS_AS(deserialize_params(bad_version), ParseError);

    const auto path = std::filesystem::temp_directory_path() / "adaptqa_container_test.params";
    save_params(path, store);
    CHECK(serialize_params(load_params(path)) == bytes);
    std::filesystem::remove(path);
}

TEST_CASE("sha256 known answers") {
    CHECK(sha256_hex(std::string_view("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex(std::string_view("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("dropout is identity at rate zero and rejects rate one") {
    Rng rng(1);
    const Tensor x = random_tensor({3, 3}, rng);
    const Tensor y = dropout(x, 0.0, rng);
    for (std::size_t i = 0; i < 9; ++i) CHECK(y.at(i) == x.at(i));
    CHECK_THROWS_AS(dropout(x, 1.0, rng), ContractError);
    const Tensor z = dropout(x, 0.5, rng);
    for (std::size_t i = 0; i < 9; ++i) CHECK((z.at(i) == 0.0 || z.at(i) == doctest::Approx(2.0 * x.at(i))));
}
