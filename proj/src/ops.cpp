// SPDX-License-Identifier: Apache-2.0

#include "adaptqa/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "adaptqa/errors.h"
#include "adaptqa/rng.h"

namespace adaptqa {

using detail::TensorNode;

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                             " tensor, got " + shape_to_string(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                             " vs " + shape_to_string(b.shape()));
    }
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

// C[m x k] += G[m x n] * B^T, B is [k x n]
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* g, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                acc += grow[j] * brow[j];
            }
            c[i * k + p] += acc;
        }
    }
}

// C[k x n] += A^T * G, A is [m x k], G is [m x n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* g, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * grow[j];
            }
        }
    }
}

TensorNode& input(TensorNode& self, std::size_t i) { return *self.inputs[i]; }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner extents differ, " + shape_to_string(a.shape()) + " x " +
                             shape_to_string(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data());
    return detail::make_result({m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& self) {
        TensorNode& na = input(self, 0);
        TensorNode& nb = input(self, 1);
        if (na.requires_grad) {
            na.ensure_grad();
            gemm_nt(m, k, n, self.grad.data(), nb.data.data(), na.grad.data());
        }
        if (nb.requires_grad) {
            nb.ensure_grad();
            gemm_tn(m, k, n, na.data.data(), self.grad.data(), nb.grad.data());
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m * n);
    const auto src = a.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = src[i * n + j];
    return detail::make_result({n, m}, std::move(out), {a}, [m, n](TensorNode& self) {
        TensorNode& na = input(self, 0);
        na.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) na.grad[i * n + j] += self.grad[j * m + i];
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.data().begin(), a.data().end());
    const auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
    return detail::make_result(a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            TensorNode& in = input(self, k);
            if (!in.requires_grad) continue;
            in.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.data().begin(), a.data().end());
    const auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
    return detail::make_result(a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
        TensorNode& na = input(self, 0);
        TensorNode& nb = input(self, 1);
        if (na.requires_grad) {
            na.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i];
        }
        if (nb.requires_grad) {
            nb.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) nb.grad[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.data().begin(), a.data().end());
    const auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
    return detail::make_result(a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
        TensorNode& na = input(self, 0);
        TensorNode& nb = input(self, 1);
        if (na.requires_grad) {
            na.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i] * nb.data[i];
        }
        if (nb.requires_grad) {
            nb.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) nb.grad[i] += self.grad[i] * na.data[i];
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (double& v : out) v *= factor;
    return detail::make_result(a.shape(), std::move(out), {a}, [factor](TensorNode& self) {
        TensorNode& na = input(self, 0);
        na.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i] * factor;
    });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    require_rank(x, 2, "add_bias");
    require_rank(bias, 1, "add_bias");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (bias.dim(0) != n) {
        throw DimensionError("add_bias: bias " + shape_to_string(bias.shape()) + " does not match " +
                             shape_to_string(x.shape()));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    const auto bd = bias.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bd[j];
    return detail::make_result(x.shape(), std::move(out), {x, bias}, [m, n](TensorNode& self) {
        TensorNode& nx = input(self, 0);
        TensorNode& nb = input(self, 1);
        if (nx.requires_grad) {
            nx.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) nx.grad[i] += self.grad[i];
        }
        if (nb.requires_grad) {
            nb.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) nb.grad[j] += self.grad[i * n + j];
        }
    });
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
}  // namespace

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

Tensor gelu(const Tensor& x) {
    std::vector<double> out(x.numel());
    const auto xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_value(xd[i]);
    return detail::make_result(x.shape(), std::move(out), {x}, [](TensorNode& self) {
        TensorNode& nx = input(self, 0);
        nx.ensure_grad();
        const double inv_sqrt_2pi = std::numbers::inv_sqrtpi * kInvSqrt2;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double v = nx.data[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            nx.grad[i] += self.grad[i] * (cdf + v * pdf);
        }
    });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    const Shape& shape = x.shape();
    if (axis >= shape.size()) {
        throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_to_string(shape));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    const std::size_t len = shape[axis];

    std::vector<double> out(x.numel());
    const auto xd = x.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t t = 0; t < len; ++t) mx = std::max(mx, xd[base + t * inner]);
            double total = 0.0;
            for (std::size_t t = 0; t < len; ++t) {
                const double e = std::exp(xd[base + t * inner] - mx);
                out[base + t * inner] = e;
                total += e;
            }
            for (std::size_t t = 0; t < len; ++t) out[base + t * inner] /= total;
        }
    }
    return detail::make_result(shape, std::move(out), {x}, [outer, inner, len](TensorNode& self) {
        TensorNode& nx = input(self, 0);
        nx.ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                double dot = 0.0;
                for (std::size_t t = 0; t < len; ++t) {
                    const std::size_t idx = base + t * inner;
                    dot += self.grad[idx] * self.data[idx];
                }
                for (std::size_t t = 0; t < len; ++t) {
                    const std::size_t idx = base + t * inner;
                    nx.grad[idx] += self.data[idx] * (self.grad[idx] - dot);
                }
            }
        }
    });
}

Tensor masked_softmax_rows(const Tensor& scores, const std::vector<bool>& excluded) {
    require_rank(scores, 2, "masked_softmax_rows");
    const std::size_t m = scores.dim(0), n = scores.dim(1);
    if (excluded.size() != n) {
        throw DimensionError("masked_softmax_rows: mask length " + std::to_string(excluded.size()) +
                             " does not match " + shape_to_string(scores.shape()));
    }
    const std::vector<bool>& mask = excluded;
    std::vector<double> out(m * n, 0.0);
    const auto sd = scores.data();
    for (std::size_t i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (!mask[j]) mx = std::max(mx, sd[i * n + j]);
        if (!std::isfinite(mx)) continue;  // every key excluded
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (mask[j]) continue;
            const double e = std::exp(sd[i * n + j] - mx);
            out[i * n + j] = e;
            total += e;
        }
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
    }
    return detail::make_result(scores.shape(), std::move(out), {scores}, [m, n](TensorNode& self) {
        TensorNode& ns = input(self, 0);
        ns.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * self.data[i * n + j];
            for (std::size_t j = 0; j < n; ++j)
                ns.grad[i * n + j] += self.data[i * n + j] * (self.grad[i * n + j] - dot);
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (x.rank() < 1) throw DimensionError("layer_norm: scalar input");
    const std::size_t n = x.shape().back();
    if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
        throw DimensionError("layer_norm: gain/bias " + shape_to_string(gain.shape()) + "/" +
                             shape_to_string(bias.shape()) + " do not match last extent of " +
                             shape_to_string(x.shape()));
    }
    const std::size_t rows = x.numel() / n;
    const auto xd = x.data();
    const auto gd = gain.data();
    const auto bd = bias.data();
    std::vector<double> out(x.numel());
    std::vector<double> xhat(x.numel());
    std::vector<double> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xd.data() + r * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += row[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (row[j] - mu) * is;
            xhat[r * n + j] = h;
            out[r * n + j] = h * gd[j] + bd[j];
        }
    }
    return detail::make_result(
        x.shape(), std::move(out), {x, gain, bias},
        [rows, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorNode& self) {
            TensorNode& nx = input(self, 0);
            TensorNode& ng = input(self, 1);
            TensorNode& nb = input(self, 2);
            if (ng.requires_grad) {
                ng.ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < n; ++j) ng.grad[j] += self.grad[r * n + j] * xhat[r * n + j];
            }
            if (nb.requires_grad) {
                nb.ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < n; ++j) nb.grad[j] += self.grad[r * n + j];
            }
            if (nx.requires_grad) {
                nx.ensure_grad();
                const double inv_n = 1.0 / static_cast<double>(n);
                for (std::size_t r = 0; r < rows; ++r) {
                    double sum_d = 0.0, sum_dx = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double d = self.grad[r * n + j] * ng.data[j];
                        sum_d += d;
                        sum_dx += d * xhat[r * n + j];
                    }
                    for (std::size_t j = 0; j < n; ++j) {
                        const double d = self.grad[r * n + j] * ng.data[j];
                        nx.grad[r * n + j] +=
                            inv_std[r] * (d - inv_n * sum_d - xhat[r * n + j] * inv_n * sum_dx);
                    }
                }
            }
        });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
    require_rank(x, 2, "slice_cols");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (count == 0 || start + count > n) {
        throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                             std::to_string(start + count) + ") outside " + shape_to_string(x.shape()));
    }
    std::vector<double> out(m * count);
    const auto xd = x.data();
    for (std::size_t i = 0; i < m; ++i)
        std::copy_n(xd.data() + i * n + start, count, out.data() + i * count);
    return detail::make_result({m, count}, std::move(out), {x}, [m, n, start, count](TensorNode& self) {
        TensorNode& nx = input(self, 0);
        nx.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < count; ++j) nx.grad[i * n + start + j] += self.grad[i * count + j];
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t m = parts.front().dim(0);
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        require_rank(p, 2, "concat_cols");
        if (p.dim(0) != m) {
            throw DimensionError("concat_cols: row count mismatch " + shape_to_string(parts.front().shape()) +
                                 " vs " + shape_to_string(p.shape()));
        }
        widths.push_back(p.dim(1));
        total += p.dim(1);
    }
    std::vector<double> out(m * total);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto pd = parts[k].data();
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(pd.data() + i * widths[k], widths[k], out.data() + i * total + offset);
        offset += widths[k];
    }
    return detail::make_result({m, total}, std::move(out), parts, [m, total, widths](TensorNode& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
            TensorNode& in = input(self, k);
            if (in.requires_grad) {
                in.ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < widths[k]; ++j)
                        in.grad[i * widths[k] + j] += self.grad[i * total + off + j];
            }
            off += widths[k];
        }
    });
}

Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> ids) {
    require_rank(table, 2, "gather_rows");
    const std::size_t rows = table.dim(0), n = table.dim(1);
    if (ids.empty()) throw DimensionError("gather_rows: empty id list");
    std::vector<std::int32_t> idx(ids.begin(), ids.end());
    for (std::int32_t id : idx) {
        if (id < 0 || static_cast<std::size_t>(id) >= rows) {
            throw ContractError("gather_rows: id " + std::to_string(id) + " outside table of " +
                                std::to_string(rows) + " rows");
        }
    }
    std::vector<double> out(idx.size() * n);
    const auto td = table.data();
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(td.data() + static_cast<std::size_t>(idx[i]) * n, n, out.data() + i * n);
    const std::size_t count = idx.size();
    return detail::make_result({count, n}, std::move(out), {table}, [n, idx = std::move(idx)](TensorNode& self) {
        TensorNode& nt = input(self, 0);
        nt.ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i) {
            double* dst = nt.grad.data() + static_cast<std::size_t>(idx[i]) * n;
            for (std::size_t j = 0; j < n; ++j) dst[j] += self.grad[i * n + j];
        }
    });
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) total += v;
    return detail::make_result({1}, {total}, {x}, [](TensorNode& self) {
        TensorNode& nx = input(self, 0);
        nx.ensure_grad();
        for (double& g : nx.grad) g += self.grad[0];
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor cross_entropy_rows(const Tensor& logits, std::span<const std::size_t> targets,
                          const std::vector<bool>& allowed) {
    require_rank(logits, 2, "cross_entropy_rows");
    const std::size_t m = logits.dim(0), n = logits.dim(1);
    if (targets.size() != m) {
        throw DimensionError("cross_entropy_rows: " + std::to_string(targets.size()) + " targets for " +
                             shape_to_string(logits.shape()));
    }
    if (!allowed.empty() && allowed.size() != n) {
        throw DimensionError("cross_entropy_rows: column mask length " + std::to_string(allowed.size()) +
                             " does not match " + shape_to_string(logits.shape()));
    }
    std::vector<bool> keep(n, true);
    if (!allowed.empty()) keep = allowed;
    std::vector<std::size_t> tgt(targets.begin(), targets.end());
    for (std::size_t t : tgt) {
        if (t >= n || !keep[t]) {
            throw ContractError("cross_entropy_rows: target column " + std::to_string(t) +
                                " is outside the allowed columns");
        }
    }
    const auto ld = logits.data();
    std::vector<double> probs(m * n, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (keep[j]) mx = std::max(mx, ld[i * n + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (!keep[j]) continue;
            const double e = std::exp(ld[i * n + j] - mx);
            probs[i * n + j] = e;
            z += e;
        }
        for (std::size_t j = 0; j < n; ++j) probs[i * n + j] /= z;
        total += -(ld[i * n + tgt[i]] - mx - std::log(z));
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    return detail::make_result({1}, {total * inv_m}, {logits},
                               [m, n, inv_m, tgt = std::move(tgt), probs = std::move(probs)](TensorNode& self) {
                                   TensorNode& nl = input(self, 0);
                                   nl.ensure_grad();
                                   const double g = self.grad[0] * inv_m;
                                   for (std::size_t i = 0; i < m; ++i) {
                                       for (std::size_t j = 0; j < n; ++j)
                                           nl.grad[i * n + j] += g * probs[i * n + j];
                                       nl.grad[i * n + tgt[i]] -= g;
                                   }
                               });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ContractError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (rate == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(x.numel());
    for (double& v : mask) v = rng.uniform() < rate ? 0.0 : keep_scale;
    return mul(x, Tensor::from_data(x.shape(), std::move(mask)));
}

}  // namespace adaptqa
