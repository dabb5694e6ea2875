#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "lindistill/layers.hpp"
#include "lindistill/model.hpp"
#include "lindistill/rng.hpp"
#include "lindistill/tasks.hpp"
#include "lindistill/tensor.hpp"

namespace th {

using namespace lindistill;

inline std::vector<double> randn_values(std::size_t n, std::uint64_t seed, double sd = 1.0) {
    Rng rng(seed, 77);
    std::vector<double> v(n);
    for (auto& x : v) x = sd * rng.normal();
    return v;
}

inline Tensor randn(Shape shape, std::uint64_t seed, double sd = 1.0, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return Tensor::from_values(std::move(shape), randn_values(n, seed, sd), requires_grad);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) return INFINITY;
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) { return max_abs_diff(a.values(), b.values()); }

inline bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
    return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

inline bool same_parameters(const Model& a, const Model& b) {
    if (a.parameters().size() != b.parameters().size()) return false;
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        const auto& [na, ta] = a.parameters()[i];
        const auto& [nb, tb] = b.parameters()[i];
        if (na != nb || ta.shape() != tb.shape() || !bitwise_equal(ta.values(), tb.values())) return false;
    }
    return true;
}

inline ModelSpec tiny_spec(std::vector<MixerKind> mixers, HeadKind head = HeadKind::classify,
                           std::size_t max_len = 8) {
    ModelSpec s;
    s.head = head;
    s.vocab = 6;
    s.max_len = max_len;
    s.width = 8;
    s.heads = 2;
    s.ffn_hidden = 12;
    s.num_classes = 3;
    s.mixers = std::move(mixers);
    s.linformer_rank = 4;
    s.share = ShareMode::kv;
    s.ssm_state = 3;
    s.causal = head == HeadKind::lm;
    return s;
}

inline Batch random_batch(const ModelSpec& spec, std::size_t size, std::size_t time, std::uint64_t seed,
                          bool ragged = false) {
    Rng rng(seed, 5);
    Batch b;
    b.size = size;
    b.time = time;
    for (std::size_t i = 0; i < size * time; ++i) b.tokens.push_back(static_cast<std::int32_t>(rng.below(spec.vocab)));
    for (std::size_t i = 0; i < size; ++i) {
        const auto len = ragged && i % 2 == 1 ? std::max<std::size_t>(1, time - 1 - i % time) : time;
        b.lengths.push_back(static_cast<std::int32_t>(len));
    }
    if (spec.head == HeadKind::lm) {
        for (std::size_t i = 0; i < size * time; ++i) {
            const bool pad = i % time >= static_cast<std::size_t>(b.lengths[i / time]);
            b.labels.push_back(pad ? -1 : static_cast<std::int32_t>(rng.below(spec.vocab)));
        }
    } else {
        for (std::size_t i = 0; i < size; ++i) b.labels.push_back(static_cast<std::int32_t>(rng.below(spec.num_classes)));
    }
    return b;
}

inline AttentionParams random_attention(std::size_t width, std::size_t heads, std::uint64_t seed) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(width));
    AttentionParams p;
    p.wq = randn({width, width}, seed + 1, sd, true);
    p.bq = randn({width}, seed + 2, 0.1, true);
    p.wk = randn({width, width}, seed + 3, sd, true);
    p.bk = randn({width}, seed + 4, 0.1, true);
    p.wv = randn({width, width}, seed + 5, sd, true);
    p.bv = randn({width}, seed + 6, 0.1, true);
    p.wo = randn({width, width}, seed + 7, sd, true);
    p.bo = randn({width}, seed + 8, 0.1, true);
    p.heads = heads;
    return p;
}

inline SsmParams random_ssm(std::size_t width, std::size_t n, std::uint64_t seed) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(width));
    SsmParams p;
    p.w_in = randn({width, width}, seed + 1, sd, true);
    p.b_in = randn({width}, seed + 2, 0.1, true);
    p.w_dt = randn({width, width}, seed + 3, 0.1 * sd, true);
    p.b_dt = Tensor::full({width}, std::log(std::expm1(0.1)), true);
    std::vector<double> alog;
    for (std::size_t d = 0; d < width; ++d) {
        for (std::size_t i = 0; i < n; ++i) alog.push_back(std::log(static_cast<double>(i + 1)));
    }
    p.a_log = Tensor::from_values({width, n}, alog, true);
    p.b = randn({width, n}, seed + 4, 0.5, true);
    p.c = randn({width, n}, seed + 5, 0.5, true);
    p.w_out = randn({width, width}, seed + 6, sd, true);
    p.b_out = randn({width}, seed + 7, 0.1, true);
    return p;
}

// Sequential zero-order-hold recurrence on raw arrays; the reference for ssm_scan.
// u, delta: [B, T, D]; a, b, c: [D, n].
inline std::vector<double> ssm_oracle(std::span<const double> u, std::span<const double> delta,
                                      std::span<const double> a, std::span<const double> b,
                                      std::span<const double> c, std::size_t B, std::size_t T, std::size_t D,
                                      std::size_t n) {
    std::vector<double> y(B * T * D, 0.0);
    for (std::size_t bi = 0; bi < B; ++bi) {
        for (std::size_t d = 0; d < D; ++d) {
            std::vector<double> h(n, 0.0);
            for (std::size_t t = 0; t < T; ++t) {
                const std::size_t at = (bi * T + t) * D + d;
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double A = a[d * n + i];
                    const double abar = std::exp(delta[at] * A);
                    const double bbar = (abar - 1.0) / A * b[d * n + i];
                    h[i] = abar * h[i] + bbar * u[at];
                    acc += c[d * n + i] * h[i];
                }
                y[at] = acc;
            }
        }
    }
    return y;
}

}  // namespace th
