#include "lindistill/layers.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Core>

#include "lindistill/errors.hpp"
#include "lindistill/ops.hpp"

namespace lindistill {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Strided = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using StridedC = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

StridedC view(const double* p, Eigen::Index rows, Eigen::Index cols, Eigen::Index stride) {
    return StridedC(p, rows, cols, Eigen::OuterStride<>(stride));
}
Strided view(double* p, Eigen::Index rows, Eigen::Index cols, Eigen::Index stride) {
    return Strided(p, rows, cols, Eigen::OuterStride<>(stride));
}

void require_rank3(const char* op, const Tensor& x) {
    if (x.rank() != 3) {
        throw ShapeError(std::string(op) + ": expected [batch, time, width], got " + shape_str(x.shape()));
    }
}

}  // namespace

std::string to_string(MixerKind kind) {
    switch (kind) {
        case MixerKind::attention: return "attention";
        case MixerKind::linformer: return "linformer";
        case MixerKind::ssm: return "ssm";
        case MixerKind::bidirectional_ssm: return "bidirectional-ssm";
    }
    return "?";
}

std::string to_string(ShareMode mode) {
    switch (mode) {
        case ShareMode::none: return "none";
        case ShareMode::kv: return "kv";
        case ShareMode::layer: return "layer";
    }
    return "?";
}

MixerKind parse_mixer_kind(const std::string& text) {
    if (text == "attention") return MixerKind::attention;
    if (text == "linformer") return MixerKind::linformer;
    if (text == "ssm") return MixerKind::ssm;
    if (text == "bidirectional-ssm") return MixerKind::bidirectional_ssm;
    throw ConfigError("unknown mixer kind '" + text + "'");
}

ShareMode parse_share_mode(const std::string& text) {
    if (text == "none") return ShareMode::none;
    if (text == "kv") return ShareMode::kv;
    if (text == "layer") return ShareMode::layer;
    throw ConfigError("unknown share mode '" + text + "'");
}

Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, bool causal,
                      std::span<const std::int32_t> key_lengths) {
    require_rank3("attention", q);
    require_rank3("attention", k);
    if (k.shape() != v.shape() || q.dim(0) != k.dim(0) || q.dim(2) != k.dim(2)) {
        throw ShapeError("attention: incompatible q/k/v shapes " + shape_str(q.shape()) + ", " +
                         shape_str(k.shape()) + ", " + shape_str(v.shape()));
    }
    const std::size_t batch = q.dim(0), tq = q.dim(1), tk = k.dim(1), width = q.dim(2);
    if (heads == 0 || width % heads != 0) throw ShapeError("attention: width not divisible by heads");
    if (!key_lengths.empty() && key_lengths.size() != batch) {
        throw ShapeError("attention: one key length per sequence required");
    }
    const std::size_t dh = width / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto W = static_cast<Eigen::Index>(width);
    const auto Tq = static_cast<Eigen::Index>(tq), Tk = static_cast<Eigen::Index>(tk);
    const auto Dh = static_cast<Eigen::Index>(dh);

    Buffer probs(batch * heads * tq * tk);
    Buffer out(q.numel());
    auto qv = q.values(), kv = k.values(), vv = v.values();
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t klen = key_lengths.empty() ? tk : static_cast<std::size_t>(key_lengths[b]);
        if (klen == 0 || klen > tk) throw ShapeError("attention: key length out of range");
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t qoff = b * tq * width + h * dh, koff = b * tk * width + h * dh;
            Eigen::Map<RowMat> p(probs.data() + (b * heads + h) * tq * tk, Tq, Tk);
            p.noalias() = view(qv.data() + qoff, Tq, Dh, W) * view(kv.data() + koff, Tk, Dh, W).transpose();
            p *= inv_sqrt;
            for (Eigen::Index t = 0; t < Tq; ++t) {
                for (Eigen::Index s = 0; s < Tk; ++s) {
                    if ((causal && s > t) || static_cast<std::size_t>(s) >= klen) p(t, s) = neg_inf;
                }
                const double mx = p.row(t).maxCoeff();
                p.row(t) = (p.row(t).array() - mx).exp();
                p.row(t) /= p.row(t).sum();
            }
            view(out.data() + qoff, Tq, Dh, W).noalias() = p * view(vv.data() + koff, Tk, Dh, W);
        }
    }
    return detail::make_op(
        "attention", q.shape(), std::move(out), {q, k, v},
        [q, k, v, probs = std::move(probs), batch, heads, tq, tk, width, dh, inv_sqrt](std::span<const double> g) {
            auto gq = detail::grad_sink(q), gk = detail::grad_sink(k), gv = detail::grad_sink(v);
            auto qv = q.values(), kv = k.values(), vv = v.values();
            const auto W = static_cast<Eigen::Index>(width);
            const auto Tq = static_cast<Eigen::Index>(tq), Tk = static_cast<Eigen::Index>(tk);
            const auto Dh = static_cast<Eigen::Index>(dh);
            RowMat dp(Tq, Tk);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t h = 0; h < heads; ++h) {
                    const std::size_t qoff = b * tq * width + h * dh, koff = b * tk * width + h * dh;
                    Eigen::Map<const RowMat> p(probs.data() + (b * heads + h) * tq * tk, Tq, Tk);
                    auto go = view(g.data() + qoff, Tq, Dh, W);
                    if (!gv.empty()) view(gv.data() + koff, Tk, Dh, W).noalias() += p.transpose() * go;
                    if (gq.empty() && gk.empty()) continue;
                    dp.noalias() = go * view(vv.data() + koff, Tk, Dh, W).transpose();
                    for (Eigen::Index t = 0; t < Tq; ++t) {
                        const double dot = dp.row(t).dot(p.row(t));
                        dp.row(t) = p.row(t).array() * (dp.row(t).array() - dot) * inv_sqrt;
                    }
                    if (!gq.empty()) {
                        view(gq.data() + qoff, Tq, Dh, W).noalias() += dp * view(kv.data() + koff, Tk, Dh, W);
                    }
                    if (!gk.empty()) {
                        view(gk.data() + koff, Tk, Dh, W).noalias() +=
                            dp.transpose() * view(qv.data() + qoff, Tq, Dh, W);
                    }
                }
            }
        });
}

Tensor time_project(const Tensor& proj, const Tensor& x) {
    require_rank3("time_project", x);
    if (proj.rank() != 2) throw ShapeError("time_project: projection must be [rank, max_len]");
    const std::size_t batch = x.dim(0), time = x.dim(1), width = x.dim(2);
    const std::size_t rank = proj.dim(0), max_len = proj.dim(1);
    if (time > max_len) {
        throw ShapeError("time_project: sequence length " + std::to_string(time) + " exceeds max length " +
                         std::to_string(max_len));
    }
    const auto R = static_cast<Eigen::Index>(rank), T = static_cast<Eigen::Index>(time);
    const auto W = static_cast<Eigen::Index>(width), L = static_cast<Eigen::Index>(max_len);
    Buffer out(batch * rank * width);
    auto pv = proj.values(), xv = x.values();
    for (std::size_t b = 0; b < batch; ++b) {
        view(out.data() + b * rank * width, R, W, W).noalias() =
            view(pv.data(), R, T, L) * view(xv.data() + b * time * width, T, W, W);
    }
    return detail::make_op("time_project", {batch, rank, width}, std::move(out), {proj, x},
                           [proj, x, batch, R, T, W, L](std::span<const double> g) {
                               auto gp = detail::grad_sink(proj), gx = detail::grad_sink(x);
                               auto pv = proj.values(), xv = x.values();
                               for (std::size_t b = 0; b < batch; ++b) {
                                   auto gb = view(g.data() + b * R * W, R, W, W);
                                   if (!gp.empty()) {
                                       view(gp.data(), R, T, L).noalias() +=
                                           gb * view(xv.data() + b * T * W, T, W, W).transpose();
                                   }
                                   if (!gx.empty()) {
                                       view(gx.data() + b * T * W, T, W, W).noalias() +=
                                           view(pv.data(), R, T, L).transpose() * gb;
                                   }
                               }
                           });
}

namespace {

Tensor ssm_scan_forward(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& bmat,
                        const Tensor& cmat, std::size_t chunk) {
    require_rank3("ssm_scan", u);
    if (delta.shape() != u.shape()) throw ShapeError("ssm_scan: delta must match input shape");
    const std::size_t batch = u.dim(0), time = u.dim(1), width = u.dim(2);
    if (a.rank() != 2 || a.dim(0) != width || bmat.shape() != a.shape() || cmat.shape() != a.shape()) {
        throw ShapeError("ssm_scan: A/B/C must be [width, state] with width " + std::to_string(width));
    }
    if (chunk == 0) chunk = 1;
    const std::size_t n = a.dim(1);
    const std::size_t dn = width * n;
    auto uv = u.values(), dv = delta.values(), av = a.values(), bv = bmat.values(), cv = cmat.values();
    for (double x : av) {
        if (!(x < 0.0)) throw NumericFault("ssm_scan: state matrix entries must be strictly negative");
    }

    // states[b, t, d, i]; decay[b, t, d, i] is the running product of abar
    // since the start of t's chunk.
    Buffer states(batch * time * dn);
    Buffer decay(batch * time * dn);
    for (std::size_t b = 0; b < batch; ++b) {
        // Chunk-local scans from zero state; chunks are independent.
        for (std::size_t start = 0; start < time; start += chunk) {
            const std::size_t stop = std::min(time, start + chunk);
            for (std::size_t t = start; t < stop; ++t) {
                const std::size_t row = b * time + t;
                double* h = states.data() + row * dn;
                double* p = decay.data() + row * dn;
                const double* hprev = t == start ? nullptr : h - dn;
                const double* pprev = t == start ? nullptr : p - dn;
                for (std::size_t d = 0; d < width; ++d) {
                    const double dt = dv[row * width + d];
                    const double x = uv[row * width + d];
                    for (std::size_t i = 0; i < n; ++i) {
                        const std::size_t at = d * n + i;
                        const double abar = std::exp(dt * av[at]);
                        const double bbar = (abar - 1.0) / av[at] * bv[at];
                        h[at] = (hprev ? abar * hprev[at] : 0.0) + bbar * x;
                        p[at] = pprev ? abar * pprev[at] : abar;
                    }
                }
            }
        }
        // Carry pass: fold each chunk's entering state into its positions.
        Buffer carry(dn, 0.0);
        for (std::size_t start = chunk; start < time; start += chunk) {
            const double* last = states.data() + (b * time + start - 1) * dn;
            std::copy_n(last, dn, carry.begin());
            const std::size_t stop = std::min(time, start + chunk);
            for (std::size_t t = start; t < stop; ++t) {
                double* h = states.data() + (b * time + t) * dn;
                const double* p = decay.data() + (b * time + t) * dn;
                for (std::size_t at = 0; at < dn; ++at) h[at] += p[at] * carry[at];
            }
        }
    }
    decay = {};

    Buffer out(u.numel());
    for (std::size_t row = 0; row < batch * time; ++row) {
        const double* h = states.data() + row * dn;
        for (std::size_t d = 0; d < width; ++d) {
            double y = 0.0;
            for (std::size_t i = 0; i < n; ++i) y += cv[d * n + i] * h[d * n + i];
            out[row * width + d] = y;
        }
    }

    return detail::make_op(
        "ssm_scan", u.shape(), std::move(out), {u, delta, a, bmat, cmat},
        [u, delta, a, bmat, cmat, states = std::move(states), batch, time, width, n](std::span<const double> g) {
            const std::size_t dn = width * n;
            auto uv = u.values(), dv = delta.values(), av = a.values(), bv = bmat.values(), cv = cmat.values();
            auto gu = detail::grad_sink(u), gd = detail::grad_sink(delta);
            auto ga = detail::grad_sink(a), gb = detail::grad_sink(bmat), gc = detail::grad_sink(cmat);
            Buffer gh(dn);
            for (std::size_t b = 0; b < batch; ++b) {
                std::fill(gh.begin(), gh.end(), 0.0);
                for (std::size_t t = time; t-- > 0;) {
                    const std::size_t row = b * time + t;
                    const double* h = states.data() + row * dn;
                    const double* hprev = t == 0 ? nullptr : h - dn;
                    for (std::size_t d = 0; d < width; ++d) {
                        const double gy = g[row * width + d];
                        const double dt = dv[row * width + d];
                        const double x = uv[row * width + d];
                        double gx_acc = 0.0, gdt_acc = 0.0;
                        for (std::size_t i = 0; i < n; ++i) {
                            const std::size_t at = d * n + i;
                            if (!gc.empty()) gc[at] += gy * h[at];
                            const double ghi = gh[at] + cv[at] * gy;
                            const double A = av[at];
                            const double abar = std::exp(dt * A);
                            const double bfac = (abar - 1.0) / A;
                            const double g_bbar = ghi * x;
                            const double g_abar = hprev ? ghi * hprev[at] : 0.0;
                            gx_acc += ghi * bfac * bv[at];
                            gdt_acc += g_abar * abar * A + g_bbar * abar * bv[at];
                            if (!ga.empty()) {
                                ga[at] += g_abar * abar * dt +
                                          g_bbar * bv[at] * (dt * abar * A - (abar - 1.0)) / (A * A);
                            }
                            if (!gb.empty()) gb[at] += g_bbar * bfac;
                            gh[at] = ghi * abar;
                        }
                        if (!gu.empty()) gu[row * width + d] += gx_acc;
                        if (!gd.empty()) gd[row * width + d] += gdt_acc;
                    }
                }
            }
        });
}

}  // namespace

Tensor ssm_scan(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& b, const Tensor& c,
                ScanDirection direction, std::span<const std::int32_t> lengths, std::size_t chunk) {
    if (direction == ScanDirection::forward) return ssm_scan_forward(u, delta, a, b, c, chunk);
    return reverse_time(
        ssm_scan_forward(reverse_time(u, lengths), reverse_time(delta, lengths), a, b, c, chunk), lengths);
}

Tensor standard_attention(const Tensor& x, const AttentionParams& p, bool causal,
                          std::span<const std::int32_t> lengths) {
    Tensor q = add_bias(matmul(x, p.wq), p.bq);
    Tensor k = add_bias(matmul(x, p.wk), p.bk);
    Tensor v = add_bias(matmul(x, p.wv), p.bv);
    return add_bias(matmul(attention_core(q, k, v, p.heads, causal, lengths), p.wo), p.bo);
}

Tensor linformer_attention(const Tensor& x, const LinformerParams& p, bool causal) {
    if (causal) throw std::invalid_argument("linformer attention does not support causal masking");
    require_rank3("linformer", x);
    if (x.dim(1) > p.max_len()) {
        throw ShapeError("linformer: sequence length " + std::to_string(x.dim(1)) + " exceeds max length " +
                         std::to_string(p.max_len()));
    }
    const AttentionParams& a = p.attention;
    Tensor q = add_bias(matmul(x, a.wq), a.bq);
    Tensor k = time_project(p.e, add_bias(matmul(x, a.wk), a.bk));
    Tensor v = time_project(p.f, add_bias(matmul(x, a.wv), a.bv));
    return add_bias(matmul(attention_core(q, k, v, a.heads, false), a.wo), a.bo);
}

Tensor ssm_mixer(const Tensor& x, const SsmParams& p, ScanDirection direction,
                 std::span<const std::int32_t> lengths) {
    Tensor u = add_bias(matmul(x, p.w_in), p.b_in);
    Tensor delta = softplus(add_bias(matmul(x, p.w_dt), p.b_dt));
    Tensor y = ssm_scan(u, delta, neg_exp(p.a_log), p.b, p.c, direction, lengths);
    return add_bias(matmul(y, p.w_out), p.b_out);
}

Tensor bidirectional_mixer(const Tensor& x, const SsmParams& fwd, const SsmParams& bwd,
                           std::span<const std::int32_t> lengths) {
    if (fwd.width() != bwd.width()) {
        throw ShapeError("bidirectional mixer: forward width " + std::to_string(fwd.width()) +
                         " differs from backward width " + std::to_string(bwd.width()));
    }
    return add(ssm_mixer(x, fwd, ScanDirection::forward, lengths),
               ssm_mixer(x, bwd, ScanDirection::backward, lengths));
}

Tensor feed_forward(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) {
    return add_bias(matmul(gelu(add_bias(matmul(x, w1), b1)), w2), b2);
}

}  // namespace lindistill
