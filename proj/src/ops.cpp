#include "lindistill/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "lindistill/errors.hpp"

namespace lindistill {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

void require_rank3(const char* op, const Tensor& x) {
    if (x.rank() != 3) throw ShapeError(std::string(op) + ": expected [batch, time, width], got " +
                                        shape_str(x.shape()));
}

template <class F, class G>
Tensor unary(const char* name, const Tensor& x, F&& f, G&& df) {
    Buffer out(x.numel());
    auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
    return detail::make_op(name, x.shape(), std::move(out), {x},
                           [x, df](std::span<const double> g) {
                               auto gx = detail::grad_sink(x);
                               auto xv = x.values();
                               for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * df(xv[i]);
                           });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 1 || b.rank() != 2 || a.shape().back() != b.dim(0)) {
        throw ShapeError("matmul: cannot multiply " + shape_str(a.shape()) + " by " +
                         shape_str(b.shape()));
    }
    const auto k = static_cast<Eigen::Index>(b.dim(0));
    const auto n = static_cast<Eigen::Index>(b.dim(1));
    const auto m = static_cast<Eigen::Index>(a.numel() / b.dim(0));
    Shape out_shape = a.shape();
    out_shape.back() = static_cast<std::size_t>(n);
    Buffer out(static_cast<std::size_t>(m * n));
    Map(out.data(), m, n).noalias() = MapC(a.values().data(), m, k) * MapC(b.values().data(), k, n);
    return detail::make_op("matmul", std::move(out_shape), std::move(out), {a, b},
                           [a, b, m, k, n](std::span<const double> g) {
                               MapC gm(g.data(), m, n);
                               if (auto ga = detail::grad_sink(a); !ga.empty()) {
                                   Map(ga.data(), m, k).noalias() +=
                                       gm * MapC(b.values().data(), k, n).transpose();
                               }
                               if (auto gb = detail::grad_sink(b); !gb.empty()) {
                                   Map(gb.data(), k, n).noalias() +=
                                       MapC(a.values().data(), m, k).transpose() * gm;
                               }
                           });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    Buffer out(a.numel());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return detail::make_op("add", a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
        for (const Tensor* t : {&a, &b}) {
            auto gt = detail::grad_sink(*t);
            for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    Buffer out(a.numel());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return detail::make_op("sub", a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
        auto ga = detail::grad_sink(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
        auto gb = detail::grad_sink(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    Buffer out(a.numel());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return detail::make_op("mul", a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
        auto av = a.values(), bv = b.values();
        auto ga = detail::grad_sink(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
        auto gb = detail::grad_sink(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
    });
}

Tensor scale(const Tensor& a, double factor) {
    return unary("scale", a, [factor](double v) { return v * factor; },
                 [factor](double) { return factor; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (bias.rank() != 1 || x.rank() < 1 || x.shape().back() != bias.dim(0)) {
        throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                         shape_str(x.shape()));
    }
    const std::size_t n = bias.dim(0);
    Buffer out(x.values().begin(), x.values().end());
    auto bv = bias.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
    return detail::make_op("add_bias", x.shape(), std::move(out), {x, bias},
                           [x, bias, n](std::span<const double> g) {
                               auto gx = detail::grad_sink(x);
                               for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                               auto gb = detail::grad_sink(bias);
                               if (!gb.empty()) {
                                   for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
                               }
                           });
}

Tensor add_positional(const Tensor& x, const Tensor& table) {
    require_rank3("add_positional", x);
    const std::size_t batch = x.dim(0), time = x.dim(1), width = x.dim(2);
    if (table.rank() != 2 || table.dim(1) != width || table.dim(0) < time) {
        throw ShapeError("add_positional: table " + shape_str(table.shape()) + " cannot cover " +
                         shape_str(x.shape()));
    }
    const std::size_t plane = time * width;
    Buffer out(x.values().begin(), x.values().end());
    auto tv = table.values();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < plane; ++i) out[b * plane + i] += tv[i];
    }
    return detail::make_op("add_positional", x.shape(), std::move(out), {x, table},
                           [x, table, batch, plane](std::span<const double> g) {
                               auto gx = detail::grad_sink(x);
                               for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                               auto gt = detail::grad_sink(table);
                               if (gt.empty()) return;
                               for (std::size_t b = 0; b < batch; ++b) {
                                   for (std::size_t i = 0; i < plane; ++i) gt[i] += g[b * plane + i];
                               }
                           });
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.values()) total += v;
    return detail::make_op("sum", {}, {total}, {x}, [x](std::span<const double> g) {
        auto gx = detail::grad_sink(x);
        for (double& v : gx) v += g[0];
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor gelu(const Tensor& x) {
    // tanh approximation
    constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double a = 0.044715;
    return unary(
        "gelu", x,
        [](double v) { return 0.5 * v * (1.0 + std::tanh(c * (v + a * v * v * v))); },
        [](double v) {
            const double u = c * (v + a * v * v * v);
            const double t = std::tanh(u);
            return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * a * v * v);
        });
}

Tensor softplus(const Tensor& x) {
    return unary(
        "softplus", x,
        [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); },
        [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

Tensor neg_exp(const Tensor& x) {
    return unary("neg_exp", x, [](double v) { return -std::exp(v); },
                 [](double v) { return -std::exp(v); });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.rank()) throw ShapeError("softmax: axis out of range for " + shape_str(x.shape()));
    const auto& s = x.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t len = s[axis];
    Buffer out(x.numel());
    auto xv = x.values();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double mx = xv[base];
            for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
            double z = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
                const double e = std::exp(xv[base + j * inner] - mx);
                out[base + j * inner] = e;
                z += e;
            }
            for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= z;
        }
    }
    auto probs = out;
    return detail::make_op("softmax", s, std::move(out), {x},
                           [x, probs = std::move(probs), outer, inner, len](std::span<const double> g) {
                               auto gx = detail::grad_sink(x);
                               for (std::size_t o = 0; o < outer; ++o) {
                                   for (std::size_t in = 0; in < inner; ++in) {
                                       const std::size_t base = o * len * inner + in;
                                       double dot = 0.0;
                                       for (std::size_t j = 0; j < len; ++j) {
                                           dot += g[base + j * inner] * probs[base + j * inner];
                                       }
                                       for (std::size_t j = 0; j < len; ++j) {
                                           const std::size_t at = base + j * inner;
                                           gx[at] += probs[at] * (g[at] - dot);
                                       }
                                   }
                               }
                           });
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("layernorm: eps must be positive");
    if (x.rank() < 1 || gain.shape() != Shape{x.shape().back()} || bias.shape() != gain.shape()) {
        throw ShapeError("layernorm: gain/bias " + shape_str(gain.shape()) + "/" +
                         shape_str(bias.shape()) + " do not match " + shape_str(x.shape()));
    }
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.numel() / n;
    auto xv = x.values();
    auto gv = gain.values();
    auto bv = bias.values();
    Buffer normed(x.numel());
    Buffer inv_std(rows);
    Buffer out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += row[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (std::size_t j = 0; j < n; ++j) {
            const double xh = (row[j] - mu) * is;
            normed[r * n + j] = xh;
            out[r * n + j] = xh * gv[j] + bv[j];
        }
    }
    return detail::make_op(
        "layernorm", x.shape(), std::move(out), {x, gain, bias},
        [x, gain, bias, normed = std::move(normed), inv_std = std::move(inv_std), n,
         rows](std::span<const double> g) {
            auto gv = gain.values();
            auto gg = detail::grad_sink(gain);
            auto gb = detail::grad_sink(bias);
            auto gx = detail::grad_sink(x);
            const double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* gr = g.data() + r * n;
                const double* xh = normed.data() + r * n;
                if (!gg.empty()) for (std::size_t j = 0; j < n; ++j) gg[j] += gr[j] * xh[j];
                if (!gb.empty()) for (std::size_t j = 0; j < n; ++j) gb[j] += gr[j];
                if (gx.empty()) continue;
                double sum_d = 0.0, sum_dx = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double d = gr[j] * gv[j];
                    sum_d += d;
                    sum_dx += d * xh[j];
                }
                for (std::size_t j = 0; j < n; ++j) {
                    const double d = gr[j] * gv[j];
                    gx[r * n + j] += inv_std[r] * (d - inv_n * sum_d - xh[j] * inv_n * sum_dx);
                }
            }
        });
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids, std::size_t time) {
    if (table.rank() != 2) throw ShapeError("embedding: table must be [vocab, width]");
    if (time == 0 || ids.size() % time != 0) {
        throw ShapeError("embedding: " + std::to_string(ids.size()) + " ids do not split into rows of " +
                         std::to_string(time));
    }
    const std::size_t vocab = table.dim(0), width = table.dim(1);
    auto tv = table.values();
    Buffer out(ids.size() * width);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
            throw std::out_of_range("embedding: token id " + std::to_string(ids[i]) +
                                    " outside vocabulary of " + std::to_string(vocab));
        }
        std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[i] * width), width,
                    out.begin() + static_cast<std::ptrdiff_t>(i * width));
    }
    std::vector<std::int32_t> kept(ids.begin(), ids.end());
    return detail::make_op("embedding", {ids.size() / time, time, width}, std::move(out), {table},
                           [table, kept = std::move(kept), width](std::span<const double> g) {
                               auto gt = detail::grad_sink(table);
                               for (std::size_t i = 0; i < kept.size(); ++i) {
                                   double* row = gt.data() + kept[i] * width;
                                   for (std::size_t j = 0; j < width; ++j) row[j] += g[i * width + j];
                               }
                           });
}

Tensor mean_pool(const Tensor& x, std::span<const std::int32_t> lengths) {
    require_rank3("mean_pool", x);
    const std::size_t batch = x.dim(0), time = x.dim(1), width = x.dim(2);
    if (lengths.size() != batch) throw ShapeError("mean_pool: one length per sequence required");
    auto xv = x.values();
    Buffer out(batch * width, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        const auto len = static_cast<std::size_t>(lengths[b]);
        if (len == 0 || len > time) throw ShapeError("mean_pool: length out of range");
        for (std::size_t t = 0; t < len; ++t) {
            for (std::size_t j = 0; j < width; ++j) out[b * width + j] += xv[(b * time + t) * width + j];
        }
        for (std::size_t j = 0; j < width; ++j) out[b * width + j] /= static_cast<double>(len);
    }
    std::vector<std::int32_t> lens(lengths.begin(), lengths.end());
    return detail::make_op("mean_pool", {batch, width}, std::move(out), {x},
                           [x, lens = std::move(lens), time, width](std::span<const double> g) {
                               auto gx = detail::grad_sink(x);
                               for (std::size_t b = 0; b < lens.size(); ++b) {
                                   const double w = 1.0 / static_cast<double>(lens[b]);
                                   for (std::size_t t = 0; t < static_cast<std::size_t>(lens[b]); ++t) {
                                       for (std::size_t j = 0; j < width; ++j) {
                                           gx[(b * time + t) * width + j] += g[b * width + j] * w;
                                       }
                                   }
                               }
                           });
}

Tensor reverse_time(const Tensor& x, std::span<const std::int32_t> lengths) {
    require_rank3("reverse_time", x);
    const std::size_t batch = x.dim(0), time = x.dim(1), width = x.dim(2);
    if (!lengths.empty() && lengths.size() != batch) {
        throw ShapeError("reverse_time: one length per sequence required");
    }
    // perm[i] = source row of output row i; an involution.
    std::vector<std::size_t> perm(batch * time);
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t len = lengths.empty() ? time : static_cast<std::size_t>(lengths[b]);
        for (std::size_t t = 0; t < time; ++t) perm[b * time + t] = b * time + (t < len ? len - 1 - t : t);
    }
    auto xv = x.values();
    Buffer out(x.numel());
    for (std::size_t r = 0; r < perm.size(); ++r) {
        std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(perm[r] * width), width,
                    out.begin() + static_cast<std::ptrdiff_t>(r * width));
    }
    return detail::make_op("reverse_time", x.shape(), std::move(out), {x},
                           [x, perm = std::move(perm), width](std::span<const double> g) {
                               auto gx = detail::grad_sink(x);
                               for (std::size_t r = 0; r < perm.size(); ++r) {
                                   for (std::size_t j = 0; j < width; ++j) gx[perm[r] * width + j] += g[r * width + j];
                               }
                           });
}

}  // namespace lindistill
