#include "lindistill/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "lindistill/errors.hpp"
#include "lindistill/ops.hpp"

namespace lindistill {

std::string to_string(KdForm form) {
    return form == KdForm::literal ? "literal" : "softmax-temperature";
}

KdForm parse_kd_form(const std::string& text) {
    if (text == "softmax-temperature") return KdForm::softmax_temperature;
    if (text == "literal") return KdForm::literal;
    throw ConfigError("unknown kd_form '" + text + "'");
}

namespace {

// Row-wise log-softmax of x / temperature.
void log_softmax_rows(std::span<const double> x, std::size_t rows, std::size_t cols, double temperature,
                      std::vector<double>& out) {
    out.resize(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = x.data() + r * cols;
        double mx = row[0] / temperature;
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c] / temperature);
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) z += std::exp(row[c] / temperature - mx);
        const double lz = std::log(z) + mx;
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = row[c] / temperature - lz;
    }
}

}  // namespace

Tensor loss_ce(const Tensor& logits, std::span<const std::int32_t> labels) {
    if (logits.rank() < 1) throw ShapeError("loss_ce: logits need a class axis");
    const std::size_t cols = logits.shape().back();
    const std::size_t rows = logits.numel() / cols;
    if (labels.size() != rows) {
        throw ShapeError("loss_ce: " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) + " rows");
    }
    std::size_t valid = 0;
    for (auto l : labels) {
        if (l < -1 || l >= static_cast<std::int32_t>(cols)) {
            throw std::out_of_range("loss_ce: label " + std::to_string(l) + " outside [0, " + std::to_string(cols) + ")");
        }
        valid += l >= 0;
    }
    std::vector<double> logp;
    log_softmax_rows(logits.values(), rows, cols, 1.0, logp);
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (labels[r] >= 0) total -= logp[r * cols + static_cast<std::size_t>(labels[r])];
    }
    const double inv = valid ? 1.0 / static_cast<double>(valid) : 0.0;
    std::vector<std::int32_t> kept(labels.begin(), labels.end());
    return detail::make_op("loss_ce", {}, {total * inv}, {logits},
                           [logits, logp = std::move(logp), kept = std::move(kept), rows, cols,
                            inv](std::span<const double> g) {
                               auto gl = detail::grad_sink(logits);
                               for (std::size_t r = 0; r < rows; ++r) {
                                   if (kept[r] < 0) continue;
                                   for (std::size_t c = 0; c < cols; ++c) {
                                       const double p = std::exp(logp[r * cols + c]);
                                       const double y = static_cast<std::int32_t>(c) == kept[r] ? 1.0 : 0.0;
                                       gl[r * cols + c] += g[0] * inv * (p - y);
                                   }
                               }
                           });
}

Tensor loss_kd(const Tensor& student, const Tensor& teacher, double beta, KdForm form,
               std::span<const std::uint8_t> row_mask) {
    if (student.shape() != teacher.shape()) {
        throw ShapeError("loss_kd: student " + shape_str(student.shape()) + " vs teacher " + shape_str(teacher.shape()));
    }
    if (!(beta > 0.0)) throw std::invalid_argument("loss_kd: beta must be positive");
    const std::size_t cols = student.shape().back();
    const std::size_t rows = student.numel() / cols;
    if (!row_mask.empty() && row_mask.size() != rows) throw ShapeError("loss_kd: row mask size mismatch");

    const double temperature = form == KdForm::softmax_temperature ? beta : 1.0;
    const double outer = form == KdForm::softmax_temperature ? 1.0 : 1.0 / beta;
    std::vector<double> logps, logpt;
    log_softmax_rows(student.values(), rows, cols, temperature, logps);
    log_softmax_rows(teacher.values(), rows, cols, temperature, logpt);
    std::size_t valid = 0;
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (!row_mask.empty() && !row_mask[r]) continue;
        ++valid;
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t at = r * cols + c;
            total += std::exp(logpt[at]) * (logpt[at] - logps[at]);
        }
    }
    const double inv = valid ? outer / static_cast<double>(valid) : 0.0;
    std::vector<std::uint8_t> mask(row_mask.begin(), row_mask.end());
    return detail::make_op(
        "loss_kd", {}, {total * inv}, {student},
        [student, logps = std::move(logps), logpt = std::move(logpt), mask = std::move(mask), rows, cols, inv,
         temperature](std::span<const double> g) {
            auto gs = detail::grad_sink(student);
            for (std::size_t r = 0; r < rows; ++r) {
                if (!mask.empty() && !mask[r]) continue;
                for (std::size_t c = 0; c < cols; ++c) {
                    const std::size_t at = r * cols + c;
                    gs[at] += g[0] * inv * (std::exp(logps[at]) - std::exp(logpt[at])) / temperature;
                }
            }
        });
}

namespace {

// mean over valid rows and width of (a - b)^2; b is a constant.
Tensor masked_mse(const Tensor& a, const Tensor& b, std::span<const std::int32_t> lengths) {
    if (a.shape() != b.shape() || a.rank() != 3) {
        throw ShapeError("loss_ld: trace shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    const std::size_t batch = a.dim(0), time = a.dim(1), width = a.dim(2);
    if (!lengths.empty() && lengths.size() != batch) throw ShapeError("loss_ld: one length per sequence required");
    std::vector<std::uint8_t> keep(batch * time, 1);
    if (!lengths.empty()) {
        for (std::size_t r = 0; r < batch * time; ++r) keep[r] = (r % time) < static_cast<std::size_t>(lengths[r / time]);
    }
    std::size_t valid = 0;
    for (auto k : keep) valid += k;
    auto av = a.values(), bv = b.values();
    double total = 0.0;
    for (std::size_t r = 0; r < batch * time; ++r) {
        if (!keep[r]) continue;
        for (std::size_t j = 0; j < width; ++j) {
            const double d = av[r * width + j] - bv[r * width + j];
            total += d * d;
        }
    }
    const double inv = valid ? 1.0 / static_cast<double>(valid * width) : 0.0;
    return detail::make_op("loss_ld", {}, {total * inv}, {a},
                           [a, b, keep = std::move(keep), width, inv](std::span<const double> g) {
                               auto ga = detail::grad_sink(a);
                               auto av = a.values(), bv = b.values();
                               for (std::size_t r = 0; r < keep.size(); ++r) {
                                   if (!keep[r]) continue;
                                   for (std::size_t j = 0; j < width; ++j) {
                                       const std::size_t at = r * width + j;
                                       ga[at] += g[0] * inv * 2.0 * (av[at] - bv[at]);
                                   }
                               }
                           });
}

}  // namespace

Tensor loss_ld(std::span<const Tensor> student, std::span<const Tensor> teacher, std::span<const std::int32_t> lengths,
               const LayerNorms* norms, double eps) {
    if (student.size() != teacher.size()) {
        throw ShapeError("loss_ld: student has " + std::to_string(student.size()) + " layers, teacher " +
                         std::to_string(teacher.size()));
    }
    if (norms && norms->size() != student.size()) throw ShapeError("loss_ld: one norm per layer required");
    if (student.empty()) return Tensor::scalar(0.0);
    Tensor total;
    for (std::size_t l = 0; l < student.size(); ++l) {
        Tensor s = student[l];
        Tensor t = teacher[l].detach();
        if (norms) {
            const Tensor gain = (*norms)[l].first.detach(), bias = (*norms)[l].second.detach();
            s = layernorm(s, gain, bias, eps);
            NoGradGuard no_grad;
            t = layernorm(t, gain, bias, eps);
        }
        Tensor term = masked_mse(s, t, lengths);
        total = total.defined() ? add(total, term) : term;
    }
    return scale(total, 1.0 / static_cast<double>(student.size()));
}

Tensor loss_total(const Tensor& ce, const Tensor& kd, const Tensor& ld, const LossWeights& w) {
    return add(add(scale(ce, w.ce), scale(kd, w.kd)), scale(ld, w.ld));
}

double loss_total(double ce, double kd, double ld, const LossWeights& w) { return ce * w.ce + kd * w.kd + ld * w.ld; }

}  // namespace lindistill
