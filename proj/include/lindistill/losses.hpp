#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lindistill/tensor.hpp"

namespace lindistill {

enum class KdForm {
    // KL(softmax(t / beta) || softmax(s / beta))
    softmax_temperature,
    // The probability-divided form; algebraically (1 / beta) KL(softmax(t) || softmax(s)).
    literal,
};

std::string to_string(KdForm form);
KdForm parse_kd_form(const std::string& text);

// Mean over rows of -log softmax(logits)[label]. logits: [..., C]; one label
// per row; label -1 skips the row. Throws std::out_of_range on any other
// invalid label.
Tensor loss_ce(const Tensor& logits, std::span<const std::int32_t> labels);

// Output distillation, mean over rows. Gradients flow to `student` only.
// row_mask (optional, one entry per row) selects rows that count.
Tensor loss_kd(const Tensor& student, const Tensor& teacher, double beta, KdForm form = KdForm::softmax_temperature,
               std::span<const std::uint8_t> row_mask = {});

// Per-layer norms applied to both traces before the MSE.
using LayerNorms = std::vector<std::pair<Tensor, Tensor>>;

// Layerwise hidden-state MSE: mean over valid positions and width within a
// layer, then mean over layers. Positions t >= lengths[b] are excluded
// (empty lengths: none). When `norms` is non-null, layer l of both traces
// first passes through layernorm with norms[l] (treated as constants).
// Gradients flow to `student` only.
Tensor loss_ld(std::span<const Tensor> student, std::span<const Tensor> teacher,
               std::span<const std::int32_t> lengths = {}, const LayerNorms* norms = nullptr,
               double eps = 1e-5);

struct LossWeights {
    double ce = 1.0;
    double kd = 0.0;
    double ld = 15.0;
};

// ce * w.ce + kd * w.kd + ld * w.ld
Tensor loss_total(const Tensor& ce, const Tensor& kd, const Tensor& ld, const LossWeights& w);
double loss_total(double ce, double kd, double ld, const LossWeights& w);

}  // namespace lindistill
