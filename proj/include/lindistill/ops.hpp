#pragma once

#include <cstdint>
#include <span>

#include "lindistill/tensor.hpp"

namespace lindistill {

// a: [..., k], b: [k, n] -> [..., n]. Leading axes of `a` are flattened
// into rows, so this covers both the plain 2-D product and per-position
// linear maps over [batch, time, width] activations.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

// x: [..., n], bias: [n]
Tensor add_bias(const Tensor& x, const Tensor& bias);
// x: [batch, time, width], table: [max_time, width]; adds table[t] at time t.
Tensor add_positional(const Tensor& x, const Tensor& table);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor gelu(const Tensor& x);
Tensor softplus(const Tensor& x);
// -exp(x); parameterizes strictly negative values.
Tensor neg_exp(const Tensor& x);

// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

// Normalizes over the last axis, then applies gain and bias.
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// table: [vocab, width]; returns [ids.size() / time, time, width].
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids, std::size_t time);

// x: [batch, time, width] -> [batch, width], averaging the first lengths[b] steps.
Tensor mean_pool(const Tensor& x, std::span<const std::int32_t> lengths);

// Reverses the first lengths[b] steps of each sequence; padding stays in place.
// An empty `lengths` means every sequence is full length.
Tensor reverse_time(const Tensor& x, std::span<const std::int32_t> lengths = {});

}  // namespace lindistill
