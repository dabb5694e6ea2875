#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "lindistill/tensor.hpp"

namespace lindistill {

enum class MixerKind { attention, linformer, ssm, bidirectional_ssm };
enum class ShareMode { none, kv, layer };
enum class ScanDirection { forward, backward };

std::string to_string(MixerKind kind);
std::string to_string(ShareMode mode);
MixerKind parse_mixer_kind(const std::string& text);
ShareMode parse_share_mode(const std::string& text);

struct AttentionParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    std::size_t heads = 1;

    std::size_t width() const { return wq.dim(0); }
    std::size_t head_dim() const { return width() / heads; }
};

// E and F are [rank, max_len]. Under kv or layer sharing they are the same
// tensor handle.
struct LinformerParams {
    AttentionParams attention;
    Tensor e, f;
    ShareMode share = ShareMode::none;

    std::size_t rank() const { return e.dim(0); }
    std::size_t max_len() const { return e.dim(1); }
};

// Diagonal selective state-space mixer with expand factor 1.
//   u     = x W_in + b_in
//   delta = softplus(x W_dt + b_dt)          (per position and channel)
//   A     = -exp(a_log)                       [width, state]
//   y     = scan(u, delta, A, B, C) W_out + b_out
struct SsmParams {
    Tensor w_in, b_in, w_dt, b_dt, a_log, b, c, w_out, b_out;

    std::size_t width() const { return w_in.dim(0); }
    std::size_t state_dim() const { return a_log.dim(1); }
};

// Fused multi-head scaled dot-product attention on already-projected
// inputs. q: [B, T, D], k/v: [B, M, D]. Keys at s >= key_lengths[b] are
// masked out; an empty span means no key padding.
Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                      bool causal, std::span<const std::int32_t> key_lengths = {});

// Projects along time with the first T columns of proj: [r, max_len] x [B, T, D] -> [B, r, D].
Tensor time_project(const Tensor& proj, const Tensor& x);

// Zero-order-hold discretized diagonal scan, h_0 = 0:
//   abar = exp(delta * A), bbar = (abar - 1) / A * B
//   h_t = abar h_{t-1} + bbar u_t,  y_t = sum_i C_i h_t,i
// u, delta: [B, T, D]; a (strictly negative), b, c: [D, n].
// The forward pass runs as a blocked scan: chunk-local scans from zero
// state followed by a carry pass across chunk boundaries.
// backward direction = reverse . scan . reverse (within each valid length).
Tensor ssm_scan(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& b, const Tensor& c,
                ScanDirection direction = ScanDirection::forward,
                std::span<const std::int32_t> lengths = {}, std::size_t chunk = 16);

Tensor standard_attention(const Tensor& x, const AttentionParams& params, bool causal = false,
                          std::span<const std::int32_t> lengths = {});

// softmax(Q (E K)^T / sqrt(d)) (F V) per head; E and F are truncated to the
// first T columns when T < max_len. Throws if T > max_len or causal is set.
Tensor linformer_attention(const Tensor& x, const LinformerParams& params, bool causal = false);

Tensor ssm_mixer(const Tensor& x, const SsmParams& params, ScanDirection direction = ScanDirection::forward,
                 std::span<const std::int32_t> lengths = {});

// Sum of the forward mixer and the time-inverted backward mixer.
Tensor bidirectional_mixer(const Tensor& x, const SsmParams& fwd, const SsmParams& bwd,
                           std::span<const std::int32_t> lengths = {});

Tensor feed_forward(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2);

}  // namespace lindistill
