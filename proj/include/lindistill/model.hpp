#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lindistill/batch.hpp"
#include "lindistill/layers.hpp"

namespace lindistill {

enum class HeadKind { classify, lm };

// Architecture description. Every block is pre-norm:
//   x = x + mixer(norm1(x));  x = x + ffn(norm2(x))
// followed by a final norm and either a mean-pooled linear classifier or a
// per-position vocabulary projection.
struct ModelSpec {
    HeadKind head = HeadKind::classify;
    std::size_t vocab = 8;
    std::size_t max_len = 128;
    std::size_t width = 64;
    std::size_t heads = 4;
    std::size_t ffn_hidden = 128;
    std::size_t num_classes = 2;
    std::vector<MixerKind> mixers;
    std::size_t linformer_rank = 8;
    ShareMode share = ShareMode::kv;
    std::size_t ssm_state = 16;
    bool causal = false;
    double ln_eps = 1e-5;

    std::size_t depth() const { return mixers.size(); }
    std::size_t output_dim() const { return head == HeadKind::lm ? vocab : num_classes; }

    // Canonical "key value" lines; parse(to_text()) == *this.
    std::string to_text() const;
    static ModelSpec parse(const std::string& text);
    void validate() const;

    bool operator==(const ModelSpec&) const = default;
};

class Model {
public:
    Model() = default;
    explicit Model(ModelSpec spec) : spec_(std::move(spec)) {}

    const ModelSpec& spec() const { return spec_; }
    ModelSpec& mutable_spec() { return spec_; }

    // Parameters in insertion order. Shared projections appear once.
    const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    const Tensor& param(const std::string& name) const;
    Tensor& param(const std::string& name);
    void add_param(const std::string& name, Tensor value);

    std::size_t parameter_count() const;
    void zero_grad();
    void set_requires_grad(bool flag);

    // Deep copy; sharing between names is preserved because a shared tensor
    // is stored under a single name.
    Model clone() const;

    AttentionParams attention(std::size_t block) const;
    LinformerParams linformer(std::size_t block) const;
    // prefix: "ssm", "ssm_fwd" or "ssm_bwd"
    SsmParams ssm(std::size_t block, const std::string& prefix) const;

    // (gain, bias) of the norm that consumes block `block`'s output.
    std::pair<Tensor, Tensor> next_norm(std::size_t block) const;

    static std::string block_prefix(std::size_t block);
    std::string linformer_e_name(std::size_t block) const;
    std::string linformer_f_name(std::size_t block) const;

private:
    ModelSpec spec_;
    std::vector<std::pair<std::string, Tensor>> params_;
    std::map<std::string, std::size_t> index_;
};

// Deterministic initialization; each parameter draws from its own RNG
// stream keyed by name, so adding a parameter never perturbs the others.
Model init_model(const ModelSpec& spec, std::uint64_t seed);

// Per-name initializers, shared with model surgery.
std::uint64_t name_stream(const std::string& name);
Tensor init_normal(const Shape& shape, double stddev, std::uint64_t seed, const std::string& name);
void add_attention_params(Model& model, std::size_t block, std::uint64_t seed);
void add_linformer_projections(Model& model, std::size_t block, std::uint64_t seed);
void add_ssm_params(Model& model, std::size_t block, const std::string& prefix, std::uint64_t seed,
                    double delta_init = 0.1);

struct HiddenTrace {
    // One [batch, time, width] tensor per block, taken right after the
    // block's feed-forward residual add.
    std::vector<Tensor> hidden;
    Tensor logits;
};

HiddenTrace forward_with_trace(const Model& model, const Batch& batch);

}  // namespace lindistill
