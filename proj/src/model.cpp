#include "lindistill/model.hpp"

#include <cmath>
#include <sstream>

#include "lindistill/errors.hpp"
#include "lindistill/ops.hpp"
#include "lindistill/rng.hpp"

namespace lindistill {

namespace {

std::string join_mixers(const std::vector<MixerKind>& kinds) {
    std::string out;
    for (std::size_t i = 0; i < kinds.size(); ++i) out += (i ? "," : "") + to_string(kinds[i]);
    return out.empty() ? "-" : out;
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

std::string ModelSpec::to_text() const {
    std::ostringstream os;
    os << "head " << (head == HeadKind::lm ? "lm" : "classify") << '\n'
       << "vocab " << vocab << '\n'
       << "max_len " << max_len << '\n'
       << "width " << width << '\n'
       << "heads " << heads << '\n'
       << "ffn_hidden " << ffn_hidden << '\n'
       << "num_classes " << num_classes << '\n'
       << "mixers " << join_mixers(mixers) << '\n'
       << "linformer_rank " << linformer_rank << '\n'
       << "share " << to_string(share) << '\n'
       << "ssm_state " << ssm_state << '\n'
       << "causal " << (causal ? 1 : 0) << '\n'
       << "ln_eps " << fmt_double(ln_eps) << '\n';
    return os.str();
}

ModelSpec ModelSpec::parse(const std::string& text) {
    ModelSpec spec;
    std::istringstream in(text);
    std::string key, value;
    std::map<std::string, std::string> kv;
    while (in >> key >> value) kv[key] = value;
    auto get = [&](const char* k) -> const std::string& {
        auto it = kv.find(k);
        if (it == kv.end()) throw FormatError(std::string("model spec missing '") + k + "'");
        return it->second;
    };
    auto num = [&](const char* k) { return static_cast<std::size_t>(std::stoull(get(k))); };
    try {
        spec.head = get("head") == "lm" ? HeadKind::lm : HeadKind::classify;
        spec.vocab = num("vocab");
        spec.max_len = num("max_len");
        spec.width = num("width");
        spec.heads = num("heads");
        spec.ffn_hidden = num("ffn_hidden");
        spec.num_classes = num("num_classes");
        spec.mixers.clear();
        if (get("mixers") != "-") {
            std::istringstream ms(get("mixers"));
            std::string item;
            while (std::getline(ms, item, ',')) spec.mixers.push_back(parse_mixer_kind(item));
        }
        spec.linformer_rank = num("linformer_rank");
        spec.share = parse_share_mode(get("share"));
        spec.ssm_state = num("ssm_state");
        spec.causal = get("causal") == "1";
        spec.ln_eps = std::stod(get("ln_eps"));
    } catch (const std::logic_error& e) {
        throw FormatError(std::string("malformed model spec: ") + e.what());
    }
    if (kv.size() != 13) throw FormatError("model spec has unexpected keys");
    spec.validate();
    return spec;
}

void ModelSpec::validate() const {
    if (vocab == 0 || max_len == 0 || width == 0 || ffn_hidden == 0) {
        throw ConfigError("model sizes must be positive");
    }
    if (heads == 0 || width % heads != 0) throw ConfigError("width must be a multiple of heads");
    if (head == HeadKind::classify && num_classes < 2) throw ConfigError("classifier needs >= 2 classes");
    if (!(ln_eps > 0.0)) throw ConfigError("ln_eps must be positive");
    for (MixerKind k : mixers) {
        if (k == MixerKind::linformer) {
            if (linformer_rank == 0 || linformer_rank > max_len) {
                throw ConfigError("linformer rank must be in [1, max_len]");
            }
            if (causal) throw ConfigError("linformer blocks cannot be causal");
        }
        if ((k == MixerKind::ssm || k == MixerKind::bidirectional_ssm) && ssm_state == 0) {
            throw ConfigError("ssm state dimension must be positive");
        }
    }
}

const Tensor& Model::param(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
    return params_[it->second].second;
}

Tensor& Model::param(const std::string& name) {
    return const_cast<Tensor&>(static_cast<const Model&>(*this).param(name));
}

void Model::add_param(const std::string& name, Tensor value) {
    if (has(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    index_[name] = params_.size();
    params_.emplace_back(name, std::move(value));
}

std::size_t Model::parameter_count() const {
    std::size_t total = 0;
    for (const auto& [name, t] : params_) total += t.numel();
    return total;
}

void Model::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

void Model::set_requires_grad(bool flag) {
    for (auto& [name, t] : params_) t.set_requires_grad(flag);
}

Model Model::clone() const {
    Model out(spec_);
    for (const auto& [name, t] : params_) out.add_param(name, t.clone());
    return out;
}

std::string Model::block_prefix(std::size_t block) { return "blocks." + std::to_string(block) + "."; }

std::string Model::linformer_e_name(std::size_t block) const {
    switch (spec_.share) {
        case ShareMode::none: return block_prefix(block) + "linformer.e";
        case ShareMode::kv: return block_prefix(block) + "linformer.ef";
        case ShareMode::layer: return "linformer.ef";
    }
    return {};
}

std::string Model::linformer_f_name(std::size_t block) const {
    if (spec_.share == ShareMode::none) return block_prefix(block) + "linformer.f";
    return linformer_e_name(block);
}

AttentionParams Model::attention(std::size_t block) const {
    const std::string p = block_prefix(block) + "attn.";
    AttentionParams a;
    a.wq = param(p + "wq");
    a.bq = param(p + "bq");
    a.wk = param(p + "wk");
    a.bk = param(p + "bk");
    a.wv = param(p + "wv");
    a.bv = param(p + "bv");
    a.wo = param(p + "wo");
    a.bo = param(p + "bo");
    a.heads = spec_.heads;
    return a;
}

LinformerParams Model::linformer(std::size_t block) const {
    LinformerParams l;
    l.attention = attention(block);
    l.e = param(linformer_e_name(block));
    l.f = param(linformer_f_name(block));
    l.share = spec_.share;
    return l;
}

SsmParams Model::ssm(std::size_t block, const std::string& prefix) const {
    const std::string p = block_prefix(block) + prefix + ".";
    SsmParams s;
    s.w_in = param(p + "w_in");
    s.b_in = param(p + "b_in");
    s.w_dt = param(p + "w_dt");
    s.b_dt = param(p + "b_dt");
    s.a_log = param(p + "a_log");
    s.b = param(p + "b");
    s.c = param(p + "c");
    s.w_out = param(p + "w_out");
    s.b_out = param(p + "b_out");
    return s;
}

std::pair<Tensor, Tensor> Model::next_norm(std::size_t block) const {
    if (block + 1 < spec_.depth()) {
        const std::string p = block_prefix(block + 1) + "norm1.";
        return {param(p + "gain"), param(p + "bias")};
    }
    return {param("final_norm.gain"), param("final_norm.bias")};
}

std::uint64_t name_stream(const std::string& name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Tensor init_normal(const Shape& shape, double stddev, std::uint64_t seed, const std::string& name) {
    Rng rng(seed, name_stream(name));
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = stddev * rng.normal();
    return Tensor::from_values(shape, std::move(v), true);
}

namespace {

Tensor weight(std::size_t in, std::size_t out, std::uint64_t seed, const std::string& name) {
    return init_normal({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), seed, name);
}

Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }
Tensor ones_param(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

void add_norm(Model& m, const std::string& prefix) {
    const std::size_t w = m.spec().width;
    m.add_param(prefix + "gain", ones_param({w}));
    m.add_param(prefix + "bias", zeros_param({w}));
}

}  // namespace

void add_attention_params(Model& m, std::size_t block, std::uint64_t seed) {
    const std::size_t w = m.spec().width;
    const std::string p = Model::block_prefix(block) + "attn.";
    for (const char* proj : {"q", "k", "v", "o"}) {
        m.add_param(p + "w" + proj, weight(w, w, seed, p + "w" + proj));
        m.add_param(p + "b" + proj, zeros_param({w}));
    }
}

void add_linformer_projections(Model& m, std::size_t block, std::uint64_t seed) {
    const Shape shape{m.spec().linformer_rank, m.spec().max_len};
    const std::string e = m.linformer_e_name(block), f = m.linformer_f_name(block);
    if (!m.has(e)) m.add_param(e, init_normal(shape, 1.0, seed, e));
    if (!m.has(f)) m.add_param(f, init_normal(shape, 1.0, seed, f));
}

void add_ssm_params(Model& m, std::size_t block, const std::string& prefix, std::uint64_t seed,
                    double delta_init) {
    const std::size_t w = m.spec().width, n = m.spec().ssm_state;
    const std::string p = Model::block_prefix(block) + prefix + ".";
    m.add_param(p + "w_in", weight(w, w, seed, p + "w_in"));
    m.add_param(p + "b_in", zeros_param({w}));
    m.add_param(p + "w_dt", init_normal({w, w}, 0.01 / std::sqrt(static_cast<double>(w)), seed, p + "w_dt"));
    // softplus(b_dt) = delta_init
    m.add_param(p + "b_dt", Tensor::full({w}, std::log(std::expm1(delta_init)), true));
    std::vector<double> a_log(w * n);
    for (std::size_t d = 0; d < w; ++d) {
        for (std::size_t i = 0; i < n; ++i) a_log[d * n + i] = std::log(static_cast<double>(i + 1));
    }
    m.add_param(p + "a_log", Tensor::from_values({w, n}, std::move(a_log), true));
    m.add_param(p + "b", init_normal({w, n}, 0.1, seed, p + "b"));
    m.add_param(p + "c", init_normal({w, n}, 0.1, seed, p + "c"));
    m.add_param(p + "w_out", weight(w, w, seed, p + "w_out"));
    m.add_param(p + "b_out", zeros_param({w}));
}

Model init_model(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    Model m(spec);
    const std::size_t w = spec.width;
    m.add_param("embed.token", init_normal({spec.vocab, w}, 0.1, seed, "embed.token"));
    m.add_param("embed.pos", init_normal({spec.max_len, w}, 0.1, seed, "embed.pos"));
    for (std::size_t b = 0; b < spec.depth(); ++b) {
        const std::string p = Model::block_prefix(b);
        add_norm(m, p + "norm1.");
        switch (spec.mixers[b]) {
            case MixerKind::attention: add_attention_params(m, b, seed); break;
            case MixerKind::linformer:
                add_attention_params(m, b, seed);
                add_linformer_projections(m, b, seed);
                break;
            case MixerKind::ssm: add_ssm_params(m, b, "ssm", seed); break;
            case MixerKind::bidirectional_ssm:
                add_ssm_params(m, b, "ssm_fwd", seed);
                add_ssm_params(m, b, "ssm_bwd", seed);
                break;
        }
        add_norm(m, p + "norm2.");
        m.add_param(p + "ffn.w1", weight(w, spec.ffn_hidden, seed, p + "ffn.w1"));
        m.add_param(p + "ffn.b1", zeros_param({spec.ffn_hidden}));
        m.add_param(p + "ffn.w2", weight(spec.ffn_hidden, w, seed, p + "ffn.w2"));
        m.add_param(p + "ffn.b2", zeros_param({w}));
    }
    add_norm(m, "final_norm.");
    m.add_param("head.w", weight(w, spec.output_dim(), seed, "head.w"));
    m.add_param("head.b", zeros_param({spec.output_dim()}));
    return m;
}

HiddenTrace forward_with_trace(const Model& model, const Batch& batch) {
    const ModelSpec& spec = model.spec();
    if (batch.tokens.size() != batch.size * batch.time || batch.lengths.size() != batch.size) {
        throw ShapeError("batch arrays do not match its declared size");
    }
    if (batch.time > spec.max_len) {
        throw ShapeError("sequence length " + std::to_string(batch.time) + " exceeds model max length " +
                         std::to_string(spec.max_len));
    }
    std::span<const std::int32_t> lengths;
    if (!batch.full_length()) lengths = batch.lengths;

    HiddenTrace trace;
    Tensor x = add_positional(embedding(model.param("embed.token"), batch.tokens, batch.time),
                              model.param("embed.pos"));
    for (std::size_t b = 0; b < spec.depth(); ++b) {
        const std::string p = Model::block_prefix(b);
        Tensor h = layernorm(x, model.param(p + "norm1.gain"), model.param(p + "norm1.bias"), spec.ln_eps);
        Tensor mixed;
        switch (spec.mixers[b]) {
            case MixerKind::attention:
                mixed = standard_attention(h, model.attention(b), spec.causal, spec.causal ? std::span<const std::int32_t>{} : lengths);
                break;
            case MixerKind::linformer: mixed = linformer_attention(h, model.linformer(b), spec.causal); break;
            case MixerKind::ssm: mixed = ssm_mixer(h, model.ssm(b, "ssm"), ScanDirection::forward, lengths); break;
            case MixerKind::bidirectional_ssm:
                mixed = bidirectional_mixer(h, model.ssm(b, "ssm_fwd"), model.ssm(b, "ssm_bwd"), lengths);
                break;
        }
        x = add(x, mixed);
        Tensor f = layernorm(x, model.param(p + "norm2.gain"), model.param(p + "norm2.bias"), spec.ln_eps);
        x = add(x, feed_forward(f, model.param(p + "ffn.w1"), model.param(p + "ffn.b1"),
                                model.param(p + "ffn.w2"), model.param(p + "ffn.b2")));
        trace.hidden.push_back(x);
    }
    Tensor out = layernorm(x, model.param("final_norm.gain"), model.param("final_norm.bias"), spec.ln_eps);
    if (spec.head == HeadKind::classify) out = mean_pool(out, batch.lengths);
    trace.logits = add_bias(matmul(out, model.param("head.w")), model.param("head.b"));
    return trace;
}

}  // namespace lindistill
