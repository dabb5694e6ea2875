#include <doctest.h>

#include <cmath>
#include <set>

#include "helpers.hpp"
#include "lindistill/convert.hpp"
#include "lindistill/errors.hpp"
#include "lindistill/losses.hpp"
#include "lindistill/ops.hpp"

using namespace lindistill;

namespace {

Model teacher_model(std::size_t depth = 2, std::uint64_t seed = 1) {
    return init_model(th::tiny_spec(std::vector<MixerKind>(depth, MixerKind::attention)), seed);
}

bool is_attention_name(const std::string& name) { return name.find(".attn.") != std::string::npos; }

}  // namespace

TEST_CASE("identity conversion preserves behavior and every array") {
    const Model teacher = teacher_model();
    const Model student = transfer_parameters(teacher, ConversionPlan::identity(teacher));
    CHECK(th::same_parameters(teacher, student));
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Batch b = th::random_batch(teacher.spec(), 4, 8, s, s % 2 == 1);
        const HiddenTrace t = forward_with_trace(teacher, b), u = forward_with_trace(student, b);
        CHECK(th::max_abs_diff(t.logits, u.logits) <= 1e-10);
        for (std::size_t l = 0; l < t.hidden.size(); ++l) CHECK(th::max_abs_diff(t.hidden[l], u.hidden[l]) <= 1e-10);
    }
    const auto rep = describe_conversion(teacher, ConversionPlan::identity(teacher));
    CHECK(rep.arrays(GroupStatus::discarded) == 0);
    CHECK(rep.arrays(GroupStatus::initialized) == 0);
    CHECK(rep.scalars(GroupStatus::transferred) == teacher.parameter_count());
}

TEST_CASE("copies are deep and bitwise") {
    Model teacher = teacher_model();
    const Model student = transfer_parameters(teacher, ConversionPlan::uniform(teacher, MixerKind::ssm));
    for (const char* name : {"blocks.0.ffn.w1", "blocks.1.ffn.b2", "embed.token", "head.w", "final_norm.gain"}) {
        CHECK(th::bitwise_equal(student.param(name).values(), teacher.param(name).values()));
        CHECK_FALSE(student.param(name).same_node(teacher.param(name)));
    }
    const double before = student.param("embed.token").value(0);
    teacher.param("embed.token").mutable_values()[0] += 1.0;
    CHECK(student.param("embed.token").value(0) == before);
}

TEST_CASE("every non-attention teacher parameter survives conversion") {
    const Model teacher = teacher_model(3);
    for (MixerKind k : {MixerKind::linformer, MixerKind::ssm, MixerKind::bidirectional_ssm}) {
        const Model student = transfer_parameters(teacher, ConversionPlan::uniform(teacher, k));
        std::set<std::string> names;
        for (const auto& [n, t] : student.parameters()) names.insert(n);
        for (const auto& [n, t] : teacher.parameters()) {
            if (!is_attention_name(n)) CHECK_MESSAGE(names.count(n) == 1, n);
        }
    }
}

TEST_CASE("linformer parameter counts per sharing mode") {
    const Model teacher = teacher_model(3);
    const std::size_t k = 4, n = teacher.spec().max_len, L = 3;
    for (auto [share, extra] : std::vector<std::pair<ShareMode, std::size_t>>{
             {ShareMode::none, 2 * L * k * n}, {ShareMode::kv, L * k * n}, {ShareMode::layer, k * n}}) {
        ConversionPlan plan = ConversionPlan::uniform(teacher, MixerKind::linformer);
        plan.linformer_rank = k;
        plan.share = share;
        const Model student = transfer_parameters(teacher, plan);
        CHECK(student.parameter_count() == teacher.parameter_count() + extra);
        const auto rep = describe_conversion(teacher, plan);
        CHECK(rep.arrays(GroupStatus::discarded) == 0);
        const std::size_t arrays = share == ShareMode::none ? 2 * L : share == ShareMode::kv ? L : 1;
        CHECK(rep.arrays(GroupStatus::initialized) == arrays);
        CHECK(rep.scalars(GroupStatus::initialized) == extra);
        for (std::size_t b = 0; b < L; ++b) {
            CHECK(th::bitwise_equal(student.linformer(b).attention.wq.values(),
                                    teacher.attention(b).wq.values()));
        }
    }
}

TEST_CASE("new linformer projections are standard normal") {
    ModelSpec spec = th::tiny_spec({MixerKind::attention});
    spec.max_len = 512;
    const Model teacher = init_model(spec, 2);
    ConversionPlan plan = ConversionPlan::uniform(teacher, MixerKind::linformer);
    plan.linformer_rank = 8;
    const Model student = transfer_parameters(teacher, plan);
    const auto v = student.linformer(0).e.values();
    double m = 0, s2 = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    for (double x : v) s2 += (x - m) * (x - m);
    CHECK(std::abs(m) < 0.1);
    CHECK(std::abs(std::sqrt(s2 / static_cast<double>(v.size())) - 1.0) < 0.1);
}

TEST_CASE("ssm conversion discards exactly the attention parameters") {
    const Model teacher = teacher_model(2);
    const std::size_t w = teacher.spec().width;
    for (MixerKind k : {MixerKind::ssm, MixerKind::bidirectional_ssm}) {
        const auto rep = describe_conversion(teacher, ConversionPlan::uniform(teacher, k));
        CHECK(rep.scalars(GroupStatus::discarded) == 2 * (4 * w * w + 4 * w));
        CHECK(rep.arrays(GroupStatus::discarded) == 2 * 8);
        CHECK(rep.to_string().find("discarded") != std::string::npos);
    }
}

TEST_CASE("ssm initialization: negative-integer diagonal and small step size") {
    const Model teacher = teacher_model(1);
    ConversionPlan plan = ConversionPlan::uniform(teacher, MixerKind::ssm);
    plan.ssm_state = 5;
    const Model student = transfer_parameters(teacher, plan);
    const SsmParams p = student.ssm(0, "ssm");
    const Tensor a = neg_exp(p.a_log);
    for (std::size_t d = 0; d < p.width(); ++d) {
        for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(a.value(d * 5 + i) + static_cast<double>(i + 1)) < 1e-12);
    }
    const Batch b = th::random_batch(teacher.spec(), 2, 8, 3);
    const Tensor x = embedding(student.param("embed.token"), b.tokens, 8);
    const Tensor delta = softplus(add_bias(matmul(x, p.w_dt), p.b_dt));
    for (double d : delta.values()) {
        CHECK(d > 0.0);
        CHECK(std::abs(d - 0.1) < 0.02);
    }
}

TEST_CASE("transfer is idempotent under a follow-up identity plan") {
    const Model teacher = teacher_model(2);
    ConversionPlan plan = ConversionPlan::uniform(teacher, MixerKind::linformer);
    plan.mixers[1] = MixerKind::bidirectional_ssm;
    const Model once = transfer_parameters(teacher, plan);
    const Model twice = transfer_parameters(once, ConversionPlan::identity(once));
    CHECK(th::same_parameters(once, twice));
}

TEST_CASE("plan size must match the teacher depth") {
    const Model teacher = teacher_model(2);
    ConversionPlan plan;
    plan.mixers = {MixerKind::ssm};
    CHECK_THROWS_AS(transfer_parameters(teacher, plan), ShapeError);
}

TEST_CASE("identity-converted student has zero layerwise loss") {
    const Model teacher = teacher_model(2);
    const Model student = transfer_parameters(teacher, ConversionPlan::identity(teacher));
    const Batch b = th::random_batch(teacher.spec(), 3, 8, 9);
    const HiddenTrace t = forward_with_trace(teacher, b), s = forward_with_trace(student, b);
    CHECK(loss_ld(s.hidden, t.hidden).item() == 0.0);
}
