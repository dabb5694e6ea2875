#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "lindistill/errors.hpp"
#include "lindistill/gradcheck.hpp"
#include "lindistill/losses.hpp"
#include "lindistill/ops.hpp"

using namespace lindistill;
using th::randn;

namespace {

std::vector<double> softmax_oracle(std::span<const double> z, double temperature) {
    double mx = -INFINITY;
    for (double v : z) mx = std::max(mx, v / temperature);
    double s = 0;
    for (double v : z) s += std::exp(v / temperature - mx);
    std::vector<double> p;
    for (double v : z) p.push_back(std::exp(v / temperature - mx) / s);
    return p;
}

double kl_oracle(const Tensor& student, const Tensor& teacher, double temperature) {
    const std::size_t cols = student.shape().back(), rows = student.numel() / cols;
    double total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        const auto ps = softmax_oracle(student.values().subspan(r * cols, cols), temperature);
        const auto pt = softmax_oracle(teacher.values().subspan(r * cols, cols), temperature);
        for (std::size_t c = 0; c < cols; ++c) total += pt[c] * std::log(pt[c] / ps[c]);
    }
    return total / static_cast<double>(rows);
}

// Element-by-element layerwise MSE; optional layernorm with a given gain/bias.
double ld_oracle(const std::vector<Tensor>& s, const std::vector<Tensor>& t, const std::vector<std::int32_t>& lengths,
                 const LayerNorms* norms, double eps) {
    double total = 0;
    for (std::size_t l = 0; l < s.size(); ++l) {
        const std::size_t B = s[l].dim(0), T = s[l].dim(1), W = s[l].dim(2);
        double acc = 0;
        std::size_t count = 0;
        for (std::size_t b = 0; b < B; ++b) {
            const std::size_t len = lengths.empty() ? T : static_cast<std::size_t>(lengths[b]);
            for (std::size_t p = 0; p < len; ++p) {
                std::vector<double> vs(W), vt(W);
                for (std::size_t j = 0; j < W; ++j) {
                    vs[j] = s[l].value((b * T + p) * W + j);
                    vt[j] = t[l].value((b * T + p) * W + j);
                }
                if (norms) {
                    for (auto* v : {&vs, &vt}) {
                        double m = 0, var = 0;
                        for (double x : *v) m += x;
                        m /= static_cast<double>(W);
                        for (double x : *v) var += (x - m) * (x - m);
                        var /= static_cast<double>(W);
                        for (std::size_t j = 0; j < W; ++j) {
                            (*v)[j] = ((*v)[j] - m) / std::sqrt(var + eps) * (*norms)[l].first.value(j) +
                                      (*norms)[l].second.value(j);
                        }
                    }
                }
                for (std::size_t j = 0; j < W; ++j) acc += (vs[j] - vt[j]) * (vs[j] - vt[j]);
                count += W;
            }
        }
        total += acc / static_cast<double>(count);
    }
    return total / static_cast<double>(s.size());
}

}  // namespace

TEST_CASE("cross-entropy examples") {
    const std::vector<std::int32_t> l0{0};
    CHECK(std::abs(loss_ce(Tensor::zeros({1, 5}), l0).item() - std::log(5.0)) < 1e-15);
    CHECK(loss_ce(Tensor::from_values({1, 3}, {800, 0, 0}), l0).item() < 1e-300);
    const std::vector<std::int32_t> l2{2};
    const double expect = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 3.0;
    CHECK(std::abs(loss_ce(Tensor::from_values({1, 3}, {1, 2, 3}), l2).item() - expect) < 1e-15);
    CHECK(std::abs(expect - 0.40760596) < 1e-8);
}

TEST_CASE("cross-entropy label handling") {
    const Tensor logits = randn({3, 4}, 1);
    const std::vector<std::int32_t> bad{0, 4, 1}, neg{0, -2, 1};
    CHECK_THROWS_AS(loss_ce(logits, bad), std::out_of_range);
    CHECK_THROWS_AS(loss_ce(logits, neg), std::out_of_range);
    const std::vector<std::int32_t> skip{-1, 2, -1};
    const std::vector<std::int32_t> only{2};
    const Tensor row = Tensor::from_values({1, 4}, {logits.value(4), logits.value(5), logits.value(6), logits.value(7)});
    CHECK(loss_ce(logits, skip).item() == doctest::Approx(loss_ce(row, only).item()).epsilon(1e-14));
    CHECK_THROWS_AS(loss_ce(logits, only), ShapeError);
}

TEST_CASE("kd examples") {
    const Tensor t = Tensor::from_values({1, 2}, {0.0, 0.0});
    const Tensor s = Tensor::from_values({1, 2}, {std::log(0.9), std::log(0.1)});
    const double expect = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
    CHECK(std::abs(loss_kd(s, t, 1.0).item() - expect) < 1e-12);
    CHECK(std::abs(loss_kd(s, t, 1.0).item() - 0.51083) < 1e-5);

    const Tensor z = randn({4, 6}, 2, 3.0);
    for (auto form : {KdForm::softmax_temperature, KdForm::literal}) {
        CHECK(loss_kd(z, z, 2.0, form).item() == 0.0);
        // The tempered form decays like 1/beta^2, the literal one like 1/beta.
        const double beta = form == KdForm::literal ? 1e13 : 1e9;
        CHECK(loss_kd(randn({4, 6}, 3), z, beta, form).item() < 1e-12);
    }
    CHECK_THROWS_AS(loss_kd(z, randn({4, 5}, 4), 2.0), ShapeError);
    CHECK_THROWS(loss_kd(z, z, 0.0));
}

TEST_CASE("kd forms match the KL oracle") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Tensor a = randn({3, 5}, 10 + s, 2.0), b = randn({3, 5}, 20 + s, 2.0);
        for (double beta : {0.5, 1.0, 2.0, 4.0}) {
            CHECK(std::abs(loss_kd(a, b, beta).item() - kl_oracle(a, b, beta)) < 1e-12);
            CHECK(std::abs(loss_kd(a, b, beta, KdForm::literal).item() - kl_oracle(a, b, 1.0) / beta) < 1e-12);
            CHECK(loss_kd(a, b, beta).item() >= 0.0);
        }
    }
}

TEST_CASE("kd row mask selects rows") {
    const Tensor a = randn({3, 4}, 30), b = randn({3, 4}, 31);
    const std::vector<std::uint8_t> mask{0, 1, 0};
    const Tensor a1 = Tensor::from_values({1, 4}, {a.value(4), a.value(5), a.value(6), a.value(7)});
    const Tensor b1 = Tensor::from_values({1, 4}, {b.value(4), b.value(5), b.value(6), b.value(7)});
    CHECK(loss_kd(a, b, 2.0, KdForm::softmax_temperature, mask).item() ==
          doctest::Approx(loss_kd(a1, b1, 2.0).item()).epsilon(1e-14));
}

TEST_CASE("ld examples") {
    const std::vector<Tensor> h{randn({2, 3, 4}, 40), randn({2, 3, 4}, 41)};
    CHECK(loss_ld(h, h).item() == 0.0);
    std::vector<Tensor> shifted;
    for (const auto& x : h) shifted.push_back(add(x, Tensor::full(x.shape(), 0.75)));
    CHECK(std::abs(loss_ld(shifted, h).item() - 0.5625) < 1e-12);
    const std::vector<Tensor> one{h[0]};
    CHECK_THROWS_AS(loss_ld(one, h), ShapeError);
    const std::vector<Tensor> wrong{randn({2, 3, 5}, 42), h[1]};
    CHECK_THROWS_AS(loss_ld(wrong, h), ShapeError);
}

TEST_CASE("ld matches the elementwise oracle (plain, padded, normalized)") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const std::vector<Tensor> hs{randn({2, 3, 4}, 50 + s), randn({2, 3, 4}, 60 + s)};
        const std::vector<Tensor> ht{randn({2, 3, 4}, 70 + s), randn({2, 3, 4}, 80 + s)};
        const std::vector<std::int32_t> lengths{3, 2};
        const LayerNorms norms{{randn({4}, 90 + s), randn({4}, 91 + s)}, {randn({4}, 92 + s), randn({4}, 93 + s)}};
        CHECK(std::abs(loss_ld(hs, ht).item() - ld_oracle(hs, ht, {}, nullptr, 0)) < 1e-12);
        CHECK(std::abs(loss_ld(hs, ht, lengths).item() - ld_oracle(hs, ht, lengths, nullptr, 0)) < 1e-12);
        CHECK(std::abs(loss_ld(hs, ht, lengths, &norms, 1e-5).item() - ld_oracle(hs, ht, lengths, &norms, 1e-5)) <
              1e-12);
        CHECK(loss_ld(hs, ht, lengths, &norms).item() >= 0.0);
    }
}

TEST_CASE("loss gradients pass the gradient check") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Tensor logits = randn({3, 8}, 100 + s, 2.0);
        const std::vector<std::int32_t> labels{1, -1, 7};
        CHECK(grad_check([&](const Tensor& t) { return loss_ce(t, labels); }, logits).passed);
        const Tensor teacher = randn({3, 8}, 110 + s, 2.0);
        for (auto form : {KdForm::softmax_temperature, KdForm::literal}) {
            CHECK(grad_check([&](const Tensor& t) { return loss_kd(t, teacher, 2.0, form); }, logits).passed);
        }
        const Tensor hs = randn({2, 3, 4}, 120 + s), ht = randn({2, 3, 4}, 130 + s);
        const std::vector<std::int32_t> lengths{2, 3};
        const LayerNorms norms{{randn({4}, 140 + s), randn({4}, 141 + s)}};
        for (const LayerNorms* n : {static_cast<const LayerNorms*>(nullptr), &norms}) {
            auto f = [&](const Tensor& t) {
                const std::vector<Tensor> a{t}, b{ht};
                return loss_ld(a, b, lengths, n);
            };
            const auto r = grad_check(f, hs);
            CHECK_MESSAGE(r.passed, "max rel err " << r.max_rel_error);
        }
    }
}

TEST_CASE("ld does not push gradient into the teacher or the norms") {
    const Tensor hs = randn({1, 2, 3}, 150, 1.0, true), ht = randn({1, 2, 3}, 151, 1.0, true);
    const Tensor gain = randn({3}, 152, 1.0, true), bias = randn({3}, 153, 1.0, true);
    const LayerNorms norms{{gain, bias}};
    const std::vector<Tensor> a{hs}, b{ht};
    loss_ld(a, b, {}, &norms).backward();
    CHECK(hs.has_grad());
    for (const Tensor& t : {ht, gain, bias}) {
        bool zero = true;
        if (t.has_grad()) {
            for (double g : t.grad()) zero = zero && g == 0.0;
        }
        CHECK(zero);
    }
}

TEST_CASE("weighted total") {
    const LossWeights w{1, 1, 15};
    CHECK(std::abs(loss_total(0.5, 0.2, 0.01, w) - 0.85) < 1e-12);
    const Tensor t = loss_total(Tensor::scalar(0.5), Tensor::scalar(0.2), Tensor::scalar(0.01), w);
    CHECK(t.item() == loss_total(0.5, 0.2, 0.01, w));
    CHECK(loss_total(0.7, 3.0, 2.0, {1, 0, 0}) == 0.7);
    CHECK(loss_total(0.7, 3.0, 2.0, {0, 0, 0}) == 0.0);
}

TEST_CASE("kd form names round-trip") {
    for (auto f : {KdForm::softmax_temperature, KdForm::literal}) CHECK(parse_kd_form(to_string(f)) == f);
    CHECK_THROWS_AS(parse_kd_form("hinton"), ConfigError);
}
