#include "lindistill/optim.hpp"

#include <cmath>
#include <numbers>

#include "lindistill/errors.hpp"

namespace lindistill {

std::string to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::constant: return "constant";
        case ScheduleKind::linear_warmup: return "linear-warmup";
        case ScheduleKind::cosine_warmup: return "cosine-warmup";
        case ScheduleKind::exponential_warmup: return "exponential-warmup";
    }
    return "?";
}

ScheduleKind parse_schedule_kind(const std::string& text) {
    if (text == "constant") return ScheduleKind::constant;
    if (text == "linear-warmup") return ScheduleKind::linear_warmup;
    if (text == "cosine-warmup") return ScheduleKind::cosine_warmup;
    if (text == "exponential-warmup") return ScheduleKind::exponential_warmup;
    throw ConfigError("unknown schedule '" + text + "'");
}

std::int64_t LrSchedule::warmup() const {
    if (warmup_steps > 0) return warmup_steps;
    return static_cast<std::int64_t>(std::llround(warmup_frac * static_cast<double>(total_steps)));
}

double LrSchedule::at(std::int64_t step) const {
    const std::int64_t w = warmup();
    if (w > 0 && step <= w) return base_lr * static_cast<double>(step) / static_cast<double>(w);
    const double span = static_cast<double>(std::max<std::int64_t>(1, total_steps - w));
    const double into = static_cast<double>(step - w);
    switch (kind) {
        case ScheduleKind::constant: return base_lr;
        case ScheduleKind::linear_warmup: return base_lr * std::max(0.0, (span - into) / span);
        case ScheduleKind::cosine_warmup:
            return min_lr + (base_lr - min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(1.0, into / span)));
        case ScheduleKind::exponential_warmup: return std::max(min_lr, base_lr * std::pow(decay_rate, into));
    }
    return base_lr;
}

double AdamW::step(Model& model) {
    double sq = 0.0;
    for (const auto& [name, p] : model.parameters()) {
        if (!p.has_grad()) continue;
        for (double g : p.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NumericFault("non-finite gradient norm");
    const double clip = config_.clip_norm > 0.0 && norm > config_.clip_norm ? config_.clip_norm / (norm + 1e-6) : 1.0;

    ++t_;
    const double lr = schedule_.at(t_);
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (const auto& [name, param] : model.parameters()) {
        Tensor p = param;  // shares storage
        if (!p.has_grad()) continue;
        auto& [m, v] = moments_[name];
        if (m.empty()) {
            m.assign(p.numel(), 0.0);
            v.assign(p.numel(), 0.0);
        }
        auto values = p.mutable_values();
        auto grad = p.grad();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double g = grad[i] * clip;
            if (config_.weight_decay != 0.0) values[i] -= lr * config_.weight_decay * values[i];
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
            values[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config_.eps);
        }
        p.zero_grad();
    }
    return norm;
}

std::vector<std::pair<std::string, Tensor>> AdamW::export_state(const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor>> out;
    const std::string p = "state." + prefix + ".";
    out.emplace_back(p + "t", Tensor::scalar(static_cast<double>(t_)));
    for (const auto& [name, mv] : moments_) {
        out.emplace_back(p + "m." + name, Tensor::from_values({mv.first.size()}, mv.first));
        out.emplace_back(p + "v." + name, Tensor::from_values({mv.second.size()}, mv.second));
    }
    return out;
}

void AdamW::import_state(const std::vector<std::pair<std::string, Tensor>>& state, const std::string& prefix) {
    const std::string p = "state." + prefix + ".";
    moments_.clear();
    t_ = 0;
    for (const auto& [name, t] : state) {
        if (name.rfind(p, 0) != 0) continue;
        const std::string rest = name.substr(p.size());
        auto vals = std::vector<double>(t.values().begin(), t.values().end());
        if (rest == "t") {
            t_ = static_cast<std::int64_t>(t.item());
        } else if (rest.rfind("m.", 0) == 0) {
            moments_[rest.substr(2)].first = std::move(vals);
        } else if (rest.rfind("v.", 0) == 0) {
            moments_[rest.substr(2)].second = std::move(vals);
        }
    }
}

}  // namespace lindistill
