#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lindistill/model.hpp"

namespace lindistill {

enum class ScheduleKind { constant, linear_warmup, cosine_warmup, exponential_warmup };

std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(const std::string& text);

// Learning rate at 1-based update s of `total`:
//   warmup (s <= W):      base * s / W
//   constant:             base
//   linear_warmup:        base * (total - s) / (total - W)
//   cosine_warmup:        min + (base - min) * (1 + cos(pi * (s - W) / (total - W))) / 2
//   exponential_warmup:   max(min, base * decay_rate^(s - W))
// W = warmup_steps if positive, otherwise round(warmup_frac * total).
struct LrSchedule {
    ScheduleKind kind = ScheduleKind::constant;
    double base_lr = 1e-3;
    double min_lr = 0.0;
    double warmup_frac = 0.0;
    std::int64_t warmup_steps = 0;
    double decay_rate = 0.999;
    std::int64_t total_steps = 1;

    std::int64_t warmup() const;
    double at(std::int64_t step) const;
};

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    // Global gradient-norm clip; 0 disables.
    double clip_norm = 0.0;
};

// Decoupled weight decay Adam:
//   p <- p - lr * wd * p
//   m <- b1 m + (1 - b1) g;  v <- b2 v + (1 - b2) g^2
//   p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
class AdamW {
public:
    AdamW(AdamWConfig config, LrSchedule schedule) : config_(config), schedule_(schedule) {}

    // Clips, checks gradients for NaN/Inf (NumericFault, parameters
    // untouched), updates every parameter with a gradient, then zeroes
    // gradients. Returns the pre-clip gradient norm.
    double step(Model& model);

    std::int64_t steps_taken() const { return t_; }
    double current_lr() const { return schedule_.at(t_ + 1); }
    const AdamWConfig& config() const { return config_; }

    // "state.<prefix>.m.<param>", "state.<prefix>.v.<param>", "state.<prefix>.t"
    std::vector<std::pair<std::string, Tensor>> export_state(const std::string& prefix = "adam") const;
    void import_state(const std::vector<std::pair<std::string, Tensor>>& state, const std::string& prefix = "adam");

private:
    AdamWConfig config_;
    LrSchedule schedule_;
    std::int64_t t_ = 0;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

}  // namespace lindistill
