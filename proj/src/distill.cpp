#include "lindistill/distill.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "lindistill/errors.hpp"

namespace lindistill {

std::string to_string(GuidanceMode mode) {
    switch (mode) {
        case GuidanceMode::unguided: return "unguided";
        case GuidanceMode::target: return "target";
        case GuidanceMode::trajectory: return "trajectory";
        case GuidanceMode::waypoint: return "waypoint";
        case GuidanceMode::hybrid: return "hybrid";
    }
    return "?";
}

GuidanceMode parse_guidance_mode(const std::string& text) {
    if (text == "unguided") return GuidanceMode::unguided;
    if (text == "target") return GuidanceMode::target;
    if (text == "trajectory") return GuidanceMode::trajectory;
    if (text == "waypoint") return GuidanceMode::waypoint;
    if (text == "hybrid") return GuidanceMode::hybrid;
    throw ConfigError("unknown guidance mode '" + text + "'");
}

std::int64_t DistillConfig::switch_step() const {
    if (hybrid_switch >= 0) return hybrid_switch;
    return static_cast<std::int64_t>(std::llround(0.3 * static_cast<double>(steps)));
}

void DistillConfig::validate() const {
    if (!(beta > 0.0)) throw ConfigError("beta must be positive");
    if (weights.ce < 0.0 || weights.kd < 0.0 || weights.ld < 0.0) throw ConfigError("loss weights must be non-negative");
    if (steps < 0) throw ConfigError("steps must be non-negative");
    if (teacher_update_interval < 1) throw ConfigError("teacher_update_interval must be >= 1");
    if (waypoint_interval < 1) throw ConfigError("waypoint_interval must be >= 1");
    if (mode == GuidanceMode::hybrid && steps > 0 && switch_step() > steps) {
        throw ConfigError("hybrid switch step must not exceed the total steps");
    }
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
}

bool StepRecord::same_losses(const StepRecord& o) const {
    return step == o.step && ce == o.ce && kd == o.kd && ld == o.ld && total == o.total && teacher_ce == o.teacher_ce;
}

std::string StepRecord::to_json() const {
    nlohmann::json j = {{"step", step},       {"ce", ce},       {"kd", kd},
                        {"ld", ld},           {"total", total}, {"teacher", teacher},
                        {"teacher_index", teacher_index},       {"lr", lr}};
    j["teacher_ce"] = teacher_ce ? nlohmann::json(*teacher_ce) : nlohmann::json(nullptr);
    j["eval"] = eval_metric ? nlohmann::json(*eval_metric) : nlohmann::json(nullptr);
    return j.dump();
}

WaypointSource WaypointSource::from_store(const WaypointStore& store) {
    WaypointSource src;
    src.count = store.size();
    src.load = [store](std::size_t i) { return store.load(i); };
    return src;
}

WaypointSource WaypointSource::from_models(std::vector<Model> models) {
    WaypointSource src;
    src.count = models.size();
    src.load = [models = std::move(models)](std::size_t i) { return models.at(i - 1).clone(); };
    return src;
}

std::vector<std::int32_t> ce_targets(const Batch& batch, HeadKind head) {
    if (head == HeadKind::classify) return batch.labels;
    std::vector<std::int32_t> out = batch.labels;
    for (std::size_t r = 0; r < out.size(); ++r) {
        if (r % batch.time >= static_cast<std::size_t>(batch.lengths[r / batch.time])) out[r] = -1;
    }
    return out;
}

namespace {

bool has_ssm(const Model& m) {
    return std::any_of(m.spec().mixers.begin(), m.spec().mixers.end(), [](MixerKind k) {
        return k == MixerKind::ssm || k == MixerKind::bidirectional_ssm;
    });
}

OptimConfig with_total(OptimConfig oc, std::int64_t total) {
    oc.schedule.total_steps = std::max<std::int64_t>(1, total);
    return oc;
}

}  // namespace

Distiller::Distiller(Model student, std::optional<Model> teacher, const Dataset& train, DistillConfig config,
                     WaypointSource waypoints)
    : student_(student.clone()),
      train_(train),
      config_(std::move(config)),
      waypoints_(std::move(waypoints)),
      sampler_(train.count, config_.batch_size, config_.seed),
      optimizer_(config_.optim.adam, with_total(config_.optim, config_.steps).schedule),
      normalize_ld_(config_.normalize_ld.value_or(has_ssm(student_))) {
    config_.validate();
    student_.set_requires_grad(true);
    switch (config_.mode) {
        case GuidanceMode::unguided: break;
        case GuidanceMode::target:
        case GuidanceMode::hybrid:
            if (!teacher) throw std::invalid_argument(to_string(config_.mode) + " mode needs a teacher");
            teacher_ = teacher->clone();
            break;
        case GuidanceMode::trajectory: {
            if (!teacher) throw std::invalid_argument("trajectory mode needs the source teacher");
            teacher_ = teacher->clone();
            teacher_->set_requires_grad(true);
            const std::int64_t updates = config_.steps / config_.teacher_update_interval;
            auto oc = with_total(config_.teacher_optim, updates);
            teacher_optimizer_.emplace(oc.adam, oc.schedule);
            break;
        }
        case GuidanceMode::waypoint:
            if (waypoints_.count == 0) throw std::invalid_argument("waypoint mode needs a non-empty waypoint store");
            teacher_ = waypoints_.load(1);
            break;
    }
    if (teacher_ && teacher_->spec().depth() != student_.spec().depth()) {
        throw ShapeError("teacher and student block counts differ");
    }
}

LayerNorms Distiller::teacher_norms(const Model& teacher) const {
    LayerNorms norms;
    for (std::size_t l = 0; l < teacher.spec().depth(); ++l) {
        auto [gain, bias] = teacher.next_norm(l);
        norms.emplace_back(gain.detach(), bias.detach());
    }
    return norms;
}

StepRecord Distiller::finish(StepRecord rec, Tensor total) {
    rec.total = total.item();
    rec.lr = optimizer_.current_lr();
    total.backward();
    optimizer_.step(student_);
    return rec;
}

StepRecord Distiller::step() {
    const std::int64_t i = completed_ + 1;
    const auto idx = sampler_.indices(i);
    const Batch batch = make_batch(train_, idx);
    const HeadKind head = student_.spec().head;
    const auto targets = ce_targets(batch, head);
    std::vector<std::uint8_t> row_mask;
    if (head == HeadKind::lm) {
        row_mask.resize(targets.size());
        for (std::size_t r = 0; r < targets.size(); ++r) row_mask[r] = targets[r] >= 0;
    }
    std::span<const std::int32_t> lengths;
    if (!batch.full_length()) lengths = batch.lengths;
    const double eps = student_.spec().ln_eps;
    const Tensor zero = Tensor::scalar(0.0);

    StepRecord rec;
    rec.step = i;
    // With both distillation weights at zero the terms are not evaluated, so
    // every mode reduces exactly to unguided training.
    const bool distilling = config_.weights.kd != 0.0 || config_.weights.ld != 0.0;
    auto guided_losses = [&](const HiddenTrace& s, const HiddenTrace& t, const LayerNorms& norms, Tensor& kd,
                             Tensor& ld) {
        if (!distilling) {
            kd = ld = zero;
            return;
        }
        kd = loss_kd(s.logits, t.logits, config_.beta, config_.kd_form, row_mask);
        ld = loss_ld(s.hidden, t.hidden, lengths, normalize_ld_ ? &norms : nullptr, eps);
    };
    try {
        student_.zero_grad();
        switch (config_.mode) {
            case GuidanceMode::unguided: {
                const HiddenTrace s = forward_with_trace(student_, batch);
                const Tensor ce = loss_ce(s.logits, targets);
                rec.ce = ce.item();
                rec = finish(rec, loss_total(ce, zero, zero, config_.weights));
                break;
            }
            case GuidanceMode::target:
            case GuidanceMode::hybrid: {
                const HiddenTrace s = forward_with_trace(student_, batch);
                const Tensor ce = loss_ce(s.logits, targets);
                rec.ce = ce.item();
                if (config_.mode == GuidanceMode::hybrid && i > config_.switch_step()) {
                    rec = finish(rec, loss_total(ce, zero, zero, config_.weights));
                } else {
                    HiddenTrace t;
                    if (distilling) {
                        NoGradGuard no_grad;
                        t = forward_with_trace(*teacher_, batch);
                    }
                    Tensor kd, ld;
                    guided_losses(s, t, teacher_norms(*teacher_), kd, ld);
                    rec.kd = kd.item();
                    rec.ld = ld.item();
                    rec.teacher = "target";
                    rec = finish(rec, loss_total(ce, kd, ld, config_.weights));
                }
                break;
            }
            case GuidanceMode::trajectory: {
                const bool update = i % config_.teacher_update_interval == 0;
                HiddenTrace t;
                if (update) {
                    t = forward_with_trace(*teacher_, batch);
                } else {
                    NoGradGuard no_grad;
                    t = forward_with_trace(*teacher_, batch);
                }
                const LayerNorms norms = teacher_norms(*teacher_);
                if (update) {
                    const Tensor teacher_ce = loss_ce(t.logits, targets);
                    rec.teacher_ce = teacher_ce.item();
                    teacher_->zero_grad();
                    teacher_ce.backward();
                    teacher_optimizer_->step(*teacher_);
                }
                const HiddenTrace s = forward_with_trace(student_, batch);
                const Tensor ce = loss_ce(s.logits, targets);
                rec.ce = ce.item();
                Tensor kd, ld;
                guided_losses(s, t, norms, kd, ld);
                rec.kd = kd.item();
                rec.ld = ld.item();
                rec.teacher = "live";
                rec = finish(rec, loss_total(ce, kd, ld, config_.weights));
                break;
            }
            case GuidanceMode::waypoint: {
                const HiddenTrace s = forward_with_trace(student_, batch);
                HiddenTrace t;
                if (distilling) {
                    NoGradGuard no_grad;
                    t = forward_with_trace(*teacher_, batch);
                }
                const Tensor ce = loss_ce(s.logits, targets);
                rec.ce = ce.item();
                Tensor kd, ld;
                guided_losses(s, t, teacher_norms(*teacher_), kd, ld);
                rec.kd = kd.item();
                rec.ld = ld.item();
                rec.teacher = "waypoint";
                rec.teacher_index = static_cast<std::int64_t>(waypoint_index_);
                rec = finish(rec, loss_total(ce, kd, ld, config_.weights));
                if (i % config_.waypoint_interval == 0 && waypoint_index_ < waypoints_.count) {
                    ++waypoint_index_;
                    teacher_ = waypoints_.load(waypoint_index_);
                }
                break;
            }
        }
    } catch (const TrainingFault&) {
        throw;
    } catch (const NumericFault& e) {
        student_.zero_grad();
        throw TrainingFault(i, e.what());
    }
    completed_ = i;
    return rec;
}

void Distiller::resume(std::int64_t step, const Model& student,
                       const std::vector<std::pair<std::string, Tensor>>& state, std::optional<Model> teacher) {
    if (step < 0 || step > config_.steps) throw std::invalid_argument("resume step outside the run");
    if (student.spec() != student_.spec()) throw ShapeError("resumed student has a different architecture");
    student_ = student.clone();
    student_.set_requires_grad(true);
    completed_ = step;
    optimizer_.import_state(state, "adam");
    if (config_.mode == GuidanceMode::trajectory) {
        if (!teacher) throw std::invalid_argument("resuming trajectory mode needs the co-trained teacher");
        teacher_ = teacher->clone();
        teacher_->set_requires_grad(true);
        teacher_optimizer_->import_state(state, "teacher_adam");
    }
    if (config_.mode == GuidanceMode::waypoint) {
        waypoint_index_ = std::min<std::size_t>(static_cast<std::size_t>(step / config_.waypoint_interval) + 1,
                                                waypoints_.count);
        teacher_ = waypoints_.load(waypoint_index_);
    }
}

TrainResult run(Distiller& session, const TrainHooks& hooks) {
    TrainResult result;
    const auto& cfg = session.config();
    while (session.completed() < cfg.steps) {
        StepRecord rec = session.step();
        if (hooks.val && cfg.eval_interval > 0 && rec.step % cfg.eval_interval == 0) {
            const Metrics m = evaluate(session.student(), *hooks.val);
            rec.eval_metric = session.student().spec().head == HeadKind::lm ? m.perplexity : m.accuracy;
        }
        if (hooks.on_record) hooks.on_record(rec);
        if (hooks.on_step) hooks.on_step(session.student(), session.optimizer(), rec.step);
        result.records.push_back(std::move(rec));
    }
    result.student = session.student();
    if (cfg.mode == GuidanceMode::trajectory) result.teacher = session.teacher();
    return result;
}

TrainResult train_unguided(Model student, const Dataset& data, DistillConfig config, const TrainHooks& hooks) {
    config.mode = GuidanceMode::unguided;
    Distiller session(std::move(student), std::nullopt, data, std::move(config));
    return run(session, hooks);
}

TrainResult train_target_guided(Model student, const Model& teacher_target, const Dataset& data, DistillConfig config,
                                const TrainHooks& hooks) {
    if (config.mode != GuidanceMode::hybrid) config.mode = GuidanceMode::target;
    Distiller session(std::move(student), teacher_target, data, std::move(config));
    return run(session, hooks);
}

TrainResult train_trajectory_guided(Model student, const Model& teacher_source, const Dataset& data,
                                    DistillConfig config, const TrainHooks& hooks) {
    config.mode = GuidanceMode::trajectory;
    Distiller session(std::move(student), teacher_source, data, std::move(config));
    return run(session, hooks);
}

TrainResult train_waypoint_guided(Model student, const WaypointSource& waypoints, const Dataset& data,
                                  DistillConfig config, const TrainHooks& hooks) {
    config.mode = GuidanceMode::waypoint;
    Distiller session(std::move(student), std::nullopt, data, std::move(config), waypoints);
    return run(session, hooks);
}

TrainResult train(Model student, const std::optional<Model>& teacher, const WaypointSource& waypoints,
                  const Dataset& data, const DistillConfig& config, const TrainHooks& hooks) {
    Distiller session(std::move(student), teacher, data, config, waypoints);
    return run(session, hooks);
}

TrainResult fine_tune_teacher(Model teacher, const Dataset& data, DistillConfig config, WaypointStore* store,
                              const TrainHooks& hooks) {
    config.mode = GuidanceMode::unguided;
    TrainHooks inner = hooks;
    const std::int64_t total = config.steps;
    const std::int64_t interval = config.waypoint_interval;
    inner.on_step = [&](const Model& m, const AdamW& opt, std::int64_t step) {
        const bool due = step % interval == 0 || step == total;
        if (store && due && store->last_teacher_step().value_or(0) < step) store->append(m, step);
        if (hooks.on_step) hooks.on_step(m, opt, step);
    };
    Distiller session(std::move(teacher), std::nullopt, data, std::move(config));
    return run(session, inner);
}

}  // namespace lindistill
