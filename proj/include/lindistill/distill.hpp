#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lindistill/losses.hpp"
#include "lindistill/model.hpp"
#include "lindistill/optim.hpp"
#include "lindistill/persist.hpp"
#include "lindistill/tasks.hpp"

namespace lindistill {

enum class GuidanceMode { unguided, target, trajectory, waypoint, hybrid };

std::string to_string(GuidanceMode mode);
GuidanceMode parse_guidance_mode(const std::string& text);

struct OptimConfig {
    AdamWConfig adam;
    LrSchedule schedule;  // total_steps is filled in by the training loop
};

struct DistillConfig {
    GuidanceMode mode = GuidanceMode::target;
    LossWeights weights;  // alpha_CE, alpha_KD, alpha_LD
    double beta = 2.0;
    KdForm kd_form = KdForm::softmax_temperature;
    std::int64_t steps = 0;                    // T
    std::int64_t teacher_update_interval = 1;  // T_u
    std::int64_t waypoint_interval = 1;        // T_w
    std::int64_t hybrid_switch = -1;           // T_h; negative means 30% of T
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    // Layernorm both traces with the teacher's next-layer norm before the
    // layerwise loss. Unset: on exactly when the student has an SSM block.
    std::optional<bool> normalize_ld;
    OptimConfig optim;
    // Optimizer for the co-trained teacher in trajectory mode.
    OptimConfig teacher_optim;
    std::int64_t eval_interval = 0;  // 0: never

    std::int64_t switch_step() const;
    void validate() const;
};

struct StepRecord {
    std::int64_t step = 0;
    double ce = 0.0;
    double kd = 0.0;
    double ld = 0.0;
    double total = 0.0;
    // "none", "target", "live" or "waypoint"
    std::string teacher = "none";
    // 1-based waypoint index in waypoint mode, 0 otherwise.
    std::int64_t teacher_index = 0;
    std::optional<double> teacher_ce;  // trajectory mode, teacher update steps
    std::optional<double> eval_metric;
    double lr = 0.0;

    // Step and loss fields, including the teacher's own loss; teacher
    // identity, lr and eval are ignored.
    bool same_losses(const StepRecord& other) const;
    std::string to_json() const;
};

// Called after each completed step with the student, optimizer, and step.
struct TrainHooks {
    std::function<void(const StepRecord&)> on_record;
    std::function<void(const Model& student, const AdamW& optimizer, std::int64_t step)> on_step;
    const Dataset* val = nullptr;
};

struct TrainResult {
    Model student;
    std::vector<StepRecord> records;
    std::optional<Model> teacher;  // trajectory mode: the co-trained teacher
};

// Provides waypoint models by 1-based index.
struct WaypointSource {
    std::size_t count = 0;
    std::function<Model(std::size_t)> load;

    static WaypointSource from_store(const WaypointStore& store);
    static WaypointSource from_models(std::vector<Model> models);
};

// One training session; each step() follows the per-mode control flow:
//  unguided    student forward, L = a_CE CE
//  target      student forward; teacher forward (no grad); full loss
//  hybrid      as target for i <= T_h, then L = a_CE CE without the teacher
//  trajectory  teacher forward; on i mod T_u == 0 the teacher takes its own
//              CE step; the student distills against that forward's outputs
//  waypoint    student and teacher forwards; full loss; after every T_w
//              student steps the teacher is reloaded from the next waypoint,
//              staying on the last one once exhausted
// Only the student is updated except for the trajectory teacher step.
class Distiller {
public:
    Distiller(Model student, std::optional<Model> teacher, const Dataset& train, DistillConfig config,
              WaypointSource waypoints = {});

    StepRecord step();
    std::int64_t completed() const { return completed_; }
    const Model& student() const { return student_; }
    const std::optional<Model>& teacher() const { return teacher_; }
    const AdamW& optimizer() const { return optimizer_; }
    const std::optional<AdamW>& teacher_optimizer() const { return teacher_optimizer_; }
    const DistillConfig& config() const { return config_; }

    // Restores a session saved after `step` completed steps: student
    // parameters, optimizer state and, in trajectory mode, the live teacher.
    void resume(std::int64_t step, const Model& student, const std::vector<std::pair<std::string, Tensor>>& state,
                std::optional<Model> teacher = std::nullopt);

private:
    StepRecord finish(StepRecord rec, Tensor total);
    LayerNorms teacher_norms(const Model& teacher) const;

    Model student_;
    std::optional<Model> teacher_;
    const Dataset& train_;
    DistillConfig config_;
    WaypointSource waypoints_;
    std::size_t waypoint_index_ = 1;
    BatchSampler sampler_;
    AdamW optimizer_;
    std::optional<AdamW> teacher_optimizer_;
    bool normalize_ld_;
    std::int64_t completed_ = 0;
};

// Runs the remaining steps of a session; TrainingFault carries the failing step.
TrainResult run(Distiller& session, const TrainHooks& hooks = {});

TrainResult train_unguided(Model student, const Dataset& train, DistillConfig config, const TrainHooks& hooks = {});
// Target-guided, or hybrid when config.mode == hybrid.
TrainResult train_target_guided(Model student, const Model& teacher_target, const Dataset& train,
                                DistillConfig config, const TrainHooks& hooks = {});
TrainResult train_trajectory_guided(Model student, const Model& teacher_source, const Dataset& train,
                                    DistillConfig config, const TrainHooks& hooks = {});
TrainResult train_waypoint_guided(Model student, const WaypointSource& waypoints, const Dataset& train,
                                  DistillConfig config, const TrainHooks& hooks = {});

// Dispatches on config.mode.
TrainResult train(Model student, const std::optional<Model>& teacher, const WaypointSource& waypoints,
                  const Dataset& train, const DistillConfig& config, const TrainHooks& hooks = {});

// Plain cross-entropy fine-tuning of a teacher, recording a waypoint every
// `waypoint_interval` steps and at the last step when `store` is set.
TrainResult fine_tune_teacher(Model teacher, const Dataset& train, DistillConfig config, WaypointStore* store,
                              const TrainHooks& hooks = {});

// CE targets honoring padding: one label per sequence, or per position
// with pads set to -1.
std::vector<std::int32_t> ce_targets(const Batch& batch, HeadKind head);

}  // namespace lindistill
