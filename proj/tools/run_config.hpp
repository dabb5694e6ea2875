#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lindistill/convert.hpp"
#include "lindistill/distill.hpp"
#include "lindistill/model.hpp"
#include "lindistill/optim.hpp"
#include "lindistill/tasks.hpp"

namespace lindistill::cli {

struct OptimSection {
    double lr = 1e-3;
    ScheduleKind schedule = ScheduleKind::linear_warmup;
    double warmup_frac = 0.06;
    std::int64_t warmup_steps = 0;
    double min_lr = 0.0;
    double decay_rate = 0.999;
    double weight_decay = 0.0;
    std::optional<double> clip_norm;  // unset: 1 for SSM students, else off
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    OptimConfig resolve(bool ssm_model) const;
};

struct ModelSection {
    std::vector<MixerKind> blocks{MixerKind::attention, MixerKind::attention};
    std::size_t width = 64;
    std::size_t heads = 4;
    std::size_t ffn_hidden = 128;
    std::optional<std::size_t> max_len;  // unset: task seq_len
    std::optional<bool> causal;          // unset: causal for char-lm only
    double ln_eps = 1e-5;
    std::optional<std::uint64_t> seed;

    ModelSpec to_spec(const TaskSpec& task) const;
};

struct TeacherSection {
    // Optional pretraining of the source teacher on another task with the
    // same vocabulary and length; 0 steps keeps the random initialization.
    TaskKind pretrain_task = TaskKind::majority;
    std::int64_t pretrain_steps = 0;
    OptimSection pretrain_optim;
    std::int64_t steps = 1000;
    std::size_t batch_size = 32;
    OptimSection optim;
    std::int64_t waypoint_interval = 100;
    std::int64_t eval_interval = 0;
};

struct ConversionSection {
    std::vector<MixerKind> mixers{MixerKind::linformer};  // one entry applies to every block
    std::size_t linformer_rank = 8;
    ShareMode share = ShareMode::kv;
    std::size_t ssm_state = 16;
    double delta_init = 0.1;
    std::optional<std::uint64_t> seed;
    // "auto": target teacher for target/hybrid, source teacher otherwise.
    std::string init_from = "auto";
};

struct DistillSection {
    GuidanceMode mode = GuidanceMode::target;
    double alpha_ce = 1.0;
    double alpha_kd = 0.0;
    double alpha_ld = 15.0;
    double beta = 2.0;
    KdForm kd_form = KdForm::softmax_temperature;
    std::int64_t steps = 2000;
    std::int64_t teacher_update_interval = 1;
    std::int64_t waypoint_interval = 100;
    std::int64_t hybrid_switch = -1;
    std::size_t batch_size = 32;
    std::optional<std::uint64_t> seed;
    std::optional<bool> normalize_ld;
    OptimSection optim;
    OptimSection teacher_optim;
    std::int64_t eval_interval = 0;
};

struct IoSection {
    std::int64_t checkpoint_interval = 0;  // student snapshots for analysis; 0: none
    std::int64_t resume_interval = 100;    // resumable training state; 0: none
    bool log_stdout = true;
};

struct AnalysisSection {
    std::size_t shift_samples = 100;
    std::size_t trajectory_samples = 20;
    std::vector<std::size_t> bench_lengths{256, 512, 1024, 2048};
    std::size_t bench_runs = 3;
    std::size_t bench_width = 16;
    std::size_t bench_heads = 2;
    std::size_t bench_ffn_hidden = 32;
    std::size_t bench_batch = 1;
};

struct RunConfig {
    std::uint64_t seed = 0;
    TaskSpec task;
    ModelSection model;
    TeacherSection teacher;
    ConversionSection conversion;
    DistillSection distill;
    IoSection io;
    AnalysisSection analysis;

    // Throws ConfigError on unknown keys, wrong types, or invalid values.
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::filesystem::path& path);
    // Fully resolved: every key, defaults included.
    nlohmann::json to_json() const;

    void set_seed(std::uint64_t s);
    void validate() const;

    std::uint64_t model_seed() const { return model.seed.value_or(seed); }
    std::uint64_t conversion_seed() const { return conversion.seed.value_or(seed); }
    std::uint64_t distill_seed() const { return distill.seed.value_or(seed); }

    ModelSpec teacher_spec() const { return model.to_spec(task); }
    ConversionPlan plan(const Model& teacher) const;
    DistillConfig distill_config(bool ssm_student) const;
    DistillConfig teacher_config(std::int64_t steps, const OptimSection& optim) const;
};

}  // namespace lindistill::cli
