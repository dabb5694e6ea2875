#include "lindistill/convert.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "lindistill/errors.hpp"

namespace lindistill {

namespace {

void validate_plan(const Model& teacher, const ConversionPlan& plan) {
    if (plan.mixers.size() != teacher.spec().depth()) {
        throw ShapeError("conversion plan covers " + std::to_string(plan.mixers.size()) +
                         " blocks but the teacher has " + std::to_string(teacher.spec().depth()));
    }
}

ModelSpec student_spec(const Model& teacher, const ConversionPlan& plan) {
    ModelSpec spec = teacher.spec();
    spec.mixers = plan.mixers;
    spec.linformer_rank = plan.linformer_rank;
    spec.share = plan.share;
    spec.ssm_state = plan.ssm_state;
    spec.validate();
    return spec;
}

// True when the student's mixer parameters for `block` can be copied as-is.
bool same_mixer(const ModelSpec& from, const ModelSpec& to, std::size_t block) {
    const MixerKind a = from.mixers[block], b = to.mixers[block];
    if (a != b) return false;
    if (a == MixerKind::linformer) return from.linformer_rank == to.linformer_rank && from.share == to.share;
    if (a == MixerKind::ssm || a == MixerKind::bidirectional_ssm) return from.ssm_state == to.ssm_state;
    return true;
}

}  // namespace

ConversionPlan ConversionPlan::identity(const Model& model) {
    ConversionPlan plan;
    plan.mixers = model.spec().mixers;
    plan.linformer_rank = model.spec().linformer_rank;
    plan.share = model.spec().share;
    plan.ssm_state = model.spec().ssm_state;
    return plan;
}

ConversionPlan ConversionPlan::uniform(const Model& model, MixerKind kind) {
    ConversionPlan plan = identity(model);
    plan.mixers.assign(model.spec().depth(), kind);
    return plan;
}

Model transfer_parameters(const Model& teacher, const ConversionPlan& plan) {
    validate_plan(teacher, plan);
    const ModelSpec& from = teacher.spec();
    Model student(student_spec(teacher, plan));
    const ModelSpec& to = student.spec();

    auto copy = [&](const std::string& name) { student.add_param(name, teacher.param(name).clone()); };
    auto copy_prefix = [&](const std::string& prefix) {
        for (const auto& [name, t] : teacher.parameters()) {
            if (name.rfind(prefix, 0) == 0) copy(name);
        }
    };

    copy("embed.token");
    copy("embed.pos");
    for (std::size_t b = 0; b < to.depth(); ++b) {
        const std::string p = Model::block_prefix(b);
        copy_prefix(p + "norm1.");
        const MixerKind target = to.mixers[b];
        if (same_mixer(from, to, b)) {
            copy_prefix(p + "attn.");
            copy_prefix(p + "ssm");
            if (target == MixerKind::linformer) {
                for (const auto& name : {student.linformer_e_name(b), student.linformer_f_name(b)}) {
                    if (!student.has(name)) copy(name);
                }
            }
        } else if (target == MixerKind::linformer) {
            const MixerKind source = from.mixers[b];
            if (source == MixerKind::attention || source == MixerKind::linformer) {
                copy_prefix(p + "attn.");
            } else {
                add_attention_params(student, b, plan.seed);
            }
            add_linformer_projections(student, b, plan.seed);
        } else if (target == MixerKind::attention) {
            if (from.mixers[b] == MixerKind::linformer) {
                copy_prefix(p + "attn.");
            } else {
                add_attention_params(student, b, plan.seed);
            }
        } else if (target == MixerKind::ssm) {
            add_ssm_params(student, b, "ssm", plan.seed, plan.delta_init);
        } else {
            add_ssm_params(student, b, "ssm_fwd", plan.seed, plan.delta_init);
            add_ssm_params(student, b, "ssm_bwd", plan.seed, plan.delta_init);
        }
        copy_prefix(p + "norm2.");
        copy_prefix(p + "ffn.");
    }
    copy_prefix("final_norm.");
    copy_prefix("head.");
    return student;
}

std::size_t ConversionReport::arrays(GroupStatus status) const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.status == status;
    return n;
}

std::size_t ConversionReport::scalars(GroupStatus status) const {
    std::size_t n = 0;
    for (const auto& e : entries) {
        if (e.status == status) n += e.count;
    }
    return n;
}

std::string ConversionReport::to_string() const {
    std::ostringstream os;
    os << std::left << std::setw(36) << "parameter" << std::setw(14) << "status" << "count\n";
    for (const auto& e : entries) {
        const char* s = e.status == GroupStatus::transferred ? "transferred"
                        : e.status == GroupStatus::discarded ? "discarded"
                                                             : "new";
        os << std::setw(36) << e.name << std::setw(14) << s << e.count << '\n';
    }
    os << "\ntransferred: " << arrays(GroupStatus::transferred) << " arrays, " << scalars(GroupStatus::transferred)
       << " values\n"
       << "discarded:   " << arrays(GroupStatus::discarded) << " arrays, " << scalars(GroupStatus::discarded)
       << " values\n"
       << "new:         " << arrays(GroupStatus::initialized) << " arrays, " << scalars(GroupStatus::initialized)
       << " values\n";
    return os.str();
}

ConversionReport describe_conversion(const Model& teacher, const ConversionPlan& plan) {
    // Runs the real surgery so the report cannot drift from it.
    const Model student = transfer_parameters(teacher, plan);
    ConversionReport report;
    for (const auto& [name, t] : student.parameters()) {
        const bool copied = teacher.has(name) && teacher.param(name).shape() == t.shape() &&
                            std::equal(t.values().begin(), t.values().end(), teacher.param(name).values().begin());
        report.entries.push_back({name, copied ? GroupStatus::transferred : GroupStatus::initialized, t.numel()});
    }
    for (const auto& [name, t] : teacher.parameters()) {
        if (!student.has(name)) report.entries.push_back({name, GroupStatus::discarded, t.numel()});
    }
    return report;
}

}  // namespace lindistill
