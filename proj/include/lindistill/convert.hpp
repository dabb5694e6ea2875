#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lindistill/model.hpp"

namespace lindistill {

struct ConversionPlan {
    std::vector<MixerKind> mixers;  // one target kind per teacher block
    std::size_t linformer_rank = 8;
    ShareMode share = ShareMode::kv;
    std::size_t ssm_state = 16;
    std::uint64_t seed = 0;
    // Initial step size; softplus bias is chosen so delta starts here.
    double delta_init = 0.1;

    // Keeps every block's current mixer and settings.
    static ConversionPlan identity(const Model& model);
    // Same target kind for all blocks of `model`.
    static ConversionPlan uniform(const Model& model, MixerKind kind);
};

// Builds a student from `teacher`: embeddings, norms, feed-forwards and the
// head are copied; attention projections are kept only when the target
// mixer uses them (Linformer); new Linformer projections are N(0, 1); new
// SSM mixers get A = diag(-1, ..., -n) per channel and delta ~ delta_init.
Model transfer_parameters(const Model& teacher, const ConversionPlan& plan);

enum class GroupStatus { transferred, discarded, initialized };

struct ConversionEntry {
    std::string name;
    GroupStatus status;
    std::size_t count;  // scalar parameter count
};

struct ConversionReport {
    std::vector<ConversionEntry> entries;

    std::size_t arrays(GroupStatus status) const;
    std::size_t scalars(GroupStatus status) const;
    std::string to_string() const;
};

ConversionReport describe_conversion(const Model& teacher, const ConversionPlan& plan);

}  // namespace lindistill
