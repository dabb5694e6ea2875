#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace lindistill {

// Token batch. `labels` holds one class index per sequence for
// classification, or one next-token index per position for language
// modeling (-1 marks positions without a target). Padding is trailing:
// positions t >= lengths[b] are pads.
struct Batch {
    std::size_t size = 0;
    std::size_t time = 0;
    std::vector<std::int32_t> tokens;
    std::vector<std::int32_t> labels;
    std::vector<std::int32_t> lengths;

    bool full_length() const {
        for (auto len : lengths) {
            if (static_cast<std::size_t>(len) != time) return false;
        }
        return true;
    }
};

}  // namespace lindistill
