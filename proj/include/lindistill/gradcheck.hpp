#pragma once

#include <functional>
#include <vector>

#include "lindistill/tensor.hpp"

namespace lindistill {

struct GradCheckReport {
    std::vector<double> analytic;
    std::vector<double> numeric;
    // |analytic - numeric| / max(|analytic|, |numeric|, floor), per element.
    std::vector<double> rel_error;
    double max_rel_error = 0.0;
    bool passed = false;
};

struct GradCheckOptions {
    double step = 1e-6;
    double tol = 1e-5;
    // Denominator floor; keeps near-zero gradients from turning rounding
    // noise into huge relative errors.
    double floor = 1e-3;
};

// Compares d f / d x against central differences (f(x+h) - f(x-h)) / 2h.
// `f` must return a scalar and must not retain `x` between calls.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           GradCheckOptions options = {});

// Same, for a tensor captured inside `f` (typically a layer parameter).
// The parameter's values are perturbed in place and restored afterwards;
// its grad is zeroed before and after.
GradCheckReport grad_check_param(const std::function<Tensor()>& f, Tensor param,
                                 GradCheckOptions options = {});

}  // namespace lindistill
