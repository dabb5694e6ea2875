#include "lindistill/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace lindistill {

GradCheckReport grad_check_param(const std::function<Tensor()>& f, Tensor param,
                                 GradCheckOptions options) {
    GradCheckReport report;
    const bool had_flag = param.requires_grad();
    param.set_requires_grad(true);
    param.zero_grad();
    f().backward();
    const std::size_t n = param.numel();
    report.analytic = param.has_grad() ? std::vector<double>(param.grad().begin(), param.grad().end())
                                       : std::vector<double>(n, 0.0);
    param.zero_grad();

    {
        NoGradGuard no_grad;
        auto values = param.mutable_values();
        report.numeric.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double saved = values[i];
            values[i] = saved + options.step;
            const double up = f().item();
            values[i] = saved - options.step;
            const double down = f().item();
            values[i] = saved;
            report.numeric[i] = (up - down) / (2.0 * options.step);
        }
    }
    param.set_requires_grad(had_flag);

    report.rel_error.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = report.analytic[i], b = report.numeric[i];
        const double denom = std::max({std::abs(a), std::abs(b), options.floor});
        report.rel_error[i] = std::abs(a - b) / denom;
        report.max_rel_error = std::max(report.max_rel_error, report.rel_error[i]);
    }
    report.passed = report.max_rel_error < options.tol;
    return report;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           GradCheckOptions options) {
    Tensor leaf = x.detach();
    return grad_check_param([&] { return f(leaf); }, leaf, options);
}

}  // namespace lindistill
