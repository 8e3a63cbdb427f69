#include "jssu/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace jssu {

GradCheckReport gradient_check(const ScalarFunction& function, const Tensor<double>& input, double step,
                               double tol) {
    Tensor<double> x = input.detach();
    x.set_requires_grad(true);
    const Tensor<double> y = function(x);
    if (y.size() != 1) throw DimensionError("gradient_check: function must return a single element");
    y.backward();
    std::vector<double> analytic(x.size(), 0.0);
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
    return compare_gradient(function, analytic, input, step, tol);
}

GradCheckReport compare_gradient(const ScalarFunction& function, const std::vector<double>& analytic,
                                 const Tensor<double>& input, double step, double tol) {
    if (analytic.size() != input.size()) throw DimensionError("compare_gradient: gradient length mismatch");
    GradCheckReport report;
    std::vector<double> numeric(input.size());
    {
        NoGradGuard guard;
        Tensor<double> probe = input.detach();
        auto values = probe.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + step;
            const double up = function(probe).item();
            values[i] = saved - step;
            const double down = function(probe).item();
            values[i] = saved;
            numeric[i] = (up - down) / (2.0 * step);
        }
    }

    double scale = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
        if (!std::isfinite(analytic[i]) || !std::isfinite(numeric[i])) {
            report.failure = "non-finite gradient at index " + std::to_string(i);
            report.worst_index = i;
            report.passed = false;
            return report;
        }
        scale = std::max(scale, std::abs(numeric[i]));
    }
    const double floor = std::max(1e-3 * scale, 1e-300);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
        const double diff = std::abs(analytic[i] - numeric[i]);
        const double rel = diff / std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
        report.max_abs_error = std::max(report.max_abs_error, diff);
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    report.evaluated = numeric.size();
    report.passed = report.max_rel_error <= tol;
    return report;
}

}  // namespace jssu
