#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "jssu/tensor.hpp"

namespace jssu {

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t evaluated = 0;
    bool passed = false;
    std::string failure;  // non-empty when a non-finite value was met
};

using ScalarFunction = std::function<Tensor<double>(const Tensor<double>&)>;

/// Compares the reverse-mode gradient of `function` at `input` with central
/// differences. The per-component error is |a - n| / max(|a|, |n|, 1e-3 * max|n|),
/// so components that are tiny relative to the gradient as a whole are judged
/// on the gradient's scale.
GradCheckReport gradient_check(const ScalarFunction& function, const Tensor<double>& input, double step = 1e-5,
                               double tol = 1e-5);

/// Same comparison for a gradient supplied by the caller instead of the backward pass.
GradCheckReport compare_gradient(const ScalarFunction& function, const std::vector<double>& analytic,
                                 const Tensor<double>& input, double step = 1e-5, double tol = 1e-5);

}  // namespace jssu
