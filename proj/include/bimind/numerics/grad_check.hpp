#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bimind/numerics/autodiff.hpp"

namespace bimind::num {

struct GradCheckOptions {
    double step = 1e-5;
    double tol = 1e-5;
    /// Lower bound on the relative-error denominator, so gradients that are
    /// zero up to finite-difference noise do not produce spurious failures.
    double denominator_floor = 1e-6;
};

struct ParameterGradError {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

struct GradCheckReport {
    std::vector<ParameterGradError> per_parameter;
    double max_rel_error = 0.0;
    bool passed = false;
};

/// Builds the scalar objective on a fresh tape from current parameter values.
using Objective = std::function<Var(Tape&)>;

/// Compares tape gradients with central differences, entry by entry.
/// Leaves parameter values unchanged and parameter grads holding the tape
/// gradient. Throws NonFiniteError if any evaluation of the objective is not
/// finite.
GradCheckReport grad_check(const Objective& f, const ParameterList& params, const GradCheckOptions& opts = {});

} // namespace bimind::num
