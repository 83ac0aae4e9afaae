#include "bimind/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "bimind/errors.hpp"

namespace bimind::num {

namespace {

double evaluate(const Objective& f) {
    Tape tape;
    const double v = f(tape).item();
    if (!std::isfinite(v)) throw NonFiniteError("grad_check: objective is not finite");
    return v;
}

} // namespace

GradCheckReport grad_check(const Objective& f, const ParameterList& params, const GradCheckOptions& opts) {
    if (!(opts.step > 0.0)) throw ConfigError("grad_check: step must be positive");

    zero_grads(params);
    {
        Tape tape;
        Var loss = f(tape);
        if (!std::isfinite(loss.item())) throw NonFiniteError("grad_check: objective is not finite");
        tape.backward(loss);
    }

    GradCheckReport report;
    for (Parameter* p : params) {
        ParameterGradError pe;
        pe.name = p->name;
        for (std::size_t i = 0; i < p->value.numel(); ++i) {
            const double saved = p->value[i];
            p->value[i] = saved + opts.step;
            const double up = evaluate(f);
            p->value[i] = saved - opts.step;
            const double down = evaluate(f);
            p->value[i] = saved;

            const double numeric = (up - down) / (2.0 * opts.step);
            const double analytic = p->grad[i];
            const double denom = std::max({std::abs(numeric), std::abs(analytic), opts.denominator_floor});
            const double rel = std::abs(numeric - analytic) / denom;
            if (i == 0 || rel > pe.max_rel_error) {
                pe.max_rel_error = rel;
                pe.worst_index = i;
                pe.analytic = analytic;
                pe.numeric = numeric;
            }
        }
        report.max_rel_error = std::max(report.max_rel_error, pe.max_rel_error);
        report.per_parameter.push_back(std::move(pe));
    }
    report.passed = report.max_rel_error <= opts.tol;
    return report;
}

} // namespace bimind::num
