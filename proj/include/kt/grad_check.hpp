#pragma once

#include "kt/tape.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>

namespace kt {

/// Builds a scalar objective on a fresh tape, binding its parameters with Tape::param.
using Objective = std::function<Var(Tape&)>;

namespace detail {

inline double evaluate_objective(const Objective& f) {
    Tape tape;
    const double v = f(tape).value().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: objective evaluated to a non-finite value");
    return v;
}

} // namespace detail

/// Largest relative disagreement between tape gradients and central differences.
///
/// Per coordinate: |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
/// Parameter values are restored before returning; gradients hold the analytic result.
inline double grad_check(const Objective& f, std::span<Parameter* const> params, double eps = 1e-5) {
    if (!(eps > 0.0)) throw ContractError("grad_check: eps must be positive");
    for (Parameter* p : params) p->zero_grad();
    {
        Tape tape;
        Var loss = f(tape);
        if (!std::isfinite(loss.value().item())) {
            throw NumericError("grad_check: objective evaluated to a non-finite value");
        }
        tape.backward(loss);
    }
    double worst = 0.0;
    for (Parameter* p : params) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double saved = p->value[i];
            p->value[i] = saved + eps;
            const double up = detail::evaluate_objective(f);
            p->value[i] = saved - eps;
            const double down = detail::evaluate_objective(f);
            p->value[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double analytic = p->gradient[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(analytic - numeric) / denom);
        }
    }
    return worst;
}

} // namespace kt
