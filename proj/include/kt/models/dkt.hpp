#pragma once

// Recurrent knowledge tracing:
//   h_t = tanh(W_hx x_t + W_hh h_{t-1} + b_h),  y_t = sigmoid(W_yh h_t + b_y)
// with x_t the one-hot interaction of step t.

#include "kt/models/common.hpp"

namespace kt {

template <typename State>
ForwardResult dkt_forward(Tape& tape, State& state, const Batch& batch) {
    const std::size_t q = state.config.num_skills;
    const std::size_t n = batch.size;
    Var w_hx = bind(tape, state, "W_hx");
    Var w_hh = bind(tape, state, "W_hh");
    Var b_h = bind(tape, state, "b_h");
    Var w_yh = bind(tape, state, "W_yh");
    Var b_y = bind(tape, state, "b_y");

    ForwardResult out;
    std::vector<Var> picks;
    Var h;
    for (std::size_t t = 0; t < batch.steps; ++t) {
        Matrix x(n, 2 * q);
        const auto rows = batch.interaction_rows(t, q);
        for (std::size_t b = 0; b < n; ++b) x(b, rows[b]) = 1.0;
        Var pre = matmul_nt(tape.constant(std::move(x)), w_hx);
        if (t > 0) pre = add(pre, matmul_nt(h, w_hh));
        h = kt::tanh(add_row(pre, b_h));
        Var y = kt::sigmoid(linear(h, w_yh, b_y));
        out.skill_probs.push_back(y);
        if (t + 1 < batch.steps) picks.push_back(pick(y, batch.skill_columns(t + 1)));
    }
    out.next_prob = join_steps(tape, picks, n);
    return out;
}

} // namespace kt
