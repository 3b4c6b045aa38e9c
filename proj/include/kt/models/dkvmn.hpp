#pragma once

// Key-value memory knowledge tracing. A static key memory addresses a
// per-window value memory; reads predict, erase-then-add writes update.

#include "kt/models/common.hpp"

namespace kt {

template <typename State>
ForwardResult dkvmn_forward(Tape& tape, State& state, const Batch& batch) {
    const auto& c = state.config;
    const std::size_t n = batch.size;
    Var key_memory = bind(tape, state, "key_memory");
    Var value_init = bind(tape, state, "value_memory_init");
    Var skill_keys = bind(tape, state, "skill_key_embedding");
    Var interactions = bind(tape, state, "interaction_embedding");
    Var erase_w = bind(tape, state, "erase_weight");
    Var erase_b = bind(tape, state, "erase_bias");
    Var add_w = bind(tape, state, "add_weight");
    Var add_b = bind(tape, state, "add_bias");
    Var summary_w = bind(tape, state, "summary_weight");
    Var summary_b = bind(tape, state, "summary_bias");
    Var out_w = bind(tape, state, "output_weight");
    Var out_b = bind(tape, state, "output_bias");

    ForwardResult out;
    std::vector<Var> picks;
    // Row b holds the N slot vectors of window b back to back.
    Var memory = tile_rows(reshape(value_init, 1, c.memory_slots * c.value_dim), n);
    for (std::size_t t = 0; t < batch.steps; ++t) {
        Var k = gather_rows(skill_keys, batch.skill_columns(t));
        Var w = softmax_rows(matmul_nt(k, key_memory));
        out.slot_weights.push_back(w.value());
        if (t > 0) {
            Var r = memory_read(memory, w, c.value_dim);
            Var f = kt::tanh(linear(hconcat({r, k}), summary_w, summary_b));
            picks.push_back(kt::sigmoid(linear(f, out_w, out_b)));
        }
        if (t + 1 < batch.steps) {
            Var v = gather_rows(interactions, batch.interaction_rows(t, c.num_skills));
            Var e = kt::sigmoid(linear(v, erase_w, erase_b));
            Var a = kt::tanh(linear(v, add_w, add_b));
            memory = memory_write(memory, w, e, a);
        }
    }
    out.next_prob = join_steps(tape, picks, n);
    return out;
}

} // namespace kt
