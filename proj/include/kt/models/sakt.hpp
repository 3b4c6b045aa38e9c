#pragma once

// Self-attentive knowledge tracing: the skill queried at step t attends over
// the interactions of steps before t, followed by a residual, layer norm and
// a position-wise feed-forward block.

#include "kt/models/common.hpp"

namespace kt {

template <typename State>
ForwardResult sakt_forward(Tape& tape, State& state, const Batch& batch) {
    const auto& c = state.config;
    const std::size_t n = batch.size;
    const std::size_t steps = batch.steps;
    if (steps > c.max_seq_len) {
        throw ContractError("sakt: window of " + std::to_string(steps) + " steps exceeds the positional table of " +
                            std::to_string(c.max_seq_len));
    }
    std::vector<std::size_t> inter(n * steps), skill(n * steps), pos(n * steps);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t t = 0; t < steps; ++t) {
            const std::size_t i = b * steps + t;
            inter[i] = encode_interaction(batch.skill(b, t), batch.label(b, t), c.num_skills) - 1;
            skill[i] = static_cast<std::size_t>(batch.skill(b, t) - 1);
            pos[i] = t;
        }
    }
    Var positions = bind(tape, state, "position_embedding");
    Var x = add(gather_rows(bind(tape, state, "interaction_embedding"), std::move(inter)),
                gather_rows(positions, std::move(pos)));
    Var query = gather_rows(bind(tape, state, "skill_embedding"), std::move(skill));

    ForwardResult out;
    Var att = causal_attention(matmul_nt(query, bind(tape, state, "query_weight")),
                               matmul_nt(x, bind(tape, state, "key_weight")),
                               matmul_nt(x, bind(tape, state, "value_weight")), n, steps, c.heads, &out.attention);
    Var o = linear(att, bind(tape, state, "attention_out_weight"), bind(tape, state, "attention_out_bias"));
    Var h1 = add_row(mul_row(layer_norm_rows(add(o, query)), bind(tape, state, "norm1_gain")),
                     bind(tape, state, "norm1_bias"));
    Var f = kt::relu(linear(h1, bind(tape, state, "ffn1_weight"), bind(tape, state, "ffn1_bias")));
    f = linear(f, bind(tape, state, "ffn2_weight"), bind(tape, state, "ffn2_bias"));
    Var h2 = add_row(mul_row(layer_norm_rows(add(h1, f)), bind(tape, state, "norm2_gain")),
                     bind(tape, state, "norm2_bias"));
    Var p = reshape(kt::sigmoid(linear(h2, bind(tape, state, "output_weight"), bind(tape, state, "output_bias"))),
                    n, steps);
    out.step_probs = p.value();
    out.next_prob = steps > 1 ? slice_cols(p, 1, steps - 1) : tape.constant(Matrix(n, 0));
    return out;
}

} // namespace kt
