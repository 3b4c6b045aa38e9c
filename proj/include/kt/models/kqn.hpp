#pragma once

// Knowledge query network: a recurrent encoder turns the interaction history
// into a knowledge-state vector, a feed-forward encoder turns the queried
// skill into a skill vector, and the pass probability is sigmoid of their dot product.

#include "kt/models/common.hpp"

#include <optional>

namespace kt {

/// Bound parameters of the skill encoder q = W relu(E[s] + c) + b.
struct SkillEncoder {
    Var embedding;
    Var hidden_bias;
    Var weight;
    Var bias;

    template <typename State>
    static SkillEncoder bind_to(Tape& tape, State& state) {
        return {bind(tape, state, "skill_embedding"), bind(tape, state, "skill_hidden_bias"),
                bind(tape, state, "skill_weight"), bind(tape, state, "skill_bias")};
    }

    /// Skill vectors for zero-based skill columns.
    Var operator()(std::vector<std::size_t> columns) const {
        return linear(kt::relu(add_row(gather_rows(embedding, std::move(columns)), hidden_bias)), weight, bias);
    }
};

template <typename State>
ForwardResult kqn_forward(Tape& tape, State& state, const Batch& batch) {
    const auto& c = state.config;
    const std::size_t n = batch.size;
    Var embed = bind(tape, state, "interaction_embedding");
    Var w_rec = bind(tape, state, "recurrent_weight");
    Var b_rec = bind(tape, state, "recurrent_bias");
    Var w_state = bind(tape, state, "state_weight");
    Var b_state = bind(tape, state, "state_bias");
    const auto encode_skill = SkillEncoder::bind_to(tape, state);

    ForwardResult out;
    std::vector<Var> picks;
    Var h;
    for (std::size_t t = 0; t + 1 < batch.steps; ++t) {
        Var pre = gather_rows(embed, batch.interaction_rows(t, c.num_skills));
        if (t > 0) pre = add(pre, matmul_nt(h, w_rec));
        h = kt::tanh(add_row(pre, b_rec));
        Var knowledge = linear(h, w_state, b_state);
        Var query = encode_skill(batch.skill_columns(t + 1));
        picks.push_back(kt::sigmoid(row_sum(mul(knowledge, query))));
    }
    out.next_prob = join_steps(tape, picks, n);
    return out;
}

/// Q x d matrix of every skill vector.
inline Matrix skill_vectors(const ModelState& state) {
    if (state.config.arch != Architecture::kqn) throw ConfigError("skill vectors exist only for kqn models");
    Tape tape;
    std::vector<std::size_t> all(state.config.num_skills);
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return SkillEncoder::bind_to(tape, state)(std::move(all)).value();
}

/// Pairwise skill geometry. A zero-norm skill vector leaves its cosine entries missing.
struct SkillSimilarity {
    std::size_t skills = 0;
    std::vector<std::optional<double>> cosine; ///< skills x skills, row-major
    Matrix euclidean;

    std::optional<double> cosine_at(std::size_t i, std::size_t j) const { return cosine[i * skills + j]; }
};

inline SkillSimilarity similarity_of(const Matrix& vectors) {
    SkillSimilarity out;
    const std::size_t q = vectors.rows();
    out.skills = q;
    out.cosine.assign(q * q, std::nullopt);
    out.euclidean = Matrix(q, q);
    std::vector<double> norm(q);
    for (std::size_t i = 0; i < q; ++i) {
        double s = 0.0;
        for (double v : vectors.row(i)) s += v * v;
        norm[i] = std::sqrt(s);
    }
    for (std::size_t i = 0; i < q; ++i) {
        for (std::size_t j = 0; j < q; ++j) {
            double dot = 0.0;
            double dist = 0.0;
            for (std::size_t c = 0; c < vectors.cols(); ++c) {
                dot += vectors(i, c) * vectors(j, c);
                const double diff = vectors(i, c) - vectors(j, c);
                dist += diff * diff;
            }
            out.euclidean(i, j) = i == j ? 0.0 : std::sqrt(dist);
            if (norm[i] > 0.0 && norm[j] > 0.0) {
                out.cosine[i * q + j] = i == j ? 1.0 : std::clamp(dot / (norm[i] * norm[j]), -1.0, 1.0);
            }
        }
    }
    return out;
}

inline SkillSimilarity skill_similarity(const ModelState& state) { return similarity_of(skill_vectors(state)); }

/// Attention of one knowledge-state vector over all skills: softmax_j(q_j . h).
inline Matrix skill_attention(const ModelState& state, const Matrix& knowledge) {
    const Matrix q = skill_vectors(state);
    if (knowledge.size() != q.cols()) {
        throw DimensionError("skill_attention: knowledge state of " + std::to_string(knowledge.size()) +
                             " entries for skill width " + std::to_string(q.cols()));
    }
    Matrix logits = matmul_nt(Matrix(1, knowledge.size(), std::vector<double>(knowledge.values().begin(),
                                                                               knowledge.values().end())),
                              q);
    return softmax(logits, Axis::rows);
}

} // namespace kt
