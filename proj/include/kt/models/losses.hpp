#pragma once

// Masked next-step cross-entropy and the DKT+ regularized variant.

#include "kt/models/common.hpp"

namespace kt {

inline constexpr double kProbabilityClamp = 1e-7;

/// sum of -(y log p + (1-y) log(1-p)) * weight, with p clamped away from 0 and 1.
inline Var weighted_bce(Var probs, const Matrix& labels, const Matrix& weights) {
    Matrix::require_same_shape(probs.value(), labels, "weighted_bce");
    Matrix::require_same_shape(probs.value(), weights, "weighted_bce");
    Matrix pos(labels.rows(), labels.cols());
    Matrix neg(labels.rows(), labels.cols());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        pos[i] = -weights[i] * labels[i];
        neg[i] = -weights[i] * (1.0 - labels[i]);
    }
    Var p = clamp(probs, kProbabilityClamp, 1.0 - kProbabilityClamp);
    return add(dot_const(kt::log(p), pos), dot_const(kt::log(affine(p, -1.0, 1.0)), neg));
}

/// Mean BCE over valid next-step targets: column t of next_prob against label t+1.
inline Var next_step_loss(Var next_prob, const Batch& batch) {
    const std::size_t cols = batch.steps > 0 ? batch.steps - 1 : 0;
    if (next_prob.rows() != batch.size || next_prob.cols() != cols) {
        throw DimensionError("next_step_loss: predictions " + next_prob.value().shape() + " for batch " +
                             Matrix::shape_string(batch.size, cols));
    }
    const std::size_t count = batch.target_count();
    if (count == 0) throw ContractError("loss needs at least one valid next-step target");
    Matrix labels(batch.size, cols);
    Matrix weights(batch.size, cols);
    for (std::size_t b = 0; b < batch.size; ++b) {
        for (std::size_t t = 0; t < cols; ++t) {
            labels(b, t) = batch.label(b, t + 1);
            weights(b, t) = batch.target_valid(b, t) ? 1.0 / static_cast<double>(count) : 0.0;
        }
    }
    return weighted_bce(next_prob, labels, weights);
}

/// Mean BCE of y_t[skill_t] against the current label over valid steps.
inline Var reconstruction_loss(const std::vector<Var>& skill_probs, const Batch& batch) {
    std::size_t count = 0;
    for (int m : batch.mask) count += static_cast<std::size_t>(m);
    std::vector<Var> picks;
    for (std::size_t t = 0; t < batch.steps; ++t) picks.push_back(pick(skill_probs[t], batch.skill_columns(t)));
    Matrix labels(batch.size, batch.steps);
    Matrix weights(batch.size, batch.steps);
    for (std::size_t b = 0; b < batch.size; ++b) {
        for (std::size_t t = 0; t < batch.steps; ++t) {
            labels(b, t) = batch.label(b, t);
            weights(b, t) = batch.valid(b, t) ? 1.0 / static_cast<double>(count) : 0.0;
        }
    }
    return weighted_bce(hconcat(picks), labels, weights);
}

/// Waviness terms over valid adjacent pairs: mean of ||y_{t+1} - y_t||_1 / Q and of ||.||_2^2 / Q.
struct WavinessVars {
    Var l1;
    Var l2;
};

inline WavinessVars waviness_terms(const std::vector<Var>& skill_probs, const Batch& batch, bool need_l1,
                                   bool need_l2) {
    const std::size_t pairs = batch.target_count();
    WavinessVars out;
    if (pairs == 0 || skill_probs.empty()) throw ContractError("waviness needs at least one valid adjacent pair");
    const std::size_t q = skill_probs.front().cols();
    for (std::size_t t = 0; t + 1 < batch.steps; ++t) {
        Matrix w(batch.size, q);
        for (std::size_t b = 0; b < batch.size; ++b) {
            if (!batch.target_valid(b, t)) continue;
            for (std::size_t c = 0; c < q; ++c) w(b, c) = 1.0 / (static_cast<double>(q) * static_cast<double>(pairs));
        }
        Var diff = sub(skill_probs[t + 1], skill_probs[t]);
        if (need_l1) {
            Var term = dot_const(kt::abs(diff), w);
            out.l1 = out.l1.valid() ? add(out.l1, term) : term;
        }
        if (need_l2) {
            Var term = dot_const(mul(diff, diff), w);
            out.l2 = out.l2.valid() ? add(out.l2, term) : term;
        }
    }
    return out;
}

/// L + lambda_r r + lambda_w1 w1 + lambda_w2 w2^2. Zero weights drop their term,
/// so all-zero weights give exactly the plain next-step loss.
inline Var dkt_plus_objective(Var next_prob, const std::vector<Var>& skill_probs, const Batch& batch,
                              const DktPlusConfig& lambda) {
    Var loss = next_step_loss(next_prob, batch);
    if (lambda.lambda_r > 0.0) loss = add(loss, affine(reconstruction_loss(skill_probs, batch), lambda.lambda_r, 0.0));
    if (lambda.lambda_w1 > 0.0 || lambda.lambda_w2 > 0.0) {
        const auto w = waviness_terms(skill_probs, batch, lambda.lambda_w1 > 0.0, lambda.lambda_w2 > 0.0);
        if (lambda.lambda_w1 > 0.0) loss = add(loss, affine(w.l1, lambda.lambda_w1, 0.0));
        if (lambda.lambda_w2 > 0.0) loss = add(loss, affine(w.l2, lambda.lambda_w2, 0.0));
    }
    return loss;
}

} // namespace kt
