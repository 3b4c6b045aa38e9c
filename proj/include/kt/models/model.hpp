#pragma once

// Uniform entry points over the five architectures.

#include "kt/models/common.hpp"
#include "kt/models/dkt.hpp"
#include "kt/models/dkvmn.hpp"
#include "kt/models/kqn.hpp"
#include "kt/models/losses.hpp"
#include "kt/models/sakt.hpp"

namespace kt {

template <typename State>
ForwardResult forward(Tape& tape, State& state, const Batch& batch) {
    switch (state.config.arch) {
    case Architecture::dkt:
    case Architecture::dkt_plus: return dkt_forward(tape, state, batch);
    case Architecture::dkvmn: return dkvmn_forward(tape, state, batch);
    case Architecture::sakt: return sakt_forward(tape, state, batch);
    case Architecture::kqn: return kqn_forward(tape, state, batch);
    }
    throw ConfigError("unknown architecture tag " + std::to_string(static_cast<int>(state.config.arch)));
}

/// Training objective for the state's architecture.
template <typename State>
Var objective(const State& state, const ForwardResult& fwd, const Batch& batch) {
    if (state.config.arch == Architecture::dkt_plus) {
        return dkt_plus_objective(fwd.next_prob, fwd.skill_probs, batch, state.config.regularization);
    }
    return next_step_loss(fwd.next_prob, batch);
}

/// Untraced predictions for one batch.
struct PredictionTrace {
    Architecture arch = Architecture::dkt;
    Batch batch;
    Matrix next_prob;                 ///< size x (steps-1)
    std::vector<Matrix> skill_probs;  ///< DKT family: per step, size x Q
    std::vector<Matrix> slot_weights; ///< DKVMN
    Matrix attention;                 ///< SAKT
    Matrix step_probs;                ///< SAKT

    /// Prediction for step t+1 of row b.
    double next(std::size_t b, std::size_t t) const { return next_prob(b, t); }
};

inline PredictionTrace predict(const ModelState& state, const Batch& batch) {
    Tape tape;
    ForwardResult fwd = forward(tape, state, batch);
    PredictionTrace trace;
    trace.arch = state.config.arch;
    trace.batch = batch;
    trace.next_prob = fwd.next_prob.value();
    for (const Var& y : fwd.skill_probs) trace.skill_probs.push_back(y.value());
    trace.slot_weights = std::move(fwd.slot_weights);
    trace.attention = std::move(fwd.attention);
    trace.step_probs = std::move(fwd.step_probs);
    return trace;
}

inline PredictionTrace model_predict(const ModelState& state, const EncodedWindow& window) {
    return predict(state, make_batch(window, state.config.num_skills));
}

inline std::vector<Var> constants(Tape& tape, const std::vector<Matrix>& values) {
    std::vector<Var> out;
    for (const auto& v : values) out.push_back(tape.constant(v));
    return out;
}

/// Masked next-step cross-entropy of a trace.
inline double dkt_loss(const PredictionTrace& trace) {
    Tape tape;
    return next_step_loss(tape.constant(trace.next_prob), trace.batch).value().item();
}

inline double dkt_plus_loss(const PredictionTrace& trace, const DktPlusConfig& lambda) {
    if (trace.skill_probs.size() != trace.batch.steps) {
        throw ContractError("dkt_plus_loss needs per-skill predictions at every step");
    }
    Tape tape;
    return dkt_plus_objective(tape.constant(trace.next_prob), constants(tape, trace.skill_probs), trace.batch, lambda)
        .value()
        .item();
}

/// Waviness sums over the valid adjacent pairs of a trace, for pooling across batches.
struct Waviness {
    double l1 = 0.0; ///< sum of ||y_{t+1} - y_t||_1 / Q
    double l2 = 0.0; ///< sum of ||y_{t+1} - y_t||_2^2 / Q
    std::size_t pairs = 0;

    double w1() const { return pairs ? l1 / static_cast<double>(pairs) : 0.0; }
    double w2() const { return pairs ? l2 / static_cast<double>(pairs) : 0.0; }
    Waviness& operator+=(const Waviness& o) {
        l1 += o.l1;
        l2 += o.l2;
        pairs += o.pairs;
        return *this;
    }
};

inline Waviness waviness(const PredictionTrace& trace) {
    Waviness w;
    const auto& y = trace.skill_probs;
    if (y.empty()) return w;
    const double q = static_cast<double>(y.front().cols());
    for (std::size_t t = 0; t + 1 < trace.batch.steps; ++t) {
        for (std::size_t b = 0; b < trace.batch.size; ++b) {
            if (!trace.batch.target_valid(b, t)) continue;
            double l1 = 0.0;
            double l2 = 0.0;
            for (std::size_t c = 0; c < y[t].cols(); ++c) {
                const double d = y[t + 1](b, c) - y[t](b, c);
                l1 += std::abs(d);
                l2 += d * d;
            }
            w.l1 += l1 / q;
            w.l2 += l2 / q;
            ++w.pairs;
        }
    }
    return w;
}

} // namespace kt
