#pragma once

// Shared model plumbing: architecture tags, hyperparameters, parameter
// storage, interaction encoding and padded batches.

#include "kt/data.hpp"
#include "kt/errors.hpp"
#include "kt/matrix.hpp"
#include "kt/ops.hpp"
#include "kt/random.hpp"
#include "kt/tape.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kt {

enum class Architecture { dkt, dkt_plus, dkvmn, sakt, kqn };

/// Report order.
inline constexpr Architecture kArchitectures[] = {Architecture::dkt, Architecture::dkt_plus, Architecture::dkvmn,
                                                  Architecture::sakt, Architecture::kqn};

inline std::string_view tag(Architecture a) {
    switch (a) {
    case Architecture::dkt: return "dkt";
    case Architecture::dkt_plus: return "dkt+";
    case Architecture::dkvmn: return "dkvmn";
    case Architecture::sakt: return "sakt";
    case Architecture::kqn: return "kqn";
    }
    throw ConfigError("unknown architecture tag " + std::to_string(static_cast<int>(a)));
}

inline std::string_view display_name(Architecture a) {
    switch (a) {
    case Architecture::dkt: return "DKT";
    case Architecture::dkt_plus: return "DKT+";
    case Architecture::dkvmn: return "DKVMN";
    case Architecture::sakt: return "SAKT";
    case Architecture::kqn: return "KQN";
    }
    throw ConfigError("unknown architecture tag " + std::to_string(static_cast<int>(a)));
}

/// Accepts the lower-case tag or the display name.
inline Architecture parse_architecture(std::string_view name) {
    for (Architecture a : kArchitectures) {
        if (name == tag(a) || name == display_name(a)) return a;
    }
    if (name == "dkt_plus" || name == "dktplus") return Architecture::dkt_plus;
    throw ConfigError("unknown architecture '" + std::string(name) + "' (expected dkt, dkt+, dkvmn, sakt or kqn)");
}

/// Regularizer weights for the DKT+ loss.
struct DktPlusConfig {
    double lambda_r = 0.10;
    double lambda_w1 = 0.003;
    double lambda_w2 = 3.0;
};

struct ModelConfig {
    Architecture arch = Architecture::dkt;
    std::size_t num_skills = 0;
    std::uint64_t seed = 0;

    std::size_t hidden = 100; ///< DKT and DKT+ recurrent width
    DktPlusConfig regularization;

    std::size_t memory_slots = 20;
    std::size_t key_dim = 50;
    std::size_t value_dim = 100;
    std::size_t summary_dim = 50;

    std::size_t attention_dim = 64;
    std::size_t heads = 4;
    std::size_t max_seq_len = 100; ///< positional table length

    std::size_t query_dim = 64;    ///< KQN shared latent width
    std::size_t encoder_dim = 64;  ///< KQN recurrent width
    std::size_t skill_hidden = 64; ///< KQN skill-encoder hidden width
};

inline void validate(const ModelConfig& c) {
    if (c.num_skills < 1) throw ConfigError("model: num_skills must be at least 1");
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw ConfigError(std::string("model: ") + name + " must be positive");
    };
    switch (c.arch) {
    case Architecture::dkt:
    case Architecture::dkt_plus:
        positive(c.hidden, "hidden");
        if (c.regularization.lambda_r < 0 || c.regularization.lambda_w1 < 0 || c.regularization.lambda_w2 < 0) {
            throw ConfigError("model: regularization weights must be non-negative");
        }
        break;
    case Architecture::dkvmn:
        positive(c.memory_slots, "memory_slots");
        positive(c.key_dim, "key_dim");
        positive(c.value_dim, "value_dim");
        positive(c.summary_dim, "summary_dim");
        break;
    case Architecture::sakt:
        positive(c.attention_dim, "attention_dim");
        positive(c.heads, "heads");
        positive(c.max_seq_len, "max_seq_len");
        if (c.attention_dim % c.heads != 0) throw ConfigError("model: heads must divide attention_dim");
        break;
    case Architecture::kqn:
        positive(c.query_dim, "query_dim");
        positive(c.encoder_dim, "encoder_dim");
        positive(c.skill_hidden, "skill_hidden");
        break;
    default:
        throw ConfigError("unknown architecture tag " + std::to_string(static_cast<int>(c.arch)));
    }
}

/// An architecture with its named parameter tensors.
struct ModelState {
    ModelConfig config;
    std::vector<Parameter> params;

    Parameter& param(std::string_view name) {
        for (auto& p : params) {
            if (p.name == name) return p;
        }
        throw ContractError("model has no parameter '" + std::string(name) + "'");
    }
    const Parameter& param(std::string_view name) const { return const_cast<ModelState*>(this)->param(name); }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out;
        for (auto& p : params) out.push_back(&p);
        return out;
    }

    void zero_grad() {
        for (auto& p : params) p.zero_grad();
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : params) n += p.value.size();
        return n;
    }
};

enum class Init { uniform, zeros, ones };

/// Tensor shapes per architecture, in initialization order.
struct TensorSpec {
    std::string name;
    std::size_t rows;
    std::size_t cols;
    Init init;
};

inline std::vector<TensorSpec> tensor_specs(const ModelConfig& c) {
    const std::size_t q = c.num_skills;
    switch (c.arch) {
    case Architecture::dkt:
    case Architecture::dkt_plus:
        return {{"W_hx", c.hidden, 2 * q, Init::uniform},
                {"W_hh", c.hidden, c.hidden, Init::uniform},
                {"b_h", 1, c.hidden, Init::zeros},
                {"W_yh", q, c.hidden, Init::uniform},
                {"b_y", 1, q, Init::zeros}};
    case Architecture::dkvmn:
        return {{"key_memory", c.memory_slots, c.key_dim, Init::uniform},
                {"value_memory_init", c.memory_slots, c.value_dim, Init::uniform},
                {"skill_key_embedding", q, c.key_dim, Init::uniform},
                {"interaction_embedding", 2 * q, c.value_dim, Init::uniform},
                {"erase_weight", c.value_dim, c.value_dim, Init::uniform},
                {"erase_bias", 1, c.value_dim, Init::zeros},
                {"add_weight", c.value_dim, c.value_dim, Init::uniform},
                {"add_bias", 1, c.value_dim, Init::zeros},
                {"summary_weight", c.summary_dim, c.value_dim + c.key_dim, Init::uniform},
                {"summary_bias", 1, c.summary_dim, Init::zeros},
                {"output_weight", 1, c.summary_dim, Init::uniform},
                {"output_bias", 1, 1, Init::zeros}};
    case Architecture::sakt: {
        const std::size_t d = c.attention_dim;
        return {{"interaction_embedding", 2 * q, d, Init::uniform},
                {"skill_embedding", q, d, Init::uniform},
                {"position_embedding", c.max_seq_len, d, Init::uniform},
                {"query_weight", d, d, Init::uniform},
                {"key_weight", d, d, Init::uniform},
                {"value_weight", d, d, Init::uniform},
                {"attention_out_weight", d, d, Init::uniform},
                {"attention_out_bias", 1, d, Init::zeros},
                {"norm1_gain", 1, d, Init::ones},
                {"norm1_bias", 1, d, Init::zeros},
                {"ffn1_weight", d, d, Init::uniform},
                {"ffn1_bias", 1, d, Init::zeros},
                {"ffn2_weight", d, d, Init::uniform},
                {"ffn2_bias", 1, d, Init::zeros},
                {"norm2_gain", 1, d, Init::ones},
                {"norm2_bias", 1, d, Init::zeros},
                {"output_weight", 1, d, Init::uniform},
                {"output_bias", 1, 1, Init::zeros}};
    }
    case Architecture::kqn:
        return {{"interaction_embedding", 2 * q, c.encoder_dim, Init::uniform},
                {"recurrent_weight", c.encoder_dim, c.encoder_dim, Init::uniform},
                {"recurrent_bias", 1, c.encoder_dim, Init::zeros},
                {"state_weight", c.query_dim, c.encoder_dim, Init::uniform},
                {"state_bias", 1, c.query_dim, Init::zeros},
                {"skill_embedding", q, c.skill_hidden, Init::uniform},
                {"skill_hidden_bias", 1, c.skill_hidden, Init::zeros},
                {"skill_weight", c.query_dim, c.skill_hidden, Init::uniform},
                {"skill_bias", 1, c.query_dim, Init::zeros}};
    }
    throw ConfigError("unknown architecture tag " + std::to_string(static_cast<int>(c.arch)));
}

/// Fresh state: uniform(-1/sqrt(cols), 1/sqrt(cols)) weights drawn in spec order
/// from one stream seeded with config.seed; biases zero, layer-norm gains one.
inline ModelState init_model(const ModelConfig& config) {
    validate(config);
    ModelState s;
    s.config = config;
    Rng rng(config.seed);
    for (const auto& spec : tensor_specs(config)) {
        Matrix m(spec.rows, spec.cols);
        if (spec.init == Init::ones) m.fill(1.0);
        if (spec.init == Init::uniform) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(spec.cols));
            for (double& v : m.values()) v = rng.uniform(-bound, bound);
        }
        s.params.emplace_back(spec.name, std::move(m));
    }
    return s;
}

/// Interaction index skill + correct*Q, in 1..2Q.
inline std::size_t encode_interaction(int skill_id, int correct, std::size_t num_skills) {
    if (skill_id < 1 || static_cast<std::size_t>(skill_id) > num_skills) {
        throw EncodingError("skill id " + std::to_string(skill_id) + " outside 1.." + std::to_string(num_skills));
    }
    if (correct != 0 && correct != 1) throw EncodingError("response must be 0 or 1, got " + std::to_string(correct));
    return static_cast<std::size_t>(skill_id) + static_cast<std::size_t>(correct) * num_skills;
}

/// One model input window. Masked positions must form a trailing block.
struct EncodedWindow {
    std::vector<int> skill_ids;
    std::vector<int> labels;
    std::vector<int> mask;

    std::size_t size() const noexcept { return skill_ids.size(); }
};

inline EncodedWindow to_window(const StudentSequence& s) {
    EncodedWindow w;
    for (const auto& i : s.interactions) {
        w.skill_ids.push_back(i.skill_id);
        w.labels.push_back(i.correct);
        w.mask.push_back(1);
    }
    return w;
}

/// Windows padded to a common length T. Padding uses skill 1, label 0, mask 0.
struct Batch {
    std::size_t size = 0;
    std::size_t steps = 0;
    std::vector<int> skills; ///< size x steps, row-major
    std::vector<int> labels;
    std::vector<int> mask;

    std::size_t at(std::size_t b, std::size_t t) const noexcept { return b * steps + t; }
    int skill(std::size_t b, std::size_t t) const noexcept { return skills[at(b, t)]; }
    int label(std::size_t b, std::size_t t) const noexcept { return labels[at(b, t)]; }
    bool valid(std::size_t b, std::size_t t) const noexcept { return mask[at(b, t)] != 0; }
    /// Target t+1 is scored from history up to t.
    bool target_valid(std::size_t b, std::size_t t) const noexcept { return valid(b, t + 1); }

    std::size_t target_count() const noexcept {
        std::size_t n = 0;
        for (std::size_t b = 0; b < size; ++b) {
            for (std::size_t t = 0; t + 1 < steps; ++t) n += target_valid(b, t);
        }
        return n;
    }

    /// Zero-based skill column of step t for every row.
    std::vector<std::size_t> skill_columns(std::size_t t) const {
        std::vector<std::size_t> out(size);
        for (std::size_t b = 0; b < size; ++b) out[b] = static_cast<std::size_t>(skill(b, t) - 1);
        return out;
    }

    /// Zero-based interaction row of step t for every row.
    std::vector<std::size_t> interaction_rows(std::size_t t, std::size_t num_skills) const {
        std::vector<std::size_t> out(size);
        for (std::size_t b = 0; b < size; ++b) out[b] = encode_interaction(skill(b, t), label(b, t), num_skills) - 1;
        return out;
    }
};

inline Batch make_batch(std::span<const EncodedWindow> windows, std::size_t num_skills) {
    Batch batch;
    batch.size = windows.size();
    for (const auto& w : windows) {
        if (w.labels.size() != w.size() || w.mask.size() != w.size()) {
            throw DimensionError("window fields differ in length");
        }
        batch.steps = std::max(batch.steps, w.size());
    }
    const std::size_t n = batch.size * batch.steps;
    batch.skills.assign(n, 1);
    batch.labels.assign(n, 0);
    batch.mask.assign(n, 0);
    for (std::size_t b = 0; b < batch.size; ++b) {
        const auto& w = windows[b];
        bool padding = false;
        for (std::size_t t = 0; t < w.size(); ++t) {
            if (w.mask[t] != 0 && w.mask[t] != 1) throw ContractError("mask entries must be 0 or 1");
            if (padding && w.mask[t]) throw ContractError("masked positions must form a trailing block");
            padding = padding || !w.mask[t];
            if (w.mask[t]) encode_interaction(w.skill_ids[t], w.labels[t], num_skills);
            const std::size_t i = batch.at(b, t);
            if (w.mask[t]) {
                batch.skills[i] = w.skill_ids[t];
                batch.labels[i] = w.labels[t];
                batch.mask[i] = 1;
            }
        }
    }
    return batch;
}

inline Batch make_batch(const EncodedWindow& window, std::size_t num_skills) {
    return make_batch(std::span<const EncodedWindow>(&window, 1), num_skills);
}

/// Traced outputs of one forward pass over a batch.
struct ForwardResult {
    Var next_prob;                   ///< size x (steps-1); column t predicts step t+1
    std::vector<Var> skill_probs;    ///< DKT family: per step, size x Q
    std::vector<Matrix> slot_weights; ///< DKVMN: per step, size x N
    Matrix attention;                ///< SAKT: (size*heads*steps) x steps
    Matrix step_probs;               ///< SAKT: size x steps, including the historyless first step
};

/// Bind a named parameter; a const state yields a constant leaf.
template <typename State>
Var bind(Tape& tape, State& state, std::string_view name) {
    return tape.param(state.param(name));
}

/// Join per-step prediction columns; a single-step batch has none.
inline Var join_steps(Tape& tape, const std::vector<Var>& columns, std::size_t rows) {
    if (columns.empty()) return tape.constant(Matrix(rows, 0));
    return hconcat(columns);
}

/// Affine map x W^T + b for W stored out x in.
inline Var linear(Var x, Var weight, Var bias) { return add_row(matmul_nt(x, weight), bias); }

} // namespace kt
