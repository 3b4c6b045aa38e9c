#pragma once

// Mini-batch training with Adam or plain SGD.

#include "kt/evaluate.hpp"

#include <chrono>
#include <cstdio>
#include <optional>
#include <ostream>

namespace kt {

enum class Optimizer { adam, sgd };

inline std::string to_string(Optimizer o) { return o == Optimizer::adam ? "adam" : "sgd"; }

inline Optimizer parse_optimizer(const std::string& s) {
    if (s == "adam") return Optimizer::adam;
    if (s == "sgd") return Optimizer::sgd;
    throw ConfigError("unknown optimizer '" + s + "' (expected adam or sgd)");
}

struct TrainConfig {
    std::size_t batch_size = 256;
    std::size_t epochs = 100;
    double learning_rate = 0.001;
    Optimizer optimizer = Optimizer::adam;
    std::size_t max_seq_len = 100;
    std::uint64_t seed = 42;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::optional<double> gradient_clip_norm = 5.0;
    /// Score the test split after every epoch. Logged only.
    bool log_validation_auc = false;
};

inline void validate(const TrainConfig& c) {
    if (c.batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) throw ConfigError("learning_rate must be positive");
    if (c.max_seq_len < 2) throw ConfigError("max_seq_len must be at least 2");
    if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
        throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (!(c.epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
    if (c.gradient_clip_norm && !(*c.gradient_clip_norm > 0.0)) {
        throw ConfigError("gradient_clip_norm must be positive when set");
    }
}

/// First and second moment estimates, one pair per parameter.
struct AdamMoments {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
};

inline void require_finite_gradients(const std::vector<Parameter>& params) {
    for (const auto& p : params) {
        for (double g : p.gradient.values()) {
            if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + p.name);
        }
    }
}

/// One bias-corrected Adam update at step t (1-based).
inline void adam_step(std::vector<Parameter>& params, AdamMoments& moments, std::size_t t, const TrainConfig& c) {
    if (t < 1) throw ContractError("adam_step: t must be at least 1");
    require_finite_gradients(params);
    if (moments.m.empty()) {
        for (const auto& p : params) {
            moments.m.emplace_back(p.value.rows(), p.value.cols());
            moments.v.emplace_back(p.value.rows(), p.value.cols());
        }
    }
    if (moments.m.size() != params.size()) throw DimensionError("adam_step: moments do not match parameters");
    const double c1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k];
        auto& m = moments.m[k];
        auto& v = moments.v[k];
        Matrix::require_same_shape(p.value, p.gradient, "adam_step");
        Matrix::require_same_shape(p.value, m, "adam_step");
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.gradient[i];
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
            p.value[i] -= c.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + c.epsilon);
        }
    }
}

/// w <- w - lr g.
inline void sgd_step(std::vector<Parameter>& params, const TrainConfig& c) {
    require_finite_gradients(params);
    for (auto& p : params) {
        Matrix::require_same_shape(p.value, p.gradient, "sgd_step");
        for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= c.learning_rate * p.gradient[i];
    }
}

/// Rescale all gradients so their joint L2 norm is at most max_norm. Returns the norm before clipping.
inline double clip_gradients(std::vector<Parameter>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        for (double g : p.gradient.values()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto& p : params) {
            for (double& g : p.gradient.values()) g *= scale;
        }
    }
    return norm;
}

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;
    std::optional<double> val_auc;
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    /// Objective over the training windows before any update.
    double initial_loss = 0.0;
    std::size_t skipped_windows = 0;
    std::size_t train_windows = 0;
};

inline void write_history(std::ostream& os, const TrainHistory& h) {
    os << "epoch,loss,val_auc,seconds\n";
    char buf[64];
    for (const auto& e : h.epochs) {
        std::snprintf(buf, sizeof buf, "%.17g", e.loss);
        os << e.epoch << ',' << buf << ',';
        if (e.val_auc) {
            std::snprintf(buf, sizeof buf, "%.17g", *e.val_auc);
            os << buf;
        }
        std::snprintf(buf, sizeof buf, "%.3f", e.seconds);
        os << ',' << buf << '\n';
    }
}

namespace detail {

/// Objective value of one batch without recording gradients.
inline double batch_objective(const ModelState& state, const Batch& batch) {
    Tape tape;
    const auto fwd = forward(tape, state, batch);
    return objective(state, fwd, batch).value().item();
}

/// Run f, appending where to the message of any NumericError it throws.
template <typename F>
auto located(const std::string& where, F&& f) {
    try {
        return f();
    } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at " + where);
    }
}

inline std::string coordinates(std::size_t epoch, std::size_t batch) {
    return "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch);
}

} // namespace detail

struct TrainResult {
    ModelState state;
    TrainHistory history;
};

/// Shuffled mini-batches over the training windows for a fixed number of epochs.
///
/// Epoch losses are the per-batch objectives averaged with weights equal to each
/// batch's number of next-step targets. Windows inside a batch keep their corpus
/// order, so a single full batch does not depend on the shuffle seed.
inline TrainResult train(ModelState model, const DatasetSplit& data, const TrainConfig& config) {
    validate(config);
    validate(model.config);
    if (model.config.arch == Architecture::sakt && config.max_seq_len > model.config.max_seq_len) {
        throw ConfigError("max_seq_len " + std::to_string(config.max_seq_len) +
                          " exceeds the sakt positional table of " + std::to_string(model.config.max_seq_len));
    }
    TrainResult out{std::move(model), {}};
    ModelState& state = out.state;
    auto& history = out.history;
    if (config.epochs == 0) return out;
    if (data.train.empty()) throw ContractError("train split is empty");

    const auto refs = cut_windows(data.train, config.max_seq_len, &history.skipped_windows);
    history.train_windows = refs.size();
    if (refs.empty()) throw ContractError("no training window has two or more interactions");
    const std::size_t q = state.config.num_skills;

    std::vector<std::size_t> order(refs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto make = [&](std::size_t begin, std::size_t end) {
        std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
        std::sort(idx.begin(), idx.end());
        std::vector<EncodedWindow> ws;
        ws.reserve(idx.size());
        for (std::size_t i : idx) ws.push_back(refs[i].window);
        return make_batch(ws, q);
    };

    {
        double total = 0.0;
        std::size_t targets = 0;
        for (std::size_t begin = 0; begin < refs.size(); begin += config.batch_size) {
            const Batch batch = make(begin, std::min(refs.size(), begin + config.batch_size));
            const double loss = detail::located("initial loss, batch " + std::to_string(begin / config.batch_size + 1),
                                                [&] { return detail::batch_objective(state, batch); });
            if (!std::isfinite(loss)) throw NumericError("non-finite initial loss");
            total += loss * static_cast<double>(batch.target_count());
            targets += batch.target_count();
        }
        history.initial_loss = total / static_cast<double>(targets);
    }

    Rng rng(config.seed);
    AdamMoments moments;
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        rng.shuffle(order);
        double total = 0.0;
        std::size_t targets = 0;
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < refs.size(); begin += config.batch_size, ++batch_index) {
            const Batch batch = make(begin, std::min(refs.size(), begin + config.batch_size));
            state.zero_grad();
            const double loss_value = detail::located(detail::coordinates(epoch, batch_index + 1), [&] {
                Tape tape;
                const auto fwd = forward(tape, state, batch);
                Var loss = objective(state, fwd, batch);
                const double value = loss.value().item();
                if (!std::isfinite(value)) throw NumericError("non-finite loss");
                tape.backward(loss, Tape::Release::free);
                require_finite_gradients(state.params);
                return value;
            });
            if (config.gradient_clip_norm) clip_gradients(state.params, *config.gradient_clip_norm);
            if (config.optimizer == Optimizer::adam) {
                adam_step(state.params, moments, ++step, config);
            } else {
                sgd_step(state.params, config);
            }
            total += loss_value * static_cast<double>(batch.target_count());
            targets += batch.target_count();
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = total / static_cast<double>(targets);
        if (config.log_validation_auc && !data.test.empty()) {
            rec.val_auc = auc(score(state, data.test, config.max_seq_len, config.batch_size)).value;
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        history.epochs.push_back(rec);
    }
    return out;
}

} // namespace kt
