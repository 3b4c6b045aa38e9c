#include "kt/grad_check.hpp"
#include "kt/models/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

namespace {

using kt::Architecture;

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

kt::ModelConfig small_config(Architecture arch, std::size_t q = 5, std::uint64_t seed = 7) {
    kt::ModelConfig c;
    c.arch = arch;
    c.num_skills = q;
    c.seed = seed;
    c.hidden = 4;
    c.memory_slots = 3;
    c.key_dim = 4;
    c.value_dim = 4;
    c.summary_dim = 4;
    c.attention_dim = 4;
    c.heads = 2;
    c.max_seq_len = 16;
    c.query_dim = 4;
    c.encoder_dim = 4;
    c.skill_hidden = 4;
    return c;
}

/// Give every zero-initialized tensor random values too, so biases and gains take part.
void randomize(kt::ModelState& s, std::uint64_t seed, double scale = 0.5) {
    kt::Rng rng(seed);
    for (auto& p : s.params) {
        for (double& v : p.value.values()) v = rng.uniform(-scale, scale) + (p.name.find("gain") != std::string::npos);
    }
}

kt::EncodedWindow random_window(kt::Rng& rng, std::size_t len, std::size_t q) {
    kt::EncodedWindow w;
    for (std::size_t t = 0; t < len; ++t) {
        w.skill_ids.push_back(1 + static_cast<int>(rng.below(q)));
        w.labels.push_back(static_cast<int>(rng.below(2)));
        w.mask.push_back(1);
    }
    return w;
}

kt::Batch random_batch(kt::Rng& rng, std::size_t n, std::size_t steps, std::size_t q) {
    std::vector<kt::EncodedWindow> ws;
    for (std::size_t b = 0; b < n; ++b) ws.push_back(random_window(rng, steps - (b % 2) * 3, q));
    return kt::make_batch(ws, q);
}

double bce(double p, int y) {
    p = std::min(std::max(p, 1e-7), 1.0 - 1e-7);
    return y ? -std::log(p) : -std::log(1.0 - p);
}

std::vector<double> layer_norm(std::vector<double> x, const kt::Matrix& gain, const kt::Matrix& bias) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (x[i] - mean) / std::sqrt(var + 1e-5) * gain[i] + bias[i];
    return x;
}

/// y = W x + b for W stored out x in.
std::vector<double> affine_map(const kt::Matrix& w, const std::vector<double>& x, const kt::Matrix* b) {
    std::vector<double> y(w.rows());
    for (std::size_t r = 0; r < w.rows(); ++r) {
        double s = b ? (*b)[r] : 0.0;
        for (std::size_t c = 0; c < w.cols(); ++c) s += w(r, c) * x[c];
        y[r] = s;
    }
    return y;
}

std::vector<double> row_of(const kt::Matrix& m, std::size_t r) {
    auto s = m.row(r);
    return {s.begin(), s.end()};
}

} // namespace

TEST(Encoding, InteractionIndex) {
    EXPECT_EQ(kt::encode_interaction(1, 0, 233), 1u);
    EXPECT_EQ(kt::encode_interaction(1, 1, 233), 234u);
    std::set<std::size_t> seen;
    for (int s = 1; s <= 5; ++s) {
        for (int c = 0; c <= 1; ++c) {
            const auto i = kt::encode_interaction(s, c, 5);
            EXPECT_GE(i, 1u);
            EXPECT_LE(i, 10u);
            seen.insert(i);
        }
    }
    EXPECT_EQ(seen.size(), 10u);
    EXPECT_THROW(kt::encode_interaction(0, 1, 5), kt::EncodingError);
    EXPECT_THROW(kt::encode_interaction(6, 0, 5), kt::EncodingError);
}

TEST(Batching, PadsWithMaskedTail) {
    const kt::EncodedWindow a{{2, 3, 4}, {1, 0, 1}, {1, 1, 1}};
    const kt::EncodedWindow b{{5}, {1}, {1}};
    const std::vector<kt::EncodedWindow> ws{a, b};
    const auto batch = kt::make_batch(ws, 5);
    EXPECT_EQ(batch.size, 2u);
    EXPECT_EQ(batch.steps, 3u);
    EXPECT_EQ(batch.skills, (std::vector<int>{2, 3, 4, 5, 1, 1}));
    EXPECT_EQ(batch.labels, (std::vector<int>{1, 0, 1, 1, 0, 0}));
    EXPECT_EQ(batch.mask, (std::vector<int>{1, 1, 1, 1, 0, 0}));
    EXPECT_EQ(batch.target_count(), 2u);
    const kt::EncodedWindow holes{{1, 2, 3}, {1, 1, 1}, {1, 0, 1}};
    EXPECT_THROW(kt::make_batch(holes, 5), kt::ContractError);
    const kt::EncodedWindow bad{{9}, {1}, {1}};
    EXPECT_THROW(kt::make_batch(bad, 5), kt::EncodingError);
}

TEST(Architectures, NamesAndOrder) {
    for (Architecture a : kt::kArchitectures) {
        EXPECT_EQ(kt::parse_architecture(kt::tag(a)), a);
        EXPECT_EQ(kt::parse_architecture(kt::display_name(a)), a);
    }
    EXPECT_EQ(kt::display_name(kt::kArchitectures[1]), "DKT+");
    EXPECT_THROW(kt::parse_architecture("bkt"), kt::ConfigError);
}

TEST(Init, ShapesAndRule) {
    kt::ModelConfig c = small_config(Architecture::dkt, 233);
    c.hidden = 100;
    const auto s = kt::init_model(c);
    EXPECT_EQ(s.param("W_hx").value.shape(), "100x466");
    EXPECT_EQ(s.param("W_hh").value.shape(), "100x100");
    EXPECT_EQ(s.param("W_yh").value.shape(), "233x100");
    EXPECT_EQ(s.param("b_y").value, kt::Matrix(1, 233));
    const double bound = 1.0 / std::sqrt(466.0);
    for (double v : s.param("W_hx").value.values()) EXPECT_LE(std::abs(v), bound);
    const auto sakt = kt::init_model(small_config(Architecture::sakt));
    EXPECT_EQ(sakt.param("norm1_gain").value, kt::Matrix(1, 4, 1.0));
    EXPECT_EQ(kt::init_model(c).params[0].value, s.params[0].value);
    c.seed = 8;
    EXPECT_NE(kt::init_model(c).params[0].value, s.params[0].value);
}

TEST(Dkt, ZeroNetworkPredictsHalf) {
    auto s = kt::init_model(small_config(Architecture::dkt));
    for (auto& p : s.params) p.value.fill(0.0);
    kt::Rng rng(1);
    const auto trace = kt::predict(s, random_batch(rng, 2, 6, 5));
    for (const auto& y : trace.skill_probs) {
        for (double v : y.values()) EXPECT_EQ(v, 0.5);
    }
}

TEST(Dkt, SingleStepHandInstance) {
    auto c = small_config(Architecture::dkt, 2);
    c.hidden = 2;
    auto s = kt::init_model(c);
    s.param("W_hx").value = kt::Matrix{{0.1, -0.2, 0.3, 0.4}, {-0.5, 0.6, 0.7, -0.8}};
    s.param("b_h").value = kt::Matrix{{0.05, -0.05}};
    s.param("W_yh").value = kt::Matrix{{1.5, -0.5}, {0.25, 2.0}};
    s.param("b_y").value = kt::Matrix{{0.1, -0.3}};
    // skill 2 answered correctly: interaction index 2 + 2 = 4, column 3
    const auto trace = kt::model_predict(s, {{2}, {1}, {1}});
    const double h0 = std::tanh(0.4 + 0.05);
    const double h1 = std::tanh(-0.8 - 0.05);
    ASSERT_EQ(trace.skill_probs.size(), 1u);
    EXPECT_NEAR(trace.skill_probs[0](0, 0), sig(1.5 * h0 - 0.5 * h1 + 0.1), 1e-12);
    EXPECT_NEAR(trace.skill_probs[0](0, 1), sig(0.25 * h0 + 2.0 * h1 - 0.3), 1e-12);
    EXPECT_EQ(trace.next_prob.cols(), 0u);
}

TEST(Dkt, MultiStepMatchesOracle) {
    auto c = small_config(Architecture::dkt, 3);
    c.hidden = 3;
    auto s = kt::init_model(c);
    randomize(s, 5);
    const kt::EncodedWindow w{{1, 3, 2, 3}, {1, 0, 0, 1}, {1, 1, 1, 1}};
    const auto trace = kt::model_predict(s, w);
    std::vector<double> h(3, 0.0);
    for (std::size_t t = 0; t < 4; ++t) {
        const std::size_t col = static_cast<std::size_t>(w.skill_ids[t] - 1 + 3 * w.labels[t]);
        std::vector<double> nh(3);
        for (std::size_t i = 0; i < 3; ++i) {
            double a = s.param("W_hx").value(i, col) + s.param("b_h").value[i];
            for (std::size_t j = 0; j < 3; ++j) a += s.param("W_hh").value(i, j) * h[j];
            nh[i] = std::tanh(a);
        }
        h = nh;
        const auto y = affine_map(s.param("W_yh").value, h, &s.param("b_y").value);
        for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(trace.skill_probs[t](0, k), sig(y[k]), 1e-12);
        if (t + 1 < 4) {
            EXPECT_EQ(trace.next_prob(0, t), trace.skill_probs[t](0, w.skill_ids[t + 1] - 1));
        }
    }
}

TEST(Dkt, PaddedTailDoesNotChangeLoss) {
    const auto s = kt::init_model(small_config(Architecture::dkt));
    kt::EncodedWindow w{{1, 2, 3, 4, 5, 1}, {1, 0, 1, 1, 0, 0}, {1, 1, 1, 1, 0, 0}};
    const auto base = kt::model_predict(s, w);
    std::swap(w.skill_ids[4], w.skill_ids[5]);
    std::swap(w.labels[4], w.labels[5]);
    w.skill_ids[4] = 3;
    w.labels[5] = 1;
    const auto permuted = kt::model_predict(s, w);
    EXPECT_EQ(kt::dkt_loss(base), kt::dkt_loss(permuted));
    for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(base.next_prob(0, t), permuted.next_prob(0, t));
}

namespace {

kt::PredictionTrace constant_trace(double p, std::size_t n, std::size_t steps) {
    kt::Rng rng(11);
    kt::PredictionTrace t;
    t.batch = random_batch(rng, n, steps, 4);
    t.next_prob = kt::Matrix(n, steps - 1, p);
    return t;
}

} // namespace

TEST(DktLoss, ClosedForms) {
    auto t = constant_trace(0.5, 3, 6);
    EXPECT_NEAR(kt::dkt_loss(t), std::log(2.0), 1e-15);
    for (std::size_t b = 0; b < t.batch.size; ++b) {
        for (std::size_t s = 0; s + 1 < t.batch.steps; ++s) t.next_prob(b, s) = t.batch.label(b, s + 1) ? 1.0 : 0.0;
    }
    EXPECT_NEAR(kt::dkt_loss(t), -std::log(1.0 - 1e-7), 1e-15);
    EXPECT_NEAR(kt::dkt_loss(t), 1e-7, 1e-13);
}

TEST(DktLoss, DirectSumOracle) {
    kt::Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        kt::PredictionTrace t;
        t.batch = random_batch(rng, 4, 9, 6);
        t.next_prob = kt::Matrix(4, 8);
        for (double& v : t.next_prob.values()) v = rng.uniform(0.001, 0.999);
        double total = 0.0;
        std::size_t n = 0;
        for (std::size_t b = 0; b < 4; ++b) {
            for (std::size_t s = 0; s < 8; ++s) {
                if (!t.batch.valid(b, s + 1)) continue;
                total += bce(t.next_prob(b, s), t.batch.label(b, s + 1));
                ++n;
            }
        }
        EXPECT_NEAR(kt::dkt_loss(t), total / static_cast<double>(n), 1e-12);
    }
}

TEST(DktLoss, NoTargetsIsContractError) {
    kt::PredictionTrace t;
    t.batch = kt::make_batch(kt::EncodedWindow{{1}, {1}, {1}}, 3);
    t.next_prob = kt::Matrix(1, 0);
    EXPECT_THROW(kt::dkt_loss(t), kt::ContractError);
}

TEST(DktPlusLoss, ZeroWeightsAreBitIdentical) {
    const auto s = kt::init_model(small_config(Architecture::dkt_plus));
    kt::Rng rng(4);
    const auto trace = kt::predict(s, random_batch(rng, 3, 10, 5));
    EXPECT_EQ(kt::dkt_plus_loss(trace, {0.0, 0.0, 0.0}), kt::dkt_loss(trace));
    EXPECT_GT(kt::dkt_plus_loss(trace, {}), kt::dkt_loss(trace));
}

TEST(DktPlusLoss, ConstantPredictionsHaveNoWaviness) {
    auto t = constant_trace(0.3, 2, 5);
    t.skill_probs.assign(5, kt::Matrix(2, 4, 0.3));
    const auto w = kt::waviness(t);
    EXPECT_EQ(w.w1(), 0.0);
    EXPECT_EQ(w.w2(), 0.0);
    EXPECT_EQ(kt::dkt_plus_loss(t, {0.0, 1.0, 1.0}), kt::dkt_loss(t));
}

TEST(DktPlusLoss, ThreeStepHandInstance) {
    kt::PredictionTrace t;
    t.batch = kt::make_batch(kt::EncodedWindow{{1, 2, 1}, {1, 0, 1}, {1, 1, 1}}, 2);
    t.skill_probs = {kt::Matrix{{0.6, 0.3}}, kt::Matrix{{0.7, 0.2}}, kt::Matrix{{0.55, 0.4}}};
    t.next_prob = kt::Matrix{{0.3, 0.7}}; // y_1[s_2], y_2[s_3]
    const double L = (-std::log(1.0 - 0.3) - std::log(0.7)) / 2.0;
    const double r = (-std::log(0.6) - std::log(1.0 - 0.2) - std::log(0.55)) / 3.0;
    const double w1 = ((0.1 + 0.1) / 2.0 + (0.15 + 0.2) / 2.0) / 2.0;
    const double w2 = ((0.01 + 0.01) / 2.0 + (0.0225 + 0.04) / 2.0) / 2.0;
    const kt::DktPlusConfig lambda{0.10, 0.003, 3.0};
    EXPECT_NEAR(kt::dkt_loss(t), L, 1e-12);
    EXPECT_NEAR(kt::dkt_plus_loss(t, lambda), L + 0.10 * r + 0.003 * w1 + 3.0 * w2, 1e-12);
    EXPECT_NEAR(kt::dkt_plus_loss(t, {1.0, 0.0, 0.0}), L + r, 1e-12);
    EXPECT_NEAR(kt::dkt_plus_loss(t, {0.0, 1.0, 0.0}), L + w1, 1e-12);
    EXPECT_NEAR(kt::dkt_plus_loss(t, {0.0, 0.0, 1.0}), L + w2, 1e-12);
    EXPECT_NEAR(kt::waviness(t).w1(), w1, 1e-12);
    EXPECT_NEAR(kt::waviness(t).w2(), w2, 1e-12);
}

TEST(Dkvmn, EraseAllAddNothingClearsSlot) {
    kt::Tape tape;
    kt::Var m = tape.constant(kt::Matrix{{1.0, 2.0, 3.0, 4.0}});
    kt::Var w = tape.constant(kt::Matrix{{1.0, 0.0}});
    kt::Var e = tape.constant(kt::Matrix{{1.0, 1.0}});
    kt::Var a = tape.constant(kt::Matrix{{0.0, 0.0}});
    const auto out = kt::memory_write(m, w, e, a).value();
    EXPECT_EQ(out, (kt::Matrix{{0.0, 0.0, 3.0, 4.0}}));
}

TEST(Dkvmn, EqualLogitsGiveUniformWeights) {
    auto s = kt::init_model(small_config(Architecture::dkvmn));
    s.param("key_memory").value.fill(0.25);
    kt::Rng rng(2);
    const auto trace = kt::predict(s, random_batch(rng, 2, 5, 5));
    for (const auto& w : trace.slot_weights) {
        for (double v : w.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
    }
}

TEST(Dkvmn, SlotWeightsSumToOne) {
    auto s = kt::init_model(small_config(Architecture::dkvmn));
    randomize(s, 9, 3.0);
    kt::Rng rng(3);
    const auto trace = kt::predict(s, random_batch(rng, 3, 12, 5));
    for (const auto& w : trace.slot_weights) {
        for (std::size_t b = 0; b < w.rows(); ++b) {
            double total = 0.0;
            for (double v : w.row(b)) total += v;
            EXPECT_NEAR(total, 1.0, 1e-12);
        }
    }
}

TEST(Dkvmn, TwoStepHandInstance) {
    auto c = small_config(Architecture::dkvmn, 2);
    c.memory_slots = 2;
    c.key_dim = c.value_dim = c.summary_dim = 2;
    auto s = kt::init_model(c);
    randomize(s, 31);
    const kt::EncodedWindow w{{2, 1}, {1, 0}, {1, 1}};
    const auto trace = kt::model_predict(s, w);
    auto P = [&](const char* n) -> const kt::Matrix& { return s.param(n).value; };
    auto weights = [&](int skill) {
        const auto k = row_of(P("skill_key_embedding"), static_cast<std::size_t>(skill - 1));
        std::vector<double> z = affine_map(P("key_memory"), k, nullptr);
        const double m = std::max(z[0], z[1]);
        const double e0 = std::exp(z[0] - m), e1 = std::exp(z[1] - m);
        return std::make_pair(k, std::vector<double>{e0 / (e0 + e1), e1 / (e0 + e1)});
    };
    const auto [k0, w0] = weights(2);
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(trace.slot_weights[0](0, i), w0[i], 1e-12);
    // write with interaction (2, correct) -> row 3
    const auto v = row_of(P("interaction_embedding"), 3);
    auto e = affine_map(P("erase_weight"), v, &P("erase_bias"));
    auto a = affine_map(P("add_weight"), v, &P("add_bias"));
    for (auto& x : e) x = sig(x);
    for (auto& x : a) x = std::tanh(x);
    double mem[2][2];
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) mem[i][j] = P("value_memory_init")(i, j) * (1.0 - w0[i] * e[j]) + w0[i] * a[j];
    }
    const auto [k1, w1] = weights(1);
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(trace.slot_weights[1](0, i), w1[i], 1e-12);
    std::vector<double> rk{w1[0] * mem[0][0] + w1[1] * mem[1][0], w1[0] * mem[0][1] + w1[1] * mem[1][1], k1[0], k1[1]};
    auto f = affine_map(P("summary_weight"), rk, &P("summary_bias"));
    for (auto& x : f) x = std::tanh(x);
    const double p = sig(affine_map(P("output_weight"), f, &P("output_bias"))[0]);
    EXPECT_NEAR(trace.next_prob(0, 0), p, 1e-12);
}

TEST(Sakt, SingleStepIsFinite) {
    auto s = kt::init_model(small_config(Architecture::sakt));
    const auto trace = kt::model_predict(s, {{3}, {1}, {1}});
    ASSERT_EQ(trace.step_probs.cols(), 1u);
    const double p = trace.step_probs(0, 0);
    EXPECT_TRUE(std::isfinite(p));
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
}

TEST(Sakt, WindowLongerThanTableFails) {
    auto c = small_config(Architecture::sakt);
    c.max_seq_len = 4;
    const auto s = kt::init_model(c);
    kt::Rng rng(1);
    EXPECT_THROW(kt::model_predict(s, random_window(rng, 5, 5)), kt::ContractError);
    EXPECT_NO_THROW(kt::model_predict(s, random_window(rng, 4, 5)));
}

TEST(Sakt, UniformKeysAverageValues) {
    auto s = kt::init_model(small_config(Architecture::sakt));
    s.param("key_weight").value.fill(0.0);
    kt::Rng rng(8);
    const auto trace = kt::predict(s, random_batch(rng, 2, 6, 5));
    const std::size_t steps = 6;
    for (std::size_t r = 0; r < trace.attention.rows(); ++r) {
        const std::size_t step = r % steps;
        for (std::size_t j = 0; j < steps; ++j) {
            EXPECT_NEAR(trace.attention(r, j), j < step ? 1.0 / static_cast<double>(step) : 0.0, 1e-15);
        }
    }
}

TEST(Sakt, SingleHeadHandInstance) {
    auto c = small_config(Architecture::sakt, 2);
    c.attention_dim = 2;
    c.heads = 1;
    c.max_seq_len = 3;
    auto s = kt::init_model(c);
    randomize(s, 77, 1.0);
    const kt::EncodedWindow w{{1, 2, 2}, {1, 0, 1}, {1, 1, 1}};
    const auto trace = kt::model_predict(s, w);
    auto P = [&](const char* n) -> const kt::Matrix& { return s.param(n).value; };
    std::vector<std::vector<double>> K, V;
    for (std::size_t j = 0; j < 3; ++j) {
        auto x = row_of(P("interaction_embedding"), static_cast<std::size_t>(w.skill_ids[j] - 1 + 2 * w.labels[j]));
        const auto pos = row_of(P("position_embedding"), j);
        for (int i = 0; i < 2; ++i) x[i] += pos[i];
        K.push_back(affine_map(P("key_weight"), x, nullptr));
        V.push_back(affine_map(P("value_weight"), x, nullptr));
    }
    for (std::size_t t = 0; t < 3; ++t) {
        const auto qe = row_of(P("skill_embedding"), static_cast<std::size_t>(w.skill_ids[t] - 1));
        const auto q = affine_map(P("query_weight"), qe, nullptr);
        std::vector<double> att(2, 0.0);
        if (t > 0) {
            std::vector<double> score(t);
            double mx = -1e300;
            for (std::size_t j = 0; j < t; ++j) {
                score[j] = (q[0] * K[j][0] + q[1] * K[j][1]) / std::sqrt(2.0);
                mx = std::max(mx, score[j]);
            }
            double z = 0.0;
            for (auto& v : score) z += (v = std::exp(v - mx));
            for (std::size_t j = 0; j < t; ++j) {
                EXPECT_NEAR(trace.attention(t, j), score[j] / z, 1e-12);
                for (int i = 0; i < 2; ++i) att[i] += score[j] / z * V[j][i];
            }
        }
        auto o = affine_map(P("attention_out_weight"), att, &P("attention_out_bias"));
        for (int i = 0; i < 2; ++i) o[i] += qe[i];
        const auto h1 = layer_norm(o, P("norm1_gain"), P("norm1_bias"));
        auto f = affine_map(P("ffn1_weight"), h1, &P("ffn1_bias"));
        for (auto& v : f) v = std::max(v, 0.0);
        f = affine_map(P("ffn2_weight"), f, &P("ffn2_bias"));
        for (int i = 0; i < 2; ++i) f[i] += h1[i];
        const auto h2 = layer_norm(f, P("norm2_gain"), P("norm2_bias"));
        const double p = sig(affine_map(P("output_weight"), h2, &P("output_bias"))[0]);
        EXPECT_NEAR(trace.step_probs(0, t), p, 1e-12) << "step " << t;
        if (t > 0) {
            EXPECT_EQ(trace.next_prob(0, t - 1), trace.step_probs(0, t));
        }
    }
}

TEST(Kqn, ZeroKnowledgeStatePredictsHalf) {
    auto s = kt::init_model(small_config(Architecture::kqn));
    s.param("state_weight").value.fill(0.0);
    kt::Rng rng(6);
    const auto trace = kt::predict(s, random_batch(rng, 2, 7, 5));
    for (double v : trace.next_prob.values()) EXPECT_EQ(v, 0.5);
}

TEST(Kqn, OrderFollowsProjectionOnKnowledgeState) {
    auto s = kt::init_model(small_config(Architecture::kqn));
    randomize(s, 12);
    const auto q = kt::skill_vectors(s);
    const kt::EncodedWindow base{{2, 4, 1, 3}, {1, 0, 1, 1}, {1, 1, 1, 1}};
    // Knowledge state after three steps, read off by swapping the queried skill.
    std::vector<double> p(5);
    for (int k = 1; k <= 5; ++k) {
        auto w = base;
        w.skill_ids[3] = k;
        p[static_cast<std::size_t>(k - 1)] = kt::model_predict(s, w).next_prob(0, 2);
    }
    std::vector<double> h;
    for (std::size_t t = 0; t < 3; ++t) {
        const auto row = static_cast<std::size_t>(base.skill_ids[t] - 1 + 5 * base.labels[t]);
        auto pre = row_of(s.param("interaction_embedding").value, row);
        if (t > 0) {
            const auto r = affine_map(s.param("recurrent_weight").value, h, nullptr);
            for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += r[i];
        }
        for (std::size_t i = 0; i < pre.size(); ++i) pre[i] = std::tanh(pre[i] + s.param("recurrent_bias").value[i]);
        h = pre;
    }
    const auto ks = affine_map(s.param("state_weight").value, h, &s.param("state_bias").value);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            double proj = 0.0;
            for (std::size_t c = 0; c < ks.size(); ++c) proj += (q(i, c) - q(j, c)) * ks[c];
            if (std::abs(proj) < 1e-12) continue;
            EXPECT_EQ(p[i] > p[j], proj > 0) << i << " vs " << j;
        }
    }
}

TEST(Kqn, TwoStepHandInstance) {
    auto c = small_config(Architecture::kqn, 2);
    c.query_dim = c.encoder_dim = c.skill_hidden = 2;
    auto s = kt::init_model(c);
    randomize(s, 41);
    const kt::EncodedWindow w{{1, 2}, {0, 1}, {1, 1}};
    const auto trace = kt::model_predict(s, w);
    auto P = [&](const char* n) -> const kt::Matrix& { return s.param(n).value; };
    auto h = row_of(P("interaction_embedding"), 0); // (1, wrong) -> index 1
    for (int i = 0; i < 2; ++i) h[i] = std::tanh(h[i] + P("recurrent_bias")[i]);
    const auto ks = affine_map(P("state_weight"), h, &P("state_bias"));
    auto hidden = row_of(P("skill_embedding"), 1);
    for (int i = 0; i < 2; ++i) hidden[i] = std::max(0.0, hidden[i] + P("skill_hidden_bias")[i]);
    const auto q = affine_map(P("skill_weight"), hidden, &P("skill_bias"));
    EXPECT_NEAR(trace.next_prob(0, 0), sig(ks[0] * q[0] + ks[1] * q[1]), 1e-12);
}

TEST(SkillSimilarity, ClosedForms) {
    const auto same = kt::similarity_of(kt::Matrix{{0.3, -0.4}, {0.3, -0.4}});
    EXPECT_EQ(same.cosine_at(0, 1), 1.0);
    EXPECT_EQ(same.euclidean(0, 1), 0.0);
    const auto ortho = kt::similarity_of(kt::Matrix{{1.0, 0.0}, {0.0, 1.0}});
    EXPECT_EQ(ortho.cosine_at(0, 1), 0.0);
    EXPECT_NEAR(ortho.euclidean(0, 1), std::sqrt(2.0), 1e-15);
    const auto zero = kt::similarity_of(kt::Matrix{{0.0, 0.0}, {1.0, 2.0}});
    EXPECT_FALSE(zero.cosine_at(0, 1).has_value());
    EXPECT_FALSE(zero.cosine_at(0, 0).has_value());
    EXPECT_EQ(zero.cosine_at(1, 1), 1.0);
    EXPECT_NEAR(zero.euclidean(0, 1), std::sqrt(5.0), 1e-15);
}

TEST(SkillSimilarity, MatchesPairwiseOracle) {
    auto s = kt::init_model(small_config(Architecture::kqn));
    randomize(s, 3);
    const auto table = kt::skill_similarity(s);
    auto P = [&](const char* n) -> const kt::Matrix& { return s.param(n).value; };
    std::vector<std::vector<double>> v;
    for (std::size_t k = 0; k < 5; ++k) {
        auto hidden = row_of(P("skill_embedding"), k);
        for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] = std::max(0.0, hidden[i] + P("skill_hidden_bias")[i]);
        v.push_back(affine_map(P("skill_weight"), hidden, &P("skill_bias")));
    }
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            double dot = 0, ni = 0, nj = 0, d2 = 0;
            for (std::size_t c = 0; c < 4; ++c) {
                dot += v[i][c] * v[j][c];
                ni += v[i][c] * v[i][c];
                nj += v[j][c] * v[j][c];
                d2 += (v[i][c] - v[j][c]) * (v[i][c] - v[j][c]);
            }
            ASSERT_TRUE(table.cosine_at(i, j).has_value());
            EXPECT_NEAR(*table.cosine_at(i, j), dot / std::sqrt(ni * nj), 1e-12);
            EXPECT_NEAR(table.euclidean(i, j), std::sqrt(d2), 1e-12);
            EXPECT_EQ(table.cosine_at(i, j), table.cosine_at(j, i));
            EXPECT_EQ(table.euclidean(i, j), table.euclidean(j, i));
        }
        EXPECT_EQ(table.cosine_at(i, i), 1.0);
        EXPECT_EQ(table.euclidean(i, i), 0.0);
    }
    const auto att = kt::skill_attention(s, kt::Matrix{{0.1, 0.2, -0.3, 0.4}});
    double total = 0.0;
    for (double a : att.values()) total += a;
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_THROW(kt::skill_similarity(kt::init_model(small_config(Architecture::dkt))), kt::ConfigError);
}

TEST(ModelPredict, DktPlusSharesForward) {
    auto dkt = kt::init_model(small_config(Architecture::dkt));
    auto plus = kt::init_model(small_config(Architecture::dkt_plus));
    for (std::size_t i = 0; i < dkt.params.size(); ++i) EXPECT_EQ(dkt.params[i].value, plus.params[i].value);
    kt::Rng rng(10);
    const auto w = random_window(rng, 12, 5);
    const auto a = kt::model_predict(dkt, w);
    const auto b = kt::model_predict(plus, w);
    EXPECT_EQ(a.next_prob, b.next_prob);
    EXPECT_EQ(a.skill_probs, b.skill_probs);
}

TEST(ModelPredict, UnknownArchitectureIsConfigError) {
    auto s = kt::init_model(small_config(Architecture::dkt));
    s.config.arch = static_cast<Architecture>(42);
    EXPECT_THROW(kt::model_predict(s, {{1, 2}, {1, 1}, {1, 1}}), kt::ConfigError);
}

class EveryArchitecture : public ::testing::TestWithParam<Architecture> {};

TEST_P(EveryArchitecture, ProbabilitiesInOpenUnitInterval) {
    auto s = kt::init_model(small_config(GetParam()));
    randomize(s, 2, 2.0);
    kt::Rng rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        const auto trace = kt::predict(s, random_batch(rng, 3, 16, 5));
        for (double p : trace.next_prob.values()) {
            EXPECT_GT(p, 0.0);
            EXPECT_LT(p, 1.0);
        }
    }
}

TEST_P(EveryArchitecture, SameSeedSameTrace) {
    kt::Rng rng(5);
    const auto batch = random_batch(rng, 4, 10, 5);
    const auto a = kt::predict(kt::init_model(small_config(GetParam())), batch);
    const auto b = kt::predict(kt::init_model(small_config(GetParam())), batch);
    EXPECT_EQ(a.next_prob, b.next_prob);
}

TEST_P(EveryArchitecture, MaskedPositionsAreIgnored) {
    const auto s = kt::init_model(small_config(GetParam()));
    kt::Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        auto w = random_window(rng, 10, 5);
        const std::size_t valid = 2 + rng.below(8);
        for (std::size_t t = valid; t < 10; ++t) w.mask[t] = 0;
        const auto a = kt::model_predict(s, w);
        for (std::size_t t = valid; t < 10; ++t) {
            w.skill_ids[t] = 1 + static_cast<int>(rng.below(5));
            w.labels[t] = 1 - w.labels[t];
        }
        const auto b = kt::model_predict(s, w);
        EXPECT_EQ(kt::dkt_loss(a), kt::dkt_loss(b));
        for (std::size_t t = 0; t + 1 < valid; ++t) EXPECT_EQ(a.next_prob(0, t), b.next_prob(0, t));
    }
}

TEST_P(EveryArchitecture, BatchingMatchesSingleWindows) {
    const auto s = kt::init_model(small_config(GetParam()));
    kt::Rng rng(8);
    std::vector<kt::EncodedWindow> ws;
    for (std::size_t len : {9u, 4u, 12u}) ws.push_back(random_window(rng, len, 5));
    const auto joint = kt::predict(s, kt::make_batch(ws, 5));
    for (std::size_t b = 0; b < ws.size(); ++b) {
        const auto alone = kt::model_predict(s, ws[b]);
        for (std::size_t t = 0; t + 1 < ws[b].size(); ++t) EXPECT_NEAR(joint.next_prob(b, t), alone.next_prob(0, t), 1e-13);
    }
}

TEST_P(EveryArchitecture, Causality) {
    const auto s = kt::init_model(small_config(GetParam()));
    kt::Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t len = 3 + rng.below(12);
        auto w = random_window(rng, len, 5);
        const auto a = kt::model_predict(s, w);
        const std::size_t t = 1 + rng.below(len - 1);
        // Flipping the response at step t may only move predictions for steps after t.
        auto flipped = w;
        flipped.labels[t] = 1 - flipped.labels[t];
        const auto b = kt::model_predict(s, flipped);
        for (std::size_t u = 0; u < t; ++u) ASSERT_EQ(a.next_prob(0, u), b.next_prob(0, u)) << "step " << u + 1;
        // A different skill at step t also changes the query for step t itself.
        auto moved = w;
        moved.skill_ids[t] = 1 + (moved.skill_ids[t] % 5);
        const auto c = kt::model_predict(s, moved);
        for (std::size_t u = 0; u + 1 < t; ++u) ASSERT_EQ(a.next_prob(0, u), c.next_prob(0, u)) << "step " << u + 1;
    }
}

TEST_P(EveryArchitecture, GradientMatchesFiniteDifferences) {
    auto s = kt::init_model(small_config(GetParam()));
    kt::Rng rng(17);
    const auto batch = random_batch(rng, 2, 8, 5);
    const auto params = s.parameters();
    const double err = kt::grad_check(
        [&](kt::Tape& tape) {
            const auto fwd = kt::forward(tape, s, batch);
            return kt::objective(s, fwd, batch);
        },
        params);
    EXPECT_LE(err, 1e-4);
    std::size_t live = 0;
    for (const auto* p : params) {
        for (double g : p->gradient.values()) live += g != 0.0;
    }
    EXPECT_GT(live, params.size());
    RecordProperty("max_relative_error", std::to_string(err));
}

INSTANTIATE_TEST_SUITE_P(Models, EveryArchitecture, ::testing::ValuesIn(kt::kArchitectures),
                         [](const auto& info) {
                             std::string n(kt::tag(info.param));
                             if (n == "dkt+") n = "dkt_plus";
                             return n;
                         });
