#include "kt/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

namespace {

kt::TrainConfig quick_config(std::size_t epochs) {
    kt::TrainConfig c;
    c.epochs = epochs;
    c.batch_size = 16;
    c.learning_rate = 0.01;
    c.max_seq_len = 20;
    c.seed = 3;
    return c;
}

struct Corpus {
    kt::DatasetSplit split;
    kt::ModelConfig model;
};

Corpus small_corpus(std::size_t students = 80, std::size_t skills = 8) {
    kt::SynthConfig sc;
    sc.n_students = students;
    sc.n_skills = skills;
    sc.records_min = 8;
    sc.records_max = 20;
    Corpus c;
    c.split = kt::prepare(kt::generate(sc).records, 2023);
    c.model.arch = kt::Architecture::dkt;
    c.model.num_skills = c.split.vocabulary.size();
    c.model.hidden = 8;
    c.model.seed = 5;
    return c;
}

std::vector<kt::Parameter> scalar_param(double w) {
    std::vector<kt::Parameter> p;
    p.emplace_back("w", kt::Matrix::scalar(w));
    return p;
}

} // namespace

TEST(Sgd, ClosedForms) {
    kt::TrainConfig c;
    c.learning_rate = 0.1;
    auto p = scalar_param(1.0);
    p[0].gradient[0] = 1.0;
    kt::sgd_step(p, c);
    EXPECT_DOUBLE_EQ(p[0].value[0], 0.9);
    p[0].gradient[0] = 0.0;
    kt::sgd_step(p, c);
    EXPECT_DOUBLE_EQ(p[0].value[0], 0.9);
}

TEST(Sgd, GeometricDecayOnQuadratic) {
    kt::TrainConfig c;
    c.learning_rate = 0.1;
    auto p = scalar_param(2.5);
    for (int i = 0; i < 100; ++i) {
        p[0].gradient[0] = p[0].value[0];
        kt::sgd_step(p, c);
    }
    EXPECT_NEAR(p[0].value[0], std::pow(0.9, 100) * 2.5, 1e-12);
}

TEST(Adam, ZeroGradientLeavesParameters) {
    kt::TrainConfig c;
    auto p = scalar_param(1.5);
    kt::AdamMoments mom;
    kt::adam_step(p, mom, 1, c);
    EXPECT_EQ(p[0].value[0], 1.5);
    EXPECT_EQ(mom.m[0][0], 0.0);
    mom.m[0][0] = 1.0;
    mom.v[0][0] = 1.0;
    p[0].gradient[0] = 0.0;
    kt::adam_step(p, mom, 2, c);
    EXPECT_DOUBLE_EQ(mom.m[0][0], 0.9);
    EXPECT_DOUBLE_EQ(mom.v[0][0], 0.999);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    kt::TrainConfig c;
    c.learning_rate = 0.01;
    for (double g : {3.0, -0.2, 1e3}) {
        auto p = scalar_param(0.0);
        p[0].gradient[0] = g;
        kt::AdamMoments mom;
        kt::adam_step(p, mom, 1, c);
        EXPECT_NEAR(p[0].value[0], -std::copysign(0.01, g), 1e-8);
    }
}

TEST(Adam, MatchesScalarReference) {
    kt::TrainConfig c;
    c.learning_rate = 0.05;
    auto p = scalar_param(1.0);
    kt::AdamMoments mom;
    double w = 1.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 10; ++t) {
        p[0].gradient[0] = p[0].value[0];
        kt::adam_step(p, mom, static_cast<std::size_t>(t), c);
        const double g = w;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1.0 - std::pow(0.9, t));
        const double vh = v / (1.0 - std::pow(0.999, t));
        w -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
        EXPECT_NEAR(p[0].value[0], w, 1e-12) << "step " << t;
    }
}

TEST(Adam, NonFiniteGradientNamesParameter) {
    kt::TrainConfig c;
    auto p = scalar_param(1.0);
    p[0].name = "W_hh";
    p[0].gradient[0] = std::nan("");
    kt::AdamMoments mom;
    try {
        kt::adam_step(p, mom, 1, c);
        FAIL() << "expected NumericError";
    } catch (const kt::NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("W_hh"), std::string::npos);
    }
    EXPECT_THROW(kt::sgd_step(p, c), kt::NumericError);
    EXPECT_THROW(kt::adam_step(p, mom, 0, c), kt::ContractError);
}

TEST(Clipping, RescalesToGlobalNorm) {
    std::vector<kt::Parameter> p;
    p.emplace_back("a", kt::Matrix{{3.0}});
    p.emplace_back("b", kt::Matrix{{0.0, 4.0}});
    p[0].gradient = kt::Matrix{{30.0}};
    p[1].gradient = kt::Matrix{{0.0, 40.0}};
    EXPECT_DOUBLE_EQ(kt::clip_gradients(p, 5.0), 50.0);
    EXPECT_DOUBLE_EQ(p[0].gradient[0], 3.0);
    EXPECT_DOUBLE_EQ(p[1].gradient[1], 4.0);
    EXPECT_DOUBLE_EQ(kt::clip_gradients(p, 10.0), 5.0);
    EXPECT_DOUBLE_EQ(p[0].gradient[0], 3.0);
}

TEST(TrainConfig, Validation) {
    kt::TrainConfig c;
    EXPECT_NO_THROW(kt::validate(c));
    c.batch_size = 0;
    EXPECT_THROW(kt::validate(c), kt::ConfigError);
    c = {};
    c.learning_rate = 0.0;
    EXPECT_THROW(kt::validate(c), kt::ConfigError);
    c = {};
    c.gradient_clip_norm = -1.0;
    EXPECT_THROW(kt::validate(c), kt::ConfigError);
    EXPECT_EQ(kt::parse_optimizer("sgd"), kt::Optimizer::sgd);
    EXPECT_THROW(kt::parse_optimizer("rmsprop"), kt::ConfigError);
}

TEST(Train, ZeroEpochsReturnsModelUnchanged) {
    const auto c = small_corpus();
    const auto init = kt::init_model(c.model);
    const auto r = kt::train(init, c.split, quick_config(0));
    EXPECT_TRUE(r.history.epochs.empty());
    for (std::size_t i = 0; i < init.params.size(); ++i) EXPECT_EQ(r.state.params[i].value, init.params[i].value);
}

TEST(Train, SameSeedSameParameters) {
    const auto c = small_corpus();
    const auto init = kt::init_model(c.model);
    const auto a = kt::train(init, c.split, quick_config(3));
    const auto b = kt::train(init, c.split, quick_config(3));
    for (std::size_t i = 0; i < init.params.size(); ++i) EXPECT_EQ(a.state.params[i].value, b.state.params[i].value);
    ASSERT_EQ(a.history.epochs.size(), 3u);
    for (std::size_t e = 0; e < 3; ++e) {
        EXPECT_EQ(a.history.epochs[e].epoch, e + 1);
        EXPECT_EQ(a.history.epochs[e].loss, b.history.epochs[e].loss);
        EXPECT_TRUE(std::isfinite(a.history.epochs[e].loss));
    }
    auto other = quick_config(3);
    other.seed = 4;
    const auto d = kt::train(init, c.split, other);
    EXPECT_NE(a.state.params[0].value, d.state.params[0].value);
}

TEST(Train, FullBatchIgnoresShuffleSeed) {
    const auto c = small_corpus();
    const auto init = kt::init_model(c.model);
    auto cfg = quick_config(1);
    cfg.batch_size = 100000;
    const auto a = kt::train(init, c.split, cfg);
    cfg.seed = 999;
    const auto b = kt::train(init, c.split, cfg);
    for (std::size_t i = 0; i < init.params.size(); ++i) EXPECT_EQ(a.state.params[i].value, b.state.params[i].value);
    EXPECT_NE(a.state.params[0].value, init.params[0].value);
}

TEST(Train, DktPlusWithZeroWeightsTracesDkt) {
    const auto c = small_corpus();
    auto plus_config = c.model;
    plus_config.arch = kt::Architecture::dkt_plus;
    plus_config.regularization = {0.0, 0.0, 0.0};
    const auto a = kt::train(kt::init_model(c.model), c.split, quick_config(3));
    const auto b = kt::train(kt::init_model(plus_config), c.split, quick_config(3));
    EXPECT_EQ(a.history.initial_loss, b.history.initial_loss);
    for (std::size_t e = 0; e < 3; ++e) EXPECT_EQ(a.history.epochs[e].loss, b.history.epochs[e].loss);
}

TEST(Train, SkipsWindowsWithoutTargets) {
    const kt::SkillVocabulary vocab = kt::build_vocabulary({{2020, "u1", "MATH", 1000, kt::Grade::A, {}},
                                                            {2020, "u2", "MATH", 2000, kt::Grade::B, {}}});
    kt::DatasetSplit split;
    split.vocabulary = vocab;
    split.train = {{"u1", {{1, 1, 2020}}}, {"u2", {{1, 1, 2020}, {2, 0, 2020}, {1, 1, 2020}}}};
    kt::ModelConfig mc;
    mc.num_skills = 2;
    mc.hidden = 3;
    auto cfg = quick_config(1);
    cfg.max_seq_len = 2;
    const auto r = kt::train(kt::init_model(mc), split, cfg);
    // u1: one window of 1; u2: windows of 2 and 1
    EXPECT_EQ(r.history.skipped_windows, 2u);
    EXPECT_EQ(r.history.train_windows, 1u);
    split.train.resize(1);
    EXPECT_THROW(kt::train(kt::init_model(mc), split, cfg), kt::ContractError);
    split.train.clear();
    EXPECT_THROW(kt::train(kt::init_model(mc), split, cfg), kt::ContractError);
}

TEST(Train, NonFiniteLossReportsCoordinates) {
    const auto c = small_corpus();
    auto init = kt::init_model(c.model);
    init.param("b_y").value.fill(std::nan(""));
    try {
        kt::train(init, c.split, quick_config(2));
        FAIL() << "expected NumericError";
    } catch (const kt::NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("initial loss, batch 1"), std::string::npos) << e.what();
    }
}

TEST(Train, SaktRejectsWindowsBeyondPositions) {
    auto c = small_corpus();
    c.model.arch = kt::Architecture::sakt;
    c.model.attention_dim = 4;
    c.model.heads = 2;
    c.model.max_seq_len = 10;
    EXPECT_THROW(kt::train(kt::init_model(c.model), c.split, quick_config(1)), kt::ConfigError);
}

TEST(Train, ConvexProbeDecreasesEveryStep) {
    // Logistic regression posed as a one-step model: p = sigmoid(X w + b).
    kt::Rng rng(1);
    const std::size_t n = 200;
    kt::Matrix x(n, 3);
    kt::Matrix y(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < 3; ++j) x(i, j) = rng.normal();
        const double z = 1.5 * x(i, 0) - 2.0 * x(i, 1) + 0.5 * x(i, 2) + 0.3;
        y(i, 0) = rng.uniform() < 1.0 / (1.0 + std::exp(-z)) ? 1.0 : 0.0;
    }
    std::vector<kt::Parameter> params;
    params.emplace_back("w", kt::Matrix(1, 3));
    params.emplace_back("b", kt::Matrix(1, 1));
    const kt::Matrix weights(n, 1, 1.0 / static_cast<double>(n));
    kt::TrainConfig cfg;
    cfg.learning_rate = 0.01;
    kt::AdamMoments mom;
    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t step = 1; step <= 50; ++step) {
        for (auto& p : params) p.zero_grad();
        kt::Tape tape;
        kt::Var logits = kt::add_row(kt::matmul_nt(tape.constant(x), tape.param(params[0])), tape.param(params[1]));
        kt::Var loss = kt::weighted_bce(kt::sigmoid(logits), y, weights);
        const double value = loss.value().item();
        ASSERT_LT(value, previous) << "step " << step;
        previous = value;
        tape.backward(loss);
        kt::adam_step(params, mom, step, cfg);
    }
}

TEST(Train, DktLearnsSyntheticCorpus) {
    const auto c = small_corpus(400, 20);
    auto cfg = quick_config(25);
    cfg.batch_size = 32;
    cfg.learning_rate = 0.001;
    cfg.max_seq_len = 100;
    auto mc = c.model;
    mc.hidden = 32;
    const auto r = kt::train(kt::init_model(mc), c.split, cfg);
    EXPECT_LE(r.history.epochs.back().loss, 0.9 * r.history.initial_loss)
        << "initial " << r.history.initial_loss << " final " << r.history.epochs.back().loss;
}

TEST(History, CsvLayout) {
    kt::TrainHistory h;
    h.epochs.push_back({1, 0.5, std::nullopt, 1.25});
    h.epochs.push_back({2, 0.25, 0.75, 0.5});
    std::ostringstream os;
    kt::write_history(os, h);
    EXPECT_EQ(os.str(), "epoch,loss,val_auc,seconds\n1,0.5,,1.250\n2,0.25,0.75,0.500\n");
}

TEST(History, ValidationAucIsLoggedOnly) {
    const auto c = small_corpus();
    auto cfg = quick_config(2);
    const auto a = kt::train(kt::init_model(c.model), c.split, cfg);
    cfg.log_validation_auc = true;
    const auto b = kt::train(kt::init_model(c.model), c.split, cfg);
    for (std::size_t i = 0; i < a.state.params.size(); ++i) EXPECT_EQ(a.state.params[i].value, b.state.params[i].value);
    ASSERT_TRUE(b.history.epochs[1].val_auc.has_value());
    EXPECT_GE(*b.history.epochs[1].val_auc, 0.0);
    EXPECT_LE(*b.history.epochs[1].val_auc, 1.0);
    EXPECT_FALSE(a.history.epochs[1].val_auc.has_value());
}
