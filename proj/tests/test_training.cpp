#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <random>

#include "docqa/training.hpp"
#include "helpers.hpp"

using namespace docqa;
using ad::Param;
using ad::Tensor;
using Catch::Approx;

namespace {

// A one-parameter "model" wrapper so the optimizer can be exercised in
// isolation from the network.
struct ScalarProblem {
    ModelParams<double> params;
    OptimizerState<double> opt;

    explicit ScalarProblem(double x0) {
        params = ModelParams<double>::init(testutil::tiny_config(), 1);
        opt = OptimizerState<double>::init(params);
        // use the start bias as the scalar under optimization
        params.prediction.start_b.value.at(0, 0) = x0;
    }

    double x() { return params.prediction.start_b.value.at(0, 0); }
    void set_grad(double g) { params.prediction.start_b.grad.at(0, 0) = g; }
};

Dataset toy_dataset() {
    Dataset data;
    data.push_back(testutil::make_question("q1", "what color is the sky",
                                           {"the sky is blue today", "a dog ran far"}, {"blue"}));
    data.push_back(testutil::make_question(
        "q2", "what sat on the mat", {"the cat sat on the mat", "red sky at night"}, {"cat"}));
    data.push_back(testutil::make_question("q3", "what ran far",
                                           {"a dog ran far", "the sky is blue"}, {"dog"}));
    return data;
}

TrainState<double> fresh_state(TrainMode mode, std::uint64_t seed) {
    SamplingPlan plan;
    plan.pool_size = 2;
    plan.draws_per_epoch = 2;
    return TrainState<double>::init(testutil::tiny_config(), mode, seed, plan, /*batch=*/2);
}

std::uint64_t params_checksum(ModelParams<double>& params) {
    std::uint64_t h = 1469598103934665603ULL;
    params.for_each([&](Param<double>& p) {
        const unsigned char* bytes = reinterpret_cast<const unsigned char*>(p.value.data.data());
        for (std::size_t i = 0; i < p.value.data.size() * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    });
    return h;
}

}  // namespace

TEST_CASE("adadelta handles zero gradients and the first step") {
    ScalarProblem prob(1.0);

    SECTION("zero gradient leaves parameters unchanged") {
        prob.opt.eg2[0].data[0] = 0.5;  // pretend history, any accumulator slot
        adadelta_step(prob.params, prob.opt);
        CHECK(prob.x() == 1.0);
    }

    SECTION("first step follows the closed-form update") {
        const double g = 0.37;
        prob.set_grad(g);
        adadelta_step(prob.params, prob.opt);
        double eg2 = 0.05 * g * g;
        double expected_dx = -std::sqrt(1e-6) / std::sqrt(eg2 + 1e-6) * g;
        CHECK(prob.x() == Approx(1.0 + expected_dx).epsilon(1e-12));
    }

    SECTION("non-finite gradients abort with the parameter name") {
        prob.set_grad(std::numeric_limits<double>::quiet_NaN());
        CHECK_THROWS_WITH(adadelta_step(prob.params, prob.opt),
                          Catch::Matchers::ContainsSubstring("predict.start_b"));
    }

    SECTION("repeated steps on a quadratic reduce the loss monotonically") {
        ScalarProblem q(2.0);
        double prev_loss = q.x() * q.x();
        for (int it = 0; it < 25; ++it) {
            q.set_grad(2.0 * q.x());  // d/dx of x^2
            adadelta_step(q.params, q.opt);
            double loss = q.x() * q.x();
            CHECK(loss <= prev_loss + 1e-12);
            prev_loss = loss;
        }
        CHECK(prev_loss < 4.0);
    }
}

TEST_CASE("ema update and swap") {
    ScalarProblem prob(1.0);
    EmaState<double> ema = EmaState<double>::init(prob.params, 0.999);

    // find the shadow slot for the scalar under test
    std::size_t slot = 0, idx = 0;
    prob.params.for_each([&](Param<double>& p) {
        if (!p.trainable) return;
        if (&p == &prob.params.prediction.start_b) slot = idx;
        ++idx;
    });

    SECTION("single update moves the shadow by 1 - decay") {
        ema.shadow[slot].data[0] = 0.0;
        ema.update(prob.params);
        CHECK(ema.shadow[slot].data[0] == Approx(0.001));
    }

    SECTION("decay zero copies the parameters") {
        EmaState<double> fast = EmaState<double>::init(prob.params, 0.0);
        fast.shadow[slot].data[0] = -9.0;
        fast.update(prob.params);
        CHECK(fast.shadow[slot].data[0] == 1.0);
    }

    SECTION("swapping twice restores parameters bitwise") {
        std::uint64_t before = params_checksum(prob.params);
        ema.swap(prob.params);
        ema.swap(prob.params);
        CHECK(params_checksum(prob.params) == before);
    }
}

TEST_CASE("train_epoch reduces to the paragraph loss on a singleton dataset") {
    auto wv = testutil::tiny_words<double>();
    Dataset data;
    data.push_back(
        testutil::make_question("q1", "what color is the sky", {"the sky is blue today"}, {"blue"}));

    auto state = fresh_state(TrainMode::None, 5);
    state.params.config.dropout_rate = 0.0;
    auto tdata = TrainingData<double>::prepare(data, state.plan);
    REQUIRE(tdata.items.size() == 1);
    CHECK(tdata.dropped == 0);

    // compute the expected loss with the pre-step weights
    const ParagraphGroup& g = tdata.items[0].pool.paragraphs[0];
    auto scores = score_paragraph<double>(data[0].question.tokens, g.text.tokens, wv, state.params);
    auto expected = summed_bounds_loss(LabeledScores<double>::make(scores, g.answer_spans));

    auto metrics = train_epoch(state, tdata, wv);
    CHECK(metrics.questions_used == 1);
    CHECK(metrics.mean_loss == Approx(expected.loss).epsilon(1e-9));
}

TEST_CASE("merge mode concatenates drawn paragraphs with a separator") {
    QuestionPool pool;
    ParagraphGroup a;
    a.text = tokenize("one two three");
    a.answer_spans.spans = {{1, 1}};
    a.has_answer = true;
    ParagraphGroup b;
    b.text = tokenize("four five");
    pool.paragraphs = {a, b};
    pool.flagged = 0;
    auto [tokens, labels] = detail::merge_drawn<double>(pool, {1, 0}, "<sep>");
    CHECK(tokens.size() == 3 + 1 + 2);
    CHECK(tokens[3] == "<sep>");
    REQUIRE(labels.spans.spans.size() == 1);
    CHECK(labels.spans.spans[0] == std::pair<int, int>(1, 1));  // draw order sorts to pool order
    CHECK(labels.has_answer);
}

TEST_CASE("training modes run and keep word vectors frozen") {
    auto wv = testutil::tiny_words<double>();
    auto data = toy_dataset();
    std::uint64_t wv_before = wv.checksum();
    for (TrainMode mode : {TrainMode::None, TrainMode::Sigmoid, TrainMode::Merge,
                           TrainMode::NoAnswer, TrainMode::SharedNorm}) {
        auto state = fresh_state(mode, 11);
        auto tdata = TrainingData<double>::prepare(data, state.plan);
        REQUIRE(tdata.items.size() == 3);
        auto metrics = train_epoch(state, tdata, wv);
        CHECK(metrics.questions_used == 3);
        CHECK(metrics.mean_loss > 0.0);
        CHECK(std::isfinite(metrics.mean_loss));
    }
    CHECK(wv.checksum() == wv_before);
}

TEST_CASE("training loss trajectory is deterministic under a fixed seed") {
    auto wv = testutil::tiny_words<double>();
    auto data = toy_dataset();
    std::vector<double> losses1, losses2;
    for (auto* losses : {&losses1, &losses2}) {
        auto state = fresh_state(TrainMode::SharedNorm, 21);
        state.params.config.dropout_rate = 0.2;
        auto tdata = TrainingData<double>::prepare(data, state.plan);
        for (int e = 0; e < 3; ++e) losses->push_back(train_epoch(state, tdata, wv).mean_loss);
    }
    for (int e = 0; e < 3; ++e) {
        CHECK(std::abs(losses1[e] - losses2[e]) < 1e-6);
    }
}

TEST_CASE("evaluation with EMA swap never mutates live parameters") {
    auto wv = testutil::tiny_words<double>();
    auto data = toy_dataset();
    auto state = fresh_state(TrainMode::SharedNorm, 31);
    auto tdata = TrainingData<double>::prepare(data, state.plan);
    train_epoch(state, tdata, wv);

    std::uint64_t before = params_checksum(state.params);
    state.ema.swap(state.params);
    ModelConfig cfg = state.params.config;
    for (const auto& q : data) {
        multi_paragraph_answer(q, state.params, wv, TrainMode::SharedNorm, cfg.max_span_len, 2);
    }
    state.ema.swap(state.params);
    CHECK(params_checksum(state.params) == before);
}

TEST_CASE("checkpoints round-trip bitwise and reject mismatched configs") {
    auto wv = testutil::tiny_words<double>();
    auto data = toy_dataset();
    auto state = fresh_state(TrainMode::NoAnswer, 41);
    auto tdata = TrainingData<double>::prepare(data, state.plan);
    train_epoch(state, tdata, wv);

    const std::string path = "ck_test.bin";
    save_checkpoint(path, state);
    auto loaded = load_checkpoint<double>(path);
    CHECK(loaded.mode == TrainMode::NoAnswer);
    CHECK(loaded.epoch == 1);
    CHECK(params_checksum(loaded.params) == params_checksum(state.params));

    // two more epochs from the restored state match the original run
    auto cont = train_epoch(loaded, tdata, wv);
    auto direct = train_epoch(state, tdata, wv);
    CHECK(cont.mean_loss == Approx(direct.mean_loss).epsilon(1e-12));

    ModelConfig other = testutil::tiny_config();
    other.gru_dim = 4;
    CHECK_THROWS_WITH(load_checkpoint<double>(path, &other),
                      Catch::Matchers::ContainsSubstring("does not match"));
    std::remove(path.c_str());
}
