#pragma once

// The full finite-difference verification suite: every tape primitive,
// every model layer, every objective, and the end-to-end forward pass.
// Shared by the `gradcheck` CLI command and the acceptance tests.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "docqa/gradcheck.hpp"
#include "docqa/layers.hpp"
#include "docqa/objectives.hpp"

namespace docqa {

struct GradCheckReport {
    std::string name;
    double max_err = 0.0;
    double tolerance = 0.0;
    int points = 0;
    bool pass() const { return max_err < tolerance; }
};

namespace gradcheck_detail {

using ad::Param;
using ad::Tape;
using ad::Tensor;
using ad::Var;

inline Tensor<double> rand_mat(std::mt19937_64& rng, int r, int c, double lo = -2, double hi = 2) {
    Tensor<double> t(r, c);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.data) v = dist(rng);
    return t;
}

inline Tensor<double> rand_off_zero(std::mt19937_64& rng, int r, int c) {
    Tensor<double> t = rand_mat(rng, r, c);
    for (auto& v : t.data) {
        if (std::abs(v) < 0.05) v = v < 0 ? v - 0.1 : v + 0.1;
    }
    return t;
}

template <typename OpFn>
double projected_check(std::mt19937_64& rng, OpFn op, const Tensor<double>& point) {
    Tensor<double> r;
    bool have = false;
    auto f = [&](Tape<double>& tape, Var<double> x) {
        Var<double> y = op(tape, x);
        if (!have) {
            r = rand_mat(rng, y.rows(), y.cols(), -1, 1);
            have = true;
        }
        return ad::sum_all(ad::mul(y, tape.constant(r)));
    };
    return ad::grad_check(f, point);
}

inline WordVectors<double> suite_words(std::uint64_t seed, int dim) {
    WordVectors<double> wv(dim);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    for (const std::string& w : {"alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta"}) {
        std::vector<double> v(dim);
        for (auto& x : v) x = dist(rng);
        wv.add(w, v);
    }
    return wv;
}

inline ModelConfig suite_config() {
    ModelConfig cfg;
    cfg.word_dim = 6;
    cfg.char_dim = 3;
    cfg.char_filters = 4;
    cfg.char_width = 2;
    cfg.gru_dim = 3;
    cfg.linear_dim = 5;
    cfg.noanswer_hidden = 4;
    cfg.dropout_rate = 0.0;
    return cfg;
}

inline AnswerSpans random_spans(std::mt19937_64& rng, int n, int count) {
    AnswerSpans spans;
    for (int i = 0; i < count; ++i) {
        int a = static_cast<int>(rng() % n), b = static_cast<int>(rng() % n);
        if (a > b) std::swap(a, b);
        spans.spans.emplace_back(a, b);
    }
    std::sort(spans.spans.begin(), spans.spans.end());
    spans.spans.erase(std::unique(spans.spans.begin(), spans.spans.end()), spans.spans.end());
    return spans;
}

}  // namespace gradcheck_detail

inline std::vector<GradCheckReport> run_gradcheck_suite(int primitive_points = 100,
                                                        int layer_points = 50,
                                                        int objective_points = 50,
                                                        std::uint64_t seed = 2024) {
    namespace gd = gradcheck_detail;
    using ad::Param;
    using ad::Tape;
    using ad::Tensor;
    using ad::Var;
    std::mt19937_64 rng(mix64(seed));
    std::vector<GradCheckReport> reports;

    auto run_primitive = [&](const std::string& name,
                             std::function<double(std::mt19937_64&)> one_point) {
        GradCheckReport r{"primitive/" + name, 0.0, 1e-5, primitive_points};
        for (int i = 0; i < primitive_points; ++i) r.max_err = std::max(r.max_err, one_point(rng));
        reports.push_back(r);
    };

    run_primitive("matmul", [](std::mt19937_64& g) {
        auto op = [](Tape<double>& t, Var<double> x) {
            return ad::matmul(ad::reshape(ad::slice_rows(x, 0, 6), 2, 3),
                              ad::reshape(ad::slice_rows(x, 6, 18), 3, 4));
        };
        return gd::projected_check(g, op, gd::rand_mat(g, 18, 1));
    });
    run_primitive("add_sub_mul", [](std::mt19937_64& g) {
        auto op = [](Tape<double>& t, Var<double> x) {
            auto a = ad::reshape(ad::slice_rows(x, 0, 6), 2, 3);
            auto b = ad::reshape(ad::slice_rows(x, 6, 12), 2, 3);
            return ad::add(ad::sub(a, b), ad::mul(a, b));
        };
        return gd::projected_check(g, op, gd::rand_mat(g, 12, 1));
    });
    run_primitive("broadcasts", [](std::mt19937_64& g) {
        auto op = [](Tape<double>& t, Var<double> x) {
            auto m = ad::reshape(ad::slice_rows(x, 0, 6), 2, 3);
            auto v = ad::reshape(ad::slice_rows(x, 6, 9), 1, 3);
            auto u = ad::reshape(ad::slice_rows(x, 9, 11), 2, 1);
            return ad::add_colvec(ad::mul_rowvec(ad::add_rowvec(m, v), v), u);
        };
        return gd::projected_check(g, op, gd::rand_mat(g, 11, 1));
    });
    run_primitive("activations", [](std::mt19937_64& g) {
        auto op = [](Tape<double>& t, Var<double> x) {
            return ad::add(ad::tanh_op(x), ad::add(ad::sigmoid(x), ad::softplus(x)));
        };
        return gd::projected_check(g, op, gd::rand_mat(g, 3, 4));
    });
    run_primitive("relu", [](std::mt19937_64& g) {
        auto op = [](Tape<double>& t, Var<double> x) { return ad::relu(x); };
        return gd::projected_check(g, op, gd::rand_off_zero(g, 3, 4));
    });
    run_primitive("exp_log", [](std::mt19937_64& g) {
        auto op = [](Tape<double>& t, Var<double> x) { return ad::exp_op(x); };
        double e1 = gd::projected_check(g, op, gd::rand_mat(g, 2, 3));
        auto lop = [](Tape<double>& t, Var<double> x) { return ad::log_op(x); };
        return std::max(e1, gd::projected_check(g, lop, gd::rand_mat(g, 2, 3, 0.5, 3.0)));
    });
    run_primitive("concat_slice_reverse", [](std::mt19937_64& g) {
        auto op = [](Tape<double>& t, Var<double> x) {
            auto a = ad::reshape(ad::slice_rows(x, 0, 6), 2, 3);
            auto b = ad::reshape(ad::slice_rows(x, 6, 12), 2, 3);
            auto rows = ad::concat_rows<double>({a, b});
            auto cols = ad::concat_cols<double>({a, b});
            auto v1 = ad::sum_all(ad::mul(ad::reverse_rows(rows), rows));
            auto v2 = ad::sum_all(ad::mul(ad::slice_cols(cols, 1, 5), ad::slice_cols(cols, 0, 4)));
            return ad::add(v1, v2);
        };
        return gd::projected_check(g, op, gd::rand_mat(g, 12, 1));
    });
    run_primitive("transpose_reshape_scale", [](std::mt19937_64& g) {
        auto op = [](Tape<double>& t, Var<double> x) {
            return ad::scale(ad::transpose(ad::reshape(x, 3, 4)), 2.5);
        };
        return gd::projected_check(g, op, gd::rand_mat(g, 12, 1));
    });
    run_primitive("max_over_axis", [](std::mt19937_64& g) {
        auto op0 = [](Tape<double>& t, Var<double> x) { return ad::max_over_axis(x, 0); };
        auto op1 = [](Tape<double>& t, Var<double> x) { return ad::max_over_axis(x, 1); };
        return std::max(gd::projected_check(g, op0, gd::rand_mat(g, 4, 3)),
                        gd::projected_check(g, op1, gd::rand_mat(g, 4, 3)));
    });
    run_primitive("softmax_rows", [](std::mt19937_64& g) {
        Tensor<double> mask(3, 4);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 4; ++j) mask.at(i, j) = (i == j) ? 0.0 : 1.0;
        auto op = [](Tape<double>& t, Var<double> x) { return ad::softmax_rows(x); };
        auto opm = [&mask](Tape<double>& t, Var<double> x) { return ad::softmax_rows(x, &mask); };
        return std::max(gd::projected_check(g, op, gd::rand_mat(g, 3, 4)),
                        gd::projected_check(g, opm, gd::rand_mat(g, 3, 4)));
    });
    run_primitive("logsumexp_sum", [](std::mt19937_64& g) {
        auto op = [](Tape<double>& t, Var<double> x) {
            return ad::add(ad::logsumexp(x), ad::sum_all(x));
        };
        return gd::projected_check(g, op, gd::rand_mat(g, 5, 1, -8, 8));
    });
    run_primitive("gather_rows", [](std::mt19937_64& g) {
        auto op = [](Tape<double>& t, Var<double> x) { return ad::gather_rows(x, {0, 2, 2, 1}); };
        return gd::projected_check(g, op, gd::rand_mat(g, 4, 3));
    });
    run_primitive("im2col_1d", [](std::mt19937_64& g) {
        auto op = [](Tape<double>& t, Var<double> x) { return ad::im2col_1d(x, 3); };
        return std::max(gd::projected_check(g, op, gd::rand_mat(g, 5, 2)),
                        gd::projected_check(g, op, gd::rand_mat(g, 2, 2)));
    });

    // ---- layers -----------------------------------------------------------
    ModelConfig cfg = gd::suite_config();
    auto words = gd::suite_words(mix64(seed ^ 0x17), cfg.word_dim);

    auto run_layer = [&](const std::string& name, double tol,
                         std::function<double(std::uint64_t)> one_point) {
        GradCheckReport r{"layer/" + name, 0.0, tol, layer_points};
        for (int i = 0; i < layer_points; ++i) {
            r.max_err = std::max(r.max_err, one_point(stream_seed(seed, hash_string(name), i)));
        }
        reports.push_back(r);
    };

    run_layer("embed", 1e-5, [&](std::uint64_t s) {
        auto params = ModelParams<double>::init(cfg, s);
        std::mt19937_64 g(mix64(s));
        std::vector<std::string> toks = {"alpha", params.config.separator, "unknownword", "beta"};
        Tensor<double> proj = gd::rand_mat(g, 4, cfg.embed_dim());
        auto build = [&](Tape<double>& t) {
            return ad::sum_all(ad::mul(embed_sequence(t, toks, words, params), t.constant(proj)));
        };
        return ad::grad_check_params(build,
                                     {&params.embedding.char_table, &params.embedding.conv_W,
                                      &params.embedding.conv_b, &params.embedding.sep_embedding});
    });
    run_layer("bigru", 1e-5, [&](std::uint64_t s) {
        std::mt19937_64 g(mix64(s));
        BiGruParams<double> p = detail::init_bigru<double>("g", 4, 3, g);
        Param<double> x("x", gd::rand_mat(g, 3, 4));
        std::vector<Param<double>*> ps = {&p.fwd.W, &p.fwd.U_ru, &p.fwd.U_c, &p.fwd.b,
                                          &p.bwd.W, &p.bwd.U_ru, &p.bwd.U_c, &p.bwd.b, &x};
        Tensor<double> proj = gd::rand_mat(g, 3, 6);
        auto build = [&](Tape<double>& t) {
            return ad::sum_all(ad::mul(bigru(t, t.use(x), p), t.constant(proj)));
        };
        return ad::grad_check_params(build, ps);
    });
    run_layer("bidaf_attention", 1e-5, [&](std::uint64_t s) {
        std::mt19937_64 g(mix64(s));
        AttentionParams<double> p = detail::init_attention<double>("a", 4, 4, 5, g);
        Param<double> h("h", gd::rand_mat(g, 3, 4)), q("q", gd::rand_mat(g, 2, 4));
        Tensor<double> proj = gd::rand_mat(g, 3, 5);
        auto build = [&](Tape<double>& t) {
            return ad::sum_all(
                ad::mul(bidaf_attention(t, t.use(h), t.use(q), p), t.constant(proj)));
        };
        return ad::grad_check_params(build, {&p.w1, &p.w2, &p.w3, &p.lin_W, &p.lin_b, &h, &q});
    });
    run_layer("self_attention", 1e-5, [&](std::uint64_t s) {
        std::mt19937_64 g(mix64(s));
        BiGruParams<double> gru = detail::init_bigru<double>("g", 5, 3, g);
        AttentionParams<double> att = detail::init_attention<double>("a", 6, 3, 5, g);
        Param<double> x("x", gd::rand_mat(g, 4, 5));
        std::vector<Param<double>*> ps = {&gru.fwd.W, &gru.fwd.U_ru, &gru.fwd.U_c, &gru.fwd.b,
                                          &gru.bwd.W, &gru.bwd.U_ru, &gru.bwd.U_c, &gru.bwd.b,
                                          &att.w1,    &att.w2,      &att.w3,      &att.lin_W,
                                          &att.lin_b, &x};
        Tensor<double> proj = gd::rand_mat(g, 4, 5);
        auto build = [&](Tape<double>& t) {
            return ad::sum_all(
                ad::mul(self_attention_block(t, t.use(x), gru, att), t.constant(proj)));
        };
        return ad::grad_check_params(build, ps);
    });
    run_layer("predict_boundaries", 1e-5, [&](std::uint64_t s) {
        auto params = ModelParams<double>::init(cfg, s);
        std::mt19937_64 g(mix64(s));
        PredictionParams<double>& p = params.prediction;
        Param<double> x("x", gd::rand_mat(g, 5, cfg.linear_dim));
        std::vector<Param<double>*> ps = {&x,          &p.start_W, &p.start_b, &p.end_W,
                                          &p.end_b,    &p.gru1.fwd.W, &p.gru1.bwd.W,
                                          &p.gru1.fwd.U_ru, &p.gru1.bwd.U_ru, &p.gru1.fwd.U_c,
                                          &p.gru1.bwd.U_c,  &p.gru1.fwd.b,  &p.gru1.bwd.b,
                                          &p.gru2.fwd.W, &p.gru2.bwd.W, &p.gru2.fwd.U_ru,
                                          &p.gru2.bwd.U_ru, &p.gru2.fwd.U_c, &p.gru2.bwd.U_c,
                                          &p.gru2.fwd.b, &p.gru2.bwd.b};
        Tensor<double> pr1 = gd::rand_mat(g, 5, 1), pr2 = gd::rand_mat(g, 5, 1);
        auto build = [&](Tape<double>& t) {
            auto out = predict_boundaries(t, t.use(x), p);
            return ad::add(ad::sum_all(ad::mul(out.start, t.constant(pr1))),
                           ad::sum_all(ad::mul(out.end, t.constant(pr2))));
        };
        return ad::grad_check_params(build, ps);
    });
    run_layer("no_answer", 1e-5, [&](std::uint64_t s) {
        auto params = ModelParams<double>::init(cfg, s);
        std::mt19937_64 g(mix64(s));
        const int n = 5, g2 = 2 * cfg.gru_dim;
        Param<double> sc("s", gd::rand_mat(g, n, 1)), ec("e", gd::rand_mat(g, n, 1));
        Param<double> h1("h1", gd::rand_mat(g, n, g2)), h2("h2", gd::rand_mat(g, n, g2));
        Param<double> so("so", gd::rand_mat(g, n, cfg.linear_dim));
        auto& na = params.no_answer;
        auto build = [&](Tape<double>& t) {
            BoundaryVars<double> bounds{t.use(sc), t.use(ec), t.use(h1), t.use(h2)};
            return no_answer_score(t, bounds, t.use(so), na);
        };
        return ad::grad_check_params(
            build, {&sc, &ec, &h1, &h2, &so, &na.pool_w, &na.W1, &na.b1, &na.W2, &na.b2});
    });
    run_layer("full_forward", 1e-4, [&](std::uint64_t s) {
        auto params = ModelParams<double>::init(cfg, s);
        std::mt19937_64 g(mix64(s));
        std::vector<std::string> ctx = {"alpha", "beta", "gamma", "delta", "epsilon"};
        std::vector<std::string> q = {"zeta", "eta", "alpha"};
        Tensor<double> pr1 = gd::rand_mat(g, 5, 1), pr2 = gd::rand_mat(g, 5, 1);
        auto build = [&](Tape<double>& t) {
            auto qs = question_states(t, q, words, params);
            auto out = forward_paragraph(t, ctx, qs, words, params, true);
            auto proj = ad::add(ad::sum_all(ad::mul(out.bounds.start, t.constant(pr1))),
                                ad::sum_all(ad::mul(out.bounds.end, t.constant(pr2))));
            return ad::add(proj, out.z);
        };
        return ad::grad_check_params(build, params.all());
    });

    // ---- objectives (loss value + gradient against finite differences) ----
    auto run_objective = [&](const std::string& name,
                             std::function<double(std::mt19937_64&)> one_point) {
        GradCheckReport r{"objective/" + name, 0.0, 1e-5, objective_points};
        for (int i = 0; i < objective_points; ++i) r.max_err = std::max(r.max_err, one_point(rng));
        reports.push_back(r);
    };

    auto fd_labeled = [](std::mt19937_64& g, bool with_answer, bool with_z, auto loss_fn) {
        int n = 2 + static_cast<int>(g() % 5);
        AnswerSpans spans = with_answer ? gd::random_spans(g, n, 2) : AnswerSpans{};
        auto labels = LabeledScores<double>::labels_only(spans, n);
        std::uniform_real_distribution<double> dist(-3, 3);
        Tensor<double> point(2 * n + (with_z ? 1 : 0), 1);
        for (auto& v : point.data) v = dist(g);
        auto f = [&](Tape<double>& t, Var<double> x) {
            Var<double> s = ad::slice_rows(x, 0, n);
            Var<double> gg = ad::slice_rows(x, n, 2 * n);
            Var<double> z;
            if (with_z) z = ad::slice_rows(x, 2 * n, 2 * n + 1);
            return loss_fn(t, s, gg, z, labels);
        };
        return ad::grad_check(f, point);
    };

    run_objective("independent_bounds", [&](std::mt19937_64& g) {
        return fd_labeled(g, true, false,
                          [](Tape<double>& t, Var<double> s, Var<double> gg, Var<double>,
                             const LabeledScores<double>& l) {
                              return independent_bounds_loss(t, s, gg, l).total;
                          });
    });
    run_objective("summed_bounds", [&](std::mt19937_64& g) {
        return fd_labeled(g, true, false,
                          [](Tape<double>& t, Var<double> s, Var<double> gg, Var<double>,
                             const LabeledScores<double>& l) {
                              return summed_bounds_loss(t, s, gg, l).total;
                          });
    });
    run_objective("sigmoid", [&](std::mt19937_64& g) {
        bool ans = g() % 2 == 0;
        return fd_labeled(g, ans, false,
                          [](Tape<double>& t, Var<double> s, Var<double> gg, Var<double>,
                             const LabeledScores<double>& l) {
                              return sigmoid_loss(t, s, gg, l).total;
                          });
    });
    run_objective("no_answer", [&](std::mt19937_64& g) {
        bool ans = g() % 2 == 0;
        return fd_labeled(g, ans, true,
                          [](Tape<double>& t, Var<double> s, Var<double> gg, Var<double> z,
                             const LabeledScores<double>& l) {
                              return no_answer_loss(t, s, gg, z, l).total;
                          });
    });
    run_objective("shared_norm", [&](std::mt19937_64& g) {
        int n1 = 2 + static_cast<int>(g() % 3), n2 = 2 + static_cast<int>(g() % 3);
        auto l1 = LabeledScores<double>::labels_only(gd::random_spans(g, n1, 2), n1);
        auto l2 = LabeledScores<double>::labels_only(AnswerSpans{}, n2);
        SharedNormGroup<double> group;
        group.members = {l1, l2};
        std::uniform_real_distribution<double> dist(-3, 3);
        Tensor<double> point(2 * (n1 + n2), 1);
        for (auto& v : point.data) v = dist(g);
        auto f = [&](Tape<double>& t, Var<double> x) {
            std::vector<Var<double>> starts = {ad::slice_rows(x, 0, n1),
                                               ad::slice_rows(x, n1, n1 + n2)};
            std::vector<Var<double>> ends = {
                ad::slice_rows(x, n1 + n2, 2 * n1 + n2),
                ad::slice_rows(x, 2 * n1 + n2, 2 * n1 + 2 * n2)};
            return shared_norm_loss(t, starts, ends, group).total;
        };
        return ad::grad_check(f, point);
    });

    return reports;
}

}  // namespace docqa
