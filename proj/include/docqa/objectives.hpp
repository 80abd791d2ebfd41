#pragma once

// Training objectives over per-token boundary scores: per-paragraph
// softmax (single span and summed), the shared-normalization objective
// whose softmax denominator spans every paragraph of a context, the
// no-answer-augmented joint objective, and the per-token sigmoid loss.
// All are tape ops; value-level wrappers return losses plus exact
// gradients w.r.t. the score vectors.

#include <stdexcept>
#include <string>
#include <vector>

#include "docqa/autodiff.hpp"
#include "docqa/layers.hpp"
#include "docqa/text.hpp"

namespace docqa {

template <typename T>
struct LabeledScores {
    ScoreMatrix<T> scores;
    AnswerSpans spans;
    std::vector<int> start_labels;  // sorted, unique
    std::vector<int> end_labels;
    bool has_answer = false;

    static LabeledScores make(ScoreMatrix<T> scores, const AnswerSpans& spans) {
        int n = scores.size();
        LabeledScores ls = labels_only(spans, n);
        ls.scores = std::move(scores);
        return ls;
    }

    // Labels without score storage, for losses whose scores live on a tape.
    static LabeledScores labels_only(const AnswerSpans& spans, int n) {
        LabeledScores ls;
        ls.spans = spans;
        for (auto [a, b] : spans.spans) {
            if (a < 0 || b < a || b >= n) {
                throw std::invalid_argument("LabeledScores: span (" + std::to_string(a) + "," +
                                            std::to_string(b) + ") out of range for n=" +
                                            std::to_string(n));
            }
            ls.start_labels.push_back(a);
            ls.end_labels.push_back(b);
        }
        auto dedup = [](std::vector<int>& v) {
            std::sort(v.begin(), v.end());
            v.erase(std::unique(v.begin(), v.end()), v.end());
        };
        dedup(ls.start_labels);
        dedup(ls.end_labels);
        ls.has_answer = !spans.spans.empty();
        return ls;
    }
};

// Paragraphs of one context scored under a shared softmax denominator.
template <typename T>
struct SharedNormGroup {
    std::vector<LabeledScores<T>> members;
};

template <typename T>
struct LossTerms {
    ad::Var<T> total;
    ad::Var<T> start_term;
    ad::Var<T> end_term;
};

namespace detail {

template <typename T>
ad::Var<T> nll_term(ad::Tape<T>& tape, ad::Var<T> scores, const std::vector<int>& labels) {
    return ad::sub(ad::logsumexp(scores), ad::logsumexp(ad::gather_rows(scores, labels)));
}

}  // namespace detail

// Cross entropy on the first labeled span under per-paragraph softmaxes.
template <typename T>
LossTerms<T> independent_bounds_loss(ad::Tape<T>& tape, ad::Var<T> s, ad::Var<T> g,
                                     const LabeledScores<T>& labels) {
    if (!labels.has_answer) {
        throw std::invalid_argument("independent_bounds_loss: paragraph has no answer span");
    }
    auto [a, b] = labels.spans.spans.front();
    LossTerms<T> out;
    out.start_term = detail::nll_term(tape, s, {a});
    out.end_term = detail::nll_term(tape, g, {b});
    out.total = ad::add(out.start_term, out.end_term);
    return out;
}

// Marginalized negative log-likelihood over every labeled start (and end).
template <typename T>
LossTerms<T> summed_bounds_loss(ad::Tape<T>& tape, ad::Var<T> s, ad::Var<T> g,
                                const LabeledScores<T>& labels) {
    if (!labels.has_answer) {
        throw std::invalid_argument("summed_bounds_loss: paragraph has no answer span");
    }
    LossTerms<T> out;
    out.start_term = detail::nll_term(tape, s, labels.start_labels);
    out.end_term = detail::nll_term(tape, g, labels.end_labels);
    out.total = ad::add(out.start_term, out.end_term);
    return out;
}

// Summed objective with the softmax denominator shared across all member
// paragraphs; members without an answer contribute denominator mass only.
template <typename T>
LossTerms<T> shared_norm_loss(ad::Tape<T>& tape, const std::vector<ad::Var<T>>& member_starts,
                              const std::vector<ad::Var<T>>& member_ends,
                              const SharedNormGroup<T>& group) {
    if (group.members.empty() || member_starts.size() != group.members.size() ||
        member_ends.size() != group.members.size()) {
        throw std::invalid_argument("shared_norm_loss: group/score arity mismatch");
    }
    std::vector<int> all_starts, all_ends;
    int offset = 0;
    for (std::size_t m = 0; m < group.members.size(); ++m) {
        const auto& ls = group.members[m];
        // members may carry labels only (empty score vectors) when the
        // scores live on the tape
        if (!ls.scores.start_scores.empty() && member_starts[m].rows() != ls.scores.size()) {
            throw std::invalid_argument("shared_norm_loss: member " + std::to_string(m) +
                                        " score length mismatch");
        }
        for (int a : ls.start_labels) all_starts.push_back(offset + a);
        for (int b : ls.end_labels) all_ends.push_back(offset + b);
        offset += member_starts[m].rows();
    }
    if (all_starts.empty()) {
        throw std::invalid_argument("shared_norm_loss: no member has an answer span");
    }
    ad::Var<T> s = ad::concat_rows(member_starts);
    ad::Var<T> g = ad::concat_rows(member_ends);
    LossTerms<T> out;
    out.start_term = detail::nll_term(tape, s, all_starts);
    out.end_term = detail::nll_term(tape, g, all_ends);
    out.total = ad::add(out.start_term, out.end_term);
    return out;
}

// Joint-span softmax with a no-answer weight z: the score of span (i, j)
// is s_i + g_j, the denominator adds e^z, and the numerator is e^z when no
// answer exists or the cross-product mass over labeled starts/ends when one
// does. The start/end split does not apply; both terms alias the total.
template <typename T>
LossTerms<T> no_answer_loss(ad::Tape<T>& tape, ad::Var<T> s, ad::Var<T> g, ad::Var<T> z,
                            const LabeledScores<T>& labels) {
    if (labels.has_answer && (labels.start_labels.empty() || labels.end_labels.empty())) {
        throw std::invalid_argument("no_answer_loss: answer flagged but labels empty");
    }
    ad::Var<T> span_mass = ad::add(ad::logsumexp(s), ad::logsumexp(g));
    ad::Var<T> denom = ad::logsumexp(ad::concat_rows<T>({ad::reshape(z, 1, 1), span_mass}));
    ad::Var<T> numer;
    if (labels.has_answer) {
        numer = ad::add(ad::logsumexp(ad::gather_rows(s, labels.start_labels)),
                        ad::logsumexp(ad::gather_rows(g, labels.end_labels)));
    } else {
        numer = ad::reshape(z, 1, 1);
    }
    LossTerms<T> out;
    out.total = ad::sub(denom, numer);
    out.start_term = out.total;
    out.end_term = out.total;
    return out;
}

// Per-token binary cross entropy on sigmoid(score) against label-set
// membership; valid with no answer (all tokens negative).
template <typename T>
LossTerms<T> sigmoid_loss(ad::Tape<T>& tape, ad::Var<T> s, ad::Var<T> g,
                          const LabeledScores<T>& labels) {
    auto term = [&](ad::Var<T> scores, const std::vector<int>& pos) {
        ad::Var<T> t = ad::sum_all(ad::softplus(scores));
        if (!pos.empty()) t = ad::sub(t, ad::sum_all(ad::gather_rows(scores, pos)));
        return t;
    };
    LossTerms<T> out;
    out.start_term = term(s, labels.start_labels);
    out.end_term = term(g, labels.end_labels);
    out.total = ad::add(out.start_term, out.end_term);
    return out;
}

// Un-normalized span confidence: start score plus end score.
template <typename T>
T span_confidence(const ScoreMatrix<T>& scores, int i, int j) {
    const int n = scores.size();
    if (i < 0 || j < i || j >= n) {
        throw std::invalid_argument("span_confidence: span (" + std::to_string(i) + "," +
                                    std::to_string(j) + ") out of range for n=" + std::to_string(n));
    }
    return scores.start_scores[i] + scores.end_scores[j];
}

// ---------------------------------------------------------------------------
// value-level wrappers (tests and oracles): loss terms plus exact gradients

template <typename T>
struct LossResult {
    T loss = T(0);
    T start_term = T(0);
    T end_term = T(0);
    std::vector<T> d_start;
    std::vector<T> d_end;
    T d_z = T(0);
};

namespace detail {

template <typename T, typename Fn>
LossResult<T> eval_loss(const LabeledScores<T>& labels, Fn fn) {
    ad::Tape<T> tape;
    ad::Var<T> s = tape.input(ad::Tensor<T>::column(labels.scores.start_scores));
    ad::Var<T> g = tape.input(ad::Tensor<T>::column(labels.scores.end_scores));
    ad::Var<T> z;
    if (labels.scores.no_answer.has_value()) {
        z = tape.input(ad::Tensor<T>::scalar(*labels.scores.no_answer));
    }
    LossTerms<T> terms = fn(tape, s, g, z);
    tape.backward(terms.total);
    LossResult<T> out;
    out.loss = terms.total.val().item();
    out.start_term = terms.start_term.val().item();
    out.end_term = terms.end_term.val().item();
    out.d_start = s.grad().data;
    out.d_end = g.grad().data;
    if (z.valid()) out.d_z = z.grad().item();
    return out;
}

}  // namespace detail

template <typename T>
LossResult<T> independent_bounds_loss(const LabeledScores<T>& labels) {
    return detail::eval_loss<T>(labels, [&](ad::Tape<T>& t, ad::Var<T> s, ad::Var<T> g, ad::Var<T>) {
        return independent_bounds_loss(t, s, g, labels);
    });
}

template <typename T>
LossResult<T> summed_bounds_loss(const LabeledScores<T>& labels) {
    return detail::eval_loss<T>(labels, [&](ad::Tape<T>& t, ad::Var<T> s, ad::Var<T> g, ad::Var<T>) {
        return summed_bounds_loss(t, s, g, labels);
    });
}

template <typename T>
LossResult<T> sigmoid_loss(const LabeledScores<T>& labels) {
    return detail::eval_loss<T>(labels, [&](ad::Tape<T>& t, ad::Var<T> s, ad::Var<T> g, ad::Var<T>) {
        return sigmoid_loss(t, s, g, labels);
    });
}

template <typename T>
LossResult<T> no_answer_loss(const LabeledScores<T>& labels) {
    if (!labels.scores.no_answer.has_value()) {
        throw std::invalid_argument("no_answer_loss: score matrix has no z");
    }
    return detail::eval_loss<T>(labels, [&](ad::Tape<T>& t, ad::Var<T> s, ad::Var<T> g, ad::Var<T> z) {
        return no_answer_loss(t, s, g, z, labels);
    });
}

// Per-member start/end gradients for a shared-norm group.
template <typename T>
struct SharedNormResult {
    T loss = T(0);
    T start_term = T(0);
    T end_term = T(0);
    std::vector<std::vector<T>> d_start;
    std::vector<std::vector<T>> d_end;
};

template <typename T>
SharedNormResult<T> shared_norm_loss(const SharedNormGroup<T>& group) {
    ad::Tape<T> tape;
    std::vector<ad::Var<T>> starts, ends;
    for (const auto& m : group.members) {
        starts.push_back(tape.input(ad::Tensor<T>::column(m.scores.start_scores)));
        ends.push_back(tape.input(ad::Tensor<T>::column(m.scores.end_scores)));
    }
    LossTerms<T> terms = shared_norm_loss(tape, starts, ends, group);
    tape.backward(terms.total);
    SharedNormResult<T> out;
    out.loss = terms.total.val().item();
    out.start_term = terms.start_term.val().item();
    out.end_term = terms.end_term.val().item();
    for (std::size_t m = 0; m < group.members.size(); ++m) {
        out.d_start.push_back(starts[m].grad().data);
        out.d_end.push_back(ends[m].grad().data);
    }
    return out;
}

}  // namespace docqa
