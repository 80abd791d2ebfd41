#pragma once

// Span decoding under a length cap, confidence-based aggregation across
// paragraphs, dataset evaluation and EM/F1-vs-paragraph-count curves.

#include <algorithm>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "docqa/dataset.hpp"
#include "docqa/layers.hpp"
#include "docqa/objectives.hpp"
#include "docqa/text.hpp"

namespace docqa {

struct Prediction {
    std::string q_id;
    int start = 0;
    int end = 0;
    int paragraph_id = 0;  // rank of the winning paragraph in the question's list
    double confidence = 0.0;
    std::string answer_text;
};

// Highest-scoring span (i, j) with i <= j and j-i+1 <= max_len; ties break
// to the smallest start, then the smallest end. O(n * max_len).
template <typename T>
std::pair<std::pair<int, int>, T> decode_span(const ScoreMatrix<T>& scores, int max_len) {
    const int n = scores.size();
    if (n < 1 || max_len < 1) {
        throw std::invalid_argument("decode_span: need n >= 1 and max_len >= 1");
    }
    int best_i = 0, best_j = 0;
    T best = scores.start_scores[0] + scores.end_scores[0];
    for (int j = 0; j < n; ++j) {
        int lo = std::max(0, j - max_len + 1);
        int si = lo;
        for (int i = lo + 1; i <= j; ++i) {
            if (scores.start_scores[i] > scores.start_scores[si]) si = i;
        }
        T cand = scores.start_scores[si] + scores.end_scores[j];
        if (cand > best ||
            (cand == best && std::make_pair(si, j) < std::make_pair(best_i, best_j))) {
            best = cand;
            best_i = si;
            best_j = j;
        }
    }
    return {{best_i, best_j}, best};
}

namespace detail {

struct ParagraphResult {
    int rank = 0;
    std::pair<int, int> span{0, 0};
    double confidence = 0.0;
    const ParagraphGroup* group = nullptr;
};

inline bool better_result(const ParagraphResult& a, const ParagraphResult& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.span != b.span) return a.span < b.span;
    return a.rank < b.rank;
}

inline Prediction to_prediction(const std::string& q_id, const ParagraphResult& r) {
    Prediction p;
    p.q_id = q_id;
    p.start = r.span.first;
    p.end = r.span.second;
    p.paragraph_id = r.rank;
    p.confidence = r.confidence;
    p.answer_text = r.group->text.span_text(r.span.first, r.span.second);
    return p;
}

// Per-paragraph decode results for the top-k paragraphs, rank order.
template <typename T>
std::vector<ParagraphResult> score_top_paragraphs(const PreprocessedQuestion& q,
                                                  ModelParams<T>& model,
                                                  const WordVectors<T>& words, TrainMode mode,
                                                  int max_len, int k) {
    std::vector<const ParagraphGroup*> by_rank;
    for (const auto& g : q.groups) by_rank.push_back(&g);
    std::stable_sort(by_rank.begin(), by_rank.end(),
                     [](const ParagraphGroup* a, const ParagraphGroup* b) {
                         return a->rank < b->rank;
                     });
    const bool want_z = (mode == TrainMode::NoAnswer);
    std::vector<ParagraphResult> results;
    for (const ParagraphGroup* g : by_rank) {
        if (static_cast<int>(results.size()) >= k) break;
        ScoreMatrix<T> scores =
            score_paragraph<T>(q.question.tokens, g->text.tokens, words, model, want_z);
        auto [span, conf] = decode_span(scores, max_len);
        ParagraphResult r;
        r.rank = g->rank;
        r.span = span;
        r.confidence = static_cast<double>(conf);
        if (want_z && scores.no_answer.has_value()) {
            r.confidence -= static_cast<double>(*scores.no_answer);
        }
        r.group = g;
        results.push_back(r);
    }
    return results;
}

}  // namespace detail

// Runs the model on the top-k paragraphs independently and returns the
// globally most confident span. In no-answer mode the confidence is the
// span score minus z, suppressing paragraphs confident in "no answer".
template <typename T>
Prediction multi_paragraph_answer(const PreprocessedQuestion& q, ModelParams<T>& model,
                                  const WordVectors<T>& words, TrainMode mode, int max_len,
                                  int k) {
    if (k < 1) throw std::invalid_argument("multi_paragraph_answer: k must be >= 1");
    if (q.groups.empty()) throw std::invalid_argument("multi_paragraph_answer: no paragraphs");
    auto results = detail::score_top_paragraphs(q, model, words, mode, max_len, k);
    const detail::ParagraphResult* best = &results[0];
    for (const auto& r : results) {
        if (detail::better_result(r, *best)) best = &r;
    }
    return detail::to_prediction(q.q_id, *best);
}

struct EvalResult {
    double em = 0.0;
    double f1 = 0.0;
    int missing = 0;
    std::vector<std::tuple<std::string, int, double>> per_question;  // (q_id, em, f1)
};

// Mean EM and F1 over questions; a question without a prediction counts
// as 0/0 and is tallied in `missing`.
inline EvalResult evaluate_dataset(const std::vector<Prediction>& predictions,
                                   const std::vector<std::pair<std::string, std::vector<std::string>>>& gold,
                                   bool warn = true) {
    std::map<std::string, const Prediction*> by_id;
    for (const auto& p : predictions) by_id[p.q_id] = &p;
    EvalResult out;
    for (const auto& [q_id, answers] : gold) {
        auto it = by_id.find(q_id);
        if (it == by_id.end()) {
            ++out.missing;
            if (warn) std::cerr << "warning: no prediction for question " << q_id << "\n";
            out.per_question.emplace_back(q_id, 0, 0.0);
            continue;
        }
        int em = em_score(it->second->answer_text, answers);
        double f1 = f1_score(it->second->answer_text, answers);
        out.per_question.emplace_back(q_id, em, f1);
    }
    if (!out.per_question.empty()) {
        for (const auto& [q_id, em, f1] : out.per_question) {
            out.em += em;
            out.f1 += f1;
        }
        out.em /= static_cast<double>(out.per_question.size());
        out.f1 /= static_cast<double>(out.per_question.size());
    }
    return out;
}

// Simple static-partition parallel map; results land in index order so the
// outcome does not depend on the worker count.
template <typename Fn>
void parallel_for(int n, int workers, Fn fn) {
    workers = std::max(1, std::min(workers, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            for (int i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : threads) t.join();
}

struct CurveRow {
    int k = 0;
    double em = 0.0;
    double f1 = 0.0;
};

// EM/F1 when the model consumes the top k paragraphs, for k = 1..k_max.
// Each paragraph is scored once; the per-k winners reuse those results.
template <typename T>
std::vector<CurveRow> confidence_curve(const Dataset& data, ModelParams<T>& model,
                                       const WordVectors<T>& words, TrainMode mode, int max_len,
                                       int k_max, int workers = 1) {
    if (k_max < 1) throw std::invalid_argument("confidence_curve: k_max must be >= 1");
    std::vector<std::vector<detail::ParagraphResult>> results(data.size());
    parallel_for(static_cast<int>(data.size()), workers, [&](int i) {
        results[i] = detail::score_top_paragraphs(data[i], model, words, mode, max_len, k_max);
    });

    std::vector<std::pair<std::string, std::vector<std::string>>> gold;
    for (const auto& q : data) gold.emplace_back(q.q_id, q.answers);

    std::vector<CurveRow> rows;
    for (int k = 1; k <= k_max; ++k) {
        std::vector<Prediction> preds;
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (results[i].empty()) continue;
            const detail::ParagraphResult* best = &results[i][0];
            for (const auto& r : results[i]) {
                if (r.rank < k && detail::better_result(r, *best)) best = &r;
            }
            preds.push_back(detail::to_prediction(data[i].q_id, *best));
        }
        auto eval = evaluate_dataset(preds, gold, /*warn=*/false);
        rows.push_back({k, eval.em, eval.f1});
    }
    return rows;
}

}  // namespace docqa
