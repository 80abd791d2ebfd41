#pragma once

// Per-epoch paragraph sampling: a ranked pool per question, with the
// highest-ranked answer-containing paragraph drawn with extra weight.

#include <algorithm>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "docqa/corpus.hpp"

namespace docqa {

struct SamplingPlan {
    int pool_size = 4;            // 16 for the multi-document path
    int draws_per_epoch = 2;
    double oversample_factor = 2.0;
    bool require_answer = false;  // merge and shared-norm training

    void validate() const {
        if (pool_size < 1 || draws_per_epoch < 1 || draws_per_epoch > pool_size) {
            throw std::invalid_argument("SamplingPlan: need 1 <= draws_per_epoch <= pool_size");
        }
        if (oversample_factor < 1.0) {
            throw std::invalid_argument("SamplingPlan: oversample_factor must be >= 1");
        }
    }
};

struct QuestionPool {
    std::vector<ParagraphGroup> paragraphs;  // best-first
    int flagged = -1;  // highest-ranked answer-containing member
};

// Top-k paragraphs by TF-IDF distance (or the linear ranker when given).
// Returns nothing when the pool holds no answer; such questions are
// dropped from training and counted by the caller.
inline std::optional<QuestionPool> build_pool(const TokenizedText& question,
                                              std::vector<ParagraphGroup> groups,
                                              const SamplingPlan& plan,
                                              const LinearRanker* ranker = nullptr) {
    plan.validate();
    std::vector<ParagraphGroup> ranked = tfidf_rank(question, std::move(groups));
    if (ranker) ranked = rank_linear(*ranker, question, std::move(ranked), plan.pool_size);
    QuestionPool pool;
    for (auto& g : ranked) {
        if (static_cast<int>(pool.paragraphs.size()) >= plan.pool_size) break;
        pool.paragraphs.push_back(std::move(g));
    }
    for (std::size_t i = 0; i < pool.paragraphs.size(); ++i) {
        if (pool.paragraphs[i].has_answer) {
            pool.flagged = static_cast<int>(i);
            break;
        }
    }
    if (pool.flagged < 0) return std::nullopt;
    return pool;
}

namespace detail {

inline int draw_weighted(const std::vector<int>& candidates, int flagged, double factor,
                         std::mt19937_64& rng) {
    double total = 0;
    for (int c : candidates) total += (c == flagged) ? factor : 1.0;
    std::uniform_real_distribution<double> dist(0.0, total);
    double r = dist(rng);
    for (int c : candidates) {
        r -= (c == flagged) ? factor : 1.0;
        if (r <= 0) return c;
    }
    return candidates.back();
}

}  // namespace detail

// Sequential weighted draws without replacement; the flagged paragraph
// carries weight oversample_factor. With require_answer the draw is
// rejected (up to 100 times) until an answer paragraph appears, after
// which the flagged one is forced in.
inline std::vector<int> epoch_sample(const QuestionPool& pool, const SamplingPlan& plan,
                                     std::mt19937_64& rng) {
    plan.validate();
    const int n = static_cast<int>(pool.paragraphs.size());
    if (n == 0) throw std::invalid_argument("epoch_sample: empty pool");
    if (plan.require_answer && pool.flagged < 0) {
        throw std::invalid_argument("epoch_sample: require_answer with no flagged paragraph");
    }
    std::vector<int> all(n);
    for (int i = 0; i < n; ++i) all[i] = i;
    if (n <= plan.draws_per_epoch) return all;

    auto draw_once = [&]() {
        std::vector<int> remaining = all;
        std::vector<int> out;
        for (int d = 0; d < plan.draws_per_epoch; ++d) {
            int pick = detail::draw_weighted(remaining, pool.flagged, plan.oversample_factor, rng);
            out.push_back(pick);
            remaining.erase(std::find(remaining.begin(), remaining.end(), pick));
        }
        return out;
    };

    auto has_answer = [&](const std::vector<int>& draw) {
        for (int i : draw) {
            if (pool.paragraphs[i].has_answer) return true;
        }
        return false;
    };

    std::vector<int> draw = draw_once();
    if (plan.require_answer) {
        for (int attempt = 0; attempt < 100 && !has_answer(draw); ++attempt) draw = draw_once();
        if (!has_answer(draw)) {
            draw.back() = pool.flagged;  // force-include after repeated rejection
        }
    }
    return draw;
}

}  // namespace docqa
