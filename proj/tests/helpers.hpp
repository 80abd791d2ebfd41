#pragma once

// Shared fixtures for model-level tests: a miniature configuration and a
// small in-memory word vector table.

#include <random>
#include <string>

#include "docqa/dataset.hpp"
#include "docqa/layers.hpp"

namespace testutil {

inline docqa::ModelConfig tiny_config() {
    docqa::ModelConfig cfg;
    cfg.word_dim = 6;
    cfg.char_dim = 3;
    cfg.char_filters = 4;
    cfg.char_width = 2;
    cfg.gru_dim = 3;
    cfg.linear_dim = 5;
    cfg.noanswer_hidden = 4;
    cfg.dropout_rate = 0.0;
    cfg.max_span_len = 4;
    return cfg;
}

template <typename T>
docqa::WordVectors<T> tiny_words(std::uint64_t seed = 5) {
    docqa::WordVectors<T> wv(6);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    for (const std::string& w : {"what", "color", "is", "sky", "blue", "red", "cat", "sat",
                                 "mat", "on", "the", "a", "dog", "ran", "far"}) {
        std::vector<T> v(6);
        for (auto& x : v) x = static_cast<T>(dist(rng));
        wv.add(w, v);
    }
    return wv;
}

inline docqa::PreprocessedQuestion make_question(
    const std::string& q_id, const std::string& question,
    const std::vector<std::string>& paragraphs, const std::vector<std::string>& answers,
    int max_span_len = 4) {
    docqa::PreprocessedQuestion q;
    q.q_id = q_id;
    q.question = docqa::tokenize(question);
    q.answers = answers;
    std::vector<docqa::ParagraphGroup> groups;
    for (std::size_t i = 0; i < paragraphs.size(); ++i) {
        docqa::ParagraphGroup g;
        g.source_doc = "doc";
        g.text = docqa::tokenize(paragraphs[i]);
        g.doc_order = static_cast<int>(i);
        groups.push_back(std::move(g));
    }
    docqa::label_groups(groups, answers, max_span_len);
    q.groups = docqa::tfidf_rank(q.question, std::move(groups));
    return q;
}

}  // namespace testutil
