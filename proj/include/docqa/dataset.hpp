#pragma once

// Preprocessed dataset model shared by training and inference, and the
// training-mode switch.

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "docqa/corpus.hpp"

namespace docqa {

enum class TrainMode { None, Sigmoid, Merge, NoAnswer, SharedNorm };

inline const char* to_string(TrainMode m) {
    switch (m) {
        case TrainMode::None: return "none";
        case TrainMode::Sigmoid: return "sigmoid";
        case TrainMode::Merge: return "merge";
        case TrainMode::NoAnswer: return "no-answer";
        case TrainMode::SharedNorm: return "shared-norm";
    }
    return "none";
}

inline TrainMode parse_mode(const std::string& s) {
    if (s == "none") return TrainMode::None;
    if (s == "sigmoid") return TrainMode::Sigmoid;
    if (s == "merge") return TrainMode::Merge;
    if (s == "no-answer") return TrainMode::NoAnswer;
    if (s == "shared-norm") return TrainMode::SharedNorm;
    throw std::invalid_argument(
        "unknown mode \"" + s + "\" (expected none|sigmoid|merge|no-answer|shared-norm)");
}

struct PreprocessedQuestion {
    std::string q_id;
    TokenizedText question;
    std::vector<std::string> answers;
    std::vector<ParagraphGroup> groups;  // TF-IDF ranked, spans labelled
};

using Dataset = std::vector<PreprocessedQuestion>;

struct QuestionSpec {
    std::string q_id;
    std::string question;
    std::vector<std::string> doc_ids;
    std::vector<std::string> answers;
};

// Tokenize, merge paragraphs into groups, label answer spans and rank by
// TF-IDF distance, per question.
inline Dataset preprocess(const std::vector<Document>& docs,
                          const std::vector<QuestionSpec>& questions, int merge_target,
                          int max_span_len = 8,
                          const std::string& separator = kDefaultSeparator) {
    std::map<std::string, const Document*> by_id;
    for (const auto& d : docs) {
        if (!by_id.emplace(d.doc_id, &d).second) {
            throw std::invalid_argument("preprocess: duplicate doc_id " + d.doc_id);
        }
    }
    Dataset out;
    for (const auto& spec : questions) {
        PreprocessedQuestion q;
        q.q_id = spec.q_id;
        q.question = tokenize(spec.question);
        q.answers = spec.answers;
        std::vector<ParagraphGroup> groups;
        for (const auto& doc_id : spec.doc_ids) {
            auto it = by_id.find(doc_id);
            if (it == by_id.end()) {
                throw std::invalid_argument("preprocess: question " + spec.q_id +
                                            " references unknown doc_id " + doc_id);
            }
            auto merged = merge_paragraphs(*it->second, merge_target, separator);
            for (auto& g : merged) groups.push_back(std::move(g));
        }
        label_groups(groups, spec.answers, max_span_len);
        q.groups = tfidf_rank(q.question, std::move(groups));
        out.push_back(std::move(q));
    }
    return out;
}

}  // namespace docqa
