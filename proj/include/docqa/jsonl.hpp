#pragma once

// JSONL interchange: document/question ingestion, the preprocessed dataset,
// prediction files and curve CSVs.

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "docqa/corpus.hpp"
#include "docqa/dataset.hpp"
#include "docqa/inference.hpp"

namespace docqa {

namespace detail {

template <typename Fn>
void for_each_jsonl(const std::string& path, Fn fn) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        fn(j);
    }
}

inline nlohmann::json tokenized_to_json(const TokenizedText& t) {
    nlohmann::json spans = nlohmann::json::array();
    for (auto [a, b] : t.char_spans) spans.push_back({a, b});
    return nlohmann::json{{"raw", t.raw}, {"tokens", t.tokens}, {"char_spans", spans}};
}

inline TokenizedText tokenized_from_json(const nlohmann::json& j) {
    TokenizedText t;
    t.raw = j.at("raw").get<std::string>();
    t.tokens = j.at("tokens").get<std::vector<std::string>>();
    for (const auto& s : j.at("char_spans")) {
        t.char_spans.emplace_back(s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>());
    }
    if (t.tokens.size() != t.char_spans.size()) {
        throw std::runtime_error("tokenized text: tokens/char_spans length mismatch");
    }
    return t;
}

}  // namespace detail

// Corpus ingestion: one document per line, {"doc_id", "paragraphs": [...]}.
inline std::vector<Document> read_documents(const std::string& path) {
    std::vector<Document> docs;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j) {
        Document d;
        d.doc_id = j.at("doc_id").get<std::string>();
        for (const auto& p : j.at("paragraphs")) {
            d.paragraphs.push_back(tokenize(p.get<std::string>()));
        }
        docs.push_back(std::move(d));
    });
    return docs;
}

// Questions: {"q_id", "question", "doc_ids": [...], "answers": [...]}.
inline std::vector<QuestionSpec> read_questions(const std::string& path) {
    std::vector<QuestionSpec> out;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j) {
        QuestionSpec q;
        q.q_id = j.at("q_id").get<std::string>();
        q.question = j.at("question").get<std::string>();
        q.doc_ids = j.at("doc_ids").get<std::vector<std::string>>();
        q.answers = j.at("answers").get<std::vector<std::string>>();
        out.push_back(std::move(q));
    });
    return out;
}

inline void write_dataset(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& q : data) {
        nlohmann::json groups = nlohmann::json::array();
        for (const auto& g : q.groups) {
            nlohmann::json spans = nlohmann::json::array();
            for (auto [a, b] : g.answer_spans.spans) spans.push_back({a, b});
            nlohmann::json jg = detail::tokenized_to_json(g.text);
            jg["doc_id"] = g.source_doc;
            jg["spans"] = spans;
            jg["rank"] = g.rank;
            jg["tfidf_distance"] = g.tfidf_distance;
            jg["is_first"] = g.is_first;
            jg["tokens_before"] = g.tokens_before;
            jg["first_paragraph_index"] = g.first_paragraph_index;
            jg["doc_order"] = g.doc_order;
            groups.push_back(std::move(jg));
        }
        nlohmann::json j{{"q_id", q.q_id},
                         {"question", detail::tokenized_to_json(q.question)},
                         {"answers", q.answers},
                         {"groups", groups}};
        out << j.dump() << "\n";
    }
}

inline Dataset read_dataset(const std::string& path) {
    Dataset data;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j) {
        PreprocessedQuestion q;
        q.q_id = j.at("q_id").get<std::string>();
        q.question = detail::tokenized_from_json(j.at("question"));
        q.answers = j.at("answers").get<std::vector<std::string>>();
        for (const auto& jg : j.at("groups")) {
            ParagraphGroup g;
            g.text = detail::tokenized_from_json(jg);
            g.source_doc = jg.at("doc_id").get<std::string>();
            for (const auto& s : jg.at("spans")) {
                g.answer_spans.spans.emplace_back(s.at(0).get<int>(), s.at(1).get<int>());
            }
            g.has_answer = !g.answer_spans.spans.empty();
            g.rank = jg.at("rank").get<int>();
            g.tfidf_distance = jg.at("tfidf_distance").get<double>();
            g.is_first = jg.at("is_first").get<bool>();
            g.tokens_before = jg.at("tokens_before").get<int>();
            g.first_paragraph_index = jg.at("first_paragraph_index").get<int>();
            g.doc_order = jg.at("doc_order").get<int>();
            q.groups.push_back(std::move(g));
        }
        data.push_back(std::move(q));
    });
    return data;
}

// Predictions: {"q_id", "answer", "confidence", "paragraph_id"} per line.
inline void write_predictions(const std::string& path, const std::vector<Prediction>& preds) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& p : preds) {
        nlohmann::json j{{"q_id", p.q_id},
                         {"answer", p.answer_text},
                         {"confidence", p.confidence},
                         {"paragraph_id", p.paragraph_id},
                         {"span", {p.start, p.end}}};
        out << j.dump() << "\n";
    }
}

inline std::vector<Prediction> read_predictions(const std::string& path) {
    std::vector<Prediction> preds;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j) {
        Prediction p;
        p.q_id = j.at("q_id").get<std::string>();
        p.answer_text = j.at("answer").get<std::string>();
        p.confidence = j.at("confidence").get<double>();
        p.paragraph_id = j.at("paragraph_id").get<int>();
        if (j.contains("span")) {
            p.start = j.at("span").at(0).get<int>();
            p.end = j.at("span").at(1).get<int>();
        }
        preds.push_back(std::move(p));
    });
    return preds;
}

inline void write_curve_csv(const std::string& path, const std::vector<CurveRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "k,em,f1\n";
    for (const auto& r : rows) {
        std::ostringstream line;
        line.precision(6);
        line << std::fixed << r.k << "," << r.em << "," << r.f1;
        out << line.str() << "\n";
    }
}

inline void write_ranker(const std::string& path, const LinearRanker& r) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << nlohmann::json{{"weights", r.weights}, {"bias", r.bias}}.dump(2) << "\n";
}

inline LinearRanker read_ranker(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    LinearRanker r;
    auto w = j.at("weights").get<std::vector<double>>();
    if (w.size() != 5) throw std::runtime_error("ranker file: expected 5 weights");
    std::copy(w.begin(), w.end(), r.weights.begin());
    r.bias = j.at("bias").get<double>();
    return r;
}

}  // namespace docqa
