#pragma once

// Run configuration: one JSON file, validated strictly (unknown keys are
// rejected), with CLI flags layered on top by the tool.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "docqa/dataset.hpp"
#include "docqa/layers.hpp"
#include "docqa/sampling.hpp"

namespace docqa {

using json = nlohmann::json;

namespace detail {

inline void reject_unknown_keys(const json& j, const std::vector<std::string>& known,
                                const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw std::invalid_argument("config: unknown key \"" + key + "\" in " + where);
        }
    }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline json to_json(const ModelConfig& m) {
    return json{{"word_dim", m.word_dim},
                {"char_dim", m.char_dim},
                {"char_filters", m.char_filters},
                {"char_width", m.char_width},
                {"gru_dim", m.gru_dim},
                {"linear_dim", m.linear_dim},
                {"dropout_rate", m.dropout_rate},
                {"max_span_len", m.max_span_len},
                {"noanswer_hidden", m.noanswer_hidden},
                {"separator", m.separator}};
}

inline ModelConfig model_config_from_json(const json& j) {
    detail::reject_unknown_keys(j, {"word_dim", "char_dim", "char_filters", "char_width",
                                    "gru_dim", "linear_dim", "dropout_rate", "max_span_len",
                                    "noanswer_hidden", "separator"},
                                "model");
    ModelConfig m;
    detail::get_if(j, "word_dim", m.word_dim);
    detail::get_if(j, "char_dim", m.char_dim);
    detail::get_if(j, "char_filters", m.char_filters);
    detail::get_if(j, "char_width", m.char_width);
    detail::get_if(j, "gru_dim", m.gru_dim);
    detail::get_if(j, "linear_dim", m.linear_dim);
    detail::get_if(j, "dropout_rate", m.dropout_rate);
    detail::get_if(j, "max_span_len", m.max_span_len);
    detail::get_if(j, "noanswer_hidden", m.noanswer_hidden);
    detail::get_if(j, "separator", m.separator);
    m.validate();
    return m;
}

inline json to_json(const SamplingPlan& p) {
    return json{{"pool_size", p.pool_size},
                {"draws_per_epoch", p.draws_per_epoch},
                {"oversample_factor", p.oversample_factor},
                {"require_answer", p.require_answer}};
}

inline SamplingPlan sampling_plan_from_json(const json& j) {
    detail::reject_unknown_keys(
        j, {"pool_size", "draws_per_epoch", "oversample_factor", "require_answer"}, "sampling");
    SamplingPlan p;
    detail::get_if(j, "pool_size", p.pool_size);
    detail::get_if(j, "draws_per_epoch", p.draws_per_epoch);
    detail::get_if(j, "oversample_factor", p.oversample_factor);
    detail::get_if(j, "require_answer", p.require_answer);
    p.validate();
    return p;
}

struct SyntheticSpec {
    int vocabulary_size = 600;
    int documents_per_question = 1;
    int paragraphs_per_document = 8;
    int paragraph_min_len = 14;
    int paragraph_max_len = 30;
    double distractor_rate = 0.5;
    int train_questions = 200;
    int test_questions = 100;
    std::uint64_t seed = 13;

    void validate() const {
        if (vocabulary_size < 50 || documents_per_question < 1 || paragraphs_per_document < 1 ||
            paragraph_min_len < 6 || paragraph_max_len < paragraph_min_len ||
            train_questions < 1 || test_questions < 0) {
            throw std::invalid_argument("SyntheticSpec: invalid sizes");
        }
        if (distractor_rate < 0.0 || distractor_rate > 1.0) {
            throw std::invalid_argument("SyntheticSpec: distractor_rate must be in [0,1]");
        }
    }
};

inline json to_json(const SyntheticSpec& s) {
    return json{{"vocabulary_size", s.vocabulary_size},
                {"documents_per_question", s.documents_per_question},
                {"paragraphs_per_document", s.paragraphs_per_document},
                {"paragraph_min_len", s.paragraph_min_len},
                {"paragraph_max_len", s.paragraph_max_len},
                {"distractor_rate", s.distractor_rate},
                {"train_questions", s.train_questions},
                {"test_questions", s.test_questions},
                {"seed", s.seed}};
}

inline SyntheticSpec synthetic_spec_from_json(const json& j) {
    detail::reject_unknown_keys(j,
                                {"vocabulary_size", "documents_per_question",
                                 "paragraphs_per_document", "paragraph_min_len",
                                 "paragraph_max_len", "distractor_rate", "train_questions",
                                 "test_questions", "seed"},
                                "synth");
    SyntheticSpec s;
    detail::get_if(j, "vocabulary_size", s.vocabulary_size);
    detail::get_if(j, "documents_per_question", s.documents_per_question);
    detail::get_if(j, "paragraphs_per_document", s.paragraphs_per_document);
    detail::get_if(j, "paragraph_min_len", s.paragraph_min_len);
    detail::get_if(j, "paragraph_max_len", s.paragraph_max_len);
    detail::get_if(j, "distractor_rate", s.distractor_rate);
    detail::get_if(j, "train_questions", s.train_questions);
    detail::get_if(j, "test_questions", s.test_questions);
    detail::get_if(j, "seed", s.seed);
    s.validate();
    return s;
}

struct DataPaths {
    std::string docs;
    std::string questions;
    std::string eval_questions;
    std::string vectors;
    std::string ranker;  // optional: use the linear ranker for pools
    std::string train;   // preprocessed training set
    std::string eval;    // preprocessed eval set
};

inline json to_json(const DataPaths& d) {
    return json{{"docs", d.docs},       {"questions", d.questions},
                {"eval_questions", d.eval_questions}, {"vectors", d.vectors},
                {"ranker", d.ranker},   {"train", d.train},
                {"eval", d.eval}};
}

inline DataPaths data_paths_from_json(const json& j) {
    detail::reject_unknown_keys(
        j, {"docs", "questions", "eval_questions", "vectors", "ranker", "train", "eval"}, "data");
    DataPaths d;
    detail::get_if(j, "docs", d.docs);
    detail::get_if(j, "questions", d.questions);
    detail::get_if(j, "eval_questions", d.eval_questions);
    detail::get_if(j, "vectors", d.vectors);
    detail::get_if(j, "ranker", d.ranker);
    detail::get_if(j, "train", d.train);
    detail::get_if(j, "eval", d.eval);
    return d;
}

struct RunConfig {
    std::string mode = "shared-norm";
    int epochs = 0;  // required by the train command
    std::uint64_t seed = 1;
    int batch_size = 15;
    int k_max = 8;
    int workers = 1;
    int merge_target = 400;
    double clip_norm = 5.0;
    double ema_decay = 0.999;
    std::string out_dir = "out";
    DataPaths data;
    ModelConfig model;
    SamplingPlan sampling;
    SyntheticSpec synth;

    TrainMode train_mode() const { return parse_mode(mode); }

    void validate() const {
        parse_mode(mode);
        if (batch_size < 1 || k_max < 1 || workers < 1 || merge_target < 1) {
            throw std::invalid_argument("config: batch_size, k_max, workers, merge_target must be >= 1");
        }
        if (ema_decay < 0.0 || ema_decay >= 1.0) {
            throw std::invalid_argument("config: ema_decay must be in [0,1)");
        }
        model.validate();
        sampling.validate();
        synth.validate();
    }
};

inline json to_json(const RunConfig& c) {
    return json{{"mode", c.mode},
                {"epochs", c.epochs},
                {"seed", c.seed},
                {"batch_size", c.batch_size},
                {"k_max", c.k_max},
                {"workers", c.workers},
                {"merge_target", c.merge_target},
                {"clip_norm", c.clip_norm},
                {"ema_decay", c.ema_decay},
                {"out_dir", c.out_dir},
                {"data", to_json(c.data)},
                {"model", to_json(c.model)},
                {"sampling", to_json(c.sampling)},
                {"synth", to_json(c.synth)}};
}

inline RunConfig run_config_from_json(const json& j) {
    detail::reject_unknown_keys(j,
                                {"mode", "epochs", "seed", "batch_size", "k_max", "workers",
                                 "merge_target", "clip_norm", "ema_decay", "out_dir", "data",
                                 "model", "sampling", "synth"},
                                "config");
    RunConfig c;
    detail::get_if(j, "mode", c.mode);
    detail::get_if(j, "epochs", c.epochs);
    detail::get_if(j, "seed", c.seed);
    detail::get_if(j, "batch_size", c.batch_size);
    detail::get_if(j, "k_max", c.k_max);
    detail::get_if(j, "workers", c.workers);
    detail::get_if(j, "merge_target", c.merge_target);
    detail::get_if(j, "clip_norm", c.clip_norm);
    detail::get_if(j, "ema_decay", c.ema_decay);
    detail::get_if(j, "out_dir", c.out_dir);
    if (j.contains("data")) c.data = data_paths_from_json(j.at("data"));
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
    if (j.contains("sampling")) c.sampling = sampling_plan_from_json(j.at("sampling"));
    if (j.contains("synth")) c.synth = synthetic_spec_from_json(j.at("synth"));
    c.validate();
    return c;
}

}  // namespace docqa
