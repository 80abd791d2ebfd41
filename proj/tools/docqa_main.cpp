// docqa command line: synthetic corpus generation, preprocessing, paragraph
// ranking, confidence training, evaluation, EM/F1-vs-k curves and the
// gradient-check suite. Errors leave as one JSON object on stdout with a
// nonzero exit code.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "docqa/docqa.hpp"

namespace fs = std::filesystem;
using namespace docqa;

using Scalar = float;  // training/inference precision; gradcheck runs in double

namespace {

std::string resolve_path(const std::string& path) {
    if (path.empty() || fs::path(path).is_absolute()) return path;
    if (const char* base = std::getenv("DOCQA_DATA_DIR")) {
        fs::path candidate = fs::path(base) / path;
        if (fs::exists(candidate)) return candidate.string();
    }
    return path;
}

RunConfig load_config(const std::string& path) {
    if (path.empty()) return RunConfig{};
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    return run_config_from_json(json::parse(in));
}

struct CommonFlags {
    std::string config_path;
    std::string mode;
    std::string out;
    int epochs = -1;
    int k_max = -1;
    int workers = -1;
    std::int64_t seed = -1;

    void attach(CLI::App* cmd, bool with_train_flags) {
        cmd->add_option("--config", config_path, "run configuration JSON file");
        cmd->add_option("--out", out, "output directory or file");
        cmd->add_option("--workers", workers, "worker thread cap");
        cmd->add_option("--seed", seed, "random seed override");
        cmd->add_option("--k-max", k_max, "paragraph count ceiling for evaluation");
        if (with_train_flags) {
            cmd->add_option("--mode", mode,
                            "training objective: none|sigmoid|merge|no-answer|shared-norm");
            cmd->add_option("--epochs", epochs, "number of training epochs");
        }
    }

    RunConfig merged() const {
        RunConfig cfg = load_config(config_path);
        if (!mode.empty()) cfg.mode = mode;
        if (epochs >= 0) cfg.epochs = epochs;
        if (k_max > 0) cfg.k_max = k_max;
        if (workers > 0) cfg.workers = workers;
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        if (!out.empty()) cfg.out_dir = out;
        cfg.validate();
        return cfg;
    }
};

void emit(const json& j) { std::cout << j.dump() << "\n"; }

// ---------------------------------------------------------------------------

int cmd_synth(const CommonFlags& flags) {
    RunConfig cfg = flags.merged();
    SyntheticCorpus corpus = generate_corpus(cfg.synth);
    fs::create_directories(cfg.out_dir);
    write_corpus_files(corpus, cfg.out_dir);
    std::string vectors_path = cfg.out_dir + "/vectors.txt";
    write_word_vectors(vectors_path, corpus, cfg.model.word_dim, cfg.synth.seed);
    emit(json{{"docs", cfg.out_dir + "/docs.jsonl"},
              {"train_questions", cfg.out_dir + "/train_questions.jsonl"},
              {"test_questions", cfg.out_dir + "/test_questions.jsonl"},
              {"vectors", vectors_path},
              {"documents", corpus.documents.size()},
              {"train", corpus.train.size()},
              {"test", corpus.test.size()}});
    return 0;
}

int cmd_preprocess(const CommonFlags& flags, std::string docs_path, std::string questions_path,
                   std::string out_path) {
    RunConfig cfg = flags.merged();
    if (docs_path.empty()) docs_path = cfg.data.docs;
    if (questions_path.empty()) questions_path = cfg.data.questions;
    if (docs_path.empty() || questions_path.empty() || out_path.empty()) {
        throw std::runtime_error("preprocess needs --docs, --questions and --output");
    }
    auto docs = read_documents(resolve_path(docs_path));
    auto questions = read_questions(resolve_path(questions_path));
    Dataset data = preprocess(docs, questions, cfg.merge_target, cfg.model.max_span_len,
                              cfg.model.separator);
    if (fs::path(out_path).has_parent_path()) {
        fs::create_directories(fs::path(out_path).parent_path());
    }
    write_dataset(out_path, data);
    std::size_t groups = 0, with_answer = 0;
    for (const auto& q : data) {
        groups += q.groups.size();
        for (const auto& g : q.groups) with_answer += g.has_answer ? 1 : 0;
    }
    emit(json{{"output", out_path},
              {"questions", data.size()},
              {"groups", groups},
              {"groups_with_answer", with_answer}});
    return 0;
}

int cmd_rank(const CommonFlags& flags, const std::string& data_path,
             const std::string& ranker_path, const std::string& out_path, bool fit, int k) {
    RunConfig cfg = flags.merged();
    Dataset data = read_dataset(resolve_path(data_path));
    if (fit) {
        std::vector<std::pair<RankerFeatures, bool>> examples;
        for (const auto& q : data) {
            for (const auto& g : q.groups) {
                examples.emplace_back(featurize(q.question, g), g.has_answer);
            }
        }
        LinearRanker ranker = train_linear_ranker(examples);
        write_ranker(out_path, ranker);
        emit(json{{"ranker", out_path},
                  {"examples", examples.size()},
                  {"weights", ranker.weights},
                  {"bias", ranker.bias}});
        return 0;
    }
    LinearRanker ranker = read_ranker(resolve_path(ranker_path));
    if (k <= 0) k = cfg.sampling.pool_size;
    for (auto& q : data) {
        q.groups = rank_linear(ranker, q.question, std::move(q.groups), k);
    }
    write_dataset(out_path, data);
    emit(json{{"output", out_path}, {"questions", data.size()}, {"k", k}});
    return 0;
}

int cmd_train(const CommonFlags& flags, std::string train_path, std::string vectors_path) {
    RunConfig cfg = flags.merged();
    if (cfg.epochs < 1) throw std::runtime_error("train: --epochs is required and must be >= 1");
    if (train_path.empty()) train_path = cfg.data.train;
    if (vectors_path.empty()) vectors_path = cfg.data.vectors;
    if (train_path.empty() || vectors_path.empty()) {
        throw std::runtime_error("train: need preprocessed --data and --vectors");
    }

    Dataset data = read_dataset(resolve_path(train_path));
    auto words = WordVectors<Scalar>::load(resolve_path(vectors_path));
    auto state = TrainState<Scalar>::init(cfg.model, cfg.train_mode(), cfg.seed, cfg.sampling,
                                          cfg.batch_size, cfg.clip_norm, cfg.ema_decay);
    const LinearRanker* ranker = nullptr;
    LinearRanker ranker_storage;
    if (!cfg.data.ranker.empty()) {
        ranker_storage = read_ranker(resolve_path(cfg.data.ranker));
        ranker = &ranker_storage;
    }
    auto tdata = TrainingData<Scalar>::prepare(data, state.plan, ranker);
    if (tdata.items.empty()) throw std::runtime_error("train: every question was dropped");

    fs::create_directories(cfg.out_dir);
    std::ofstream metrics_out(cfg.out_dir + "/metrics.jsonl");
    {
        std::ofstream cfg_out(cfg.out_dir + "/config.json");
        cfg_out << to_json(cfg).dump(2) << "\n";
    }
    for (int e = 0; e < cfg.epochs; ++e) {
        EpochMetrics m = train_epoch(state, tdata, words);
        json line{{"epoch", m.epoch},
                  {"mean_loss", m.mean_loss},
                  {"questions", m.questions_used},
                  {"paragraphs", m.paragraphs_seen},
                  {"dropped", tdata.dropped}};
        metrics_out << line.dump() << "\n";
        std::cerr << "epoch " << m.epoch << " loss " << m.mean_loss << "\n";
    }
    std::string ck_path = cfg.out_dir + "/checkpoint.bin";
    save_checkpoint(ck_path, state);
    emit(json{{"checkpoint", ck_path},
              {"metrics", cfg.out_dir + "/metrics.jsonl"},
              {"epochs", cfg.epochs},
              {"dropped", tdata.dropped},
              {"mode", to_string(state.mode)}});
    return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& ck_path, const std::string& data_path,
             const std::string& vectors_path, std::string out_path, int k, bool no_ema) {
    RunConfig cfg = flags.merged();
    const ModelConfig* expect = flags.config_path.empty() ? nullptr : &cfg.model;
    auto state = load_checkpoint<Scalar>(resolve_path(ck_path), expect);
    Dataset data = read_dataset(resolve_path(data_path));
    auto words = WordVectors<Scalar>::load(
        resolve_path(vectors_path.empty() ? cfg.data.vectors : vectors_path));
    if (k <= 0) k = cfg.k_max;

    if (!no_ema) state.ema.swap(state.params);
    std::vector<Prediction> preds(data.size());
    parallel_for(static_cast<int>(data.size()), cfg.workers, [&](int i) {
        preds[i] = multi_paragraph_answer(data[i], state.params, words, state.mode,
                                          state.params.config.max_span_len, k);
    });
    if (!no_ema) state.ema.swap(state.params);

    if (!out_path.empty()) {
        if (fs::path(out_path).has_parent_path()) {
            fs::create_directories(fs::path(out_path).parent_path());
        }
        write_predictions(out_path, preds);
    }
    std::vector<std::pair<std::string, std::vector<std::string>>> gold;
    for (const auto& q : data) gold.emplace_back(q.q_id, q.answers);
    EvalResult r = evaluate_dataset(preds, gold);
    emit(json{{"em", r.em},
              {"f1", r.f1},
              {"questions", gold.size()},
              {"missing", r.missing},
              {"k", k},
              {"predictions", out_path}});
    return 0;
}

int cmd_curve(const CommonFlags& flags, const std::string& ck_path, const std::string& data_path,
              const std::string& vectors_path, const std::string& out_path, bool no_ema) {
    RunConfig cfg = flags.merged();
    const ModelConfig* expect = flags.config_path.empty() ? nullptr : &cfg.model;
    auto state = load_checkpoint<Scalar>(resolve_path(ck_path), expect);
    Dataset data = read_dataset(resolve_path(data_path));
    auto words = WordVectors<Scalar>::load(
        resolve_path(vectors_path.empty() ? cfg.data.vectors : vectors_path));

    if (!no_ema) state.ema.swap(state.params);
    auto rows = confidence_curve(data, state.params, words, state.mode,
                                 state.params.config.max_span_len, cfg.k_max, cfg.workers);
    if (!no_ema) state.ema.swap(state.params);

    if (!out_path.empty()) write_curve_csv(out_path, rows);
    json jrows = json::array();
    for (const auto& r : rows) jrows.push_back({{"k", r.k}, {"em", r.em}, {"f1", r.f1}});
    emit(json{{"curve", out_path}, {"rows", jrows}});
    return 0;
}

int cmd_gradcheck(int primitive_points, int layer_points, int objective_points,
                  std::int64_t seed) {
    auto reports = run_gradcheck_suite(primitive_points, layer_points, objective_points,
                                       seed < 0 ? 2024 : static_cast<std::uint64_t>(seed));
    bool all_pass = true;
    for (const auto& r : reports) {
        std::cout << (r.pass() ? "PASS" : "FAIL") << " " << r.name << " max_rel_err=" << r.max_err
                  << " tol=" << r.tolerance << " points=" << r.points << "\n";
        all_pass = all_pass && r.pass();
    }
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"document-level question answering pipeline"};
    app.require_subcommand(1);

    CommonFlags synth_flags, pre_flags, rank_flags, train_flags, eval_flags, curve_flags;

    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus and word vectors");
    synth_flags.attach(synth, false);

    auto* pre = app.add_subcommand("preprocess", "tokenize, merge, label and rank paragraphs");
    pre_flags.attach(pre, false);
    std::string pre_docs, pre_questions, pre_out;
    pre->add_option("--docs", pre_docs, "documents JSONL");
    pre->add_option("--questions", pre_questions, "questions JSONL");
    pre->add_option("--output", pre_out, "preprocessed dataset JSONL")->required();

    auto* rank = app.add_subcommand("rank", "fit or apply the five-feature linear ranker");
    rank_flags.attach(rank, false);
    std::string rank_data, rank_ranker, rank_out;
    bool rank_fit = false;
    int rank_k = 0;
    rank->add_option("--data", rank_data, "preprocessed dataset JSONL")->required();
    rank->add_option("--ranker", rank_ranker, "ranker JSON (apply mode)");
    rank->add_option("--output", rank_out, "output file")->required();
    rank->add_flag("--fit", rank_fit, "fit the ranker instead of applying one");
    rank->add_option("--k", rank_k, "keep top-k groups when applying");

    auto* train = app.add_subcommand("train", "train a confidence model");
    train_flags.attach(train, true);
    std::string train_data, train_vectors;
    train->add_option("--data", train_data, "preprocessed training JSONL");
    train->add_option("--vectors", train_vectors, "word vectors file");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint with EM/F1");
    eval_flags.attach(eval, false);
    std::string eval_ck, eval_data, eval_vectors, eval_out;
    int eval_k = 0;
    bool eval_no_ema = false;
    eval->add_option("--checkpoint", eval_ck, "checkpoint file")->required();
    eval->add_option("--data", eval_data, "preprocessed eval JSONL")->required();
    eval->add_option("--vectors", eval_vectors, "word vectors file");
    eval->add_option("--predictions", eval_out, "write predictions JSONL here");
    eval->add_option("--k", eval_k, "paragraphs per question");
    eval->add_flag("--no-ema", eval_no_ema, "evaluate raw weights instead of the moving average");

    auto* curve = app.add_subcommand("curve", "EM/F1 as a function of paragraph count");
    curve_flags.attach(curve, false);
    std::string curve_ck, curve_data, curve_vectors, curve_out;
    bool curve_no_ema = false;
    curve->add_option("--checkpoint", curve_ck, "checkpoint file")->required();
    curve->add_option("--data", curve_data, "preprocessed eval JSONL")->required();
    curve->add_option("--vectors", curve_vectors, "word vectors file");
    curve->add_option("--output", curve_out, "curve CSV path");
    curve->add_flag("--no-ema", curve_no_ema, "evaluate raw weights");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    int gp = 100, gl = 50, go = 50;
    std::int64_t gseed = -1;
    gradcheck->add_option("--points-primitive", gp, "random points per primitive");
    gradcheck->add_option("--points-layer", gl, "random points per layer");
    gradcheck->add_option("--points-objective", go, "random points per objective");
    gradcheck->add_option("--seed", gseed, "suite seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(synth_flags);
        if (pre->parsed()) return cmd_preprocess(pre_flags, pre_docs, pre_questions, pre_out);
        if (rank->parsed())
            return cmd_rank(rank_flags, rank_data, rank_ranker, rank_out, rank_fit, rank_k);
        if (train->parsed()) return cmd_train(train_flags, train_data, train_vectors);
        if (eval->parsed())
            return cmd_eval(eval_flags, eval_ck, eval_data, eval_vectors, eval_out, eval_k,
                            eval_no_ema);
        if (curve->parsed())
            return cmd_curve(curve_flags, curve_ck, curve_data, curve_vectors, curve_out,
                             curve_no_ema);
        if (gradcheck->parsed()) return cmd_gradcheck(gp, gl, go, gseed);
    } catch (const std::exception& e) {
        std::cout << json{{"error", e.what()}}.dump() << "\n";
        return 1;
    }
    return 1;
}
