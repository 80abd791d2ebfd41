#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "docqa/config.hpp"
#include "docqa/jsonl.hpp"
#include "docqa/synth.hpp"

using namespace docqa;
namespace fs = std::filesystem;

namespace {

SyntheticSpec small_spec() {
    SyntheticSpec s;
    s.vocabulary_size = 300;
    s.paragraphs_per_document = 6;
    s.paragraph_min_len = 12;
    s.paragraph_max_len = 20;
    s.distractor_rate = 0.5;
    s.train_questions = 40;
    s.test_questions = 10;
    s.seed = 99;
    return s;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("synthetic corpus generation is deterministic") {
    auto a = generate_corpus(small_spec());
    auto b = generate_corpus(small_spec());
    REQUIRE(a.documents.size() == b.documents.size());
    for (std::size_t i = 0; i < a.documents.size(); ++i) {
        CHECK(a.documents[i] == b.documents[i]);
    }
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].question == b.train[i].question);
        CHECK(a.train[i].answers == b.train[i].answers);
    }

    fs::path dir1 = fs::temp_directory_path() / "docqa_synth_a";
    fs::path dir2 = fs::temp_directory_path() / "docqa_synth_b";
    write_corpus_files(a, dir1.string());
    write_corpus_files(b, dir2.string());
    write_word_vectors((dir1 / "vectors.txt").string(), a, 16, small_spec().seed);
    write_word_vectors((dir2 / "vectors.txt").string(), b, 16, small_spec().seed);
    for (const char* name : {"docs.jsonl", "train_questions.jsonl", "test_questions.jsonl",
                             "vectors.txt"}) {
        CHECK(slurp((dir1 / name).string()) == slurp((dir2 / name).string()));
    }
    fs::remove_all(dir1);
    fs::remove_all(dir2);
}

TEST_CASE("zero distractor rate leaves no category lookalikes outside answers") {
    SyntheticSpec spec = small_spec();
    spec.distractor_rate = 0.0;
    auto corpus = generate_corpus(spec);
    std::map<std::string, std::vector<std::string>> docs(corpus.documents.begin(),
                                                         corpus.documents.end());
    for (const auto& q : corpus.train) {
        for (const auto& doc_id : q.doc_ids) {
            for (const auto& par : docs.at(doc_id)) {
                bool is_answer_par = par.find(" " + q.answers[0] + " ") != std::string::npos ||
                                     par.rfind(q.answers[0] + " ", 0) == 0 ||
                                     (par.size() >= q.answers[0].size() &&
                                      par.compare(par.size() - q.answers[0].size(),
                                                  q.answers[0].size(), q.answers[0]) == 0);
                for (const auto& tok : tokenize(par).tokens) {
                    if (corpus.entity_category.count(tok)) {
                        CHECK(is_answer_par);
                        CHECK(tok == q.answers[0]);
                    }
                }
            }
        }
    }
}

TEST_CASE("each question has exactly one supporting paragraph") {
    auto corpus = generate_corpus(small_spec());
    std::map<std::string, std::vector<std::string>> docs(corpus.documents.begin(),
                                                         corpus.documents.end());
    for (const auto& q : corpus.train) {
        int with_answer = 0;
        for (const auto& doc_id : q.doc_ids) {
            for (const auto& par : docs.at(doc_id)) {
                auto spans = find_answer_spans(tokenize(par), q.answers);
                if (!spans.empty()) ++with_answer;
            }
        }
        CHECK(with_answer == 1);
    }
}

TEST_CASE("answer paragraphs rank inside the TF-IDF top four") {
    auto corpus = generate_corpus(small_spec());
    std::vector<Document> docs;
    for (const auto& [doc_id, pars] : corpus.documents) {
        Document d;
        d.doc_id = doc_id;
        for (const auto& p : pars) d.paragraphs.push_back(tokenize(p));
        docs.push_back(std::move(d));
    }
    std::vector<QuestionSpec> qs;
    for (const auto& q : corpus.train) {
        qs.push_back(QuestionSpec{q.q_id, q.question, q.doc_ids, q.answers});
    }
    Dataset data = preprocess(docs, qs, /*merge_target=*/24, /*max_span_len=*/8);
    int in_top4 = 0;
    for (const auto& q : data) {
        for (const auto& g : q.groups) {
            if (g.rank < 4 && g.has_answer) {
                ++in_top4;
                break;
            }
        }
    }
    CHECK(in_top4 >= static_cast<int>(data.size() * 95) / 100);
}

TEST_CASE("config files reject unknown keys and bad values") {
    json good = to_json(RunConfig{});
    CHECK_NOTHROW(run_config_from_json(good));

    json bad = good;
    bad["learning_rate"] = 0.1;
    CHECK_THROWS_WITH(run_config_from_json(bad),
                      Catch::Matchers::ContainsSubstring("unknown key"));

    json nested = good;
    nested["model"]["hidden_size"] = 3;
    CHECK_THROWS_WITH(run_config_from_json(nested),
                      Catch::Matchers::ContainsSubstring("hidden_size"));

    json bad_mode = good;
    bad_mode["mode"] = "fancy";
    CHECK_THROWS_AS(run_config_from_json(bad_mode), std::invalid_argument);

    json bad_rate = good;
    bad_rate["model"]["dropout_rate"] = 1.5;
    CHECK_THROWS_AS(run_config_from_json(bad_rate), std::invalid_argument);

    // round trip preserves every field
    RunConfig cfg;
    cfg.mode = "merge";
    cfg.epochs = 12;
    cfg.seed = 42;
    cfg.model.gru_dim = 17;
    cfg.sampling.pool_size = 16;
    cfg.synth.distractor_rate = 0.25;
    RunConfig back = run_config_from_json(to_json(cfg));
    CHECK(back.mode == "merge");
    CHECK(back.epochs == 12);
    CHECK(back.model.gru_dim == 17);
    CHECK(back.sampling.pool_size == 16);
    CHECK(back.synth.distractor_rate == 0.25);
}

TEST_CASE("dataset and prediction files round-trip losslessly") {
    auto corpus = generate_corpus(small_spec());
    std::vector<Document> docs;
    for (const auto& [doc_id, pars] : corpus.documents) {
        Document d;
        d.doc_id = doc_id;
        for (const auto& p : pars) d.paragraphs.push_back(tokenize(p));
        docs.push_back(std::move(d));
        if (docs.size() == 5) break;
    }
    std::vector<QuestionSpec> qs;
    for (const auto& q : corpus.train) {
        if (qs.size() == 5) break;
        qs.push_back(QuestionSpec{q.q_id, q.question, {q.doc_ids[0]}, q.answers});
    }
    Dataset data = preprocess(docs, qs, 24, 8);

    fs::path tmp = fs::temp_directory_path() / "docqa_roundtrip";
    fs::create_directories(tmp);
    std::string dpath = (tmp / "data.jsonl").string();
    write_dataset(dpath, data);
    Dataset back = read_dataset(dpath);
    REQUIRE(back.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(back[i].q_id == data[i].q_id);
        CHECK(back[i].question.tokens == data[i].question.tokens);
        CHECK(back[i].answers == data[i].answers);
        REQUIRE(back[i].groups.size() == data[i].groups.size());
        for (std::size_t g = 0; g < data[i].groups.size(); ++g) {
            CHECK(back[i].groups[g].text.tokens == data[i].groups[g].text.tokens);
            CHECK(back[i].groups[g].text.raw == data[i].groups[g].text.raw);
            CHECK(back[i].groups[g].answer_spans.spans == data[i].groups[g].answer_spans.spans);
            CHECK(back[i].groups[g].rank == data[i].groups[g].rank);
            CHECK(back[i].groups[g].tfidf_distance == data[i].groups[g].tfidf_distance);
            CHECK(back[i].groups[g].tokens_before == data[i].groups[g].tokens_before);
        }
    }

    std::vector<Prediction> preds;
    Prediction p;
    p.q_id = "q0";
    p.start = 2;
    p.end = 3;
    p.paragraph_id = 1;
    p.confidence = -1.25;
    p.answer_text = "some answer";
    preds.push_back(p);
    std::string ppath = (tmp / "preds.jsonl").string();
    write_predictions(ppath, preds);
    auto preds_back = read_predictions(ppath);
    REQUIRE(preds_back.size() == 1);
    CHECK(preds_back[0].q_id == preds[0].q_id);
    CHECK(preds_back[0].start == preds[0].start);
    CHECK(preds_back[0].end == preds[0].end);
    CHECK(preds_back[0].paragraph_id == preds[0].paragraph_id);
    CHECK(preds_back[0].confidence == preds[0].confidence);
    CHECK(preds_back[0].answer_text == preds[0].answer_text);

    LinearRanker r;
    r.weights = {0.5, -1, 2, 0, 0.25};
    r.bias = -0.125;
    std::string rpath = (tmp / "ranker.json").string();
    write_ranker(rpath, r);
    auto r2 = read_ranker(rpath);
    CHECK(r2.weights == r.weights);
    CHECK(r2.bias == r.bias);
    fs::remove_all(tmp);
}
