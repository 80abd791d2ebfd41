#pragma once

// Synthetic question-answering corpus: templated facts with one supporting
// paragraph per question, distractor paragraphs carrying same-category
// entity lookalikes, and category-structured word vectors so lookalikes
// really do resemble answers in embedding space.

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "docqa/config.hpp"
#include "docqa/rng.hpp"

namespace docqa {

struct SyntheticQuestion {
    std::string q_id;
    std::string question;
    std::vector<std::string> doc_ids;
    std::vector<std::string> answers;
};

struct SyntheticCorpus {
    std::vector<std::pair<std::string, std::vector<std::string>>> documents;  // doc_id -> raw paragraphs
    std::vector<SyntheticQuestion> train;
    std::vector<SyntheticQuestion> test;
    std::vector<std::string> all_words;
    std::map<std::string, int> entity_category;  // entity word -> category
};

namespace detail {

inline std::vector<std::string> make_pseudo_words(int count, std::mt19937_64& rng) {
    static const char* consonants[] = {"b", "d", "f", "g", "k", "l", "m", "n",
                                       "p", "r", "s", "t", "v", "z"};
    static const char* vowels[] = {"a", "e", "i", "o", "u"};
    std::set<std::string> seen;
    std::vector<std::string> words;
    std::uniform_int_distribution<int> cd(0, 13), vd(0, 4), syl(2, 3);
    while (static_cast<int>(words.size()) < count) {
        std::string w;
        int n = syl(rng);
        for (int i = 0; i < n; ++i) {
            w += consonants[cd(rng)];
            w += vowels[vd(rng)];
        }
        if (seen.insert(w).second) words.push_back(w);
    }
    return words;
}

}  // namespace detail

// Deterministic corpus construction. Every question has exactly one
// paragraph (across its documents) containing the supporting fact
// "<subject> <relation> <answer>"; distractor paragraphs hold facts about
// other subjects whose objects come from the answer's category but never
// use the question's relation word; the rest is filler.
inline SyntheticCorpus generate_corpus(const SyntheticSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(mix64(spec.seed));

    const int kCategories = 6;
    const int kRelationsPerCategory = 2;
    const int total_questions = spec.train_questions + spec.test_questions;
    int entities_per_cat = std::max(4, spec.vocabulary_size / 8 / kCategories);
    int n_fillers = std::max(30, spec.vocabulary_size * 3 / 10);
    int n_relations = kCategories * kRelationsPerCategory;
    int n_subjects =
        std::max(total_questions, spec.vocabulary_size - n_fillers - n_relations -
                                      entities_per_cat * kCategories);

    SyntheticCorpus corpus;
    std::vector<std::string> words = detail::make_pseudo_words(
        n_fillers + n_relations + entities_per_cat * kCategories + n_subjects, rng);
    corpus.all_words = words;
    corpus.all_words.push_back("what");

    std::size_t cursor = 0;
    auto take = [&](int n) {
        std::vector<std::string> out(words.begin() + cursor, words.begin() + cursor + n);
        cursor += n;
        return out;
    };
    std::vector<std::string> fillers = take(n_fillers);
    std::vector<std::vector<std::string>> relations(kCategories);
    for (int c = 0; c < kCategories; ++c) relations[c] = take(kRelationsPerCategory);
    std::vector<std::vector<std::string>> entities(kCategories);
    for (int c = 0; c < kCategories; ++c) {
        entities[c] = take(entities_per_cat);
        for (const auto& e : entities[c]) corpus.entity_category[e] = c;
    }
    std::vector<std::string> subjects = take(n_subjects);

    std::uniform_int_distribution<int> cat_d(0, kCategories - 1);
    std::uniform_int_distribution<int> len_d(spec.paragraph_min_len, spec.paragraph_max_len);
    auto filler_word = [&]() { return fillers[rng() % fillers.size()]; };

    auto join = [](const std::vector<std::string>& toks) {
        std::string out;
        for (std::size_t i = 0; i < toks.size(); ++i) {
            if (i) out.push_back(' ');
            out += toks[i];
        }
        return out;
    };

    // Embeds the given segments at random positions inside filler text.
    auto build_paragraph = [&](const std::vector<std::vector<std::string>>& segments) {
        int len = len_d(rng);
        int seg_tokens = 0;
        for (const auto& s : segments) seg_tokens += static_cast<int>(s.size());
        int filler_total = std::max(0, len - seg_tokens);
        std::vector<int> gaps(segments.size() + 1, 0);
        for (int i = 0; i < filler_total; ++i) gaps[rng() % gaps.size()]++;
        std::vector<std::string> toks;
        for (std::size_t s = 0; s <= segments.size(); ++s) {
            for (int i = 0; i < gaps[s]; ++i) toks.push_back(filler_word());
            if (s < segments.size()) toks.insert(toks.end(), segments[s].begin(), segments[s].end());
        }
        return join(toks);
    };

    int subject_cursor = 0;
    auto make_question = [&](const std::string& q_id) {
        int cat = cat_d(rng);
        const std::string& relation = relations[cat][rng() % kRelationsPerCategory];
        const std::string& subject = subjects[subject_cursor % subjects.size()];
        ++subject_cursor;
        const std::string& answer = entities[cat][rng() % entities[cat].size()];

        SyntheticQuestion q;
        q.q_id = q_id;
        q.question = "what " + relation + " " + subject + " ?";
        q.answers = {answer};

        const int n_par = spec.paragraphs_per_document * spec.documents_per_question;
        int n_distractors = static_cast<int>(std::lround(spec.distractor_rate * (n_par - 1)));
        std::vector<std::string> paragraphs;
        paragraphs.push_back(build_paragraph({{subject, relation, answer}}));
        for (int d = 0; d < n_distractors; ++d) {
            auto lookalike_triple = [&]() {
                const std::string& other_subj = subjects[rng() % subjects.size()];
                // same category, never the question's relation word
                std::string other_rel = relations[cat][rng() % kRelationsPerCategory];
                while (other_rel == relation) {
                    other_rel = relations[cat][rng() % kRelationsPerCategory];
                }
                std::string lookalike = entities[cat][rng() % entities[cat].size()];
                while (lookalike == answer) {
                    lookalike = entities[cat][rng() % entities[cat].size()];
                }
                return std::vector<std::string>{other_subj, other_rel, lookalike};
            };
            paragraphs.push_back(build_paragraph({lookalike_triple(), lookalike_triple()}));
        }
        while (static_cast<int>(paragraphs.size()) < n_par) {
            paragraphs.push_back(build_paragraph({}));
        }
        std::shuffle(paragraphs.begin(), paragraphs.end(), rng);

        for (int d = 0; d < spec.documents_per_question; ++d) {
            std::string doc_id = q_id + "_d" + std::to_string(d);
            std::vector<std::string> doc_pars(
                paragraphs.begin() + d * spec.paragraphs_per_document,
                paragraphs.begin() + (d + 1) * spec.paragraphs_per_document);
            corpus.documents.emplace_back(doc_id, std::move(doc_pars));
            q.doc_ids.push_back(std::move(doc_id));
        }
        return q;
    };

    for (int i = 0; i < spec.train_questions; ++i) {
        corpus.train.push_back(make_question("train_" + std::to_string(i)));
    }
    for (int i = 0; i < spec.test_questions; ++i) {
        corpus.test.push_back(make_question("test_" + std::to_string(i)));
    }
    return corpus;
}

// GloVe-format vectors for the synthetic vocabulary. Entities cluster
// around per-category centroids so category membership is visible through
// the frozen embeddings; every other word gets an independent vector.
inline void write_word_vectors(const std::string& path, const SyntheticCorpus& corpus, int dim,
                               std::uint64_t seed) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.precision(6);
    out << std::fixed;

    std::vector<std::vector<double>> centroids;
    int n_cats = 0;
    for (const auto& [word, cat] : corpus.entity_category) n_cats = std::max(n_cats, cat + 1);
    for (int c = 0; c < n_cats; ++c) {
        std::mt19937_64 crng(stream_seed(seed, 0xCA7, c));
        std::uniform_real_distribution<double> dist(-0.5, 0.5);
        std::vector<double> v(dim);
        for (auto& x : v) x = dist(crng);
        centroids.push_back(std::move(v));
    }

    for (const auto& word : corpus.all_words) {
        std::mt19937_64 wrng(stream_seed(seed, hash_string(word)));
        std::uniform_real_distribution<double> dist(-0.5, 0.5);
        std::vector<double> v(dim);
        auto it = corpus.entity_category.find(word);
        if (it != corpus.entity_category.end()) {
            std::uniform_real_distribution<double> noise(-0.15, 0.15);
            for (int j = 0; j < dim; ++j) v[j] = centroids[it->second][j] + noise(wrng);
        } else {
            for (auto& x : v) x = dist(wrng);
        }
        out << word;
        for (double x : v) out << " " << x;
        out << "\n";
    }
}

inline void write_corpus_files(const SyntheticCorpus& corpus, const std::string& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir + "/docs.jsonl");
        if (!out) throw std::runtime_error("cannot write docs.jsonl in " + dir);
        for (const auto& [doc_id, paragraphs] : corpus.documents) {
            out << nlohmann::json{{"doc_id", doc_id}, {"paragraphs", paragraphs}}.dump() << "\n";
        }
    }
    for (const auto& [name, questions] :
         {std::pair{"train_questions.jsonl", &corpus.train},
          std::pair{"test_questions.jsonl", &corpus.test}}) {
        std::ofstream out(dir + "/" + name);
        if (!out) throw std::runtime_error(std::string("cannot write ") + name + " in " + dir);
        for (const auto& q : *questions) {
            out << nlohmann::json{{"q_id", q.q_id},
                                  {"question", q.question},
                                  {"doc_ids", q.doc_ids},
                                  {"answers", q.answers}}
                       .dump()
                << "\n";
        }
    }
}

}  // namespace docqa
