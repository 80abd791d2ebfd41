#pragma once

// Document/paragraph data model: merging small paragraphs into groups with
// separator tokens, document-local TF-IDF ranking, and the five-feature
// linear paragraph ranker.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "docqa/text.hpp"

namespace docqa {

inline constexpr const char* kDefaultSeparator = "<sep>";

struct Document {
    std::string doc_id;
    std::vector<TokenizedText> paragraphs;
};

// A run of merged paragraphs (or one chunk of an oversized paragraph).
// `doc_order` is the group's position in the question's original group
// list and is the tie-break key everywhere.
struct ParagraphGroup {
    std::string source_doc;
    TokenizedText text;  // merged tokens, separators included
    AnswerSpans answer_spans;
    bool has_answer = false;
    int rank = -1;
    double tfidf_distance = 1.0;
    bool is_first = false;
    int tokens_before = 0;
    int first_paragraph_index = 0;
    int doc_order = 0;

    int token_count() const { return static_cast<int>(text.size()); }
};

struct RankerFeatures {
    double neg_tfidf_distance = 0.0;
    double is_first = 0.0;
    double tokens_before = 0.0;
    double q_matches_ci = 0.0;
    double q_matches_cs = 0.0;

    std::array<double, 5> to_array() const {
        return {neg_tfidf_distance, is_first, tokens_before, q_matches_ci, q_matches_cs};
    }
};

struct LinearRanker {
    std::array<double, 5> weights = {0, 0, 0, 0, 0};
    double bias = 0.0;

    double score(const RankerFeatures& f) const {
        auto x = f.to_array();
        double s = bias;
        for (std::size_t i = 0; i < 5; ++i) s += weights[i] * x[i];
        return s;
    }
};

namespace detail {

inline TokenizedText slice_tokens(const TokenizedText& t, int t0, int t1) {
    TokenizedText out;
    std::size_t base = t.char_spans[t0].first;
    std::size_t end = t.char_spans[t1 - 1].second;
    out.raw = t.raw.substr(base, end - base);
    out.tokens.assign(t.tokens.begin() + t0, t.tokens.begin() + t1);
    for (int i = t0; i < t1; ++i) {
        out.char_spans.emplace_back(t.char_spans[i].first - base, t.char_spans[i].second - base);
    }
    return out;
}

inline void append_with_separator(TokenizedText& dst, const TokenizedText& src,
                                  const std::string& sep) {
    if (dst.tokens.empty()) {
        dst = src;
        return;
    }
    dst.raw.push_back(' ');
    std::size_t sep_start = dst.raw.size();
    dst.raw += sep;
    dst.tokens.push_back(sep);
    dst.char_spans.emplace_back(sep_start, dst.raw.size());
    dst.raw.push_back(' ');
    std::size_t base = dst.raw.size();
    dst.raw += src.raw;
    for (std::size_t i = 0; i < src.tokens.size(); ++i) {
        dst.tokens.push_back(src.tokens[i]);
        dst.char_spans.emplace_back(base + src.char_spans[i].first,
                                    base + src.char_spans[i].second);
    }
}

}  // namespace detail

// Greedy left-to-right packing of paragraphs into groups of at most
// `target` tokens, one separator token between merged paragraphs. A
// paragraph longer than the target becomes standalone chunks of at most
// `target` tokens.
inline std::vector<ParagraphGroup> merge_paragraphs(const Document& doc, int target,
                                                    const std::string& separator = kDefaultSeparator) {
    if (target < 1) throw std::invalid_argument("merge_paragraphs: target must be >= 1");
    std::vector<ParagraphGroup> groups;
    ParagraphGroup cur;
    bool cur_open = false;

    auto flush = [&]() {
        if (cur_open && !cur.text.tokens.empty()) groups.push_back(std::move(cur));
        cur = ParagraphGroup{};
        cur_open = false;
    };

    int tokens_seen = 0;
    for (int pi = 0; pi < static_cast<int>(doc.paragraphs.size()); ++pi) {
        const TokenizedText& p = doc.paragraphs[pi];
        int n = static_cast<int>(p.size());
        if (n == 0) continue;
        if (n > target) {
            flush();
            for (int off = 0; off < n; off += target) {
                int hi = std::min(n, off + target);
                ParagraphGroup g;
                g.source_doc = doc.doc_id;
                g.text = detail::slice_tokens(p, off, hi);
                g.is_first = (pi == 0 && off == 0);
                g.tokens_before = tokens_seen + off;
                g.first_paragraph_index = pi;
                groups.push_back(std::move(g));
            }
        } else {
            int cost = cur_open ? cur.token_count() + 1 + n : n;
            if (cur_open && cost > target) flush();
            if (!cur_open) {
                cur.source_doc = doc.doc_id;
                cur.is_first = (pi == 0);
                cur.tokens_before = tokens_seen;
                cur.first_paragraph_index = pi;
                cur_open = true;
            }
            detail::append_with_separator(cur.text, p, separator);
        }
        tokens_seen += n;
    }
    flush();
    return groups;
}

// Labels answer spans on each group (distant supervision) and sets delta.
inline void label_groups(std::vector<ParagraphGroup>& groups,
                         const std::vector<std::string>& answers, int max_span_len = 8) {
    for (auto& g : groups) {
        g.answer_spans = find_answer_spans(g.text, answers, max_span_len);
        g.has_answer = !g.answer_spans.empty();
    }
}

namespace detail {

inline std::map<std::string, int> lower_counts(const std::vector<std::string>& tokens) {
    std::map<std::string, int> counts;
    for (const auto& t : tokens) {
        std::string low;
        low.reserve(t.size());
        for (char c : t) low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        ++counts[low];
    }
    return counts;
}

}  // namespace detail

// Annotates each group with the TF-IDF cosine distance to the question and
// stably sorts ascending. Document frequencies use only the given groups
// (tf = raw count of lowercased tokens, idf = ln((1+N)/(1+df)) + 1). An
// all-zero vector gets distance 1.
inline std::vector<ParagraphGroup> tfidf_rank(const TokenizedText& question,
                                              std::vector<ParagraphGroup> groups) {
    if (groups.empty()) throw std::invalid_argument("tfidf_rank: no groups");
    const int n_groups = static_cast<int>(groups.size());

    std::vector<std::map<std::string, int>> tfs;
    tfs.reserve(groups.size());
    std::map<std::string, int> df;
    for (const auto& g : groups) {
        tfs.push_back(detail::lower_counts(g.text.tokens));
        for (const auto& [term, _] : tfs.back()) ++df[term];
    }
    auto idf = [&](const std::string& term) {
        auto it = df.find(term);
        int d = it == df.end() ? 0 : it->second;
        return std::log((1.0 + n_groups) / (1.0 + d)) + 1.0;
    };

    std::map<std::string, int> qtf = detail::lower_counts(question.tokens);
    double qnorm = 0.0;
    for (const auto& [term, tf] : qtf) {
        double w = tf * idf(term);
        qnorm += w * w;
    }
    qnorm = std::sqrt(qnorm);

    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        double gnorm = 0.0, dot = 0.0;
        for (const auto& [term, tf] : tfs[gi]) {
            double w = tf * idf(term);
            gnorm += w * w;
            auto qit = qtf.find(term);
            if (qit != qtf.end()) dot += w * qit->second * idf(term);
        }
        gnorm = std::sqrt(gnorm);
        groups[gi].tfidf_distance =
            (qnorm == 0.0 || gnorm == 0.0) ? 1.0 : 1.0 - dot / (qnorm * gnorm);
        groups[gi].doc_order = static_cast<int>(gi);
    }
    std::stable_sort(groups.begin(), groups.end(),
                     [](const ParagraphGroup& a, const ParagraphGroup& b) {
                         return a.tfidf_distance < b.tfidf_distance;
                     });
    for (std::size_t i = 0; i < groups.size(); ++i) groups[i].rank = static_cast<int>(i);
    return groups;
}

// The five ranker features. Match counts are over paragraph tokens:
// a token counts once per occurrence if it equals any question word
// (case-insensitively / exactly).
inline RankerFeatures featurize(const TokenizedText& question, const ParagraphGroup& group) {
    RankerFeatures f;
    f.neg_tfidf_distance = -group.tfidf_distance;
    f.is_first = group.is_first ? 1.0 : 0.0;
    f.tokens_before = static_cast<double>(group.tokens_before);

    std::set<std::string> q_exact(question.tokens.begin(), question.tokens.end());
    std::set<std::string> q_lower;
    for (const auto& [term, _] : detail::lower_counts(question.tokens)) q_lower.insert(term);

    int ci = 0, cs = 0;
    for (const auto& tok : group.text.tokens) {
        std::string low;
        for (char c : tok) low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        if (q_lower.count(low)) ++ci;
        if (q_exact.count(tok)) ++cs;
    }
    f.q_matches_ci = ci;
    f.q_matches_cs = cs;
    return f;
}

// Logistic regression on (features, contains-an-answer) pairs, full-batch
// gradient descent on internally standardized features; weights are
// unfolded back to the raw feature scale.
inline LinearRanker train_linear_ranker(
    const std::vector<std::pair<RankerFeatures, bool>>& examples, int max_epochs = 1000,
    double lr = 0.5, double tol = 1e-6) {
    int pos = 0, neg = 0;
    for (const auto& [f, y] : examples) (y ? pos : neg)++;
    if (pos == 0 || neg == 0) {
        throw std::invalid_argument(
            "train_linear_ranker: need both positive and negative examples, got " +
            std::to_string(pos) + " positive / " + std::to_string(neg) + " negative");
    }
    const std::size_t n = examples.size();

    std::array<double, 5> mean{}, stdev{};
    for (const auto& [f, y] : examples) {
        auto x = f.to_array();
        for (int k = 0; k < 5; ++k) mean[k] += x[k];
    }
    for (int k = 0; k < 5; ++k) mean[k] /= static_cast<double>(n);
    for (const auto& [f, y] : examples) {
        auto x = f.to_array();
        for (int k = 0; k < 5; ++k) stdev[k] += (x[k] - mean[k]) * (x[k] - mean[k]);
    }
    for (int k = 0; k < 5; ++k) {
        stdev[k] = std::sqrt(stdev[k] / static_cast<double>(n));
        if (stdev[k] < 1e-12) stdev[k] = 1.0;
    }

    std::array<double, 5> w{};
    double b = 0.0;
    double prev_loss = std::numeric_limits<double>::infinity();
    for (int epoch = 0; epoch < max_epochs; ++epoch) {
        std::array<double, 5> gw{};
        double gb = 0.0, loss = 0.0;
        for (const auto& [f, y] : examples) {
            auto raw = f.to_array();
            std::array<double, 5> x;
            for (int k = 0; k < 5; ++k) x[k] = (raw[k] - mean[k]) / stdev[k];
            double z = b;
            for (int k = 0; k < 5; ++k) z += w[k] * x[k];
            double t = y ? 1.0 : 0.0;
            double p = 1.0 / (1.0 + std::exp(-z));
            loss += (z > 0 ? z : 0.0) + std::log1p(std::exp(-std::abs(z))) - t * z;
            double d = p - t;
            for (int k = 0; k < 5; ++k) gw[k] += d * x[k];
            gb += d;
        }
        loss /= static_cast<double>(n);
        for (int k = 0; k < 5; ++k) w[k] -= lr * gw[k] / static_cast<double>(n);
        b -= lr * gb / static_cast<double>(n);
        if (std::abs(prev_loss - loss) < tol) break;
        prev_loss = loss;
    }

    LinearRanker out;
    out.bias = b;
    for (int k = 0; k < 5; ++k) {
        out.weights[k] = w[k] / stdev[k];
        out.bias -= w[k] * mean[k] / stdev[k];
    }
    return out;
}

// Stable descending sort by ranker score, truncated to k.
inline std::vector<ParagraphGroup> rank_linear(const LinearRanker& ranker,
                                               const TokenizedText& question,
                                               std::vector<ParagraphGroup> groups, int k) {
    if (k < 1) throw std::invalid_argument("rank_linear: k must be >= 1");
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) {
        scored.emplace_back(ranker.score(featurize(question, groups[i])), i);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.first > b.first;
    });
    std::vector<ParagraphGroup> out;
    out.reserve(std::min<std::size_t>(groups.size(), static_cast<std::size_t>(k)));
    for (const auto& [score, idx] : scored) {
        if (static_cast<int>(out.size()) >= k) break;
        out.push_back(groups[idx]);
        out.back().rank = static_cast<int>(out.size()) - 1;
    }
    return out;
}

}  // namespace docqa
