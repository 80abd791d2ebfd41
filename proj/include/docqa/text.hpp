#pragma once

// Tokenization, answer-text normalization, distant-supervision span
// labeling and the EM/F1 metrics used for evaluation.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace docqa {

struct TokenizedText {
    std::vector<std::string> tokens;
    // [start, end) byte offsets into raw; raw.substr(start, end-start) == token
    std::vector<std::pair<std::size_t, std::size_t>> char_spans;
    std::string raw;

    std::size_t size() const { return tokens.size(); }

    // Raw text covered by inclusive token span [i, j].
    std::string span_text(std::size_t i, std::size_t j) const {
        std::size_t a = char_spans[i].first;
        std::size_t b = char_spans[j].second;
        return raw.substr(a, b - a);
    }
};

struct AnswerSpans {
    std::vector<std::pair<int, int>> spans;  // inclusive (start_token, end_token)
    std::vector<std::string> answer_texts;

    bool empty() const { return spans.empty(); }
};

namespace detail {

inline bool is_punct(char c) {
    return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

inline bool is_space(char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
}

}  // namespace detail

// Whitespace split, then leading/trailing punctuation characters become
// their own tokens. Internal punctuation ("12th/13th") is kept. Byte
// offsets into the input are recorded per token.
inline TokenizedText tokenize(std::string_view raw) {
    TokenizedText out;
    out.raw.assign(raw);
    std::size_t i = 0;
    const std::size_t n = raw.size();
    auto emit = [&](std::size_t a, std::size_t b) {
        out.tokens.emplace_back(raw.substr(a, b - a));
        out.char_spans.emplace_back(a, b);
    };
    while (i < n) {
        while (i < n && detail::is_space(raw[i])) ++i;
        if (i >= n) break;
        std::size_t j = i;
        while (j < n && !detail::is_space(raw[j])) ++j;
        // chunk [i, j): peel punctuation off both ends
        std::size_t a = i, b = j;
        while (a < b && detail::is_punct(raw[a])) ++a;
        while (b > a && detail::is_punct(raw[b - 1])) --b;
        for (std::size_t k = i; k < a; ++k) emit(k, k + 1);
        if (a < b) emit(a, b);
        for (std::size_t k = b; k < j; ++k) emit(k, k + 1);
        i = j;
    }
    return out;
}

// Lowercase, strip punctuation characters, drop the articles a/an/the,
// collapse whitespace. Mirrors the normalization applied by the official
// SQuAD evaluation script (ASCII punctuation).
inline std::string normalize_answer(std::string_view text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    for (char c : text) {
        if (detail::is_punct(c)) continue;
        cleaned.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    std::string out;
    std::size_t i = 0;
    while (i < cleaned.size()) {
        while (i < cleaned.size() && detail::is_space(cleaned[i])) ++i;
        if (i >= cleaned.size()) break;
        std::size_t j = i;
        while (j < cleaned.size() && !detail::is_space(cleaned[j])) ++j;
        std::string_view word(cleaned.data() + i, j - i);
        if (word != "a" && word != "an" && word != "the") {
            if (!out.empty()) out.push_back(' ');
            out.append(word);
        }
        i = j;
    }
    return out;
}

inline std::vector<std::string> normalized_tokens(std::string_view text) {
    std::vector<std::string> toks;
    std::string norm = normalize_answer(text);
    std::size_t i = 0;
    while (i < norm.size()) {
        std::size_t j = norm.find(' ', i);
        if (j == std::string::npos) j = norm.size();
        toks.emplace_back(norm.substr(i, j - i));
        i = j + 1;
    }
    return toks;
}

// Every token span (up to max_span_len tokens) whose normalized text equals
// the normalized form of any answer. An empty result means the paragraph
// carries no label (delta = 0 downstream).
inline AnswerSpans find_answer_spans(const TokenizedText& context,
                                     const std::vector<std::string>& answers,
                                     int max_span_len = 8) {
    AnswerSpans out;
    out.answer_texts = answers;
    std::vector<std::string> targets;
    targets.reserve(answers.size());
    for (const auto& a : answers) targets.push_back(normalize_answer(a));
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
    if (targets.empty()) return out;

    const int n = static_cast<int>(context.size());
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n && j - i + 1 <= max_span_len; ++j) {
            std::string norm = normalize_answer(context.span_text(i, j));
            if (std::binary_search(targets.begin(), targets.end(), norm)) {
                out.spans.emplace_back(i, j);
            }
        }
    }
    std::sort(out.spans.begin(), out.spans.end());
    out.spans.erase(std::unique(out.spans.begin(), out.spans.end()), out.spans.end());
    return out;
}

// 1 iff the normalized prediction equals the normalized form of any gold.
inline int em_score(std::string_view prediction, const std::vector<std::string>& golds) {
    std::string p = normalize_answer(prediction);
    for (const auto& g : golds) {
        if (p == normalize_answer(g)) return 1;
    }
    return 0;
}

// Max over golds of token-bag F1 on normalized tokens.
inline double f1_score(std::string_view prediction, const std::vector<std::string>& golds) {
    std::vector<std::string> ptoks = normalized_tokens(prediction);
    double best = 0.0;
    for (const auto& g : golds) {
        std::vector<std::string> gtoks = normalized_tokens(g);
        if (ptoks.empty() && gtoks.empty()) {
            best = std::max(best, 1.0);
            continue;
        }
        if (ptoks.empty() || gtoks.empty()) continue;
        std::unordered_map<std::string, int> counts;
        for (const auto& t : gtoks) ++counts[t];
        int common = 0;
        for (const auto& t : ptoks) {
            auto it = counts.find(t);
            if (it != counts.end() && it->second > 0) {
                --it->second;
                ++common;
            }
        }
        if (common == 0) continue;
        double precision = static_cast<double>(common) / static_cast<double>(ptoks.size());
        double recall = static_cast<double>(common) / static_cast<double>(gtoks.size());
        best = std::max(best, 2.0 * precision * recall / (precision + recall));
    }
    return best;
}

}  // namespace docqa
