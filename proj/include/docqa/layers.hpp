#pragma once

// The reading model: word+char embeddings, shared bi-directional GRU,
// bi-directional attention, residual self-attention, boundary prediction
// and the no-answer head. All layers are tape ops, so one backward pass
// covers the whole stack.

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "docqa/autodiff.hpp"
#include "docqa/corpus.hpp"
#include "docqa/rng.hpp"

namespace docqa {

struct ModelConfig {
    int word_dim = 300;
    int char_dim = 20;
    int char_filters = 100;
    int char_width = 5;
    int gru_dim = 100;       // 140 for the large setting
    int linear_dim = 200;    // 280 for the large setting
    double dropout_rate = 0.2;
    int max_span_len = 8;    // 17 for SQuAD-style decoding
    int noanswer_hidden = 80;
    std::string separator = kDefaultSeparator;

    int embed_dim() const { return word_dim + char_filters; }

    void validate() const {
        if (word_dim < 1 || char_dim < 1 || char_filters < 1 || char_width < 1 || gru_dim < 1 ||
            linear_dim < 1 || max_span_len < 1 || noanswer_hidden < 1) {
            throw std::invalid_argument("ModelConfig: all dimensions must be positive");
        }
        if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
            throw std::invalid_argument("ModelConfig: dropout_rate must be in [0,1)");
        }
    }

    bool operator==(const ModelConfig&) const = default;
};

// Per-token start/end scores for one paragraph; z present when the model
// ran with the no-answer head.
template <typename T>
struct ScoreMatrix {
    std::vector<T> start_scores;
    std::vector<T> end_scores;
    std::optional<T> no_answer;

    int size() const { return static_cast<int>(start_scores.size()); }
};

// ---------------------------------------------------------------------------
// word vectors (GloVe-format text file; frozen during training)

template <typename T>
class WordVectors {
public:
    WordVectors() = default;
    explicit WordVectors(int dim) : dim_(dim) {}

    static WordVectors load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open word vectors file: " + path);
        WordVectors wv;
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            std::istringstream ss(line);
            std::string word;
            ss >> word;
            std::vector<T> vec;
            double v;
            while (ss >> v) vec.push_back(static_cast<T>(v));
            if (word.empty() || vec.empty() || (wv.dim_ > 0 && static_cast<int>(vec.size()) != wv.dim_) ||
                !ss.eof()) {
                throw std::runtime_error("malformed word vector line " + std::to_string(line_no) +
                                         " in " + path);
            }
            if (wv.dim_ == 0) wv.dim_ = static_cast<int>(vec.size());
            wv.add(word, vec);
        }
        if (wv.dim_ == 0) throw std::runtime_error("word vectors file is empty: " + path);
        return wv;
    }

    void add(const std::string& word, const std::vector<T>& vec) {
        if (dim_ == 0) dim_ = static_cast<int>(vec.size());
        if (static_cast<int>(vec.size()) != dim_) {
            throw std::invalid_argument("word vector dimension mismatch for \"" + word + "\"");
        }
        if (index_.emplace(word, static_cast<int>(index_.size())).second) {
            rows_.insert(rows_.end(), vec.begin(), vec.end());
        }
    }

    // Exact lookup, then lowercased; nullptr when absent (zero vector).
    const T* find(const std::string& word) const {
        auto it = index_.find(word);
        if (it == index_.end()) {
            std::string low;
            low.reserve(word.size());
            for (char c : word)
                low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
            it = index_.find(low);
            if (it == index_.end()) return nullptr;
        }
        return rows_.data() + static_cast<std::size_t>(it->second) * dim_;
    }

    int dim() const { return dim_; }
    std::size_t size() const { return index_.size(); }

    std::uint64_t checksum() const {
        std::uint64_t h = 1469598103934665603ULL;
        const unsigned char* bytes = reinterpret_cast<const unsigned char*>(rows_.data());
        for (std::size_t i = 0; i < rows_.size() * sizeof(T); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
        return h;
    }

private:
    int dim_ = 0;
    std::unordered_map<std::string, int> index_;
    std::vector<T> rows_;
};

// ---------------------------------------------------------------------------
// parameter blocks

template <typename T>
struct GruDirParams {
    ad::Param<T> W;     // [in x 3g], gate order r|u|c
    ad::Param<T> U_ru;  // [g x 2g]
    ad::Param<T> U_c;   // [g x g]
    ad::Param<T> b;     // [1 x 3g]
};

template <typename T>
struct BiGruParams {
    int in_dim = 0;
    int hidden = 0;
    GruDirParams<T> fwd, bwd;
};

template <typename T>
struct AttentionParams {
    ad::Param<T> w1;     // [d x 1]
    ad::Param<T> w2;     // [d x 1]
    ad::Param<T> w3;     // [1 x d]
    ad::Param<T> lin_W;  // [k*d x linear_dim]
    ad::Param<T> lin_b;  // [1 x linear_dim]
};

template <typename T>
struct EmbeddingParams {
    ad::Param<T> char_table;     // [256 x char_dim]
    ad::Param<T> conv_W;         // [char_width*char_dim x char_filters]
    ad::Param<T> conv_b;         // [1 x char_filters]
    ad::Param<T> sep_embedding;  // [1 x word_dim]; the only trainable word row
};

template <typename T>
struct PredictionParams {
    BiGruParams<T> gru1;   // in: linear_dim
    ad::Param<T> start_W;  // [2g x 1]
    ad::Param<T> start_b;  // [1 x 1]
    BiGruParams<T> gru2;   // in: 2g + linear_dim
    ad::Param<T> end_W;    // [2g x 1]
    ad::Param<T> end_b;    // [1 x 1]
};

template <typename T>
struct NoAnswerParams {
    ad::Param<T> pool_w;  // [linear_dim x 1]
    ad::Param<T> W1;      // [(4g + linear_dim) x hidden]
    ad::Param<T> b1;      // [1 x hidden]
    ad::Param<T> W2;      // [hidden x 1]
    ad::Param<T> b2;      // [1 x 1]
};

namespace detail {

template <typename T>
ad::Tensor<T> uniform_init(int r, int c, double limit, std::mt19937_64& rng) {
    ad::Tensor<T> t(r, c);
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : t.data) v = static_cast<T>(dist(rng));
    return t;
}

template <typename T>
ad::Tensor<T> glorot_init(int r, int c, std::mt19937_64& rng) {
    double limit = std::sqrt(6.0 / (r + c));
    return uniform_init<T>(r, c, limit, rng);
}

template <typename T>
GruDirParams<T> init_gru_dir(const std::string& name, int in, int g, std::mt19937_64& rng) {
    return GruDirParams<T>{
        ad::Param<T>(name + ".W", glorot_init<T>(in, 3 * g, rng)),
        ad::Param<T>(name + ".U_ru", glorot_init<T>(g, 2 * g, rng)),
        ad::Param<T>(name + ".U_c", glorot_init<T>(g, g, rng)),
        ad::Param<T>(name + ".b", ad::Tensor<T>(1, 3 * g)),
    };
}

template <typename T>
BiGruParams<T> init_bigru(const std::string& name, int in, int g, std::mt19937_64& rng) {
    BiGruParams<T> p;
    p.in_dim = in;
    p.hidden = g;
    p.fwd = init_gru_dir<T>(name + ".fwd", in, g, rng);
    p.bwd = init_gru_dir<T>(name + ".bwd", in, g, rng);
    return p;
}

template <typename T>
AttentionParams<T> init_attention(const std::string& name, int d, int parts, int out,
                                  std::mt19937_64& rng) {
    return AttentionParams<T>{
        ad::Param<T>(name + ".w1", glorot_init<T>(d, 1, rng)),
        ad::Param<T>(name + ".w2", glorot_init<T>(d, 1, rng)),
        ad::Param<T>(name + ".w3", glorot_init<T>(1, d, rng)),
        ad::Param<T>(name + ".lin_W", glorot_init<T>(parts * d, out, rng)),
        ad::Param<T>(name + ".lin_b", ad::Tensor<T>(1, out)),
    };
}

}  // namespace detail

template <typename T>
struct ModelParams {
    ModelConfig config;
    EmbeddingParams<T> embedding;
    BiGruParams<T> preprocess;        // shared between question and context
    AttentionParams<T> attention;     // 4 concatenated parts
    BiGruParams<T> self_gru;
    AttentionParams<T> self_attention;  // 3 concatenated parts
    PredictionParams<T> prediction;
    NoAnswerParams<T> no_answer;

    static ModelParams init(const ModelConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        std::mt19937_64 rng(mix64(seed));
        ModelParams p;
        p.config = cfg;
        const int g2 = 2 * cfg.gru_dim;
        p.embedding = EmbeddingParams<T>{
            ad::Param<T>("embed.char_table", detail::uniform_init<T>(256, cfg.char_dim, 0.1, rng)),
            ad::Param<T>("embed.conv_W",
                         detail::glorot_init<T>(cfg.char_width * cfg.char_dim, cfg.char_filters, rng)),
            ad::Param<T>("embed.conv_b", ad::Tensor<T>(1, cfg.char_filters)),
            ad::Param<T>("embed.separator", detail::uniform_init<T>(1, cfg.word_dim, 0.1, rng)),
        };
        p.preprocess = detail::init_bigru<T>("preprocess", cfg.embed_dim(), cfg.gru_dim, rng);
        p.attention = detail::init_attention<T>("attention", g2, 4, cfg.linear_dim, rng);
        p.self_gru = detail::init_bigru<T>("self.gru", cfg.linear_dim, cfg.gru_dim, rng);
        p.self_attention = detail::init_attention<T>("self.attention", g2, 3, cfg.linear_dim, rng);
        p.prediction = PredictionParams<T>{
            detail::init_bigru<T>("predict.gru1", cfg.linear_dim, cfg.gru_dim, rng),
            ad::Param<T>("predict.start_W", detail::glorot_init<T>(g2, 1, rng)),
            ad::Param<T>("predict.start_b", ad::Tensor<T>(1, 1)),
            detail::init_bigru<T>("predict.gru2", g2 + cfg.linear_dim, cfg.gru_dim, rng),
            ad::Param<T>("predict.end_W", detail::glorot_init<T>(g2, 1, rng)),
            ad::Param<T>("predict.end_b", ad::Tensor<T>(1, 1)),
        };
        p.no_answer = NoAnswerParams<T>{
            ad::Param<T>("noanswer.pool_w", detail::glorot_init<T>(cfg.linear_dim, 1, rng)),
            ad::Param<T>("noanswer.W1",
                         detail::glorot_init<T>(2 * g2 + cfg.linear_dim, cfg.noanswer_hidden, rng)),
            ad::Param<T>("noanswer.b1", ad::Tensor<T>(1, cfg.noanswer_hidden)),
            ad::Param<T>("noanswer.W2", detail::glorot_init<T>(cfg.noanswer_hidden, 1, rng)),
            ad::Param<T>("noanswer.b2", ad::Tensor<T>(1, 1)),
        };
        return p;
    }

    // Fixed traversal order; the optimizer, EMA and checkpoints rely on it.
    template <typename Fn>
    void for_each(Fn fn) {
        auto gru = [&](BiGruParams<T>& g) {
            for (auto* d : {&g.fwd, &g.bwd}) {
                fn(d->W);
                fn(d->U_ru);
                fn(d->U_c);
                fn(d->b);
            }
        };
        auto attn = [&](AttentionParams<T>& a) {
            fn(a.w1);
            fn(a.w2);
            fn(a.w3);
            fn(a.lin_W);
            fn(a.lin_b);
        };
        fn(embedding.char_table);
        fn(embedding.conv_W);
        fn(embedding.conv_b);
        fn(embedding.sep_embedding);
        gru(preprocess);
        attn(attention);
        gru(self_gru);
        attn(self_attention);
        gru(prediction.gru1);
        fn(prediction.start_W);
        fn(prediction.start_b);
        gru(prediction.gru2);
        fn(prediction.end_W);
        fn(prediction.end_b);
        fn(no_answer.pool_w);
        fn(no_answer.W1);
        fn(no_answer.b1);
        fn(no_answer.W2);
        fn(no_answer.b2);
    }

    std::vector<ad::Param<T>*> all() {
        std::vector<ad::Param<T>*> out;
        for_each([&](ad::Param<T>& p) { out.push_back(&p); });
        return out;
    }

    void zero_grads() {
        for_each([](ad::Param<T>& p) { p.zero_grad(); });
    }
};

// ---------------------------------------------------------------------------
// variational dropout: one 0/1 mask per sequence, scaled by 1/(1-rate),
// broadcast across all time steps.

template <typename T>
ad::Tensor<T> variational_dropout_mask(int dim, double rate, std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw std::invalid_argument("variational_dropout_mask: rate must be in [0,1)");
    }
    ad::Tensor<T> mask(1, dim);
    if (rate == 0.0) {
        std::fill(mask.data.begin(), mask.data.end(), T(1));
        return mask;
    }
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    const T keep = static_cast<T>(1.0 / (1.0 - rate));
    for (auto& v : mask.data) v = dist(rng) < rate ? T(0) : keep;
    return mask;
}

// Dropout state for one forward pass; inactive (eval mode) when rng is null.
template <typename T>
struct DropoutCtx {
    std::mt19937_64* rng = nullptr;
    double rate = 0.0;

    bool active() const { return rng != nullptr && rate > 0.0; }

    ad::Var<T> apply(ad::Tape<T>& tape, ad::Var<T> x) const {
        if (!active()) return x;
        return ad::mul_rowvec(x, tape.constant(variational_dropout_mask<T>(x.cols(), rate, *rng)));
    }
};

// ---------------------------------------------------------------------------
// layers

// Word slice (frozen vectors; the separator row is the trainable exception)
// concatenated with a char CNN: width-`char_width` convolution over learned
// char embeddings, max-pooled over positions.
template <typename T>
ad::Var<T> embed_sequence(ad::Tape<T>& tape, const std::vector<std::string>& tokens,
                          const WordVectors<T>& words, ModelParams<T>& params,
                          std::unordered_map<std::string, ad::Var<T>>* char_cache = nullptr) {
    const ModelConfig& cfg = params.config;
    const int n = static_cast<int>(tokens.size());
    if (n == 0) throw std::invalid_argument("embed_sequence: empty token sequence");
    if (words.dim() != cfg.word_dim) {
        throw std::invalid_argument("embed_sequence: word vector dim " +
                                    std::to_string(words.dim()) + " != config word_dim " +
                                    std::to_string(cfg.word_dim));
    }

    ad::Tensor<T> word_mat(n, cfg.word_dim);
    ad::Tensor<T> sep_col(n, 1);
    for (int i = 0; i < n; ++i) {
        if (tokens[i] == cfg.separator) {
            sep_col.at(i, 0) = T(1);
            continue;
        }
        if (const T* row = words.find(tokens[i])) {
            for (int j = 0; j < cfg.word_dim; ++j) word_mat.at(i, j) = row[j];
        }
    }
    ad::Var<T> word_part = ad::add(tape.constant(std::move(word_mat)),
                                   ad::matmul(tape.constant(std::move(sep_col)),
                                              tape.use(params.embedding.sep_embedding)));

    ad::Var<T> table = tape.use(params.embedding.char_table);
    ad::Var<T> conv_W = tape.use(params.embedding.conv_W);
    ad::Var<T> conv_b = tape.use(params.embedding.conv_b);
    auto char_features = [&](const std::string& tok) {
        std::vector<int> idx;
        idx.reserve(tok.size());
        for (unsigned char c : tok) idx.push_back(static_cast<int>(c));
        ad::Var<T> emb = ad::gather_rows(table, std::move(idx));
        ad::Var<T> conv = ad::add_rowvec(ad::matmul(ad::im2col_1d(emb, cfg.char_width), conv_W),
                                         conv_b);
        return ad::max_over_axis(conv, 0);  // [1 x char_filters]
    };

    std::vector<ad::Var<T>> rows;
    rows.reserve(tokens.size());
    for (const auto& tok : tokens) {
        if (char_cache) {
            auto it = char_cache->find(tok);
            if (it == char_cache->end()) it = char_cache->emplace(tok, char_features(tok)).first;
            rows.push_back(it->second);
        } else {
            rows.push_back(char_features(tok));
        }
    }
    return ad::concat_cols<T>({word_part, ad::concat_rows(rows)});
}

namespace detail {

template <typename T>
ad::Var<T> gru_direction(ad::Tape<T>& tape, ad::Var<T> x, GruDirParams<T>& p, int g,
                         const ad::Var<T>* h0 = nullptr) {
    const int n = x.rows();
    ad::Var<T> xw = ad::add_rowvec(ad::matmul(x, tape.use(p.W)), tape.use(p.b));
    ad::Var<T> u_ru = tape.use(p.U_ru);
    ad::Var<T> u_c = tape.use(p.U_c);
    ad::Var<T> h = h0 ? *h0 : tape.constant(ad::Tensor<T>(1, g));
    ad::Var<T> ones = tape.constant([g] {
        ad::Tensor<T> t(1, g);
        std::fill(t.data.begin(), t.data.end(), T(1));
        return t;
    }());
    std::vector<ad::Var<T>> states;
    states.reserve(n);
    for (int t = 0; t < n; ++t) {
        ad::Var<T> xt = ad::slice_rows(xw, t, t + 1);
        ad::Var<T> ru = ad::sigmoid(ad::add(ad::slice_cols(xt, 0, 2 * g), ad::matmul(h, u_ru)));
        ad::Var<T> r = ad::slice_cols(ru, 0, g);
        ad::Var<T> u = ad::slice_cols(ru, g, 2 * g);
        ad::Var<T> cand = ad::tanh_op(
            ad::add(ad::slice_cols(xt, 2 * g, 3 * g), ad::matmul(ad::mul(r, h), u_c)));
        h = ad::add(ad::mul(u, h), ad::mul(ad::sub(ones, u), cand));
        states.push_back(h);
    }
    return ad::concat_rows(states);
}

}  // namespace detail

// Forward and reversed GRU passes concatenated per position -> [n x 2g].
template <typename T>
ad::Var<T> bigru(ad::Tape<T>& tape, ad::Var<T> x, BiGruParams<T>& p) {
    if (x.cols() != p.in_dim) {
        throw std::invalid_argument("bigru: input width " + std::to_string(x.cols()) +
                                    " != expected " + std::to_string(p.in_dim));
    }
    ad::Var<T> fwd = detail::gru_direction(tape, x, p.fwd, p.hidden);
    ad::Var<T> bwd =
        ad::reverse_rows(detail::gru_direction(tape, ad::reverse_rows(x), p.bwd, p.hidden));
    return ad::concat_cols<T>({fwd, bwd});
}

namespace detail {

// Trilinear similarity a_ij = w1.h_i + w2.q_j + w3.(h_i o q_j).
template <typename T>
ad::Var<T> trilinear_scores(ad::Tape<T>& tape, ad::Var<T> h, ad::Var<T> q,
                            AttentionParams<T>& p) {
    ad::Var<T> hw = ad::matmul(h, tape.use(p.w1));  // [n_c x 1]
    ad::Var<T> qw = ad::matmul(q, tape.use(p.w2));  // [n_q x 1]
    ad::Var<T> m = ad::matmul(ad::mul_rowvec(h, tape.use(p.w3)), ad::transpose(q));
    return ad::add_colvec(ad::add_rowvec(m, ad::transpose(qw)), hw);
}

}  // namespace detail

// Intermediates exposed for tests.
template <typename T>
struct AttentionProbe {
    ad::Var<T> probs;
    ad::Var<T> attended;  // c_i rows
    ad::Var<T> qc;        // query-to-context vector (bidaf only)
};

// Bi-directional attention: context-to-query attended vectors plus one
// query-to-context vector, concatenated as [h, c, h o c, q_c o c] and passed
// through a linear layer with ReLU.
template <typename T>
ad::Var<T> bidaf_attention(ad::Tape<T>& tape, ad::Var<T> h, ad::Var<T> q, AttentionParams<T>& p,
                           AttentionProbe<T>* probe = nullptr) {
    ad::Var<T> a = detail::trilinear_scores(tape, h, q, p);      // [n_c x n_q]
    ad::Var<T> probs = ad::softmax_rows(a);                      // rows sum to 1
    ad::Var<T> c = ad::matmul(probs, q);                         // [n_c x d]
    ad::Var<T> m = ad::max_over_axis(a, 1);                      // [n_c x 1]
    ad::Var<T> pm = ad::softmax_rows(ad::transpose(m));          // [1 x n_c]
    ad::Var<T> qc = ad::matmul(pm, h);                           // [1 x d]
    if (probe) *probe = AttentionProbe<T>{probs, c, qc};
    ad::Var<T> cat = ad::concat_cols<T>({h, c, ad::mul(h, c), ad::mul_rowvec(c, qc)});
    return ad::relu(ad::add_rowvec(ad::matmul(cat, tape.use(p.lin_W)), tape.use(p.lin_b)));
}

// Residual self-attention: bigru, then the passage attends to itself with
// the diagonal masked out and no query-to-context term. At n = 1 the whole
// row is masked and the attended vector is zero by convention.
template <typename T>
ad::Var<T> self_attention_block(ad::Tape<T>& tape, ad::Var<T> x, BiGruParams<T>& gru_p,
                                AttentionParams<T>& p, const DropoutCtx<T>& dropout = {},
                                AttentionProbe<T>* probe = nullptr) {
    ad::Var<T> g = bigru(tape, dropout.apply(tape, x), gru_p);
    ad::Var<T> ga = dropout.apply(tape, g);
    ad::Var<T> a = detail::trilinear_scores(tape, ga, ga, p);
    const int n = a.rows();
    ad::Tensor<T> mask(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) mask.at(i, j) = (i == j) ? T(0) : T(1);
    ad::Var<T> probs = ad::softmax_rows(a, &mask);
    ad::Var<T> c = ad::matmul(probs, g);
    if (probe) *probe = AttentionProbe<T>{probs, c, ad::Var<T>{}};
    ad::Var<T> cat = ad::concat_cols<T>({g, c, ad::mul(g, c)});
    ad::Var<T> lin =
        ad::relu(ad::add_rowvec(ad::matmul(cat, tape.use(p.lin_W)), tape.use(p.lin_b)));
    return ad::add(x, lin);
}

template <typename T>
struct BoundaryVars {
    ad::Var<T> start;  // [n x 1]
    ad::Var<T> end;    // [n x 1]
    ad::Var<T> h1;     // GRU states behind the start scores
    ad::Var<T> h2;     // GRU states behind the end scores
};

// GRU -> linear for start scores; [states, input] -> GRU -> linear for ends.
template <typename T>
BoundaryVars<T> predict_boundaries(ad::Tape<T>& tape, ad::Var<T> x, PredictionParams<T>& p,
                                   const DropoutCtx<T>& dropout = {}) {
    BoundaryVars<T> out;
    out.h1 = bigru(tape, dropout.apply(tape, x), p.gru1);
    out.start = ad::add_rowvec(ad::matmul(out.h1, tape.use(p.start_W)), tape.use(p.start_b));
    ad::Var<T> cat = ad::concat_cols<T>({out.h1, x});
    out.h2 = bigru(tape, dropout.apply(tape, cat), p.gru2);
    out.end = ad::add_rowvec(ad::matmul(out.h2, tape.use(p.end_W)), tape.use(p.end_b));
    return out;
}

// z from softmax-pooled boundary states plus learned-attention pooling of
// the self-attention output, through a two-layer ReLU network.
template <typename T>
struct NoAnswerProbe {
    ad::Var<T> v1, v2, v3;
};

template <typename T>
ad::Var<T> no_answer_score(ad::Tape<T>& tape, const BoundaryVars<T>& bounds, ad::Var<T> self_out,
                           NoAnswerParams<T>& p, NoAnswerProbe<T>* probe = nullptr) {
    ad::Var<T> ps = ad::softmax_rows(ad::transpose(bounds.start));  // [1 x n]
    ad::Var<T> v1 = ad::matmul(ps, bounds.h1);
    ad::Var<T> pe = ad::softmax_rows(ad::transpose(bounds.end));
    ad::Var<T> v2 = ad::matmul(pe, bounds.h2);
    ad::Var<T> a3 = ad::softmax_rows(ad::transpose(ad::matmul(self_out, tape.use(p.pool_w))));
    ad::Var<T> v3 = ad::matmul(a3, self_out);
    if (probe) *probe = NoAnswerProbe<T>{v1, v2, v3};
    ad::Var<T> feat = ad::concat_cols<T>({v1, v2, v3});
    ad::Var<T> hidden =
        ad::relu(ad::add_rowvec(ad::matmul(feat, tape.use(p.W1)), tape.use(p.b1)));
    return ad::add_rowvec(ad::matmul(hidden, tape.use(p.W2)), tape.use(p.b2));  // [1 x 1]
}

// ---------------------------------------------------------------------------
// full forward pass

template <typename T>
struct ForwardOutput {
    BoundaryVars<T> bounds;
    ad::Var<T> self_out;
    ad::Var<T> z;  // invalid unless requested

    ScoreMatrix<T> scores() const {
        ScoreMatrix<T> s;
        const auto& sv = bounds.start.val();
        const auto& ev = bounds.end.val();
        s.start_scores.assign(sv.data.begin(), sv.data.end());
        s.end_scores.assign(ev.data.begin(), ev.data.end());
        if (z.valid()) s.no_answer = z.val().item();
        return s;
    }
};

// Question embedding + shared pre-process GRU; computed once per question
// and reused by every paragraph on the same tape.
template <typename T>
ad::Var<T> question_states(ad::Tape<T>& tape, const std::vector<std::string>& question_tokens,
                           const WordVectors<T>& words, ModelParams<T>& params,
                           const DropoutCtx<T>& dropout = {},
                           std::unordered_map<std::string, ad::Var<T>>* char_cache = nullptr) {
    ad::Var<T> emb = embed_sequence(tape, question_tokens, words, params, char_cache);
    return bigru(tape, dropout.apply(tape, emb), params.preprocess);
}

template <typename T>
ForwardOutput<T> forward_paragraph(ad::Tape<T>& tape, const std::vector<std::string>& tokens,
                                   ad::Var<T> q_states, const WordVectors<T>& words,
                                   ModelParams<T>& params, bool want_z = false,
                                   const DropoutCtx<T>& dropout = {},
                                   std::unordered_map<std::string, ad::Var<T>>* char_cache = nullptr) {
    ad::Var<T> emb = embed_sequence(tape, tokens, words, params, char_cache);
    ad::Var<T> h = bigru(tape, dropout.apply(tape, emb), params.preprocess);
    ad::Var<T> x =
        bidaf_attention(tape, dropout.apply(tape, h), dropout.apply(tape, q_states), params.attention);
    ForwardOutput<T> out;
    out.self_out = self_attention_block(tape, x, params.self_gru, params.self_attention, dropout);
    out.bounds = predict_boundaries(tape, out.self_out, params.prediction, dropout);
    if (want_z) out.z = no_answer_score(tape, out.bounds, out.self_out, params.no_answer);
    return out;
}

// Eval-mode scores for one paragraph (no tape kept, no dropout).
template <typename T>
ScoreMatrix<T> score_paragraph(const std::vector<std::string>& question_tokens,
                               const std::vector<std::string>& paragraph_tokens,
                               const WordVectors<T>& words, ModelParams<T>& params,
                               bool want_z = false) {
    ad::Tape<T> tape(/*grad_enabled=*/false);
    std::unordered_map<std::string, ad::Var<T>> cache;
    ad::Var<T> q = question_states(tape, question_tokens, words, params, {}, &cache);
    return forward_paragraph(tape, paragraph_tokens, q, words, params, want_z, {}, &cache).scores();
}

}  // namespace docqa
