#pragma once

// Adadelta optimization, the exponential moving average of the weights,
// binary checkpoints, and the epoch loop that connects sampling, dropout
// and the objectives.

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "docqa/config.hpp"
#include "docqa/dataset.hpp"
#include "docqa/inference.hpp"
#include "docqa/layers.hpp"
#include "docqa/objectives.hpp"
#include "docqa/rng.hpp"
#include "docqa/sampling.hpp"

namespace docqa {

template <typename T>
struct OptimizerState {
    double rho = 0.95;
    double epsilon = 1e-6;
    std::vector<ad::Tensor<T>> eg2;   // E[g^2], trainable params in registry order
    std::vector<ad::Tensor<T>> edx2;  // E[dx^2]

    static OptimizerState init(ModelParams<T>& params) {
        OptimizerState s;
        params.for_each([&](ad::Param<T>& p) {
            if (!p.trainable) return;
            s.eg2.emplace_back(p.value.rows, p.value.cols);
            s.edx2.emplace_back(p.value.rows, p.value.cols);
        });
        return s;
    }
};

// One Adadelta update from the accumulated gradients; consumes (zeroes)
// them. Frozen parameters are untouched. Gradients may be pre-scaled by
// the caller; a positive clip_norm rescales the global gradient norm.
template <typename T>
void adadelta_step(ModelParams<T>& params, OptimizerState<T>& state, double clip_norm = 0.0) {
    double norm2 = 0.0;
    params.for_each([&](ad::Param<T>& p) {
        if (!p.trainable) return;
        for (T g : p.grad.data) {
            if (!std::isfinite(static_cast<double>(g))) {
                throw std::runtime_error("adadelta_step: non-finite gradient in " + p.name);
            }
            norm2 += static_cast<double>(g) * static_cast<double>(g);
        }
    });
    T scale = T(1);
    if (clip_norm > 0.0 && norm2 > clip_norm * clip_norm) {
        scale = static_cast<T>(clip_norm / std::sqrt(norm2));
    }

    std::size_t idx = 0;
    params.for_each([&](ad::Param<T>& p) {
        if (!p.trainable) return;
        ad::Tensor<T>& eg2 = state.eg2[idx];
        ad::Tensor<T>& edx2 = state.edx2[idx];
        ++idx;
        const T rho = static_cast<T>(state.rho);
        const T eps = static_cast<T>(state.epsilon);
        for (std::size_t i = 0; i < p.value.data.size(); ++i) {
            T g = p.grad.data[i] * scale;
            eg2.data[i] = rho * eg2.data[i] + (T(1) - rho) * g * g;
            T dx = -std::sqrt(edx2.data[i] + eps) / std::sqrt(eg2.data[i] + eps) * g;
            edx2.data[i] = rho * edx2.data[i] + (T(1) - rho) * dx * dx;
            p.value.data[i] += dx;
            p.grad.data[i] = T(0);
        }
    });
}

template <typename T>
struct EmaState {
    double decay = 0.999;
    std::vector<ad::Tensor<T>> shadow;  // trainable params, registry order

    static EmaState init(ModelParams<T>& params, double decay = 0.999) {
        EmaState s;
        s.decay = decay;
        params.for_each([&](ad::Param<T>& p) {
            if (p.trainable) s.shadow.push_back(p.value);
        });
        return s;
    }

    void update(ModelParams<T>& params) {
        const T d = static_cast<T>(decay);
        std::size_t idx = 0;
        params.for_each([&](ad::Param<T>& p) {
            if (!p.trainable) return;
            ad::Tensor<T>& sh = shadow[idx++];
            for (std::size_t i = 0; i < sh.data.size(); ++i) {
                sh.data[i] = d * sh.data[i] + (T(1) - d) * p.value.data[i];
            }
        });
    }

    // Exchanges live weights with the averaged ones; calling twice restores
    // the originals bitwise.
    void swap(ModelParams<T>& params) {
        std::size_t idx = 0;
        params.for_each([&](ad::Param<T>& p) {
            if (p.trainable) std::swap(p.value.data, shadow[idx++].data);
        });
    }
};

// ---------------------------------------------------------------------------
// training data: ranked pools per question

template <typename T>
struct TrainItem {
    std::string q_id;
    TokenizedText question;
    QuestionPool pool;
};

template <typename T>
struct TrainingData {
    std::vector<TrainItem<T>> items;
    int dropped = 0;  // questions whose pool had no answer paragraph

    static TrainingData prepare(const Dataset& data, const SamplingPlan& plan,
                                const LinearRanker* ranker = nullptr) {
        TrainingData out;
        for (const auto& q : data) {
            auto pool = build_pool(q.question, q.groups, plan, ranker);
            if (!pool.has_value()) {
                ++out.dropped;
                continue;
            }
            out.items.push_back(TrainItem<T>{q.q_id, q.question, std::move(*pool)});
        }
        return out;
    }
};

struct EpochMetrics {
    int epoch = 0;
    double mean_loss = 0.0;
    int questions_used = 0;
    int paragraphs_seen = 0;
};

template <typename T>
struct TrainState {
    ModelParams<T> params;
    OptimizerState<T> opt;
    EmaState<T> ema;
    TrainMode mode = TrainMode::SharedNorm;
    std::uint64_t seed = 1;
    int epoch = 0;  // epochs completed
    int batch_size = 15;
    double clip_norm = 5.0;
    SamplingPlan plan;

    static TrainState init(const ModelConfig& cfg, TrainMode mode, std::uint64_t seed,
                           const SamplingPlan& plan, int batch_size = 15, double clip_norm = 5.0,
                           double ema_decay = 0.999) {
        TrainState s;
        s.params = ModelParams<T>::init(cfg, seed);
        s.opt = OptimizerState<T>::init(s.params);
        s.ema = EmaState<T>::init(s.params, ema_decay);
        s.mode = mode;
        s.seed = seed;
        s.batch_size = batch_size;
        s.clip_norm = clip_norm;
        s.plan = plan;
        s.plan.require_answer = (mode == TrainMode::Merge || mode == TrainMode::SharedNorm);
        return s;
    }
};

namespace detail {

// Merge-mode input: drawn paragraphs joined by the separator token, with
// answer labels shifted to the merged coordinates.
template <typename T>
std::pair<std::vector<std::string>, LabeledScores<T>> merge_drawn(
    const QuestionPool& pool, const std::vector<int>& draw, const std::string& separator) {
    std::vector<int> order = draw;
    std::sort(order.begin(), order.end());
    std::vector<std::string> tokens;
    AnswerSpans merged;
    for (int idx : order) {
        const ParagraphGroup& g = pool.paragraphs[idx];
        if (!tokens.empty()) tokens.push_back(separator);
        int offset = static_cast<int>(tokens.size());
        tokens.insert(tokens.end(), g.text.tokens.begin(), g.text.tokens.end());
        for (auto [a, b] : g.answer_spans.spans) merged.spans.emplace_back(a + offset, b + offset);
    }
    std::sort(merged.spans.begin(), merged.spans.end());
    return {std::move(tokens), LabeledScores<T>::labels_only(merged, static_cast<int>(tokens.size()))};
}

}  // namespace detail

// One pass over the training pool. Per question: sample paragraphs, run
// the forward pass with fresh dropout masks, apply the mode's objective,
// and take one optimizer + EMA step per batch. The per-question loss is
// the mean over its sampled paragraphs (independent modes) or the single
// group loss (merge, shared-norm); the batch gradient is the mean over
// the batch slots.
template <typename T>
EpochMetrics train_epoch(TrainState<T>& state, const TrainingData<T>& data,
                         const WordVectors<T>& words) {
    if (data.items.empty()) throw std::invalid_argument("train_epoch: no training items");
    const int epoch_index = state.epoch;
    const TrainMode mode = state.mode;
    const bool want_z = (mode == TrainMode::NoAnswer);
    const std::string& separator = state.params.config.separator;

    std::vector<int> order(data.items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::mt19937_64 shuffle_rng(stream_seed(state.seed, 0x5A5FULL + epoch_index));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochMetrics metrics;
    metrics.epoch = epoch_index + 1;
    double loss_sum = 0.0;

    for (std::size_t base = 0; base < order.size(); base += state.batch_size) {
        std::size_t hi = std::min(order.size(), base + state.batch_size);
        const T grad_scale = T(1) / static_cast<T>(hi - base);
        for (std::size_t slot = base; slot < hi; ++slot) {
            const TrainItem<T>& item = data.items[order[slot]];
            std::mt19937_64 qrng(stream_seed(state.seed, epoch_index, order[slot]));
            std::vector<int> draw = epoch_sample(item.pool, state.plan, qrng);

            ad::Tape<T> tape;
            std::unordered_map<std::string, ad::Var<T>> char_cache;
            DropoutCtx<T> dropout{&qrng, state.params.config.dropout_rate};
            ad::Var<T> q_states =
                question_states(tape, item.question.tokens, words, state.params, dropout, &char_cache);

            std::vector<ad::Var<T>> losses;
            if (mode == TrainMode::Merge) {
                auto [tokens, labels] = detail::merge_drawn<T>(item.pool, draw, separator);
                auto out = forward_paragraph(tape, tokens, q_states, words, state.params, false,
                                             dropout, &char_cache);
                losses.push_back(
                    summed_bounds_loss(tape, out.bounds.start, out.bounds.end, labels).total);
                metrics.paragraphs_seen += static_cast<int>(draw.size());
            } else if (mode == TrainMode::SharedNorm) {
                SharedNormGroup<T> group;
                std::vector<ad::Var<T>> starts, ends;
                for (int idx : draw) {
                    const ParagraphGroup& g = item.pool.paragraphs[idx];
                    auto out = forward_paragraph(tape, g.text.tokens, q_states, words,
                                                 state.params, false, dropout, &char_cache);
                    starts.push_back(out.bounds.start);
                    ends.push_back(out.bounds.end);
                    group.members.push_back(LabeledScores<T>::labels_only(
                        g.answer_spans, static_cast<int>(g.text.tokens.size())));
                }
                losses.push_back(shared_norm_loss(tape, starts, ends, group).total);
                metrics.paragraphs_seen += static_cast<int>(draw.size());
            } else {
                for (int idx : draw) {
                    const ParagraphGroup& g = item.pool.paragraphs[idx];
                    auto labels = LabeledScores<T>::labels_only(
                        g.answer_spans, static_cast<int>(g.text.tokens.size()));
                    if (mode == TrainMode::None && !labels.has_answer) continue;
                    auto out = forward_paragraph(tape, g.text.tokens, q_states, words,
                                                 state.params, want_z, dropout, &char_cache);
                    switch (mode) {
                        case TrainMode::None:
                            losses.push_back(
                                summed_bounds_loss(tape, out.bounds.start, out.bounds.end, labels)
                                    .total);
                            break;
                        case TrainMode::Sigmoid:
                            losses.push_back(
                                sigmoid_loss(tape, out.bounds.start, out.bounds.end, labels).total);
                            break;
                        case TrainMode::NoAnswer:
                            losses.push_back(no_answer_loss(tape, out.bounds.start,
                                                            out.bounds.end, out.z, labels)
                                                 .total);
                            break;
                        default:
                            break;
                    }
                    metrics.paragraphs_seen += 1;
                }
            }
            if (losses.empty()) continue;  // e.g. mode none drew only negatives

            ad::Var<T> question_loss = losses[0];
            for (std::size_t i = 1; i < losses.size(); ++i) {
                question_loss = ad::add(question_loss, losses[i]);
            }
            if (losses.size() > 1) {
                question_loss = ad::scale(question_loss, T(1) / static_cast<T>(losses.size()));
            }
            tape.backward(question_loss);
            tape.accumulate_param_grads(grad_scale);
            loss_sum += static_cast<double>(question_loss.val().item());
            ++metrics.questions_used;
        }
        adadelta_step(state.params, state.opt, state.clip_norm);
        state.ema.update(state.params);
    }

    state.epoch += 1;
    metrics.mean_loss = metrics.questions_used ? loss_sum / metrics.questions_used : 0.0;
    return metrics;
}

// ---------------------------------------------------------------------------
// checkpoints: versioned binary file with a JSON manifest up front

namespace detail {

inline void write_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& in, void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
}

template <typename T>
void write_tensor(std::ostream& out, const ad::Tensor<T>& t) {
    std::int32_t r = t.rows, c = t.cols;
    write_bytes(out, &r, sizeof r);
    write_bytes(out, &c, sizeof c);
    write_bytes(out, t.data.data(), t.data.size() * sizeof(T));
}

template <typename T>
ad::Tensor<T> read_tensor(std::istream& in) {
    std::int32_t r = 0, c = 0;
    read_bytes(in, &r, sizeof r);
    read_bytes(in, &c, sizeof c);
    ad::Tensor<T> t(r, c);
    read_bytes(in, t.data.data(), t.data.size() * sizeof(T));
    return t;
}

inline void write_string(std::ostream& out, const std::string& s) {
    std::uint64_t n = s.size();
    write_bytes(out, &n, sizeof n);
    write_bytes(out, s.data(), s.size());
}

inline std::string read_string(std::istream& in) {
    std::uint64_t n = 0;
    read_bytes(in, &n, sizeof n);
    std::string s(n, '\0');
    read_bytes(in, s.data(), n);
    return s;
}

}  // namespace detail

inline constexpr std::uint32_t kCheckpointMagic = 0x44514b43;  // "CKQD"
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const std::string& path, const TrainState<T>& state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    detail::write_bytes(out, &kCheckpointMagic, sizeof kCheckpointMagic);
    detail::write_bytes(out, &kCheckpointVersion, sizeof kCheckpointVersion);

    json manifest{{"model", to_json(state.params.config)},
                  {"sampling", to_json(state.plan)},
                  {"mode", to_string(state.mode)},
                  {"seed", state.seed},
                  {"epoch", state.epoch},
                  {"batch_size", state.batch_size},
                  {"clip_norm", state.clip_norm},
                  {"ema_decay", state.ema.decay},
                  {"adadelta_rho", state.opt.rho},
                  {"adadelta_epsilon", state.opt.epsilon},
                  {"scalar_bytes", sizeof(T)}};
    detail::write_string(out, manifest.dump());

    auto& mutable_params = const_cast<ModelParams<T>&>(state.params);
    mutable_params.for_each([&](ad::Param<T>& p) {
        detail::write_string(out, p.name);
        detail::write_tensor(out, p.value);
    });
    for (const auto& t : state.opt.eg2) detail::write_tensor(out, t);
    for (const auto& t : state.opt.edx2) detail::write_tensor(out, t);
    for (const auto& t : state.ema.shadow) detail::write_tensor(out, t);
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

// Loads a checkpoint; when `expect` is given, a differing model
// configuration is rejected.
template <typename T>
TrainState<T> load_checkpoint(const std::string& path, const ModelConfig* expect = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::uint32_t magic = 0, version = 0;
    detail::read_bytes(in, &magic, sizeof magic);
    detail::read_bytes(in, &version, sizeof version);
    if (magic != kCheckpointMagic) throw std::runtime_error("not a checkpoint file: " + path);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    json manifest = json::parse(detail::read_string(in));
    if (manifest.at("scalar_bytes").get<std::size_t>() != sizeof(T)) {
        throw std::runtime_error("checkpoint scalar width mismatch");
    }
    ModelConfig cfg = model_config_from_json(manifest.at("model"));
    if (expect && !(cfg == *expect)) {
        throw std::runtime_error("checkpoint model config does not match the requested config");
    }

    TrainState<T> state;
    state.params = ModelParams<T>::init(cfg, 0);
    state.plan = sampling_plan_from_json(manifest.at("sampling"));
    state.mode = parse_mode(manifest.at("mode").get<std::string>());
    state.seed = manifest.at("seed").get<std::uint64_t>();
    state.epoch = manifest.at("epoch").get<int>();
    state.batch_size = manifest.at("batch_size").get<int>();
    state.clip_norm = manifest.at("clip_norm").get<double>();

    state.params.for_each([&](ad::Param<T>& p) {
        std::string name = detail::read_string(in);
        if (name != p.name) {
            throw std::runtime_error("checkpoint layout mismatch: expected " + p.name + ", found " +
                                     name);
        }
        ad::Tensor<T> t = detail::read_tensor<T>(in);
        if (!t.same_shape(p.value)) {
            throw std::runtime_error("checkpoint shape mismatch for " + p.name);
        }
        p.value = std::move(t);
        p.grad = ad::Tensor<T>(p.value.rows, p.value.cols);
    });
    state.opt = OptimizerState<T>::init(state.params);
    state.opt.rho = manifest.at("adadelta_rho").get<double>();
    state.opt.epsilon = manifest.at("adadelta_epsilon").get<double>();
    for (auto& t : state.opt.eg2) t = detail::read_tensor<T>(in);
    for (auto& t : state.opt.edx2) t = detail::read_tensor<T>(in);
    state.ema = EmaState<T>::init(state.params, manifest.at("ema_decay").get<double>());
    for (auto& t : state.ema.shadow) t = detail::read_tensor<T>(in);
    return state;
}

}  // namespace docqa
