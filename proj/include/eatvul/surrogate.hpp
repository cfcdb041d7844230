#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "eatvul/autodiff.hpp"
#include "eatvul/corpus.hpp"
#include "eatvul/matrix.hpp"
#include "eatvul/rng.hpp"

namespace eatvul {

// class indices for the 2-logit head
inline constexpr int kNonvulnerableIndex = 0;
inline constexpr int kVulnerableIndex = 1;

inline int label_index(Label l) {
    return l == Label::vulnerable ? kVulnerableIndex : kNonvulnerableIndex;
}

struct SurrogateConfig {
    int embed_dim = 32;
    int hidden_dim = 32;   // per direction
    int d_k = 32;          // attention projection width (Q, K and V)
    int max_seq_len = 512; // longer inputs are truncated, never rejected
    int epochs = 30;
    double learning_rate = 0.05;
    int batch_size = 8;
    std::uint64_t seed = 1;

    void validate() const {
        if (embed_dim < 1 || hidden_dim < 1 || d_k < 1 || max_seq_len < 1)
            throw std::invalid_argument("surrogate dimensions must be >= 1");
        if (epochs < 0 || batch_size < 1 || learning_rate <= 0.0)
            throw std::invalid_argument("invalid surrogate training settings");
    }
};

// Embedding -> BiLSTM -> single-head self-attention -> 2-class softmax head.
struct SurrogateModel {
    SurrogateConfig config;
    std::uint64_t vocab_hash = 0;
    int vocab_size = 0;

    Mat embedding;          // V x E
    Mat wx_f, wh_f, b_f;    // E x 4H, H x 4H, 1 x 4H
    Mat wx_b, wh_b, b_b;
    Mat wq, wk, wv;         // 2H x d_k
    Mat w_out, b_out;       // d_k x 2, 1 x 2

    std::vector<double> eval_loss;  // per-epoch mean loss on the eval split

    std::vector<std::pair<std::string, Mat*>> params() {
        return {{"embedding", &embedding}, {"wx_f", &wx_f}, {"wh_f", &wh_f},
                {"b_f", &b_f},             {"wx_b", &wx_b}, {"wh_b", &wh_b},
                {"b_b", &b_b},             {"wq", &wq},     {"wk", &wk},
                {"wv", &wv},               {"w_out", &w_out}, {"b_out", &b_out}};
    }
    std::vector<std::pair<std::string, const Mat*>> params() const {
        return {{"embedding", &embedding}, {"wx_f", &wx_f}, {"wh_f", &wh_f},
                {"b_f", &b_f},             {"wx_b", &wx_b}, {"wh_b", &wh_b},
                {"b_b", &b_b},             {"wq", &wq},     {"wk", &wk},
                {"wv", &wv},               {"w_out", &w_out}, {"b_out", &b_out}};
    }

    bool all_finite() const {
        for (const auto& [name, m] : params())
            if (!m->all_finite()) return false;
        return true;
    }
};

// Row-averaged softmax(QK^T/sqrt(d_k)) weights, aligned with token positions.
struct AttentionMap {
    std::vector<double> weights;
};

namespace detail {

struct ParamNodes {
    int embedding, wx_f, wh_f, b_f, wx_b, wh_b, b_b, wq, wk, wv, w_out, b_out;
};

inline ParamNodes bind_params(Tape& tape, const SurrogateModel& m,
                              std::vector<Mat>* grads = nullptr) {
    auto ps = m.params();
    ParamNodes out{};
    int* slots[] = {&out.embedding, &out.wx_f, &out.wh_f, &out.b_f,
                    &out.wx_b,      &out.wh_b, &out.b_b,  &out.wq,
                    &out.wk,        &out.wv,   &out.w_out, &out.b_out};
    for (std::size_t i = 0; i < ps.size(); ++i) {
        Mat* g = grads ? &(*grads)[i] : nullptr;
        *slots[i] = tape.extern_leaf(ps[i].second, g);
    }
    return out;
}

inline std::vector<Mat> zero_grads(const SurrogateModel& m) {
    std::vector<Mat> out;
    for (const auto& [name, p] : m.params()) out.emplace_back(p->rows, p->cols);
    return out;
}

// one LSTM direction; returns the per-step hidden-state nodes (1 x H each)
inline std::vector<int> lstm_direction(Tape& tape, const ParamNodes& pn,
                                       const std::vector<int>& ids, int hidden_dim,
                                       bool backward_dir) {
    const int T = static_cast<int>(ids.size());
    const int H = hidden_dim;
    const int wx = backward_dir ? pn.wx_b : pn.wx_f;
    const int wh = backward_dir ? pn.wh_b : pn.wh_f;
    const int b = backward_dir ? pn.b_b : pn.b_f;
    int h = tape.leaf(Mat(1, H));
    int c = tape.leaf(Mat(1, H));
    std::vector<int> hs(static_cast<std::size_t>(T));
    for (int step = 0; step < T; ++step) {
        const int t = backward_dir ? T - 1 - step : step;
        const int x = tape.embedding_rows(pn.embedding, {ids[static_cast<std::size_t>(t)]});
        int gates = tape.add(tape.add(tape.matmul_op(x, wx), tape.matmul_op(h, wh)), b);
        const int ig = tape.sigmoid(tape.slice_cols(gates, 0, H));
        const int fg = tape.sigmoid(tape.slice_cols(gates, H, H));
        const int gg = tape.tanh_op(tape.slice_cols(gates, 2 * H, H));
        const int og = tape.sigmoid(tape.slice_cols(gates, 3 * H, H));
        c = tape.add(tape.hadamard(fg, c), tape.hadamard(ig, gg));
        h = tape.hadamard(og, tape.tanh_op(c));
        hs[static_cast<std::size_t>(t)] = h;
    }
    return hs;
}

struct ForwardGraph {
    int logits, probs, att_weights, att_matrix, rep;
};

inline ForwardGraph build_forward(Tape& tape, const ParamNodes& pn,
                                  const SurrogateConfig& cfg, const std::vector<int>& ids) {
    if (ids.empty()) throw std::invalid_argument("surrogate forward: empty token list");
    const auto hf = lstm_direction(tape, pn, ids, cfg.hidden_dim, false);
    const auto hb = lstm_direction(tape, pn, ids, cfg.hidden_dim, true);
    const int Hf = tape.stack_rows(hf);
    const int Hb = tape.stack_rows(hb);
    const int H = tape.concat_cols(Hf, Hb);  // T x 2H

    const int Q = tape.matmul_op(H, pn.wq);
    const int K = tape.matmul_op(H, pn.wk);
    const int V = tape.matmul_op(H, pn.wv);
    const int scores = tape.scale(tape.matmul_op(Q, K, false, true),
                                  1.0 / std::sqrt(static_cast<double>(cfg.d_k)));
    const int A = tape.softmax_rows(scores);      // T x T
    const int attw = tape.mean_over_rows(A);      // 1 x T
    const int rep = tape.matmul_op(attw, V);      // 1 x d_k
    const int logits = tape.add(tape.matmul_op(rep, pn.w_out), pn.b_out);
    const int probs = tape.softmax_rows(logits);
    return {logits, probs, attw, A, rep};
}

inline std::vector<int> encode_for_model(const SurrogateModel& m, const Vocabulary& vocab,
                                         const CodeSample& sample) {
    if (m.vocab_hash != vocab.hash())
        throw std::runtime_error("vocabulary hash mismatch: model was trained on a different vocabulary");
    if (sample.tokens.empty())
        throw std::invalid_argument("sample '" + sample.id + "' has an empty token list (tokenize it first)");
    std::vector<int> ids = vocab.encode(sample.tokens);
    if (static_cast<int>(ids.size()) > m.config.max_seq_len)
        ids.resize(static_cast<std::size_t>(m.config.max_seq_len));
    return ids;
}

}  // namespace detail

inline SurrogateModel init_surrogate(const Vocabulary& vocab, const SurrogateConfig& cfg) {
    cfg.validate();
    SurrogateModel m;
    m.config = cfg;
    m.vocab_hash = vocab.hash();
    m.vocab_size = vocab.size();
    const int E = cfg.embed_dim, H = cfg.hidden_dim, D = cfg.d_k;
    m.embedding = Mat(m.vocab_size, E);
    m.wx_f = Mat(E, 4 * H); m.wh_f = Mat(H, 4 * H); m.b_f = Mat(1, 4 * H);
    m.wx_b = Mat(E, 4 * H); m.wh_b = Mat(H, 4 * H); m.b_b = Mat(1, 4 * H);
    m.wq = Mat(2 * H, D); m.wk = Mat(2 * H, D); m.wv = Mat(2 * H, D);
    m.w_out = Mat(D, 2); m.b_out = Mat(1, 2);
    Rng rng(mix_seed(cfg.seed, fnv1a("surrogate-init")));
    for (auto& [name, p] : m.params()) {
        if (name == "b_f" || name == "b_b" || name == "b_out") continue;  // biases start at zero
        for (double& x : p->a) x = rng.uniform(-0.1, 0.1);
    }
    return m;
}

// loss for one sample; gradients accumulate into `grads` when non-null
inline double surrogate_loss(const SurrogateModel& m, const std::vector<int>& ids, int label,
                             std::vector<Mat>* grads = nullptr) {
    Tape tape;
    auto pn = detail::bind_params(tape, m, grads);
    auto g = detail::build_forward(tape, pn, m.config, ids);
    const int loss = tape.cross_entropy(g.logits, label);
    const double value = tape.value(loss)(0, 0);
    if (grads) tape.backward(loss);
    return value;
}

inline SurrogateModel train(const DatasetSplit& split, const Vocabulary& vocab,
                            const SurrogateConfig& cfg) {
    cfg.validate();
    if (split.train.empty()) throw std::invalid_argument("surrogate train: empty training set");
    bool has_vuln = false, has_nonvuln = false;
    for (const auto& s : split.train) {
        (s.label == Label::vulnerable ? has_vuln : has_nonvuln) = true;
        if (s.tokens.empty())
            throw std::invalid_argument("surrogate train: sample '" + s.id + "' is not tokenized");
    }
    if (!has_vuln || !has_nonvuln)
        throw std::invalid_argument("surrogate train: training set must contain both classes");

    SurrogateModel m = init_surrogate(vocab, cfg);

    std::vector<std::vector<int>> enc;
    std::vector<int> labels;
    for (const auto& s : split.train) {
        enc.push_back(detail::encode_for_model(m, vocab, s));
        labels.push_back(label_index(s.label));
    }
    std::vector<std::vector<int>> eval_enc;
    std::vector<int> eval_labels;
    for (const auto& s : split.eval) {
        if (s.tokens.empty()) continue;
        eval_enc.push_back(detail::encode_for_model(m, vocab, s));
        eval_labels.push_back(label_index(s.label));
    }

    Rng rng(mix_seed(cfg.seed, fnv1a("surrogate-train")));
    std::vector<std::size_t> order(enc.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<Mat> grads = detail::zero_grads(m);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
            for (Mat& g : grads) g.fill(0.0);
            double batch_loss = 0.0;
            for (std::size_t k = at; k < end; ++k) {
                batch_loss += surrogate_loss(m, enc[order[k]], labels[order[k]], &grads);
            }
            const double bn = static_cast<double>(end - at);
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("surrogate train: non-finite loss at epoch " +
                                         std::to_string(epoch) + " (try a lower learning rate)");
            auto ps = m.params();
            for (std::size_t i = 0; i < ps.size(); ++i) axpy(*ps[i].second, -cfg.learning_rate / bn, grads[i]);
        }
        if (!eval_enc.empty()) {
            double el = 0.0;
            for (std::size_t i = 0; i < eval_enc.size(); ++i)
                el += surrogate_loss(m, eval_enc[i], eval_labels[i]);
            m.eval_loss.push_back(el / static_cast<double>(eval_enc.size()));
        }
    }
    if (!m.all_finite()) throw std::runtime_error("surrogate train: non-finite parameters after training");
    return m;
}

namespace detail {

struct ForwardOut {
    Mat probs;       // 1 x 2
    Mat att_weights; // 1 x T
    Mat rep;         // 1 x d_k
};

inline ForwardOut run_forward(const SurrogateModel& m, const std::vector<int>& ids) {
    Tape tape;
    auto pn = bind_params(tape, m);
    auto g = build_forward(tape, pn, m.config, ids);
    return {tape.value(g.probs), tape.value(g.att_weights), tape.value(g.rep)};
}

}  // namespace detail

// probability that the sample is vulnerable
inline double predict_proba(const SurrogateModel& m, const Vocabulary& vocab,
                            const CodeSample& sample) {
    const auto ids = detail::encode_for_model(m, vocab, sample);
    return detail::run_forward(m, ids).probs(0, kVulnerableIndex);
}

inline AttentionMap attention_scores(const SurrogateModel& m, const Vocabulary& vocab,
                                     const CodeSample& sample) {
    const auto ids = detail::encode_for_model(m, vocab, sample);
    const Mat w = detail::run_forward(m, ids).att_weights;
    AttentionMap out;
    out.weights.assign(w.a.begin(), w.a.end());
    return out;
}

// attention-pooled sequence representation fed to the classifier head
inline std::vector<double> final_representation(const SurrogateModel& m, const Vocabulary& vocab,
                                                const CodeSample& sample) {
    const auto ids = detail::encode_for_model(m, vocab, sample);
    const Mat r = detail::run_forward(m, ids).rep;
    return {r.a.begin(), r.a.end()};
}

// ---- checkpoint i/o ----

inline void save_checkpoint(const SurrogateModel& m, const std::string& path) {
    nlohmann::json j;
    j["format"] = "eatvul-surrogate/1";
    j["config"] = {{"embed_dim", m.config.embed_dim},
                   {"hidden_dim", m.config.hidden_dim},
                   {"d_k", m.config.d_k},
                   {"max_seq_len", m.config.max_seq_len},
                   {"epochs", m.config.epochs},
                   {"learning_rate", m.config.learning_rate},
                   {"batch_size", m.config.batch_size},
                   {"seed", m.config.seed}};
    j["vocab_hash"] = m.vocab_hash;
    j["vocab_size"] = m.vocab_size;
    j["eval_loss"] = m.eval_loss;
    nlohmann::json params;
    for (const auto& [name, p] : m.params()) {
        params[name] = {{"rows", p->rows}, {"cols", p->cols}, {"data", p->a}};
    }
    j["params"] = std::move(params);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << j.dump() << "\n";
}

inline SurrogateModel load_checkpoint(const std::string& path, const Vocabulary& vocab) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    nlohmann::json j;
    in >> j;
    if (j.value("format", "") != std::string("eatvul-surrogate/1"))
        throw std::runtime_error("unrecognized checkpoint format in " + path);
    SurrogateModel m;
    const auto& c = j.at("config");
    m.config.embed_dim = c.at("embed_dim").get<int>();
    m.config.hidden_dim = c.at("hidden_dim").get<int>();
    m.config.d_k = c.at("d_k").get<int>();
    m.config.max_seq_len = c.at("max_seq_len").get<int>();
    m.config.epochs = c.at("epochs").get<int>();
    m.config.learning_rate = c.at("learning_rate").get<double>();
    m.config.batch_size = c.at("batch_size").get<int>();
    m.config.seed = c.at("seed").get<std::uint64_t>();
    m.vocab_hash = j.at("vocab_hash").get<std::uint64_t>();
    m.vocab_size = j.at("vocab_size").get<int>();
    m.eval_loss = j.at("eval_loss").get<std::vector<double>>();
    if (m.vocab_hash != vocab.hash())
        throw std::runtime_error("checkpoint vocabulary hash mismatch: " + path);
    for (auto& [name, p] : m.params()) {
        const auto& pj = j.at("params").at(name);
        *p = Mat(pj.at("rows").get<int>(), pj.at("cols").get<int>(),
                 pj.at("data").get<std::vector<double>>());
    }
    return m;
}

}  // namespace eatvul
