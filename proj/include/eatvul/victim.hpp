#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "eatvul/corpus.hpp"
#include "eatvul/surrogate.hpp"

namespace eatvul {

// Black-box victim interface: a probability per query and a query counter,
// nothing else. predict() is non-virtual so the counter increments exactly
// once per call no matter how the oracle is implemented.
class VictimOracle {
public:
    enum class Concurrency { serial, concurrent_safe };

    virtual ~VictimOracle() = default;

    double predict(const CodeSample& sample) {
        queries_.fetch_add(1, std::memory_order_relaxed);
        return do_predict(sample);
    }

    std::uint64_t query_count() const { return queries_.load(std::memory_order_relaxed); }

    virtual Concurrency concurrency() const = 0;

protected:
    virtual double do_predict(const CodeSample& sample) = 0;

private:
    std::atomic<std::uint64_t> queries_{0};
};

// Logistic model over summed token weights. The canonical desk-scale victim:
// with hand-set weights its optimal adversarial token set is known in closed
// form, which the FGA tests exploit.
class BagOfTokensVictim : public VictimOracle {
public:
    BagOfTokensVictim() = default;
    BagOfTokensVictim(std::map<std::string, double> weights, double bias)
        : weights_(std::move(weights)), bias_(bias) {}

    Concurrency concurrency() const override { return Concurrency::concurrent_safe; }

    double score(const CodeSample& sample) const {
        const std::vector<std::string> toks =
            sample.tokens.empty() ? tokenize(sample.source, sample.language) : sample.tokens;
        double s = bias_;
        for (const auto& t : toks) {
            auto it = weights_.find(t);
            if (it != weights_.end()) s += it->second;
        }
        return s;
    }

    const std::map<std::string, double>& weights() const { return weights_; }
    double bias() const { return bias_; }

    void save(const std::string& path) const {
        nlohmann::json j{{"format", "eatvul-bow-victim/1"}, {"weights", weights_}, {"bias", bias_}};
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write victim file: " + path);
        out << j.dump() << "\n";
    }

    static BagOfTokensVictim load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open victim file: " + path);
        nlohmann::json j;
        in >> j;
        if (j.value("format", "") != std::string("eatvul-bow-victim/1"))
            throw std::runtime_error("unrecognized victim file format: " + path);
        return BagOfTokensVictim(j.at("weights").get<std::map<std::string, double>>(),
                                 j.at("bias").get<double>());
    }

protected:
    double do_predict(const CodeSample& sample) override {
        return 1.0 / (1.0 + std::exp(-score(sample)));
    }

private:
    std::map<std::string, double> weights_;
    double bias_ = 0.0;
};

struct BowTrainConfig {
    int iterations = 200;
    double learning_rate = 0.5;
    std::uint64_t seed = 1;
};

// Logistic regression on token counts by plain gradient descent.
inline BagOfTokensVictim train_bow_victim(const DatasetSplit& split, const Vocabulary& vocab,
                                          const BowTrainConfig& cfg = {}) {
    bool pos = false, neg = false;
    for (const auto& s : split.train) (s.label == Label::vulnerable ? pos : neg) = true;
    if (!pos || !neg)
        throw std::invalid_argument("train_bow_victim: training set must contain both classes");

    std::vector<std::map<std::string, int>> counts;
    std::vector<int> y;
    for (const auto& s : split.train) {
        std::map<std::string, int> c;
        for (const auto& t : s.tokens)
            if (vocab.encode(t) != Vocabulary::kUnk) ++c[t];
        counts.push_back(std::move(c));
        y.push_back(s.label == Label::vulnerable ? 1 : 0);
    }

    std::map<std::string, double> w;
    double b = 0.0;
    const double n = static_cast<double>(counts.size());
    for (int it = 0; it < cfg.iterations; ++it) {
        std::map<std::string, double> gw;
        double gb = 0.0;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            double s = b;
            for (const auto& [tok, c] : counts[i]) {
                auto itw = w.find(tok);
                if (itw != w.end()) s += itw->second * c;
            }
            const double p = 1.0 / (1.0 + std::exp(-s));
            const double err = p - y[i];
            for (const auto& [tok, c] : counts[i]) gw[tok] += err * c;
            gb += err;
        }
        for (const auto& [tok, g] : gw) w[tok] -= cfg.learning_rate * g / n;
        b -= cfg.learning_rate * gb / n;
    }
    return BagOfTokensVictim(std::move(w), b);
}

// Self-attack oracle: the surrogate wrapped behind the victim interface.
class SurrogateVictim : public VictimOracle {
public:
    SurrogateVictim(const SurrogateModel& model, const Vocabulary& vocab)
        : model_(model), vocab_(vocab) {}

    Concurrency concurrency() const override { return Concurrency::concurrent_safe; }

protected:
    double do_predict(const CodeSample& sample) override {
        if (!sample.tokens.empty()) return predict_proba(model_, vocab_, sample);
        CodeSample s = sample;
        tokenize(s);
        return predict_proba(model_, vocab_, s);
    }

private:
    const SurrogateModel& model_;
    const Vocabulary& vocab_;
};

inline std::unique_ptr<VictimOracle> surrogate_as_victim(const SurrogateModel& model,
                                                         const Vocabulary& vocab) {
    return std::make_unique<SurrogateVictim>(model, vocab);
}

struct QueryBudgetExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Enforces an exact query budget around any oracle.
class BudgetedOracle : public VictimOracle {
public:
    BudgetedOracle(VictimOracle& inner, std::uint64_t budget) : inner_(inner), budget_(budget) {}

    Concurrency concurrency() const override { return inner_.concurrency(); }

protected:
    double do_predict(const CodeSample& sample) override {
        if (query_count() > budget_)
            throw QueryBudgetExceeded("query budget of " + std::to_string(budget_) + " exhausted");
        return inner_.predict(sample);
    }

private:
    VictimOracle& inner_;
    std::uint64_t budget_;
};

}  // namespace eatvul
