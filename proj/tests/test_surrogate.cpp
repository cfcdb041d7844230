#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "eatvul/surrogate.hpp"
#include "eatvul/synthbench.hpp"
#include "support/temp.hpp"

using namespace eatvul;

namespace {

struct World {
    std::vector<CodeSample> samples;
    DatasetSplit split_;
    Vocabulary vocab;
    SurrogateConfig config;
};

// small separable corpus with a desk-sized surrogate config
World make_world(int n_per_class = 20, int epochs = 25) {
    World w;
    SynthBenchConfig cfg;
    cfg.n_vulnerable = n_per_class;
    cfg.n_nonvulnerable = n_per_class;
    w.samples = make_synthetic_corpus(cfg);
    tokenize_all(w.samples);
    w.split_ = split(w.samples, 5);
    w.vocab = build_vocab(w.split_.train, 2);
    w.config.embed_dim = 12;
    w.config.hidden_dim = 8;
    w.config.d_k = 10;
    w.config.epochs = epochs;
    w.config.learning_rate = 0.15;
    w.config.batch_size = 8;
    w.config.seed = 3;
    return w;
}

double eval_accuracy(const SurrogateModel& m, const Vocabulary& vocab,
                     const std::vector<CodeSample>& samples) {
    int hits = 0;
    for (const auto& s : samples) {
        const double p = predict_proba(m, vocab, s);
        const bool pred_vuln = p >= 0.5;
        hits += pred_vuln == (s.label == Label::vulnerable);
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

}  // namespace

TEST_CASE("surrogate learns a separable corpus") {
    World w = make_world();
    const SurrogateModel m = train(w.split_, w.vocab, w.config);
    REQUIRE(m.all_finite());
    CHECK(eval_accuracy(m, w.vocab, w.split_.eval) >= 0.9);
    CHECK(m.eval_loss.size() == static_cast<std::size_t>(w.config.epochs));

    // held-out vulnerable sample scores above the decision threshold
    for (const auto& s : w.split_.test) {
        if (s.label == Label::vulnerable) {
            CHECK(predict_proba(m, w.vocab, s) > 0.5);
            break;
        }
    }
}

TEST_CASE("zero-epoch surrogate predicts near-uniform on average") {
    World w = make_world(10, 0);
    const SurrogateModel m = train(w.split_, w.vocab, w.config);
    double mean = 0.0;
    for (const auto& s : w.split_.train) mean += predict_proba(m, w.vocab, s);
    mean /= static_cast<double>(w.split_.train.size());
    CHECK(std::abs(mean - 0.5) < 0.1);
}

TEST_CASE("training is deterministic for a fixed seed") {
    World w = make_world(8, 4);
    const SurrogateModel a = train(w.split_, w.vocab, w.config);
    const SurrogateModel b = train(w.split_, w.vocab, w.config);
    for (std::size_t i = 0; i < a.params().size(); ++i) {
        CHECK(*a.params()[i].second == *b.params()[i].second);
    }
    CHECK(a.eval_loss == b.eval_loss);
}

TEST_CASE("probabilities lie in [0,1] and the two classes sum to 1") {
    World w = make_world(8, 3);
    const SurrogateModel m = train(w.split_, w.vocab, w.config);
    for (const auto& s : w.split_.eval) {
        const double p = predict_proba(m, w.vocab, s);
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        const auto ids = detail::encode_for_model(m, w.vocab, s);
        const Mat probs = detail::run_forward(m, ids).probs;
        CHECK(std::abs(probs(0, 0) + probs(0, 1) - 1.0) < 1e-6);
    }
}

TEST_CASE("surrogate rejects bad inputs") {
    World w = make_world(6, 1);
    DatasetSplit single;
    for (const auto& s : w.split_.train)
        if (s.label == Label::vulnerable) single.train.push_back(s);
    CHECK_THROWS_WITH(train(single, w.vocab, w.config),
                      Catch::Matchers::ContainsSubstring("both classes"));

    const SurrogateModel m = train(w.split_, w.vocab, w.config);
    CodeSample empty;
    empty.id = "empty";
    CHECK_THROWS_WITH(predict_proba(m, w.vocab, empty),
                      Catch::Matchers::ContainsSubstring("empty token list"));
}

TEST_CASE("attention weights form a distribution") {
    World w = make_world(8, 3);
    const SurrogateModel m = train(w.split_, w.vocab, w.config);

    CodeSample one;
    one.id = "one";
    one.tokens = {"int"};
    const AttentionMap single = attention_scores(m, w.vocab, one);
    REQUIRE(single.weights.size() == 1);
    CHECK(single.weights[0] == Catch::Approx(1.0));

    Rng rng(99);
    std::vector<std::string> all;
    for (const auto& [tok, idx] : w.vocab.token_to_index) all.push_back(tok);
    for (int trial = 0; trial < 100; ++trial) {
        CodeSample s;
        s.id = "r" + std::to_string(trial);
        const std::size_t len = 1 + rng.uniform_index(40);
        for (std::size_t i = 0; i < len; ++i) s.tokens.push_back(all[rng.uniform_index(all.size())]);
        const AttentionMap att = attention_scores(m, w.vocab, s);
        REQUIRE(att.weights.size() == len);
        double sum = 0.0;
        for (double v : att.weights) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("attention concentrates on the class-marker tokens") {
    World w = make_world(20, 25);
    const SurrogateModel m = train(w.split_, w.vocab, w.config);
    double marker_sum = 0.0, filler_sum = 0.0;
    long marker_n = 0, filler_n = 0;
    int used = 0;
    for (const auto& s : w.samples) {
        if (s.label != Label::vulnerable) continue;
        ++used;
        const AttentionMap att = attention_scores(m, w.vocab, s);
        const std::size_t n = std::min(att.weights.size(), s.tokens.size());
        for (std::size_t t = 0; t < n; ++t) {
            if (s.tokens[t] == "memcpy" || s.tokens[t] == "memmove") {
                marker_sum += att.weights[t];
                ++marker_n;
            } else {
                filler_sum += att.weights[t];
                ++filler_n;
            }
        }
    }
    REQUIRE(used >= 20);
    CHECK(marker_sum / static_cast<double>(marker_n) >
          filler_sum / static_cast<double>(filler_n));
}

TEST_CASE("final representation is stable and fixed-width") {
    World w = make_world(12, 20);
    const SurrogateModel m = train(w.split_, w.vocab, w.config);

    const auto a = final_representation(m, w.vocab, w.split_.train[0]);
    const auto b = final_representation(m, w.vocab, w.split_.train[0]);
    CHECK(a == b);

    for (const auto& s : w.split_.train) {
        CHECK(final_representation(m, w.vocab, s).size() ==
              static_cast<std::size_t>(w.config.d_k));
    }
}

TEST_CASE("inputs beyond max_seq_len are truncated, never rejected") {
    World w = make_world(6, 2);
    w.config.max_seq_len = 8;
    const SurrogateModel m = train(w.split_, w.vocab, w.config);
    CodeSample s;
    s.id = "long";
    for (int i = 0; i < 100; ++i) s.tokens.push_back("int");
    CHECK_NOTHROW(predict_proba(m, w.vocab, s));
    CHECK(attention_scores(m, w.vocab, s).weights.size() == 8);
}

TEST_CASE("analytic gradients match central finite differences") {
    // tiny double-precision model over a short input
    std::vector<CodeSample> samples;
    for (int i = 0; i < 4; ++i) {
        CodeSample s;
        s.id = "s" + std::to_string(i);
        s.label = i % 2 ? Label::vulnerable : Label::nonvulnerable;
        s.source = i % 2 ? "memcpy(a, b, n);" : "static int a = 0;";
        tokenize(s);
        samples.push_back(std::move(s));
    }
    const Vocabulary vocab = build_vocab(samples, 1);
    SurrogateConfig cfg;
    cfg.embed_dim = 4;
    cfg.hidden_dim = 3;
    cfg.d_k = 4;
    cfg.epochs = 0;
    cfg.seed = 17;
    SurrogateModel m = init_surrogate(vocab, cfg);
    // nudge away from the symmetric init
    Rng rng(5);
    for (auto& [name, p] : m.params())
        for (double& v : p->a) v += rng.uniform(-0.05, 0.05);

    const std::vector<int> ids = vocab.encode(samples[0].tokens);
    REQUIRE(ids.size() <= 8);
    const int label = kVulnerableIndex;

    std::vector<Mat> grads = detail::zero_grads(m);
    surrogate_loss(m, ids, label, &grads);

    const double h = 1e-6;
    auto params = m.params();
    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Mat* p = params[pi].second;
        for (std::size_t k = 0; k < p->a.size(); ++k) {
            const double orig = p->a[k];
            p->a[k] = orig + h;
            const double up = surrogate_loss(m, ids, label);
            p->a[k] = orig - h;
            const double down = surrogate_loss(m, ids, label);
            p->a[k] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = grads[pi].a[k];
            const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
            worst = std::max(worst, std::abs(numeric - analytic) / denom);
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("checkpoints round-trip and reject vocabulary mismatches") {
    testsupport::TempDir tmp;
    World w = make_world(6, 2);
    const SurrogateModel m = train(w.split_, w.vocab, w.config);
    save_checkpoint(m, tmp.file("m.ckpt"));
    const SurrogateModel r = load_checkpoint(tmp.file("m.ckpt"), w.vocab);
    for (std::size_t i = 0; i < m.params().size(); ++i)
        CHECK(*m.params()[i].second == *r.params()[i].second);
    CHECK(r.eval_loss == m.eval_loss);

    Vocabulary other = w.vocab;
    other.token_to_index["bogus_token_xyz"] = other.size();
    CHECK_THROWS_WITH(load_checkpoint(tmp.file("m.ckpt"), other),
                      Catch::Matchers::ContainsSubstring("hash mismatch"));
}
