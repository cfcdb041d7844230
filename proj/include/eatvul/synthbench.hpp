#pragma once

#include <string>
#include <vector>

#include "eatvul/corpus.hpp"
#include "eatvul/rng.hpp"
#include "eatvul/victim.hpp"

namespace eatvul {

// Bundled synthetic benchmark: a separable corpus plus a fixed-weight
// bag-of-tokens victim whose adversarial arithmetic is known in closed form.
//
// Non-vulnerable functions are rich in {int, char, static, const, register,
// sscanf, sizeof, for}; vulnerable ones avoid every weighted token and carry
// memcpy (and sometimes memmove). Under the victim weights below a light
// vulnerable sample sits at logit 3.75 and a heavy one at 7.75, while any
// generated snippet contributes between 2.0 and 5.25 of negative mass, so
// two snippets always flip the light cases and four flip everything.
struct SynthBenchConfig {
    int n_vulnerable = 150;
    int n_nonvulnerable = 150;
    std::uint64_t seed = 11;
    int heavy_period = 7;  // every heavy_period-th vulnerable sample is heavy
};

inline BagOfTokensVictim make_synthetic_victim() {
    std::map<std::string, double> w{
        {"memcpy", 4.25},  {"memmove", 4.0},  {"int", -1.25},   {"char", -0.75},
        {"static", -0.75}, {"const", -0.75},  {"register", -0.75},
        {"sscanf", -0.75}, {"sizeof", -0.75},
    };
    return BagOfTokensVictim(std::move(w), -0.5);
}

inline std::vector<CodeSample> make_synthetic_corpus(const SynthBenchConfig& cfg = {}) {
    std::vector<CodeSample> out;
    Rng rng(mix_seed(cfg.seed, fnv1a("synth-corpus")));

    for (int i = 0; i < cfg.n_nonvulnerable; ++i) {
        const std::string n = std::to_string(i);
        const int bound = 2 + static_cast<int>(rng.uniform_index(7));
        CodeSample s;
        s.id = "safe-" + n;
        s.label = Label::nonvulnerable;
        s.language = Language::c;
        s.source =
            "int summarize_" + n + "(int first_" + n + ", int second_" + n + ") {\n"
            "    static int cache_" + n + " = 0;\n"
            "    const int step_" + n + " = " + std::to_string(bound) + ";\n"
            "    register int fast_" + n + " = first_" + n + ";\n"
            "    char tag_" + n + " = 'x';\n"
            "    int total_" + n + " = 0;\n"
            "    for (int walk_" + n + " = 0; walk_" + n + " < second_" + n + "; ++walk_" + n + ") {\n"
            "        total_" + n + " += step_" + n + " + fast_" + n + ";\n"
            "    }\n"
            "    sscanf(\"7\", \"%d\", &total_" + n + ");\n"
            "    total_" + n + " += (int) sizeof(total_" + n + ");\n"
            "    cache_" + n + " = total_" + n + " + tag_" + n + ";\n"
            "    return total_" + n + ";\n"
            "}\n";
        out.push_back(std::move(s));
    }

    for (int i = 0; i < cfg.n_vulnerable; ++i) {
        const std::string n = std::to_string(i);
        const bool heavy = cfg.heavy_period > 0 && i % cfg.heavy_period == 0;
        const int chunk = 4 + static_cast<int>(rng.uniform_index(12));
        CodeSample s;
        s.id = "vuln-" + n;
        s.label = Label::vulnerable;
        s.language = Language::c;
        s.source =
            "void drain_buffer_" + n + "(void *sink_" + n + ", void *well_" + n +
            ", unsigned long depth_" + n + ") {\n"
            "    unsigned long left_" + n + " = depth_" + n + ";\n"
            "    while (left_" + n + " > " + std::to_string(chunk) + ") {\n"
            "        left_" + n + " -= " + std::to_string(chunk) + ";\n"
            "    }\n" +
            (heavy ? "    memmove(sink_" + n + ", well_" + n + ", left_" + n + ");\n" : "") +
            "    memcpy(sink_" + n + ", well_" + n + ", depth_" + n + ");\n"
            "    return;\n"
            "}\n";
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace eatvul
