#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "eatvul/lexer.hpp"
#include "eatvul/rng.hpp"

namespace eatvul {

enum class Label { vulnerable, nonvulnerable };

inline std::string to_string(Label l) {
    return l == Label::vulnerable ? "vulnerable" : "nonvulnerable";
}

inline Label label_from_string(const std::string& s) {
    if (s == "vulnerable") return Label::vulnerable;
    if (s == "nonvulnerable") return Label::nonvulnerable;
    throw std::invalid_argument("unknown label: " + s);
}

// One labeled source function. `tokens` stays empty until tokenize() runs.
struct CodeSample {
    std::string id;
    std::string source;
    Label label = Label::nonvulnerable;
    Language language = Language::c;
    std::vector<std::string> tokens;
};

inline void tokenize(CodeSample& s) { s.tokens = tokenize(s.source, s.language); }

inline void tokenize_all(std::vector<CodeSample>& samples) {
    for (auto& s : samples) tokenize(s);
}

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// JSON-lines loader: one record per line with id/source/label/language.
// Nothing is dropped silently; any malformed line aborts with its number.
inline std::vector<CodeSample> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path);
    std::vector<CodeSample> out;
    std::string line;
    std::size_t lineno = 0;
    std::map<std::string, std::size_t> seen_ids;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ": line " + std::to_string(lineno) +
                             ": malformed JSON: " + e.what());
        }
        CodeSample s;
        try {
            s.id = j.at("id").get<std::string>();
            s.source = j.at("source").get<std::string>();
            s.label = label_from_string(j.at("label").get<std::string>());
            s.language = language_from_string(j.at("language").get<std::string>());
        } catch (const std::exception& e) {
            throw ParseError(path + ": line " + std::to_string(lineno) +
                             ": invalid record: " + e.what());
        }
        if (auto [it, inserted] = seen_ids.emplace(s.id, lineno); !inserted) {
            throw ParseError(path + ": line " + std::to_string(lineno) +
                             ": duplicate id '" + s.id + "' (first seen on line " +
                             std::to_string(it->second) + ")");
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline void save_dataset(const std::vector<CodeSample>& samples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write dataset file: " + path);
    for (const auto& s : samples) {
        nlohmann::json j{{"id", s.id},
                         {"source", s.source},
                         {"label", to_string(s.label)},
                         {"language", to_string(s.language)}};
        out << j.dump() << "\n";
    }
}

// Token -> index map with reserved slots: 0 = padding, 1 = unknown.
// doc_freq keeps counts for every token seen at build time, including the
// ones dropped by the min_doc_freq floor.
struct Vocabulary {
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;

    std::map<std::string, int> token_to_index;
    std::map<std::string, int> doc_freq;
    int min_doc_freq = 1;

    int size() const { return static_cast<int>(token_to_index.size()) + 2; }

    int encode(const std::string& token) const {
        auto it = token_to_index.find(token);
        return it == token_to_index.end() ? kUnk : it->second;
    }

    std::vector<int> encode(const std::vector<std::string>& tokens) const {
        std::vector<int> ids;
        ids.reserve(tokens.size());
        for (const auto& t : tokens) ids.push_back(encode(t));
        return ids;
    }

    int frequency(const std::string& token) const {
        auto it = doc_freq.find(token);
        return it == doc_freq.end() ? 0 : it->second;
    }

    std::uint64_t hash() const {
        std::uint64_t h = fnv1a("eatvul-vocab");
        for (const auto& [tok, idx] : token_to_index) {
            h = fnv1a(tok, h);
            h = fnv1a(std::to_string(idx), h);
        }
        return h;
    }
};

inline Vocabulary build_vocab(const std::vector<CodeSample>& samples, int min_doc_freq = 1) {
    if (min_doc_freq < 1) throw std::invalid_argument("min_doc_freq must be >= 1");
    Vocabulary v;
    v.min_doc_freq = min_doc_freq;
    for (const auto& s : samples) {
        std::map<std::string, bool> in_sample;
        for (const auto& t : s.tokens) in_sample[t] = true;
        for (const auto& [tok, _] : in_sample) ++v.doc_freq[tok];
    }
    int next = 2;
    for (const auto& [tok, df] : v.doc_freq) {
        if (df >= min_doc_freq) v.token_to_index[tok] = next++;
    }
    return v;
}

struct DatasetSplit {
    std::vector<CodeSample> train;
    std::vector<CodeSample> eval;
    std::vector<CodeSample> test;
    std::array<double, 3> fractions{0.70, 0.15, 0.15};
    std::uint64_t seed = 0;
};

namespace detail {

// Largest-remainder allocation of `total` items over `fractions`.
inline std::array<int, 3> largest_remainder(double total, const std::array<double, 3>& fr, int want) {
    std::array<int, 3> alloc{};
    std::array<double, 3> rem{};
    int used = 0;
    for (int p = 0; p < 3; ++p) {
        const double q = total * fr[p];
        alloc[p] = static_cast<int>(std::floor(q));
        rem[p] = q - alloc[p];
        used += alloc[p];
    }
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int x, int y) {
        if (rem[x] != rem[y]) return rem[x] > rem[y];
        return x < y;
    });
    for (int k = 0; used < want; ++k, ++used) ++alloc[order[static_cast<std::size_t>(k) % 3]];
    return alloc;
}

}  // namespace detail

// Deterministic stratified split. Each class is allocated by largest
// remainder; a correction pass then reconciles the global partition sizes
// with the same rule so both the global sizes and the per-class ratios stay
// within one sample of the requested fractions.
inline DatasetSplit split(const std::vector<CodeSample>& samples, std::uint64_t seed,
                          std::array<double, 3> fractions = {0.70, 0.15, 0.15}) {
    const double sum = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1.0");
    for (double f : fractions)
        if (f < 0.0) throw std::invalid_argument("split fractions must be non-negative");
    if (samples.size() < 3) throw std::invalid_argument("split needs at least 3 samples");

    const int n = static_cast<int>(samples.size());
    std::array<std::vector<int>, 2> by_class;  // 0 = vulnerable, 1 = nonvulnerable
    for (int i = 0; i < n; ++i) {
        by_class[samples[static_cast<std::size_t>(i)].label == Label::vulnerable ? 0 : 1].push_back(i);
    }

    const std::array<int, 3> target = detail::largest_remainder(n, fractions, n);

    // per-class allocation, shuffled deterministically
    std::array<std::array<std::vector<int>, 3>, 2> parts;  // [class][partition] -> indices
    for (int c = 0; c < 2; ++c) {
        auto& members = by_class[static_cast<std::size_t>(c)];
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(c) + 17));
        rng.shuffle(members);
        const int cn = static_cast<int>(members.size());
        const std::array<int, 3> alloc = detail::largest_remainder(cn, fractions, cn);
        int pos = 0;
        for (int p = 0; p < 3; ++p) {
            for (int k = 0; k < alloc[p]; ++k)
                parts[static_cast<std::size_t>(c)][static_cast<std::size_t>(p)].push_back(members[static_cast<std::size_t>(pos++)]);
        }
    }

    // reconcile global partition sizes (at most a couple of single moves)
    auto part_size = [&](int p) {
        return static_cast<int>(parts[0][static_cast<std::size_t>(p)].size() +
                                parts[1][static_cast<std::size_t>(p)].size());
    };
    for (int guard = 0; guard < 8; ++guard) {
        int over = -1, under = -1;
        for (int p = 0; p < 3; ++p) {
            if (part_size(p) > target[p] && over < 0) over = p;
            if (part_size(p) < target[p] && under < 0) under = p;
        }
        if (over < 0 || under < 0) break;
        // move one sample of whichever class over-fills `over` the most
        // relative to its own ideal share, so stratification stays within +-1
        const double dev0 = static_cast<double>(parts[0][static_cast<std::size_t>(over)].size()) -
                            static_cast<double>(by_class[0].size()) * fractions[static_cast<std::size_t>(over)];
        const double dev1 = static_cast<double>(parts[1][static_cast<std::size_t>(over)].size()) -
                            static_cast<double>(by_class[1].size()) * fractions[static_cast<std::size_t>(over)];
        int cls = dev0 >= dev1 ? 0 : 1;
        if (parts[static_cast<std::size_t>(cls)][static_cast<std::size_t>(over)].empty()) cls = 1 - cls;
        auto& src = parts[static_cast<std::size_t>(cls)][static_cast<std::size_t>(over)];
        parts[static_cast<std::size_t>(cls)][static_cast<std::size_t>(under)].push_back(src.back());
        src.pop_back();
    }

    DatasetSplit out;
    out.fractions = fractions;
    out.seed = seed;
    std::array<std::vector<CodeSample>*, 3> dst{&out.train, &out.eval, &out.test};
    for (int p = 0; p < 3; ++p) {
        for (int c = 0; c < 2; ++c) {
            for (int idx : parts[static_cast<std::size_t>(c)][static_cast<std::size_t>(p)])
                dst[static_cast<std::size_t>(p)]->push_back(samples[static_cast<std::size_t>(idx)]);
        }
    }
    return out;
}

}  // namespace eatvul
