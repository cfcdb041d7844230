#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "eatvul/corpus.hpp"
#include "eatvul/surrogate.hpp"
#include "eatvul/svm.hpp"

namespace eatvul {

enum class KeywordCategory { DataType, ControlStatement, StorageClass, InputOutput, Miscellaneous, Other };

inline std::string to_string(KeywordCategory c) {
    switch (c) {
        case KeywordCategory::DataType: return "DataType";
        case KeywordCategory::ControlStatement: return "ControlStatement";
        case KeywordCategory::StorageClass: return "StorageClass";
        case KeywordCategory::InputOutput: return "InputOutput";
        case KeywordCategory::Miscellaneous: return "Miscellaneous";
        case KeywordCategory::Other: return "Other";
    }
    return "Other";
}

inline KeywordCategory keyword_category_from_string(const std::string& s) {
    if (s == "DataType") return KeywordCategory::DataType;
    if (s == "ControlStatement") return KeywordCategory::ControlStatement;
    if (s == "StorageClass") return KeywordCategory::StorageClass;
    if (s == "InputOutput") return KeywordCategory::InputOutput;
    if (s == "Miscellaneous") return KeywordCategory::Miscellaneous;
    if (s == "Other") return KeywordCategory::Other;
    throw std::invalid_argument("unknown keyword category: " + s);
}

// Table-driven keyword categorization; total, with Other as fallback.
// `const` counts as data-type related, matching its use alongside type
// qualifiers in declarations.
inline KeywordCategory categorize(const std::string& token) {
    static const std::map<std::string, KeywordCategory> table = {
        {"int", KeywordCategory::DataType},      {"float", KeywordCategory::DataType},
        {"double", KeywordCategory::DataType},   {"char", KeywordCategory::DataType},
        {"short", KeywordCategory::DataType},    {"long", KeywordCategory::DataType},
        {"signed", KeywordCategory::DataType},   {"unsigned", KeywordCategory::DataType},
        {"void", KeywordCategory::DataType},     {"bool", KeywordCategory::DataType},
        {"_Bool", KeywordCategory::DataType},    {"struct", KeywordCategory::DataType},
        {"union", KeywordCategory::DataType},    {"enum", KeywordCategory::DataType},
        {"const", KeywordCategory::DataType},    {"volatile", KeywordCategory::DataType},
        {"size_t", KeywordCategory::DataType},
        {"if", KeywordCategory::ControlStatement},     {"else", KeywordCategory::ControlStatement},
        {"switch", KeywordCategory::ControlStatement}, {"case", KeywordCategory::ControlStatement},
        {"default", KeywordCategory::ControlStatement},{"for", KeywordCategory::ControlStatement},
        {"while", KeywordCategory::ControlStatement},  {"do", KeywordCategory::ControlStatement},
        {"goto", KeywordCategory::ControlStatement},
        {"auto", KeywordCategory::StorageClass},   {"extern", KeywordCategory::StorageClass},
        {"static", KeywordCategory::StorageClass}, {"register", KeywordCategory::StorageClass},
        {"typedef", KeywordCategory::StorageClass},
        {"printf", KeywordCategory::InputOutput},  {"scanf", KeywordCategory::InputOutput},
        {"sscanf", KeywordCategory::InputOutput},  {"sprintf", KeywordCategory::InputOutput},
        {"snprintf", KeywordCategory::InputOutput},{"fprintf", KeywordCategory::InputOutput},
        {"fscanf", KeywordCategory::InputOutput},  {"puts", KeywordCategory::InputOutput},
        {"gets", KeywordCategory::InputOutput},    {"fgets", KeywordCategory::InputOutput},
        {"fputs", KeywordCategory::InputOutput},   {"getchar", KeywordCategory::InputOutput},
        {"putchar", KeywordCategory::InputOutput}, {"fopen", KeywordCategory::InputOutput},
        {"fclose", KeywordCategory::InputOutput},  {"fread", KeywordCategory::InputOutput},
        {"fwrite", KeywordCategory::InputOutput},  {"perror", KeywordCategory::InputOutput},
        {"sizeof", KeywordCategory::Miscellaneous}, {"return", KeywordCategory::Miscellaneous},
        {"break", KeywordCategory::Miscellaneous},  {"continue", KeywordCategory::Miscellaneous},
        {"typeof", KeywordCategory::Miscellaneous},
    };
    auto it = table.find(token);
    return it == table.end() ? KeywordCategory::Other : it->second;
}

struct ImportantFeature {
    std::string token;
    double score = 0.0;  // averaged attention weight over occurrences
    KeywordCategory category = KeywordCategory::Other;
    int doc_freq = 0;
};

namespace detail {

// Candidate generation keywords are identifier-shaped tokens; operators,
// punctuation and the NUM/STR sentinels are unusable in prompts.
inline bool usable_feature_token(const std::string& t) {
    if (t.empty() || t == "NUM" || t == "STR") return false;
    return is_ident_start(t[0]);
}

}  // namespace detail

// Averaged attention over the important samples, filtered by document
// frequency, top_n by score with lexicographic tie-break. Occurrence weights
// are sorted before summing so the result does not depend on sample order.
inline std::vector<ImportantFeature> rank_features(const SurrogateModel& model,
                                                   const Vocabulary& vocab,
                                                   const std::vector<CodeSample>& samples,
                                                   const ImportantSampleSet& important,
                                                   int top_n, int min_doc_freq) {
    if (top_n < 1) throw std::invalid_argument("rank_features: top_n must be >= 1");
    if (important.indices.empty()) throw std::invalid_argument("rank_features: empty important sample set");

    std::map<std::string, std::vector<double>> occ_weights;
    for (int idx : important.indices) {
        const CodeSample& s = samples.at(static_cast<std::size_t>(idx));
        const AttentionMap att = attention_scores(model, vocab, s);
        const std::size_t n = std::min(att.weights.size(), s.tokens.size());
        for (std::size_t t = 0; t < n; ++t) {
            const std::string& tok = s.tokens[t];
            if (!detail::usable_feature_token(tok)) continue;
            if (vocab.encode(tok) == Vocabulary::kUnk) continue;
            if (vocab.frequency(tok) < min_doc_freq) continue;
            occ_weights[tok].push_back(att.weights[t]);
        }
    }

    std::vector<ImportantFeature> feats;
    for (auto& [tok, ws] : occ_weights) {
        std::sort(ws.begin(), ws.end());
        const double sum = std::accumulate(ws.begin(), ws.end(), 0.0);
        ImportantFeature f;
        f.token = tok;
        f.score = sum / static_cast<double>(ws.size());
        f.category = categorize(tok);
        f.doc_freq = vocab.frequency(tok);
        feats.push_back(std::move(f));
    }
    std::sort(feats.begin(), feats.end(), [](const ImportantFeature& a, const ImportantFeature& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.token < b.token;
    });
    if (static_cast<int>(feats.size()) > top_n) feats.resize(static_cast<std::size_t>(top_n));
    return feats;
}

inline nlohmann::json features_to_json(const std::vector<ImportantFeature>& feats) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& f : feats) {
        arr.push_back({{"token", f.token},
                       {"score", f.score},
                       {"category", to_string(f.category)},
                       {"doc_freq", f.doc_freq}});
    }
    return arr;
}

inline std::vector<ImportantFeature> features_from_json(const nlohmann::json& arr) {
    std::vector<ImportantFeature> out;
    for (const auto& j : arr) {
        ImportantFeature f;
        f.token = j.at("token").get<std::string>();
        f.score = j.at("score").get<double>();
        f.category = keyword_category_from_string(j.at("category").get<std::string>());
        f.doc_freq = j.at("doc_freq").get<int>();
        out.push_back(std::move(f));
    }
    return out;
}

}  // namespace eatvul
