#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "eatvul/snippet.hpp"

namespace eatvul {

struct PoolRejection : std::runtime_error {
    std::vector<std::string> failures;
    PoolRejection(const std::string& msg, std::vector<std::string> fails)
        : std::runtime_error(msg), failures(std::move(fails)) {}
};

// Persisted collection of validated snippets, indexed by the categories of
// their keywords. Append-only: ids are stable and version only grows.
struct AttackPool {
    std::map<std::string, Snippet> snippets;
    std::map<KeywordCategory, std::vector<std::string>> by_category;
    int version = 0;

    bool empty() const { return snippets.empty(); }
    std::size_t size() const { return snippets.size(); }

    const Snippet& at(const std::string& id) const {
        auto it = snippets.find(id);
        if (it == snippets.end()) throw std::out_of_range("pool has no snippet " + id);
        return it->second;
    }

    // Validates against `host` and stores; rejects duplicates of stored text.
    std::string add(const Snippet& snippet, const CodeSample& host) {
        ValidationReport rep = validate_snippet(snippet, host);
        if (!rep.passed) {
            std::string msg = "pool rejected snippet:";
            for (const auto& f : rep.failures) msg += " [" + f + "]";
            throw PoolRejection(msg, rep.failures);
        }
        const std::string norm = normalized_text(snippet);
        for (const auto& [id, s] : snippets) {
            if (normalized_text(s) == norm)
                throw PoolRejection("pool rejected snippet: [duplicate of " + id + "]", {"duplicate"});
        }
        ++version;
        char buf[16];
        std::snprintf(buf, sizeof buf, "sn-%04d", version);
        const std::string id = buf;
        snippets.emplace(id, snippet);
        for (KeywordCategory c : categories_of(snippet)) by_category[c].push_back(id);
        return id;
    }

    static std::set<KeywordCategory> categories_of(const Snippet& s) {
        std::set<KeywordCategory> cats;
        for (const auto& k : s.keywords) cats.insert(categorize(k));
        return cats;
    }

    static std::string normalized_text(const Snippet& s) {
        std::string out;
        for (auto line : s.lines) {
            while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.erase(line.begin());
            out += detail::rtrim(line);
            out.push_back('\n');
        }
        return out;
    }

    friend bool operator==(const AttackPool& a, const AttackPool& b) {
        return a.snippets == b.snippets && a.by_category == b.by_category && a.version == b.version;
    }
};

inline void save_pool(const AttackPool& pool, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write pool file: " + path);
    out << nlohmann::json{{"schema", "eatvul-pool/1"}, {"version", pool.version}}.dump() << "\n";
    for (const auto& [id, s] : pool.snippets) {
        nlohmann::json cats = nlohmann::json::array();
        for (KeywordCategory c : AttackPool::categories_of(s)) cats.push_back(to_string(c));
        nlohmann::json j{{"id", id},
                         {"lines", s.lines},
                         {"keywords", std::vector<std::string>(s.keywords.begin(), s.keywords.end())},
                         {"categories", cats},
                         {"suffix_map", s.suffix_map},
                         {"language", to_string(s.language)},
                         {"provenance", {{"generator", s.generator_id}, {"prompt_hash", s.prompt_hash}}}};
        out << j.dump() << "\n";
    }
}

inline AttackPool load_pool(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open pool file: " + path);
    AttackPool pool;
    std::string line;
    std::size_t lineno = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ": line " + std::to_string(lineno) +
                                     ": corrupted pool entry: " + e.what());
        }
        if (!saw_header) {
            saw_header = true;
            const std::string schema = j.value("schema", "");
            if (schema != "eatvul-pool/1")
                throw std::runtime_error(path + ": unsupported pool schema '" + schema + "'");
            pool.version = j.at("version").get<int>();
            continue;
        }
        try {
            Snippet s;
            s.lines = j.at("lines").get<std::vector<std::string>>();
            for (const auto& k : j.at("keywords")) s.keywords.insert(k.get<std::string>());
            s.suffix_map = j.at("suffix_map").get<std::map<std::string, std::string>>();
            s.language = language_from_string(j.value("language", "c"));
            s.generator_id = j.at("provenance").at("generator").get<std::string>();
            s.prompt_hash = j.at("provenance").at("prompt_hash").get<std::string>();
            const std::string id = j.at("id").get<std::string>();
            pool.snippets.emplace(id, std::move(s));
            for (KeywordCategory c : AttackPool::categories_of(pool.snippets.at(id)))
                pool.by_category[c].push_back(id);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ": line " + std::to_string(lineno) +
                                     ": corrupted pool entry: " + e.what());
        }
    }
    if (!saw_header && lineno > 0)
        throw std::runtime_error(path + ": missing pool header line");
    return pool;
}

// Deterministic sample of n distinct snippet ids, optionally restricted to
// one keyword category.
inline std::vector<std::string> sample_seeds(const AttackPool& pool, std::size_t n,
                                             std::optional<KeywordCategory> category,
                                             std::uint64_t seed) {
    std::vector<std::string> ids;
    if (category) {
        auto it = pool.by_category.find(*category);
        if (it != pool.by_category.end()) ids = it->second;
    } else {
        for (const auto& [id, s] : pool.snippets) ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());
    if (n > ids.size())
        throw std::invalid_argument("sample_seeds: requested " + std::to_string(n) +
                                    " snippets but only " + std::to_string(ids.size()) +
                                    " match the filter");
    Rng rng(mix_seed(seed, fnv1a("pool-sample")));
    rng.shuffle(ids);
    ids.resize(n);
    return ids;
}

}  // namespace eatvul
