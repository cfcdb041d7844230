#pragma once

#include <array>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "eatvul/corpus.hpp"
#include "eatvul/features.hpp"
#include "eatvul/lexer.hpp"
#include "eatvul/rng.hpp"

namespace eatvul {

inline constexpr int kMaxSnippetLines = 8;

namespace detail {

inline std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    return lines;
}

inline std::string join_lines(const std::vector<std::string>& lines) {
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i) out.push_back('\n');
        out += lines[i];
    }
    return out;
}

inline std::string rtrim(std::string s) {
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.pop_back();
    return s;
}

}  // namespace detail

struct PromptConstraints {
    int max_lines = kMaxSnippetLines;
    bool dense = false;
    std::map<std::string, std::string> rename_map;  // identifier -> identifier
};

// The four context phrasings used verbatim in prompts.
inline const std::array<std::string, 4>& context_phrasings() {
    static const std::array<std::string, 4> phr = {
        "Given the partial preceding/succeeding codes as:",
        "With the partial preceding/following codes provided as:",
        "In light of the incomplete preceding/following codes as:",
        "Taking into account the limited preceding/succeeding codes as:"};
    return phr;
}

// <Context> <Query> <Context> prompt. Carries the feature list so offline
// generation does not have to re-parse the natural-language query.
struct PromptSpec {
    std::string context_before;
    std::string context_after;
    std::string query;
    PromptConstraints constraints;
    int context_variant = 0;  // index into context_phrasings()
    std::vector<ImportantFeature> features;
    Language language = Language::c;

    std::string render() const {
        const std::string& phrase = context_phrasings()[static_cast<std::size_t>(context_variant) % 4];
        std::string out = phrase;
        out += "\n" + context_before + "\n" + query + "\n" + phrase + "\n" + context_after;
        return out;
    }

    std::uint64_t hash() const { return fnv1a(render()); }

    std::string hash_hex() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
        return buf;
    }
};

struct Snippet {
    std::vector<std::string> lines;
    std::set<std::string> keywords;                  // feature tokens it covers
    std::map<std::string, std::string> suffix_map;   // original -> suffixed identifier
    std::string generator_id;
    std::string prompt_hash;
    bool over_length = false;
    Language language = Language::c;

    std::string text() const { return detail::join_lines(lines); }

    int line_count() const { return static_cast<int>(lines.size()); }

    friend bool operator==(const Snippet& a, const Snippet& b) {
        return a.lines == b.lines && a.keywords == b.keywords && a.suffix_map == b.suffix_map &&
               a.generator_id == b.generator_id && a.prompt_hash == b.prompt_hash &&
               a.over_length == b.over_length && a.language == b.language;
    }
};

struct GenerationError : std::runtime_error {
    std::string raw_output;
    GenerationError(const std::string& msg, std::string raw)
        : std::runtime_error(msg), raw_output(std::move(raw)) {}
};

struct RetryableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GeneratorClient {
    virtual ~GeneratorClient() = default;
    virtual std::string generate(const PromptSpec& prompt) = 0;
    virtual bool deterministic() const = 0;
    virtual std::string id() const = 0;
};

namespace detail {

inline std::string language_display(Language l) {
    switch (l) {
        case Language::c: return "C";
        case Language::cpp: return "C++";
        case Language::java: return "Java";
    }
    return "C";
}

inline std::string feature_phrase(const ImportantFeature& f) {
    const std::string& t = f.token;
    switch (f.category) {
        case KeywordCategory::ControlStatement:
            if (t == "for" || t == "while" || t == "do") return "a loop";
            if (t == "if" || t == "else") return "a conditional statement";
            if (t == "switch" || t == "case" || t == "default") return "a switch statement";
            return "a " + t + " statement";
        case KeywordCategory::StorageClass:
            return "a " + t + " variable";
        case KeywordCategory::DataType:
            return "a " + t + " declaration";
        case KeywordCategory::InputOutput:
            return "a call to " + t;
        case KeywordCategory::Miscellaneous:
            return "a statement using " + t;
        case KeywordCategory::Other:
            return "a variable named " + t;
    }
    return "a variable named " + t;
}

}  // namespace detail

// Builds the raw prompt: host lines adjacent to the insertion point as
// context (up to 5 each side) and a query phrased per feature category.
inline PromptSpec build_prompt(const std::vector<ImportantFeature>& features,
                               const CodeSample& host, int insertion_line, int variant) {
    if (features.empty()) throw std::invalid_argument("build_prompt: empty feature list");
    const auto lines = detail::split_lines(host.source);
    const int n = static_cast<int>(lines.size());
    const int at = std::clamp(insertion_line, 0, n);

    PromptSpec p;
    p.context_variant = ((variant % 4) + 4) % 4;
    p.features = features;
    p.language = host.language;

    std::vector<std::string> before, after;
    for (int i = std::max(0, at - 5); i < at; ++i) before.push_back(lines[static_cast<std::size_t>(i)]);
    for (int i = at; i < std::min(n, at + 5); ++i) after.push_back(lines[static_cast<std::size_t>(i)]);
    p.context_before = detail::join_lines(before);
    p.context_after = detail::join_lines(after);

    std::string q = "Please generate a function in " + detail::language_display(host.language) +
                    " that contains ";
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (i) q += (i + 1 == features.size()) ? ", and " : ", ";
        q += detail::feature_phrase(features[i]);
    }
    q += ".";
    p.query = q;
    return p;
}

// Adds the three optimization clauses: the several-lines request, the rename
// instruction, and the dense-format clause. Idempotent.
inline PromptSpec optimize_prompt(PromptSpec p) {
    const std::string fn_req = "Please generate a function in ";
    const std::string lines_req = "Please generate several lines in ";
    if (p.query.rfind(fn_req, 0) == 0) {
        p.query = lines_req + p.query.substr(fn_req.size());
    }
    for (const auto& [from, to] : p.constraints.rename_map) {
        const std::string clause = " Rename \"" + from + "\" as \"" + to + "\".";
        if (p.query.find(clause) == std::string::npos) p.query += clause;
    }
    const std::string dense_clause = " Please generate the codes in dense format.";
    if (p.query.find(dense_clause) == std::string::npos) p.query += dense_clause;
    p.constraints.dense = true;
    p.constraints.max_lines = kMaxSnippetLines;
    return p;
}

// ---- deterministic offline generator ----

// Emits dead-code lines covering every requested feature token: declarations
// for type/storage keywords, zero-trip loops and false branches for control
// and call keywords. A pure function of (features, variant, rename_map,
// dense); the template table version is part of the id.
class OfflineGeneratorClient : public GeneratorClient {
public:
    std::string id() const override { return "offline-v1"; }
    bool deterministic() const override { return true; }

    std::string generate(const PromptSpec& prompt) override {
        const auto& fs = prompt.features;
        if (fs.empty()) throw GenerationError("offline generator: no features requested", "");
        const int variant = prompt.context_variant;

        auto pick_name = [&](int slot) {
            static const std::array<std::string, 8> pool = {
                "hold_acc", "trace_cnt", "probe_num", "mark_flag",
                "stash_val", "slot_sum", "drift_tmp", "gauge_pos"};
            std::string base = pool[static_cast<std::size_t>(slot + variant) % pool.size()];
            auto it = prompt.constraints.rename_map.find(base);
            return it == prompt.constraints.rename_map.end() ? base : it->second;
        };
        const std::string anchor = pick_name(0);
        int aux_slot = 1;

        std::vector<std::string> stmts;
        stmts.push_back("int " + anchor + " = 0;");
        for (const auto& f : fs) {
            const std::string& t = f.token;
            const std::string aux = pick_name(aux_slot++);
            switch (f.category) {
                case KeywordCategory::DataType:
                    if (t == "const") stmts.push_back("const int " + aux + " = 1;");
                    else if (t == "void") stmts.push_back("void *" + aux + " = NULL;");
                    else if (t == "struct" || t == "union" || t == "enum")
                        stmts.push_back(t + " " + aux + "_s { int inner_one; } " + aux + ";");
                    else stmts.push_back(t + " " + aux + " = 0;");
                    break;
                case KeywordCategory::StorageClass:
                    if (t == "extern") stmts.push_back("extern int " + aux + ";");
                    else if (t == "typedef") stmts.push_back("typedef int " + aux + "_t;");
                    else stmts.push_back(t + " int " + aux + " = 0;");
                    break;
                case KeywordCategory::ControlStatement:
                    if (t == "for")
                        stmts.push_back("for (int " + aux + " = 0; " + aux + " < 0; ++" + aux +
                                        ") { " + anchor + " += " + aux + "; }");
                    else if (t == "while")
                        stmts.push_back("while (" + anchor + " < 0) { " + anchor + "++; }");
                    else if (t == "do")
                        stmts.push_back("do { " + anchor + " += 0; } while (" + anchor + " < 0);");
                    else if (t == "if")
                        stmts.push_back("if (" + anchor + " < 0) { " + anchor + " = 0; }");
                    else if (t == "else")
                        stmts.push_back("if (" + anchor + " < 0) { " + anchor + " = 1; } else { " +
                                        anchor + " += 0; }");
                    else if (t == "switch" || t == "case" || t == "default")
                        stmts.push_back("switch (" + anchor + ") { case 1: break; default: break; }");
                    else if (t == "goto")
                        stmts.push_back("if (" + anchor + " != 0) goto " + aux + "_end; " + aux +
                                        "_end: " + anchor + " += 0;");
                    else
                        stmts.push_back(t + " (" + anchor + ");");
                    break;
                case KeywordCategory::InputOutput:
                    if (t == "printf" || t == "puts")
                        stmts.push_back("if (" + anchor + " < 0) { " + t + "(\"\"); }");
                    else if (t == "scanf" || t == "sscanf")
                        stmts.push_back("if (" + anchor + " < 0) { " + t +
                                        (t == "sscanf" ? "(\"\", \"%d\", &" : "(\"%d\", &") + anchor +
                                        "); }");
                    else if (t == "getchar")
                        stmts.push_back("if (" + anchor + " < 0) { " + anchor + " = getchar(); }");
                    else if (t == "putchar")
                        stmts.push_back("if (" + anchor + " < 0) { putchar(" + anchor + "); }");
                    else
                        stmts.push_back("if (" + anchor + " < 0) { (void) " + t + "; }");
                    break;
                case KeywordCategory::Miscellaneous:
                    if (t == "sizeof")
                        stmts.push_back(anchor + " += (int) sizeof(" + anchor + ");");
                    else if (t == "return" || t == "break" || t == "continue")
                        stmts.push_back("for (int " + aux + " = 0; " + aux + " < 0; ++" + aux +
                                        ") { " + t + "; }");
                    else if (t == "typeof")
                        stmts.push_back("typeof(" + anchor + ") " + aux + " = 0;");
                    else
                        stmts.push_back(anchor + " += 0; /* " + t + " */");
                    break;
                case KeywordCategory::Other:
                    stmts.push_back("int " + t + " = " + anchor + ";");
                    break;
            }
        }

        if (prompt.constraints.dense) {
            // pack short declaration statements together, drop nothing
            std::vector<std::string> packed;
            std::string cur;
            for (const auto& s : stmts) {
                if (s.size() < 28 && cur.size() + s.size() < 72) {
                    cur += cur.empty() ? s : " " + s;
                } else {
                    if (!cur.empty()) packed.push_back(cur);
                    cur.clear();
                    packed.push_back(s);
                }
            }
            if (!cur.empty()) packed.push_back(cur);
            return detail::join_lines(packed) + "\n";
        }
        // raw mode spreads out and pads with no-op maintenance lines,
        // mirroring the verbose first-pass generations
        std::vector<std::string> out;
        for (std::size_t i = 0; i < stmts.size(); ++i) {
            out.push_back(stmts[i]);
            if (i % 2 == 1) out.push_back(anchor + " = " + anchor + ";");
        }
        return detail::join_lines(out) + "\n";
    }
};

// Deterministic re-play of a recorded generator exchange log (JSON-lines of
// {"prompt_hash", "prompt", "text"}).
class ReplayGeneratorClient : public GeneratorClient {
public:
    explicit ReplayGeneratorClient(const std::string& log_path) {
        std::ifstream in(log_path);
        if (!in) throw std::runtime_error("cannot open replay log: " + log_path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw std::runtime_error("replay log line " + std::to_string(lineno) + ": " + e.what());
            }
            responses_[j.at("prompt_hash").get<std::string>()] = j.at("text").get<std::string>();
        }
    }

    std::string id() const override { return "replay"; }
    bool deterministic() const override { return true; }

    std::string generate(const PromptSpec& prompt) override {
        auto it = responses_.find(prompt.hash_hex());
        if (it == responses_.end())
            throw std::runtime_error("replay log has no response for prompt " + prompt.hash_hex());
        return it->second;
    }

private:
    std::map<std::string, std::string> responses_;
};

// Parses raw generator output into a Snippet; keywords are the prompt
// features found in the token stream. Over-long output is kept but flagged.
inline Snippet generate_snippet(GeneratorClient& client, const PromptSpec& prompt) {
    const std::string raw = client.generate(prompt);

    std::vector<std::string> lines;
    bool in_fence = false;
    for (auto& l : detail::split_lines(raw)) {
        const std::string t = detail::rtrim(l);
        if (t.rfind("```", 0) == 0) {
            in_fence = !in_fence;
            continue;
        }
        if (!t.empty() && t.find_first_not_of(" \t") != std::string::npos) lines.push_back(t);
    }
    if (lines.empty())
        throw GenerationError("generator returned no code lines", raw);

    Snippet s;
    s.lines = std::move(lines);
    s.language = prompt.language;
    s.generator_id = client.id();
    s.prompt_hash = prompt.hash_hex();
    s.over_length = s.line_count() > prompt.constraints.max_lines;

    std::set<std::string> toks;
    try {
        for (const Token& t : lex(s.text(), s.language)) toks.insert(t.text);
    } catch (const LexError&) {
        // malformed output: leave keywords empty, validation will reject it
    }
    for (const auto& f : prompt.features) {
        if (toks.count(f.token)) s.keywords.insert(f.token);
    }
    return s;
}

namespace detail {

// role of an identifier inside the snippet: conditional header, loop header
// or plain variable; decides which suffix it receives
inline std::string role_suffix(const std::string& name, const std::vector<std::string>& lines,
                               Language lang) {
    for (const auto& line : lines) {
        std::vector<Token> toks;
        try {
            toks = lex(line, lang);
        } catch (const LexError&) {
            continue;
        }
        int paren_depth = 0;
        std::string header;  // "", "cond" or "loop" while inside header parens
        for (std::size_t i = 0; i < toks.size(); ++i) {
            const Token& t = toks[i];
            if (header.empty() && t.kind == TokenKind::keyword &&
                (t.text == "if" || t.text == "while" || t.text == "for") &&
                i + 1 < toks.size() && toks[i + 1].text == "(") {
                header = (t.text == "for") ? "loop" : "cond";
                paren_depth = 0;
                continue;
            }
            if (!header.empty()) {
                if (t.text == "(") ++paren_depth;
                else if (t.text == ")") {
                    --paren_depth;
                    if (paren_depth <= 0) header.clear();
                } else if (t.kind == TokenKind::identifier && t.text == name) {
                    return header == "loop" ? "_loop" : "_condition";
                }
            }
        }
    }
    return "_var";
}

inline std::string rewrite_identifiers(const std::string& line,
                                       const std::map<std::string, std::string>& renames,
                                       Language lang) {
    std::vector<Token> toks;
    try {
        toks = lex(line, lang);
    } catch (const LexError&) {
        return line;
    }
    std::string out;
    std::size_t pos = 0;
    for (const Token& t : toks) {
        out += line.substr(pos, t.offset - pos);
        if (t.kind == TokenKind::identifier) {
            auto it = renames.find(t.text);
            out += it == renames.end() ? line.substr(t.offset, t.length) : it->second;
        } else {
            out += line.substr(t.offset, t.length);
        }
        pos = t.offset + t.length;
    }
    out += line.substr(pos);
    return out;
}

}  // namespace detail

// Renames every snippet identifier that also occurs in the host, appending a
// role suffix (_condition / _loop / _var). Throws after three failed rename
// attempts for the same identifier.
inline Snippet apply_suffixes(Snippet snippet, const CodeSample& host) {
    const std::set<std::string> host_ids = identifier_set(host.source, host.language);
    std::set<std::string> snippet_ids = identifier_set(snippet.text(), snippet.language);

    std::map<std::string, std::string> renames;
    std::set<std::string> taken = snippet_ids;
    for (const std::string& name : snippet_ids) {
        if (!host_ids.count(name)) continue;
        const std::string suffix = detail::role_suffix(name, snippet.lines, snippet.language);
        std::string candidate;
        bool ok = false;
        for (int attempt = 1; attempt <= 3; ++attempt) {
            candidate = name + suffix + (attempt == 1 ? "" : std::to_string(attempt));
            if (!host_ids.count(candidate) && !taken.count(candidate)) {
                ok = true;
                break;
            }
        }
        if (!ok)
            throw std::runtime_error("apply_suffixes: cannot find a collision-free name for '" +
                                     name + "' after 3 attempts");
        renames[name] = candidate;
        taken.insert(candidate);
    }
    if (renames.empty()) return snippet;

    for (auto& line : snippet.lines) line = detail::rewrite_identifiers(line, renames, snippet.language);
    for (const auto& [from, to] : renames) snippet.suffix_map[from] = to;
    return snippet;
}

struct ValidationReport {
    bool passed = true;
    std::vector<std::string> failures;

    void fail(std::string why) {
        passed = false;
        failures.push_back(std::move(why));
    }
};

// Lexical validity: balanced delimiters and legal statement ends (proxy for
// compilability), the 8-line cap, zero identifier overlap with the host in
// either direction, and full keyword coverage (through suffix_map for
// renamed identifiers).
inline ValidationReport validate_snippet(const Snippet& snippet, const CodeSample& host) {
    ValidationReport rep;

    std::vector<Token> toks;
    bool lexed = false;
    try {
        toks = lex(snippet.text(), snippet.language);
        lexed = true;
    } catch (const LexError& e) {
        rep.fail(std::string("lex error: ") + e.what());
    }
    if (lexed) {
        std::vector<char> stack;
        bool balanced = true;
        for (const Token& t : toks) {
            if (t.text == "(") stack.push_back(')');
            else if (t.text == "[") stack.push_back(']');
            else if (t.text == "{") stack.push_back('}');
            else if (t.text == ")" || t.text == "]" || t.text == "}") {
                if (stack.empty() || stack.back() != t.text[0]) {
                    balanced = false;
                    break;
                }
                stack.pop_back();
            }
        }
        if (!balanced || !stack.empty()) rep.fail("unbalanced delimiters");
        if (toks.empty()) rep.fail("empty snippet");
        else if (toks.back().text != ";" && toks.back().text != "}")
            rep.fail("last statement is not terminated");
    }

    if (snippet.line_count() > kMaxSnippetLines || snippet.over_length)
        rep.fail("snippet exceeds " + std::to_string(kMaxSnippetLines) + " lines");

    const std::set<std::string> host_ids = identifier_set(host.source, host.language);
    const std::set<std::string> snip_ids = identifier_set(snippet.text(), snippet.language);
    std::vector<std::string> overlap;
    for (const auto& id : snip_ids)
        if (host_ids.count(id)) overlap.push_back(id);
    if (!overlap.empty()) {
        std::string msg = "data dependency on host identifiers:";
        for (const auto& id : overlap) msg += " " + id;
        rep.fail(msg);
    }

    std::set<std::string> toks_text;
    for (const Token& t : toks) toks_text.insert(t.text);
    for (const auto& kw : snippet.keywords) {
        bool covered = toks_text.count(kw) > 0;
        if (!covered) {
            auto it = snippet.suffix_map.find(kw);
            covered = it != snippet.suffix_map.end() && toks_text.count(it->second) > 0;
        }
        if (!covered) rep.fail("missing keyword: " + kw);
    }
    return rep;
}

}  // namespace eatvul
