#pragma once

#include <cstddef>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace eatvul {

enum class Language { c, cpp, java };

inline std::string to_string(Language l) {
    switch (l) {
        case Language::c: return "c";
        case Language::cpp: return "cpp";
        case Language::java: return "java";
    }
    return "c";
}

inline Language language_from_string(const std::string& s) {
    if (s == "c") return Language::c;
    if (s == "cpp") return Language::cpp;
    if (s == "java") return Language::java;
    throw std::invalid_argument("unknown language: " + s);
}

struct LexError : std::runtime_error {
    std::size_t offset;
    LexError(const std::string& msg, std::size_t off)
        : std::runtime_error(msg + " at offset " + std::to_string(off)), offset(off) {}
};

enum class TokenKind { keyword, identifier, number, string, op, punct };

struct Token {
    std::string text;   // normalized text (NUM/STR for literals)
    TokenKind kind;
    std::size_t offset; // byte offset of the raw lexeme in the input
    std::size_t length; // raw lexeme length
};

namespace detail {

inline const std::set<std::string>& c_keywords() {
    static const std::set<std::string> kw = {
        "auto", "break", "case", "char", "const", "continue", "default", "do",
        "double", "else", "enum", "extern", "float", "for", "goto", "if",
        "inline", "int", "long", "register", "restrict", "return", "short",
        "signed", "sizeof", "static", "struct", "switch", "typedef", "typeof",
        "union", "unsigned", "void", "volatile", "while", "_Bool", "_Complex"};
    return kw;
}

inline const std::set<std::string>& cpp_extra_keywords() {
    static const std::set<std::string> kw = {
        "bool", "catch", "class", "constexpr", "delete", "explicit", "false",
        "friend", "mutable", "namespace", "new", "noexcept", "nullptr",
        "operator", "private", "protected", "public", "template", "this",
        "throw", "true", "try", "typename", "using", "virtual"};
    return kw;
}

inline const std::set<std::string>& java_keywords() {
    static const std::set<std::string> kw = {
        "abstract", "assert", "boolean", "break", "byte", "case", "catch",
        "char", "class", "const", "continue", "default", "do", "double",
        "else", "enum", "extends", "final", "finally", "float", "for", "goto",
        "if", "implements", "import", "instanceof", "int", "interface",
        "long", "native", "new", "null", "package", "private", "protected",
        "public", "return", "short", "static", "strictfp", "super", "switch",
        "synchronized", "this", "throw", "throws", "transient", "true",
        "false", "try", "void", "volatile", "while"};
    return kw;
}

// Well-known library/builtin names. They lex as identifiers but are treated
// like keywords for renaming and dependency purposes: sharing `printf` with
// the host is not a data dependency.
inline const std::set<std::string>& builtin_names() {
    static const std::set<std::string> b = {
        "NULL", "EOF", "stdin", "stdout", "stderr", "size_t", "ssize_t",
        "printf", "fprintf", "sprintf", "snprintf", "scanf", "fscanf",
        "sscanf", "puts", "fputs", "gets", "fgets", "getchar", "putchar",
        "getc", "putc", "fopen", "fclose", "fread", "fwrite", "fseek",
        "ftell", "perror", "malloc", "calloc", "realloc", "free", "exit",
        "abort", "memcpy", "memmove", "memset", "memcmp", "strcpy", "strncpy",
        "strcat", "strncat", "strcmp", "strncmp", "strlen", "strstr",
        "strchr", "strrchr", "strtok", "strdup", "atoi", "atol", "atof",
        "abs", "labs", "System", "String", "Integer", "Math", "println"};
    return b;
}

inline bool is_keyword(const std::string& s, Language lang) {
    switch (lang) {
        case Language::c:
            return c_keywords().count(s) > 0;
        case Language::cpp:
            return c_keywords().count(s) > 0 || cpp_extra_keywords().count(s) > 0;
        case Language::java:
            return java_keywords().count(s) > 0;
    }
    return false;
}

inline bool is_ident_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
inline bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }
inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

inline const std::vector<std::string>& multi_char_ops() {
    // ordered longest-first for maximal munch
    static const std::vector<std::string> ops = {
        "<<=", ">>=", "...", "->*", "<=>", "::", "->", "++", "--", "<<", ">>",
        "<=", ">=", "==", "!=", "&&", "||", "+=", "-=", "*=", "/=", "%=",
        "&=", "|=", "^=", "##"};
    return ops;
}

}  // namespace detail

// True for language keywords and well-known builtins: tokens that are never
// renamed and never count as host-defined identifiers.
inline bool is_reserved_name(const std::string& s, Language lang) {
    return detail::is_keyword(s, lang) || detail::builtin_names().count(s) > 0;
}

// Deterministic lexical split: keywords, identifiers, literals (normalized
// to NUM/STR), operators and punctuation. Comments and whitespace are
// dropped. Throws LexError on unterminated strings or block comments.
inline std::vector<Token> lex(std::string_view src, Language lang) {
    std::vector<Token> out;
    std::size_t i = 0;
    const std::size_t n = src.size();
    while (i < n) {
        const char c = src[i];
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v') {
            ++i;
            continue;
        }
        if (c == '/' && i + 1 < n && src[i + 1] == '/') {
            while (i < n && src[i] != '\n') ++i;
            continue;
        }
        if (c == '/' && i + 1 < n && src[i + 1] == '*') {
            const std::size_t start = i;
            i += 2;
            while (i + 1 < n && !(src[i] == '*' && src[i + 1] == '/')) ++i;
            if (i + 1 >= n) throw LexError("unterminated block comment", start);
            i += 2;
            continue;
        }
        if (c == '"' || c == '\'') {
            const char quote = c;
            const std::size_t start = i;
            ++i;
            while (i < n && src[i] != quote) {
                if (src[i] == '\\' && i + 1 < n) {
                    i += 2;
                    continue;
                }
                if (src[i] == '\n') throw LexError("unterminated string literal", start);
                ++i;
            }
            if (i >= n) throw LexError("unterminated string literal", start);
            ++i;
            out.push_back({"STR", TokenKind::string, start, i - start});
            continue;
        }
        if (detail::is_digit(c) ||
            (c == '.' && i + 1 < n && detail::is_digit(src[i + 1]))) {
            const std::size_t start = i;
            if (c == '0' && i + 1 < n && (src[i + 1] == 'x' || src[i + 1] == 'X')) {
                i += 2;
                while (i < n && (detail::is_digit(src[i]) ||
                                 (src[i] >= 'a' && src[i] <= 'f') ||
                                 (src[i] >= 'A' && src[i] <= 'F')))
                    ++i;
            } else {
                while (i < n && (detail::is_digit(src[i]) || src[i] == '.')) ++i;
                if (i < n && (src[i] == 'e' || src[i] == 'E')) {
                    std::size_t j = i + 1;
                    if (j < n && (src[j] == '+' || src[j] == '-')) ++j;
                    if (j < n && detail::is_digit(src[j])) {
                        i = j;
                        while (i < n && detail::is_digit(src[i])) ++i;
                    }
                }
            }
            while (i < n && (src[i] == 'u' || src[i] == 'U' || src[i] == 'l' ||
                             src[i] == 'L' || src[i] == 'f' || src[i] == 'F'))
                ++i;
            out.push_back({"NUM", TokenKind::number, start, i - start});
            continue;
        }
        if (detail::is_ident_start(c)) {
            const std::size_t start = i;
            while (i < n && detail::is_ident_char(src[i])) ++i;
            std::string word(src.substr(start, i - start));
            const TokenKind kind = detail::is_keyword(word, lang)
                                       ? TokenKind::keyword
                                       : TokenKind::identifier;
            out.push_back({std::move(word), kind, start, i - start});
            continue;
        }
        bool matched = false;
        for (const std::string& op : detail::multi_char_ops()) {
            if (src.substr(i, op.size()) == op) {
                out.push_back({op, TokenKind::op, i, op.size()});
                i += op.size();
                matched = true;
                break;
            }
        }
        if (matched) continue;
        static const std::string puncts = ";,(){}[]";
        const TokenKind kind = puncts.find(c) != std::string::npos
                                   ? TokenKind::punct
                                   : TokenKind::op;
        out.push_back({std::string(1, c), kind, i, 1});
        ++i;
    }
    return out;
}

inline std::vector<std::string> tokenize(std::string_view src, Language lang) {
    std::vector<std::string> out;
    for (const Token& t : lex(src, lang)) out.push_back(t.text);
    return out;
}

// Non-reserved identifier tokens of a fragment, e.g. for dependency checks.
inline std::set<std::string> identifier_set(std::string_view src, Language lang) {
    std::set<std::string> ids;
    for (const Token& t : lex(src, lang)) {
        if (t.kind == TokenKind::identifier && !is_reserved_name(t.text, lang)) {
            ids.insert(t.text);
        }
    }
    return ids;
}

}  // namespace eatvul
