#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>

#include "eatvul/corpus.hpp"
#include "support/temp.hpp"

using namespace eatvul;
using testsupport::TempDir;

namespace {

std::string record(const std::string& id, const std::string& source, const std::string& label) {
    nlohmann::json j{{"id", id}, {"source", source}, {"label", label}, {"language", "c"}};
    return j.dump() + "\n";
}

std::vector<CodeSample> make_labeled(int vuln, int nonvuln) {
    std::vector<CodeSample> out;
    for (int i = 0; i < vuln + nonvuln; ++i) {
        CodeSample s;
        s.id = "s" + std::to_string(i);
        s.label = i < vuln ? Label::vulnerable : Label::nonvulnerable;
        s.source = "int f() { return " + std::to_string(i) + "; }";
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

TEST_CASE("load_dataset reads every record") {
    TempDir tmp;
    std::ofstream out(tmp.file("openssl.jsonl"));
    for (int i = 0; i < 157; ++i) out << record("vuln-" + std::to_string(i), "int f() {}", "vulnerable");
    for (int i = 0; i < 788; ++i) out << record("ok-" + std::to_string(i), "int g() {}", "nonvulnerable");
    out.close();

    const auto samples = load_dataset(tmp.file("openssl.jsonl"));
    REQUIRE(samples.size() == 945);
    int vuln = 0;
    for (const auto& s : samples) vuln += s.label == Label::vulnerable;
    CHECK(vuln == 157);
}

TEST_CASE("load_dataset on an empty file") {
    TempDir tmp;
    testsupport::write_file(tmp.file("empty.jsonl"), "");
    CHECK(load_dataset(tmp.file("empty.jsonl")).empty());
}

TEST_CASE("load_dataset rejects unknown labels with the line number") {
    TempDir tmp;
    testsupport::write_file(tmp.file("bad.jsonl"),
                            record("a", "int f() {}", "vulnerable") +
                                record("b", "int g() {}", "maybe"));
    CHECK_THROWS_WITH(load_dataset(tmp.file("bad.jsonl")),
                      Catch::Matchers::ContainsSubstring("line 2"));
}

TEST_CASE("load_dataset rejects malformed json with the line number") {
    TempDir tmp;
    testsupport::write_file(tmp.file("bad.jsonl"),
                            record("a", "int f() {}", "vulnerable") + "{nope\n");
    CHECK_THROWS_AS(load_dataset(tmp.file("bad.jsonl")), ParseError);
    CHECK_THROWS_WITH(load_dataset(tmp.file("bad.jsonl")),
                      Catch::Matchers::ContainsSubstring("line 2"));
}

TEST_CASE("load_dataset rejects duplicate ids") {
    TempDir tmp;
    testsupport::write_file(tmp.file("dup.jsonl"),
                            record("a", "int f() {}", "vulnerable") +
                                record("a", "int g() {}", "nonvulnerable"));
    CHECK_THROWS_WITH(load_dataset(tmp.file("dup.jsonl")),
                      Catch::Matchers::ContainsSubstring("duplicate id"));
}

TEST_CASE("tokenize splits declarations") {
    const auto toks = tokenize("static const char *a = NULL;", Language::c);
    CHECK(toks == std::vector<std::string>{"static", "const", "char", "*", "a", "=", "NULL", ";"});
}

TEST_CASE("tokenize normalizes literals") {
    const auto toks = tokenize("x = \"abc\"; y = 42;", Language::c);
    CHECK(toks == std::vector<std::string>{"x", "=", "STR", ";", "y", "=", "NUM", ";"});
}

TEST_CASE("tokenize surfaces the attention-figure tokens") {
    const std::string source =
        "static int lookup(const char *hay) {\n"
        "    const char *val = strstr(hay, \"key\");\n"
        "    if (val && strchr(val, '=')) {\n"
        "        int parsed = 0;\n"
        "        sscanf(val, \"%d\", &parsed);\n"
        "        return parsed;\n"
        "    }\n"
        "    return -1;\n"
        "}\n";
    const auto toks = tokenize(source, Language::c);
    const std::set<std::string> tokset(toks.begin(), toks.end());
    for (const std::string want : {"static", "const", "strstr", "strchr", "val", "sscanf"})
        CHECK(tokset.count(want) == 1);
}

TEST_CASE("tokenize drops comments and reports unterminated constructs") {
    CHECK(tokenize("int a; // trailing\nint b; /* block */ int c;", Language::c) ==
          std::vector<std::string>{"int", "a", ";", "int", "b", ";", "int", "c", ";"});
    CHECK_THROWS_AS(tokenize("int a; /* never closed", Language::c), LexError);
    CHECK_THROWS_AS(tokenize("char *s = \"oops;", Language::c), LexError);
    try {
        tokenize("int a; \"bad", Language::c);
        FAIL("expected LexError");
    } catch (const LexError& e) {
        CHECK(e.offset == 7);
    }
}

TEST_CASE("tokenize is concatenation-stable over statement fragments") {
    const std::vector<std::string> fragments = {
        "int a = 1;",
        "if (a > 0) { a--; }",
        "for (int i = 0; i < 8; ++i) { a += i; }",
        "char *msg = \"hi\";",
        "a = a % 3;",
    };
    for (const auto& a : fragments) {
        for (const auto& b : fragments) {
            auto joined = tokenize(a, Language::c);
            const auto tb = tokenize(b, Language::c);
            joined.insert(joined.end(), tb.begin(), tb.end());
            CHECK(joined == tokenize(a + "\n" + b, Language::c));
        }
    }
}

TEST_CASE("java tokenization uses the java keyword table") {
    const auto toks = tokenize("final int x = 1;", Language::java);
    CHECK(toks == std::vector<std::string>{"final", "int", "x", "=", "NUM", ";"});
    CHECK(is_reserved_name("final", Language::java));
    CHECK_FALSE(is_reserved_name("final", Language::c));
}

TEST_CASE("build_vocab applies the document-frequency floor") {
    auto samples = make_labeled(1, 1);
    samples[0].source = "int a; int b;";
    samples[1].source = "int c;";
    tokenize_all(samples);

    const Vocabulary v2 = build_vocab(samples, 2);
    CHECK(v2.encode("int") >= 2);
    CHECK(v2.encode("a") == Vocabulary::kUnk);
    CHECK(v2.frequency("a") == 1);

    const Vocabulary v3 = build_vocab(samples, 3);
    CHECK(v3.encode("int") == Vocabulary::kUnk);

    const Vocabulary v0 = build_vocab({}, 3);
    CHECK(v0.size() == 2);  // only the reserved indices
    CHECK(v0.encode("anything") == Vocabulary::kUnk);
}

TEST_CASE("vocab indices are contiguous and bijective") {
    auto samples = make_labeled(2, 2);
    tokenize_all(samples);
    const Vocabulary v = build_vocab(samples, 1);
    std::set<int> indices;
    for (const auto& [tok, idx] : v.token_to_index) {
        CHECK(idx >= 2);
        indices.insert(idx);
    }
    CHECK(indices.size() == v.token_to_index.size());
    if (!indices.empty()) {
        CHECK(*indices.begin() == 2);
        CHECK(*indices.rbegin() == static_cast<int>(indices.size()) + 1);
    }
}

TEST_CASE("split matches the documented partition arithmetic") {
    const auto samples = make_labeled(1232, 1288);  // 2520 total
    const DatasetSplit s = split(samples, 7);
    CHECK(s.train.size() == 1764);
    CHECK(s.eval.size() == 378);
    CHECK(s.test.size() == 378);
}

TEST_CASE("split is deterministic and stratified") {
    const auto samples = make_labeled(33, 67);
    const DatasetSplit a = split(samples, 99);
    const DatasetSplit b = split(samples, 99);
    auto ids = [](const std::vector<CodeSample>& v) {
        std::vector<std::string> out;
        for (const auto& s : v) out.push_back(s.id);
        return out;
    };
    CHECK(ids(a.train) == ids(b.train));
    CHECK(ids(a.eval) == ids(b.eval));
    CHECK(ids(a.test) == ids(b.test));

    const DatasetSplit c = split(samples, 100);
    CHECK(ids(a.train) != ids(c.train));  // seed actually matters
}

TEST_CASE("split partitions are disjoint and exhaustive") {
    Rng rng(4242);
    for (int trial = 0; trial < 25; ++trial) {
        const int vuln = 1 + static_cast<int>(rng.uniform_index(40));
        const int nonvuln = 2 + static_cast<int>(rng.uniform_index(80));
        const auto samples = make_labeled(vuln, nonvuln);
        const DatasetSplit s = split(samples, rng.next_u64());

        std::set<std::string> all;
        std::size_t total = 0;
        int vuln_seen = 0;
        for (const auto* part : {&s.train, &s.eval, &s.test}) {
            total += part->size();
            for (const auto& smp : *part) {
                CHECK(all.insert(smp.id).second);  // disjoint
                vuln_seen += smp.label == Label::vulnerable;
            }
        }
        REQUIRE(total == samples.size());  // exhaustive
        CHECK(vuln_seen == vuln);

        const double n = static_cast<double>(samples.size());
        CHECK(std::abs(static_cast<double>(s.train.size()) - 0.70 * n) <= 1.0);
        CHECK(std::abs(static_cast<double>(s.eval.size()) - 0.15 * n) <= 1.0);
        CHECK(std::abs(static_cast<double>(s.test.size()) - 0.15 * n) <= 1.0);

        // class ratio preserved within one sample per partition
        const double vf = static_cast<double>(vuln);
        auto count_vuln = [](const std::vector<CodeSample>& v) {
            int c = 0;
            for (const auto& s2 : v) c += s2.label == Label::vulnerable;
            return c;
        };
        CHECK(std::abs(count_vuln(s.train) - 0.70 * vf) <= 1.0);
        CHECK(std::abs(count_vuln(s.eval) - 0.15 * vf) <= 1.0);
        CHECK(std::abs(count_vuln(s.test) - 0.15 * vf) <= 1.0);
    }
}

TEST_CASE("split rejects bad inputs") {
    const auto samples = make_labeled(2, 2);
    CHECK_THROWS_AS(split(samples, 1, {0.5, 0.5, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(split(make_labeled(1, 1), 1), std::invalid_argument);
}

TEST_CASE("encoding an unknown token yields the unknown index") {
    auto samples = make_labeled(1, 1);
    tokenize_all(samples);
    const Vocabulary v = build_vocab(samples, 1);
    CHECK(v.encode("definitely_not_in_vocab_123") == Vocabulary::kUnk);
    const auto ids = v.encode(std::vector<std::string>{"int", "definitely_not_in_vocab_123"});
    CHECK(ids.size() == 2);
    CHECK(ids[1] == Vocabulary::kUnk);
}
