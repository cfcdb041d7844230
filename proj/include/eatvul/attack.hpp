#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "eatvul/pool.hpp"
#include "eatvul/rng.hpp"
#include "eatvul/snippet.hpp"
#include "eatvul/victim.hpp"

namespace eatvul {

enum class LocationPolicy { uniform_random, after_first_statement };

inline std::string to_string(LocationPolicy p) {
    return p == LocationPolicy::uniform_random ? "uniform-random" : "after-first-statement";
}

inline LocationPolicy location_policy_from_string(const std::string& s) {
    if (s == "uniform-random") return LocationPolicy::uniform_random;
    if (s == "after-first-statement") return LocationPolicy::after_first_statement;
    throw std::invalid_argument("unknown location policy: " + s);
}

struct InsertionPlan {
    std::string sample_id;
    std::vector<int> locations;  // original line indices, aligned with genome order
    std::vector<std::string> genome;
    std::vector<std::map<std::string, std::string>> suffix_maps;
    int inserted_lines = 0;
};

namespace detail {

// Line indices before which a whole statement can legally be inserted:
// inside a braced body, with the previous token ending a statement or block.
inline std::vector<int> statement_boundaries(const std::string& source, Language lang) {
    const auto lines = split_lines(source);
    std::vector<std::size_t> line_start(lines.size());
    std::size_t off = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        line_start[i] = off;
        off += lines[i].size() + 1;
    }
    std::vector<Token> toks = lex(source, lang);

    std::vector<int> out;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        int depth = 0;
        std::string prev_text;
        for (const Token& t : toks) {
            if (t.offset >= line_start[i]) break;
            prev_text = t.text;
            if (t.text == "{") ++depth;
            else if (t.text == "}") --depth;
        }
        if (depth < 1) continue;
        if (prev_text == ";" || prev_text == "{" || prev_text == "}")
            out.push_back(static_cast<int>(i));
    }
    return out;
}

}  // namespace detail

// Inserts the genome's snippets at statement boundaries of the sample.
// Snippets are re-suffixed and validated against the host as it grows, so
// two pool snippets sharing identifier names never collide. Boundaries are
// distinct while the host has enough of them, then stack.
inline std::pair<CodeSample, InsertionPlan> insert(const CodeSample& sample,
                                                   const std::vector<std::string>& genome,
                                                   const AttackPool& pool, LocationPolicy policy,
                                                   std::uint64_t seed, bool single_location = false) {
    InsertionPlan plan;
    plan.sample_id = sample.id;
    plan.genome = genome;
    plan.suffix_maps.resize(genome.size());

    CodeSample adv = sample;
    adv.id = sample.id + "#adv";
    if (genome.empty()) {
        if (!adv.tokens.empty()) tokenize(adv);
        return {adv, plan};
    }

    const std::vector<int> boundaries = detail::statement_boundaries(sample.source, sample.language);
    if (boundaries.empty())
        throw std::runtime_error("insert: no legal insertion point in sample '" + sample.id + "'");

    Rng rng(mix_seed(seed, fnv1a("insert:" + sample.id)));
    std::vector<int> chosen;
    if (single_location) {
        const int at = policy == LocationPolicy::after_first_statement
                           ? boundaries[std::min<std::size_t>(1, boundaries.size() - 1)]
                           : boundaries[rng.uniform_index(boundaries.size())];
        chosen.assign(genome.size(), at);
    } else if (policy == LocationPolicy::after_first_statement) {
        const std::size_t first = std::min<std::size_t>(1, boundaries.size() - 1);
        for (std::size_t j = 0; j < genome.size(); ++j)
            chosen.push_back(boundaries[std::min(first + j, boundaries.size() - 1)]);
    } else {
        if (genome.size() <= boundaries.size()) {
            const auto idx = rng.sample_without_replacement(boundaries.size(), genome.size());
            for (std::size_t k : idx) chosen.push_back(boundaries[k]);
        } else {
            for (std::size_t j = 0; j < genome.size(); ++j)
                chosen.push_back(boundaries[rng.uniform_index(boundaries.size())]);
        }
    }
    plan.locations = chosen;

    // apply bottom-up so earlier line indices stay valid; reverse genome
    // order within one boundary keeps the final text in genome order
    std::vector<std::size_t> order(genome.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (chosen[a] != chosen[b]) return chosen[a] > chosen[b];
        return a > b;
    });

    std::vector<std::string> cur_lines = detail::split_lines(sample.source);
    for (std::size_t j : order) {
        CodeSample host_now;
        host_now.id = sample.id;
        host_now.language = sample.language;
        host_now.source = detail::join_lines(cur_lines);

        Snippet s = apply_suffixes(pool.at(genome[j]), host_now);
        const ValidationReport rep = validate_snippet(s, host_now);
        if (!rep.passed) {
            std::string msg = "insert: snippet " + genome[j] + " failed validation against '" +
                              sample.id + "':";
            for (const auto& f : rep.failures) msg += " [" + f + "]";
            throw std::runtime_error(msg);
        }
        plan.suffix_maps[j] = s.suffix_map;
        cur_lines.insert(cur_lines.begin() + chosen[j], s.lines.begin(), s.lines.end());
        plan.inserted_lines += s.line_count();
    }

    adv.source = detail::join_lines(cur_lines);
    adv.tokens.clear();
    tokenize(adv);
    return {adv, plan};
}

struct AttackResult {
    std::string sample_id;
    double orig_prob = 0.0;
    double adv_prob = 0.0;
    bool bypassed = false;  // adversarial classification is nonvulnerable
    std::vector<std::string> genome;
    int inserted_lines = 0;
    bool evaluated = true;
    std::string error;
};

// Pads or truncates `genome` to exactly `snippet_size` distinct pool ids.
inline std::vector<std::string> fit_genome_to_size(std::vector<std::string> genome,
                                                   int snippet_size, const AttackPool& pool,
                                                   std::uint64_t seed) {
    if (snippet_size < 0) throw std::invalid_argument("snippet_size must be >= 0");
    if (static_cast<int>(genome.size()) > snippet_size) {
        genome.resize(static_cast<std::size_t>(snippet_size));
        return genome;
    }
    if (static_cast<int>(genome.size()) == snippet_size) return genome;
    std::set<std::string> used(genome.begin(), genome.end());
    std::vector<std::string> extras;
    for (const auto& [id, s] : pool.snippets)
        if (!used.count(id)) extras.push_back(id);
    Rng rng(mix_seed(seed, fnv1a("genome-pad")));
    rng.shuffle(extras);
    for (const auto& id : extras) {
        if (static_cast<int>(genome.size()) == snippet_size) break;
        genome.push_back(id);
    }
    if (static_cast<int>(genome.size()) != snippet_size)
        throw std::runtime_error("cannot pad genome to snippet size " + std::to_string(snippet_size) +
                                 ": pool has only " + std::to_string(pool.size()) + " snippets");
    return genome;
}

// Runs the evasion campaign. Cases the oracle does not already classify as
// vulnerable are excluded (and reported through `excluded`); per-case
// failures are recorded rather than aborting the campaign.
inline std::vector<AttackResult> evade(VictimOracle& oracle, const std::vector<CodeSample>& vuln_cases,
                                       std::vector<std::string> genome, int snippet_size,
                                       const AttackPool& pool, std::uint64_t seed,
                                       LocationPolicy policy = LocationPolicy::uniform_random,
                                       std::vector<std::string>* excluded = nullptr) {
    genome = fit_genome_to_size(std::move(genome), snippet_size, pool, seed);
    std::vector<AttackResult> results;
    for (const CodeSample& c : vuln_cases) {
        const double orig = oracle.predict(c);
        if (orig < 0.5) {
            if (excluded) excluded->push_back(c.id);
            continue;
        }
        AttackResult r;
        r.sample_id = c.id;
        r.orig_prob = orig;
        r.genome = genome;
        try {
            auto [adv, plan] = insert(c, genome, pool, policy, mix_seed(seed, fnv1a(c.id)));
            r.inserted_lines = plan.inserted_lines;
            r.adv_prob = oracle.predict(adv);
            r.bypassed = r.adv_prob < 0.5;
        } catch (const std::exception& e) {
            r.evaluated = false;
            r.error = e.what();
        }
        results.push_back(std::move(r));
    }
    std::sort(results.begin(), results.end(),
              [](const AttackResult& a, const AttackResult& b) { return a.sample_id < b.sample_id; });
    return results;
}

inline double compute_asr(const std::vector<AttackResult>& results) {
    if (results.empty()) throw std::invalid_argument("compute_asr: no results");
    std::size_t bypassed = 0;
    for (const auto& r : results)
        if (r.evaluated && r.bypassed) ++bypassed;
    return static_cast<double>(bypassed) / static_cast<double>(results.size());
}

// ASR over the k cases the victim was most confident about pre-attack.
inline double compute_topk(std::vector<AttackResult> results, int k) {
    if (k < 1) throw std::invalid_argument("compute_topk: k must be >= 1");
    if (static_cast<std::size_t>(k) > results.size())
        throw std::invalid_argument("compute_topk: k exceeds result count");
    std::sort(results.begin(), results.end(), [](const AttackResult& a, const AttackResult& b) {
        if (a.orig_prob != b.orig_prob) return a.orig_prob > b.orig_prob;
        return a.sample_id < b.sample_id;
    });
    results.resize(static_cast<std::size_t>(k));
    return compute_asr(results);
}

// F1 on the vulnerable class at threshold 0.5.
inline double compute_f1(VictimOracle& oracle, const std::vector<CodeSample>& clean_test) {
    bool pos = false, neg = false;
    for (const auto& s : clean_test) (s.label == Label::vulnerable ? pos : neg) = true;
    if (!pos || !neg)
        throw std::invalid_argument("compute_f1: clean test set must contain both classes");
    long tp = 0, fp = 0, fn = 0;
    for (const auto& s : clean_test) {
        const bool pred_vuln = oracle.predict(s) >= 0.5;
        const bool is_vuln = s.label == Label::vulnerable;
        if (pred_vuln && is_vuln) ++tp;
        else if (pred_vuln && !is_vuln) ++fp;
        else if (!pred_vuln && is_vuln) ++fn;
    }
    const double denom = 2.0 * tp + fp + fn;
    return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
}

// ---- 2-D projection export ----

enum class ProjectionMethod { linear, tsne };

namespace detail {

// cyclic Jacobi eigendecomposition of a symmetric matrix
inline void jacobi_eigen(std::vector<std::vector<double>> a, std::vector<double>& eigvals,
                         std::vector<std::vector<double>>& eigvecs) {
    const std::size_t n = a.size();
    eigvecs.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) eigvecs[i][i] = 1.0;
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = eigvecs[k][p], vkq = eigvecs[k][q];
                    eigvecs[k][p] = c * vkp - s * vkq;
                    eigvecs[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    eigvals.resize(n);
    for (std::size_t i = 0; i < n; ++i) eigvals[i] = a[i][i];
}

inline std::vector<std::array<double, 2>> principal_axes_2d(
    const std::vector<std::vector<double>>& reps) {
    const std::size_t n = reps.size();
    const std::size_t d = reps[0].size();
    std::vector<double> mean(d, 0.0);
    for (const auto& r : reps)
        for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
    for (double& m : mean) m /= static_cast<double>(n);

    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
    for (const auto& r : reps) {
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i; j < d; ++j) cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
    }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            cov[i][j] /= static_cast<double>(n);
            cov[j][i] = cov[i][j];
        }

    std::vector<double> eigvals;
    std::vector<std::vector<double>> eigvecs;
    jacobi_eigen(cov, eigvals, eigvecs);

    std::array<std::size_t, 2> top{0, d > 1 ? 1 : 0};
    for (std::size_t j = 0; j < d; ++j) {
        if (eigvals[j] > eigvals[top[0]]) {
            top[1] = top[0];
            top[0] = j;
        } else if (j != top[0] && (top[1] == top[0] || eigvals[j] > eigvals[top[1]])) {
            top[1] = j;
        }
    }
    std::array<std::vector<double>, 2> axes;
    for (int k = 0; k < 2; ++k) {
        axes[static_cast<std::size_t>(k)].resize(d);
        for (std::size_t i = 0; i < d; ++i) axes[static_cast<std::size_t>(k)][i] = eigvecs[i][top[static_cast<std::size_t>(k)]];
        // deterministic sign: the largest-magnitude loading is positive
        std::size_t arg = 0;
        for (std::size_t i = 1; i < d; ++i)
            if (std::abs(axes[static_cast<std::size_t>(k)][i]) > std::abs(axes[static_cast<std::size_t>(k)][arg])) arg = i;
        if (axes[static_cast<std::size_t>(k)][arg] < 0)
            for (double& v : axes[static_cast<std::size_t>(k)]) v = -v;
    }

    std::vector<std::array<double, 2>> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < 2; ++k) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += (reps[i][j] - mean[j]) * axes[static_cast<std::size_t>(k)][j];
            out[i][static_cast<std::size_t>(k)] = dot;
        }
    }
    return out;
}

// exact t-SNE, seeded and deterministic; opt-in alternative to the linear map
inline std::vector<std::array<double, 2>> tsne_2d(const std::vector<std::vector<double>>& reps,
                                                  std::uint64_t seed, double perplexity = 15.0,
                                                  int iterations = 300) {
    const std::size_t n = reps.size();
    const std::size_t d = reps[0].size();
    perplexity = std::min(perplexity, static_cast<double>(n - 1) / 3.0);
    if (perplexity < 1.0) perplexity = 1.0;

    std::vector<std::vector<double>> d2(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = reps[i][k] - reps[j][k];
                s += diff * diff;
            }
            d2[i][j] = d2[j][i] = s;
        }

    // per-point sigma by bisection on the entropy
    std::vector<std::vector<double>> P(n, std::vector<double>(n, 0.0));
    const double target_h = std::log(perplexity);
    for (std::size_t i = 0; i < n; ++i) {
        double beta = 1.0, lo = 0.0, hi = 1e300;
        for (int it = 0; it < 64; ++it) {
            double sum = 0.0, hsum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double p = std::exp(-d2[i][j] * beta);
                sum += p;
                hsum += beta * d2[i][j] * p;
            }
            const double h = sum > 0 ? std::log(sum) + hsum / sum : 0.0;
            if (std::abs(h - target_h) < 1e-5) break;
            if (h > target_h) {
                lo = beta;
                beta = hi > 1e299 ? beta * 2.0 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) sum += std::exp(-d2[i][j] * beta);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && sum > 0) P[i][j] = std::exp(-d2[i][j] * beta) / sum;
    }
    // symmetrize
    double psum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) psum += P[i][j];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = std::max((P[i][j] + P[j][i]) / psum, 1e-12);
            P[i][j] = P[j][i] = v;
        }

    Rng rng(mix_seed(seed, fnv1a("tsne-init")));
    std::vector<std::array<double, 2>> y(n), vel(n, {0.0, 0.0});
    for (auto& p : y) p = {rng.normal() * 1e-4, rng.normal() * 1e-4};

    for (int it = 0; it < iterations; ++it) {
        const double momentum = it < 100 ? 0.5 : 0.8;
        const double exaggeration = it < 100 ? 4.0 : 1.0;
        std::vector<std::vector<double>> Q(n, std::vector<double>(n, 0.0));
        double qsum = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
                const double q = 1.0 / (1.0 + dx * dx + dy * dy);
                Q[i][j] = Q[j][i] = q;
                qsum += 2.0 * q;
            }
        for (std::size_t i = 0; i < n; ++i) {
            double gx = 0.0, gy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double q = Q[i][j];
                const double coef = (exaggeration * P[i][j] - q / qsum) * q;
                gx += 4.0 * coef * (y[i][0] - y[j][0]);
                gy += 4.0 * coef * (y[i][1] - y[j][1]);
            }
            vel[i][0] = momentum * vel[i][0] - 100.0 * gx;
            vel[i][1] = momentum * vel[i][1] - 100.0 * gy;
        }
        for (std::size_t i = 0; i < n; ++i) {
            y[i][0] += vel[i][0];
            y[i][1] += vel[i][1];
        }
    }
    return y;
}

}  // namespace detail

// Writes (x,y,label,adversarial) rows. The default projection is the
// deterministic principal-axes map so repeated exports are byte-identical;
// t-SNE is available behind the method flag.
inline void export_projection(const std::vector<std::vector<double>>& representations,
                              const std::vector<std::string>& labels,
                              const std::vector<bool>& adversarial, const std::string& path,
                              ProjectionMethod method = ProjectionMethod::linear,
                              std::uint64_t seed = 0) {
    if (representations.size() < 3)
        throw std::invalid_argument("export_projection: need at least 3 points");
    if (labels.size() != representations.size() || adversarial.size() != representations.size())
        throw std::invalid_argument("export_projection: label/flag arrays misaligned");
    const std::size_t d = representations[0].size();
    if (d < 1) throw std::invalid_argument("export_projection: empty representations");
    for (const auto& r : representations)
        if (r.size() != d) throw std::invalid_argument("export_projection: ragged representations");

    const auto pts = method == ProjectionMethod::linear
                         ? detail::principal_axes_2d(representations)
                         : detail::tsne_2d(representations, seed);

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write projection file: " + path);
    out << "x,y,label,adversarial\n";
    char buf[64];
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.10g,%.10g", pts[i][0], pts[i][1]);
        out << buf << "," << labels[i] << "," << (adversarial[i] ? 1 : 0) << "\n";
    }
}

}  // namespace eatvul
