#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "eatvul/attack.hpp"
#include "eatvul/pool.hpp"
#include "eatvul/rng.hpp"
#include "eatvul/victim.hpp"

namespace eatvul {

// An ordered snippet combination under evolution. score = ASR - lambda*lines.
struct Individual {
    std::vector<std::string> genome;  // distinct snippet ids
    double score = -std::numeric_limits<double>::infinity();
    double last_asr = 0.0;
    int total_lines = 0;
    bool valid = false;

    std::string key() const {  // canonical combination key (order-insensitive)
        std::vector<std::string> ids = genome;
        std::sort(ids.begin(), ids.end());
        std::string k;
        for (const auto& id : ids) {
            k += id;
            k.push_back('|');
        }
        return k;
    }
};

struct FgaConfig {
    int K = 4;                  // fuzzy cluster count
    double alpha = 2.0;         // fuzziness exponent
    double lambda = 0.01;       // length penalty per inserted line
    double epsilon = 1e-3;      // centroid movement threshold
    int population_size = 30;
    int max_generations = 50;
    int max_genome_len = 4;
    std::uint64_t seed = 1;
    std::uint64_t max_queries = 0;  // 0 = unlimited
    LocationPolicy location_policy = LocationPolicy::uniform_random;

    void validate() const {
        if (K < 2) throw std::invalid_argument("fga: K must be >= 2");
        if (alpha <= 1.0) throw std::invalid_argument("fga: alpha must be > 1");
        if (lambda < 0.0) throw std::invalid_argument("fga: lambda must be >= 0");
        if (population_size < K) throw std::invalid_argument("fga: population_size must be >= K");
        if (max_genome_len < 1) throw std::invalid_argument("fga: max_genome_len must be >= 1");
        if (max_generations < 0) throw std::invalid_argument("fga: max_generations must be >= 0");
    }
};

struct FuzzyState {
    std::vector<double> centroids;
    std::vector<std::vector<double>> membership;  // n x K, rows sum to 1
    std::vector<int> labels;                      // argmax membership
    bool degenerate = false;                      // all scores equal
    int iterations = 0;
};

// Alternating membership/centroid updates: membership with exponent
// 2/(alpha-1) over |score - c|, centroids as the membership^alpha-weighted
// mean. Stops when hard labels are stable and centroids move < epsilon.
inline FuzzyState fuzzy_cluster(const std::vector<double>& scores, int K, double alpha,
                                double epsilon, std::uint64_t seed) {
    const std::size_t n = scores.size();
    if (static_cast<int>(n) < K)
        throw std::invalid_argument("fuzzy_cluster: need at least K scores");

    double lo = scores[0], hi = scores[0];
    for (double s : scores) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }

    FuzzyState st;
    st.membership.assign(n, std::vector<double>(static_cast<std::size_t>(K), 0.0));
    st.labels.assign(n, 0);
    st.centroids.resize(static_cast<std::size_t>(K));
    Rng rng(mix_seed(seed, fnv1a("fuzzy-init")));
    for (int k = 0; k < K; ++k)
        st.centroids[static_cast<std::size_t>(k)] = lo + rng.uniform() * (hi - lo);

    if (hi - lo < 1e-15) {
        // single effective cluster; memberships stay uniform
        st.degenerate = true;
        for (std::size_t j = 0; j < n; ++j) {
            for (int k = 0; k < K; ++k)
                st.membership[j][static_cast<std::size_t>(k)] = 1.0 / K;
            st.labels[j] = 0;
        }
        for (int k = 0; k < K; ++k) st.centroids[static_cast<std::size_t>(k)] = lo;
        return st;
    }

    const double expo = 2.0 / (alpha - 1.0);
    for (int it = 0; it < 100; ++it) {
        st.iterations = it + 1;
        // membership update
        for (std::size_t j = 0; j < n; ++j) {
            int zero_at = -1;
            for (int k = 0; k < K; ++k) {
                if (std::abs(scores[j] - st.centroids[static_cast<std::size_t>(k)]) < 1e-15) {
                    zero_at = k;
                    break;
                }
            }
            if (zero_at >= 0) {
                for (int k = 0; k < K; ++k)
                    st.membership[j][static_cast<std::size_t>(k)] = k == zero_at ? 1.0 : 0.0;
            } else {
                for (int k = 0; k < K; ++k) {
                    const double djk = std::abs(scores[j] - st.centroids[static_cast<std::size_t>(k)]);
                    double denom = 0.0;
                    for (int l = 0; l < K; ++l) {
                        const double djl = std::abs(scores[j] - st.centroids[static_cast<std::size_t>(l)]);
                        denom += std::pow(djk / djl, expo);
                    }
                    st.membership[j][static_cast<std::size_t>(k)] = 1.0 / denom;
                }
            }
        }
        // centroid update
        double max_move = 0.0;
        for (int k = 0; k < K; ++k) {
            double num = 0.0, den = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double wa = std::pow(st.membership[j][static_cast<std::size_t>(k)], alpha);
                num += wa * scores[j];
                den += wa;
            }
            const double c = den > 0 ? num / den : st.centroids[static_cast<std::size_t>(k)];
            max_move = std::max(max_move, std::abs(c - st.centroids[static_cast<std::size_t>(k)]));
            st.centroids[static_cast<std::size_t>(k)] = c;
        }
        // hard labels
        bool label_change = false;
        for (std::size_t j = 0; j < n; ++j) {
            int best = 0;
            for (int k = 1; k < K; ++k) {
                if (std::abs(scores[j] - st.centroids[static_cast<std::size_t>(k)]) <
                    std::abs(scores[j] - st.centroids[static_cast<std::size_t>(best)]))
                    best = k;
            }
            if (best != st.labels[j]) {
                st.labels[j] = best;
                label_change = true;
            }
        }
        if (!label_change && max_move < epsilon) break;
    }
    return st;
}

// The clustering loss the update equations minimize: sum of
// membership^alpha times squared score-centroid distance.
inline double clustering_objective(const std::vector<double>& scores, const FuzzyState& st,
                                   double alpha) {
    double obj = 0.0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
        for (std::size_t k = 0; k < st.centroids.size(); ++k) {
            const double d = scores[j] - st.centroids[k];
            obj += std::pow(st.membership[j][k], alpha) * d * d;
        }
    }
    return obj;
}

struct MatingSelection {
    int cluster_a = -1;  // highest centroid
    int cluster_b = -1;  // second highest
    bool median_fallback = false;
};

// The two clusters with the highest centroids among non-empty ones; ties at
// second place go to the lower cluster index. Falls back to a median split
// when fewer than two clusters are populated.
inline MatingSelection select_mating_clusters(const FuzzyState& st) {
    const int K = static_cast<int>(st.centroids.size());
    std::vector<int> count(static_cast<std::size_t>(K), 0);
    for (int l : st.labels) ++count[static_cast<std::size_t>(l)];
    std::vector<int> nonempty;
    for (int k = 0; k < K; ++k)
        if (count[static_cast<std::size_t>(k)] > 0) nonempty.push_back(k);

    MatingSelection sel;
    if (nonempty.size() < 2) {
        sel.median_fallback = true;
        sel.cluster_a = nonempty.empty() ? 0 : nonempty[0];
        sel.cluster_b = sel.cluster_a;
        return sel;
    }
    std::sort(nonempty.begin(), nonempty.end(), [&](int a, int b) {
        const double ca = st.centroids[static_cast<std::size_t>(a)];
        const double cb = st.centroids[static_cast<std::size_t>(b)];
        if (ca != cb) return ca > cb;
        return a < b;
    });
    sel.cluster_a = nonempty[0];
    sel.cluster_b = nonempty[1];
    return sel;
}

struct FitnessContext {
    const AttackPool& pool;
    const std::vector<CodeSample>& vuln_group;
    VictimOracle& oracle;
    double lambda = 0.01;
    LocationPolicy policy = LocationPolicy::uniform_random;
    std::uint64_t seed = 1;
};

// Eq-3-style fitness: fraction of the vulnerable group flipped to
// nonvulnerable, minus lambda per inserted line. Combinations that fail
// validation score -inf and never mate.
inline double fitness(Individual& ind, const FitnessContext& ctx) {
    if (ind.genome.empty()) throw std::invalid_argument("fitness: empty genome");
    int lines = 0;
    for (const auto& id : ind.genome) lines += ctx.pool.at(id).line_count();
    ind.total_lines = lines;

    std::size_t flipped = 0;
    try {
        for (const CodeSample& c : ctx.vuln_group) {
            auto [adv, plan] = insert(c, ind.genome, ctx.pool, ctx.policy,
                                      mix_seed(ctx.seed, fnv1a(ind.key() + ":" + c.id)));
            if (ctx.oracle.predict(adv) < 0.5) ++flipped;
        }
    } catch (const QueryBudgetExceeded&) {
        throw;
    } catch (const std::exception&) {
        ind.valid = false;
        ind.score = -std::numeric_limits<double>::infinity();
        ind.last_asr = 0.0;
        return ind.score;
    }
    ind.valid = true;
    ind.last_asr = static_cast<double>(flipped) / static_cast<double>(ctx.vuln_group.size());
    ind.score = ind.last_asr - ctx.lambda * static_cast<double>(lines);
    return ind.score;
}

// Eq-6 parent weights for the survivors: f_i = w_ik^alpha |score_i - c_k|
// against the survivor's own selected-cluster centroid, turned into a
// softmax distribution.
inline std::vector<double> parent_probabilities(const std::vector<Individual>& survivors,
                                                const std::vector<double>& normalized_scores,
                                                const FuzzyState& st,
                                                const std::vector<int>& member_rows, double alpha) {
    std::vector<double> f(survivors.size(), 0.0);
    for (std::size_t i = 0; i < survivors.size(); ++i) {
        const int row = member_rows[i];
        if (row < 0) continue;  // elitism guest without a cluster row
        const int k = st.labels[static_cast<std::size_t>(row)];
        const double w = st.membership[static_cast<std::size_t>(row)][static_cast<std::size_t>(k)];
        f[i] = std::pow(w, alpha) *
               std::abs(normalized_scores[static_cast<std::size_t>(row)] -
                        st.centroids[static_cast<std::size_t>(k)]);
    }
    double mx = f.empty() ? 0.0 : f[0];
    for (double v : f) mx = std::max(mx, v);
    double sum = 0.0;
    std::vector<double> p(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        p[i] = std::exp(f[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

inline std::size_t draw_index(const std::vector<double>& probs, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.size() - 1;
}

// Concatenation crossover with duplicate-id and seen-combination rejection.
// When every candidate child is a replica, injects a fresh random singleton.
inline std::vector<Individual> crossover(const std::vector<Individual>& survivors,
                                         const std::vector<double>& parent_probs,
                                         const AttackPool& pool, int want, int max_genome_len,
                                         std::set<std::string>& seen, Rng& rng) {
    std::vector<std::string> pool_ids;
    for (const auto& [id, s] : pool.snippets) pool_ids.push_back(id);

    std::vector<Individual> offspring;
    while (static_cast<int>(offspring.size()) < want) {
        bool made = false;
        for (int attempt = 0; attempt < 24 && !made; ++attempt) {
            const std::size_t a = draw_index(parent_probs, rng);
            std::size_t b = draw_index(parent_probs, rng);
            for (int r = 0; r < 8 && b == a && survivors.size() > 1; ++r)
                b = draw_index(parent_probs, rng);
            if (b == a) continue;
            Individual child;
            for (const auto& id : survivors[a].genome) {
                if (std::find(child.genome.begin(), child.genome.end(), id) == child.genome.end())
                    child.genome.push_back(id);
            }
            for (const auto& id : survivors[b].genome) {
                if (static_cast<int>(child.genome.size()) >= max_genome_len) break;
                if (std::find(child.genome.begin(), child.genome.end(), id) == child.genome.end())
                    child.genome.push_back(id);
            }
            if (static_cast<int>(child.genome.size()) > max_genome_len)
                child.genome.resize(static_cast<std::size_t>(max_genome_len));
            if (child.genome.empty()) continue;
            if (seen.insert(child.key()).second) {
                offspring.push_back(std::move(child));
                made = true;
            }
        }
        if (!made) {
            // replicated combinations everywhere: inject a fresh singleton
            Individual child;
            std::vector<std::string> unseen;
            for (const auto& id : pool_ids) {
                Individual probe;
                probe.genome = {id};
                if (!seen.count(probe.key())) unseen.push_back(id);
            }
            const auto& from = unseen.empty() ? pool_ids : unseen;
            child.genome = {from[rng.uniform_index(from.size())]};
            seen.insert(child.key());
            offspring.push_back(std::move(child));
        }
    }
    return offspring;
}

struct GenerationLogEntry {
    int gen = 0;
    double best_score = 0.0;
    double mean_score = 0.0;
    std::vector<std::string> best_genome;
    std::uint64_t queries_used = 0;
};

struct FgaResult {
    std::vector<Individual> population;  // sorted by score, best first
    Individual best;
    std::vector<GenerationLogEntry> log;
    bool reached_full_asr = false;
    bool partial = false;  // stopped on the query budget
    std::uint64_t queries_used = 0;
};

namespace detail {

inline std::vector<double> minmax_normalize(const std::vector<double>& scores) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (double s : scores) {
        if (!std::isfinite(s)) continue;
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    std::vector<double> out(scores.size(), 0.5);
    if (!std::isfinite(lo) || hi - lo < 1e-15) return out;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (std::isfinite(scores[i])) out[i] = (scores[i] - lo) / (hi - lo);
        else out[i] = 0.0;
    }
    return out;
}

}  // namespace detail

// Algorithm: score -> fuzzy-cluster -> keep top-2 clusters (plus the global
// best, so the best fitness is monotone) -> softmax crossover -> rescore.
// Stops at full ASR, the generation cap, or the query budget.
inline FgaResult run_fga(const FgaConfig& config, const AttackPool& pool,
                         const std::vector<CodeSample>& vuln_group, VictimOracle& oracle) {
    config.validate();
    if (pool.empty()) throw std::invalid_argument("run_fga: empty attack pool");
    if (vuln_group.empty()) throw std::invalid_argument("run_fga: empty vulnerable group");

    const std::uint64_t queries_at_start = oracle.query_count();
    FitnessContext ctx{pool, vuln_group, oracle, config.lambda, config.location_policy, config.seed};
    Rng rng(mix_seed(config.seed, fnv1a("fga-run")));

    std::vector<std::string> pool_ids;
    for (const auto& [id, s] : pool.snippets) pool_ids.push_back(id);

    FgaResult res;
    std::set<std::string> seen;
    std::map<std::string, Individual> cache;  // scored combinations by key

    auto queries_used = [&]() { return oracle.query_count() - queries_at_start; };
    auto budget_left = [&]() {
        return config.max_queries == 0 ||
               queries_used() + vuln_group.size() <= config.max_queries;
    };

    auto score_individual = [&](Individual& ind) -> bool {
        auto it = cache.find(ind.key());
        if (it != cache.end()) {
            ind.score = it->second.score;
            ind.last_asr = it->second.last_asr;
            ind.total_lines = it->second.total_lines;
            ind.valid = it->second.valid;
            return true;
        }
        if (!budget_left()) return false;
        fitness(ind, ctx);
        cache[ind.key()] = ind;
        return true;
    };

    // initial population: random combinations of 1..max_genome_len snippets
    std::vector<Individual> population;
    for (int i = 0; i < config.population_size; ++i) {
        Individual ind;
        const std::size_t len =
            1 + rng.uniform_index(static_cast<std::size_t>(
                    std::min<std::size_t>(static_cast<std::size_t>(config.max_genome_len), pool_ids.size())));
        const auto idx = rng.sample_without_replacement(pool_ids.size(), len);
        for (std::size_t k : idx) ind.genome.push_back(pool_ids[k]);
        seen.insert(ind.key());
        population.push_back(std::move(ind));
    }

    bool budget_hit = false;
    for (auto& ind : population) {
        if (!score_individual(ind)) {
            budget_hit = true;
            break;
        }
    }

    auto best_of = [](const std::vector<Individual>& pop) {
        const Individual* best = &pop[0];
        for (const auto& ind : pop)
            if (ind.score > best->score) best = &ind;
        return *best;
    };
    auto log_generation = [&](int gen) {
        GenerationLogEntry e;
        e.gen = gen;
        const Individual b = best_of(population);
        e.best_score = b.score;
        e.best_genome = b.genome;
        double mean = 0.0;
        int counted = 0;
        for (const auto& ind : population) {
            if (std::isfinite(ind.score)) {
                mean += ind.score;
                ++counted;
            }
        }
        e.mean_score = counted > 0 ? mean / counted : 0.0;
        e.queries_used = queries_used();
        res.log.push_back(e);
    };

    log_generation(0);
    Individual global_best = best_of(population);

    for (int gen = 1; gen <= config.max_generations && !budget_hit; ++gen) {
        if (global_best.valid && global_best.last_asr >= 1.0) {
            res.reached_full_asr = true;
            break;
        }

        // cluster the valid members on min-max normalized scores
        std::vector<std::size_t> valid_rows;
        std::vector<double> valid_scores;
        for (std::size_t i = 0; i < population.size(); ++i) {
            if (population[i].valid && std::isfinite(population[i].score)) {
                valid_rows.push_back(i);
                valid_scores.push_back(population[i].score);
            }
        }
        std::vector<Individual> survivors;
        std::vector<int> member_rows;
        std::vector<double> normalized = detail::minmax_normalize(valid_scores);
        FuzzyState st;
        if (static_cast<int>(valid_rows.size()) >= 2) {
            const int K = std::min(config.K, static_cast<int>(valid_rows.size()));
            st = fuzzy_cluster(normalized, K, config.alpha, config.epsilon,
                               mix_seed(config.seed, static_cast<std::uint64_t>(gen)));
            const MatingSelection sel = select_mating_clusters(st);
            if (sel.median_fallback) {
                // split the single cluster at its median: the upper half survives
                std::vector<std::size_t> by_score(valid_rows.size());
                for (std::size_t r = 0; r < by_score.size(); ++r) by_score[r] = r;
                std::sort(by_score.begin(), by_score.end(), [&](std::size_t a, std::size_t b) {
                    if (normalized[a] != normalized[b]) return normalized[a] > normalized[b];
                    return a < b;
                });
                const std::size_t keep = (by_score.size() + 1) / 2;
                for (std::size_t i = 0; i < keep; ++i) {
                    const std::size_t r = by_score[i];
                    survivors.push_back(population[valid_rows[r]]);
                    member_rows.push_back(static_cast<int>(r));
                }
            } else {
                for (std::size_t r = 0; r < valid_rows.size(); ++r) {
                    const int lab = st.labels[r];
                    if (lab == sel.cluster_a || lab == sel.cluster_b) {
                        survivors.push_back(population[valid_rows[r]]);
                        member_rows.push_back(static_cast<int>(r));
                    }
                }
            }
        } else {
            for (std::size_t r = 0; r < valid_rows.size(); ++r) {
                survivors.push_back(population[valid_rows[r]]);
                member_rows.push_back(-1);
            }
        }
        // elitism guard: the global best always survives
        bool best_in = false;
        for (const auto& s : survivors)
            if (s.key() == global_best.key()) best_in = true;
        if (!best_in && global_best.valid) {
            survivors.push_back(global_best);
            member_rows.push_back(-1);
        }
        if (survivors.empty()) {
            // nothing valid yet: reseed from the pool
            Individual fresh;
            fresh.genome = {pool_ids[rng.uniform_index(pool_ids.size())]};
            survivors.push_back(fresh);
            member_rows.push_back(-1);
        }
        if (static_cast<int>(survivors.size()) > config.population_size) {
            std::vector<std::size_t> order(survivors.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return survivors[a].score > survivors[b].score;
            });
            std::vector<Individual> trimmed;
            std::vector<int> trimmed_rows;
            for (int i = 0; i < config.population_size; ++i) {
                trimmed.push_back(survivors[order[static_cast<std::size_t>(i)]]);
                trimmed_rows.push_back(member_rows[order[static_cast<std::size_t>(i)]]);
            }
            survivors = std::move(trimmed);
            member_rows = std::move(trimmed_rows);
        }

        std::vector<Individual> offspring;
        const int want = config.population_size - static_cast<int>(survivors.size());
        if (want > 0) {
            std::vector<double> pp;
            if (static_cast<int>(valid_rows.size()) >= 2 && survivors.size() > 1) {
                std::vector<double> norm_for_rows = normalized;
                pp = parent_probabilities(survivors, norm_for_rows, st, member_rows, config.alpha);
            } else {
                pp.assign(survivors.size(), 1.0 / static_cast<double>(survivors.size()));
            }
            offspring = crossover(survivors, pp, pool, want, config.max_genome_len, seen, rng);
        }

        population = survivors;
        for (auto& child : offspring) {
            if (!score_individual(child)) {
                budget_hit = true;
            }
            population.push_back(std::move(child));
        }
        for (const auto& ind : population) {
            if (std::isfinite(ind.score) && ind.score > global_best.score) global_best = ind;
        }
        log_generation(gen);
        if (budget_hit) break;
    }

    if (global_best.valid && global_best.last_asr >= 1.0) res.reached_full_asr = true;
    res.partial = budget_hit;
    res.queries_used = queries_used();
    std::sort(population.begin(), population.end(), [](const Individual& a, const Individual& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.key() < b.key();
    });
    res.population = population;
    res.best = global_best;
    return res;
}

}  // namespace eatvul
