#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "eatvul/corpus.hpp"

namespace eatvul {

// label encoding for the SVM: nonvulnerable -> -1, vulnerable -> +1
inline int svm_label(Label l) { return l == Label::vulnerable ? +1 : -1; }

struct SvmConfig {
    double C = 1.0;
    double tol = 1e-5;        // KKT violation tolerance for the solver
    double alpha_tol = 1e-6;  // dual coefficient threshold for support membership
    long max_iter = 10'000'000;
};

struct SvmModel {
    std::vector<double> w;
    double b = 0.0;
    double C = 1.0;
    double alpha_tol = 1e-6;
    std::vector<double> alphas;
    std::vector<int> support_indices;
    std::vector<double> slack;  // xi_i = max(0, 1 - y_i f(x_i))

    double decision(const std::vector<double>& x) const {
        double s = b;
        for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
        return s;
    }
};

// Soft-margin linear SVM trained on the dual with maximal-violating-pair
// SMO updates (y in {-1,+1}).
inline SvmModel train_svm(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                          double C, const SvmConfig& base = {}) {
    SvmConfig cfg = base;
    cfg.C = C;
    const int n = static_cast<int>(X.size());
    if (n < 2 || y.size() != X.size()) throw std::invalid_argument("train_svm: need >= 2 labeled points");
    if (C <= 0.0) throw std::invalid_argument("train_svm: C must be > 0");
    bool pos = false, neg = false;
    for (int yi : y) {
        if (yi == +1) pos = true;
        else if (yi == -1) neg = true;
        else throw std::invalid_argument("train_svm: labels must be -1 or +1");
    }
    if (!pos || !neg) throw std::invalid_argument("train_svm: both classes required");
    const std::size_t dim = X[0].size();
    for (const auto& row : X) {
        if (row.size() != dim) throw std::invalid_argument("train_svm: ragged feature matrix");
        for (double v : row)
            if (!std::isfinite(v)) throw std::invalid_argument("train_svm: non-finite feature value");
    }

    // cached linear kernel
    std::vector<double> K(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            double d = 0.0;
            for (std::size_t k = 0; k < dim; ++k) d += X[static_cast<std::size_t>(i)][k] * X[static_cast<std::size_t>(j)][k];
            K[static_cast<std::size_t>(i) * n + j] = d;
            K[static_cast<std::size_t>(j) * n + i] = d;
        }
    }
    auto k_at = [&](int i, int j) { return K[static_cast<std::size_t>(i) * n + j]; };

    std::vector<double> alpha(static_cast<std::size_t>(n), 0.0);
    // gradient of the dual objective 0.5 a'Qa - 1'a, Q_ij = y_i y_j K_ij
    std::vector<double> grad(static_cast<std::size_t>(n), -1.0);

    for (long it = 0; it < cfg.max_iter; ++it) {
        // maximal violating pair over I_up / I_low
        int i_sel = -1, j_sel = -1;
        double up_max = -std::numeric_limits<double>::infinity();
        double low_min = std::numeric_limits<double>::infinity();
        for (int t = 0; t < n; ++t) {
            const double yG = -y[static_cast<std::size_t>(t)] * grad[static_cast<std::size_t>(t)];
            const bool in_up = (y[static_cast<std::size_t>(t)] == +1 && alpha[static_cast<std::size_t>(t)] < C - 1e-12) ||
                               (y[static_cast<std::size_t>(t)] == -1 && alpha[static_cast<std::size_t>(t)] > 1e-12);
            const bool in_low = (y[static_cast<std::size_t>(t)] == +1 && alpha[static_cast<std::size_t>(t)] > 1e-12) ||
                                (y[static_cast<std::size_t>(t)] == -1 && alpha[static_cast<std::size_t>(t)] < C - 1e-12);
            if (in_up && yG > up_max) {
                up_max = yG;
                i_sel = t;
            }
            if (in_low && yG < low_min) {
                low_min = yG;
                j_sel = t;
            }
        }
        if (i_sel < 0 || j_sel < 0 || up_max - low_min < cfg.tol) break;

        const int i = i_sel, j = j_sel;
        const double yi = y[static_cast<std::size_t>(i)], yj = y[static_cast<std::size_t>(j)];
        double eta = k_at(i, i) + k_at(j, j) - 2.0 * k_at(i, j);
        if (eta <= 1e-12) eta = 1e-12;
        // unconstrained step along the pair keeping sum(alpha*y) fixed
        const double delta = (up_max - low_min) / eta;
        double ai = alpha[static_cast<std::size_t>(i)] + yi * delta;
        double aj = alpha[static_cast<std::size_t>(j)] - yj * delta;

        // clip to the box, preserving the equality constraint
        const double zeta = yi * alpha[static_cast<std::size_t>(i)] + yj * alpha[static_cast<std::size_t>(j)];
        ai = std::clamp(ai, 0.0, C);
        aj = yj * (zeta - yi * ai);
        if (aj < 0.0) {
            aj = 0.0;
            ai = yi * zeta;
        } else if (aj > C) {
            aj = C;
            ai = yi * (zeta - yj * C);
        }
        ai = std::clamp(ai, 0.0, C);

        const double dai = ai - alpha[static_cast<std::size_t>(i)];
        const double daj = aj - alpha[static_cast<std::size_t>(j)];
        if (std::abs(dai) < 1e-15 && std::abs(daj) < 1e-15) break;
        alpha[static_cast<std::size_t>(i)] = ai;
        alpha[static_cast<std::size_t>(j)] = aj;
        for (int t = 0; t < n; ++t) {
            grad[static_cast<std::size_t>(t)] += y[static_cast<std::size_t>(t)] *
                (yi * dai * k_at(i, t) + yj * daj * k_at(j, t));
        }
    }

    SvmModel m;
    m.C = C;
    m.alpha_tol = cfg.alpha_tol;
    m.alphas = alpha;
    m.w.assign(dim, 0.0);
    for (int i = 0; i < n; ++i) {
        if (alpha[static_cast<std::size_t>(i)] == 0.0) continue;
        const double coef = alpha[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
        for (std::size_t k = 0; k < dim; ++k) m.w[k] += coef * X[static_cast<std::size_t>(i)][k];
    }
    // bias from free support vectors, else the midpoint of the KKT bounds
    double free_sum = 0.0;
    int free_count = 0;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        double wx = 0.0;
        for (std::size_t k = 0; k < dim; ++k) wx += m.w[k] * X[static_cast<std::size_t>(i)][k];
        const double r = y[static_cast<std::size_t>(i)] - wx;
        const double a = alpha[static_cast<std::size_t>(i)];
        if (a > cfg.alpha_tol && a < C - cfg.alpha_tol) {
            free_sum += r;
            ++free_count;
        } else {
            // alpha = 0 with y=+1 (or alpha = C with y=-1) lower-bounds b;
            // the mirror cases upper-bound it
            const bool lower = (a <= cfg.alpha_tol && y[static_cast<std::size_t>(i)] == +1) ||
                               (a >= C - cfg.alpha_tol && y[static_cast<std::size_t>(i)] == -1);
            if (lower) lo = std::max(lo, r);
            else hi = std::min(hi, r);
        }
    }
    if (free_count > 0) {
        m.b = free_sum / free_count;
    } else if (std::isfinite(lo) && std::isfinite(hi)) {
        m.b = 0.5 * (lo + hi);
    } else if (std::isfinite(lo)) {
        m.b = lo;
    } else if (std::isfinite(hi)) {
        m.b = hi;
    }

    for (int i = 0; i < n; ++i) {
        if (alpha[static_cast<std::size_t>(i)] > cfg.alpha_tol) m.support_indices.push_back(i);
        double fx = m.b;
        for (std::size_t k = 0; k < dim; ++k) fx += m.w[k] * X[static_cast<std::size_t>(i)][k];
        m.slack.push_back(std::max(0.0, 1.0 - y[static_cast<std::size_t>(i)] * fx));
    }
    return m;
}

// Non-vulnerable support vectors ("important samples"), ordered by
// descending dual coefficient.
struct ImportantSampleSet {
    std::vector<std::string> ids;
    std::vector<int> indices;  // into the aligned sample/representation arrays
    std::vector<double> alphas;
};

inline ImportantSampleSet important_samples(const SvmModel& model,
                                            const std::vector<CodeSample>& samples) {
    if (model.alphas.size() != samples.size())
        throw std::invalid_argument("important_samples: model/sample count mismatch");
    std::vector<int> chosen;
    for (int idx : model.support_indices) {
        if (samples[static_cast<std::size_t>(idx)].label == Label::nonvulnerable) chosen.push_back(idx);
    }
    if (chosen.empty())
        throw std::runtime_error(
            "important_samples: no non-vulnerable support vectors; adjust the SVM C parameter");
    std::sort(chosen.begin(), chosen.end(), [&](int a, int b) {
        const double aa = model.alphas[static_cast<std::size_t>(a)];
        const double ab = model.alphas[static_cast<std::size_t>(b)];
        if (aa != ab) return aa > ab;
        return a < b;
    });
    ImportantSampleSet out;
    for (int idx : chosen) {
        out.ids.push_back(samples[static_cast<std::size_t>(idx)].id);
        out.indices.push_back(idx);
        out.alphas.push_back(model.alphas[static_cast<std::size_t>(idx)]);
    }
    return out;
}

}  // namespace eatvul
