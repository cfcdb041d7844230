#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

// Independent dual QP oracle for the soft-margin linear SVM: projected
// gradient ascent on max sum(a) - 0.5 a'Qa subject to 0 <= a <= C and
// y'a = 0. The projection onto the box-hyperplane intersection is exact via
// bisection on the hyperplane multiplier. Deliberately shares no code with
// the SMO solver it checks.
namespace qporacle {

struct Solution {
    std::vector<double> alpha;
    std::vector<double> w;
    double b = 0.0;
};

inline Solution solve(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                      double C, int iterations = 60000) {
    const std::size_t n = X.size();
    const std::size_t dim = X[0].size();

    std::vector<std::vector<double>> Q(n, std::vector<double>(n, 0.0));
    double trace = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double k = 0.0;
            for (std::size_t d = 0; d < dim; ++d) k += X[i][d] * X[j][d];
            Q[i][j] = y[i] * y[j] * k;
        }
        trace += Q[i][i];
    }
    const double step = 1.0 / std::max(trace, 1e-9);

    auto project = [&](std::vector<double> z) {
        // alpha(nu) = clip(z - nu*y, 0, C); find nu with y'alpha = 0
        auto residual = [&](double nu) {
            double r = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double v = std::clamp(z[i] - nu * y[i], 0.0, C);
                r += y[i] * v;
            }
            return r;
        };
        double lo = -1e6 * (C + 1.0), hi = 1e6 * (C + 1.0);
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (residual(mid) > 0.0) lo = mid;
            else hi = mid;
        }
        const double nu = 0.5 * (lo + hi);
        for (std::size_t i = 0; i < n; ++i) z[i] = std::clamp(z[i] - nu * y[i], 0.0, C);
        return z;
    };

    std::vector<double> alpha(n, 0.0);
    alpha = project(alpha);
    for (int it = 0; it < iterations; ++it) {
        std::vector<double> z(n);
        for (std::size_t i = 0; i < n; ++i) {
            double g = 1.0;
            for (std::size_t j = 0; j < n; ++j) g -= Q[i][j] * alpha[j];
            z[i] = alpha[i] + step * g;
        }
        alpha = project(std::move(z));
    }

    Solution sol;
    sol.alpha = alpha;
    sol.w.assign(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < dim; ++d) sol.w[d] += alpha[i] * y[i] * X[i][d];

    double free_sum = 0.0;
    int free_count = 0;
    double lo = -1e300, hi = 1e300;
    for (std::size_t i = 0; i < n; ++i) {
        double wx = 0.0;
        for (std::size_t d = 0; d < dim; ++d) wx += sol.w[d] * X[i][d];
        const double r = y[i] - wx;
        if (alpha[i] > 1e-6 && alpha[i] < C - 1e-6) {
            free_sum += r;
            ++free_count;
        } else if ((alpha[i] <= 1e-6 && y[i] == +1) || (alpha[i] >= C - 1e-6 && y[i] == -1)) {
            lo = std::max(lo, r);
        } else {
            hi = std::min(hi, r);
        }
    }
    if (free_count > 0) sol.b = free_sum / free_count;
    else if (lo > -1e299 && hi < 1e299) sol.b = 0.5 * (lo + hi);
    else if (lo > -1e299) sol.b = lo;
    else if (hi < 1e299) sol.b = hi;
    return sol;
}

inline double decision(const Solution& s, const std::vector<double>& x) {
    double v = s.b;
    for (std::size_t d = 0; d < x.size(); ++d) v += s.w[d] * x[d];
    return v;
}

}  // namespace qporacle
