#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace eatvul {

// Dense row-major matrix of doubles. Everything in this project is
// desk-scale, so plain loops beat pulling in a BLAS.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}
    Mat(int r, int c, std::vector<double> data) : rows(r), cols(c), a(std::move(data)) {
        assert(a.size() == static_cast<std::size_t>(r) * c);
    }

    double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

    std::size_t size() const { return a.size(); }

    void fill(double v) { std::fill(a.begin(), a.end(), v); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : a)
            if (!std::isfinite(v)) return false;
        return true;
    }

    friend bool operator==(const Mat& x, const Mat& y) {
        return x.rows == y.rows && x.cols == y.cols && x.a == y.a;
    }
};

// C = op(A) * op(B), with optional transposes.
inline Mat matmul(const Mat& A, const Mat& B, bool ta = false, bool tb = false) {
    const int m = ta ? A.cols : A.rows;
    const int k = ta ? A.rows : A.cols;
    const int kb = tb ? B.cols : B.rows;
    const int n = tb ? B.rows : B.cols;
    if (k != kb) throw std::invalid_argument("matmul: inner dimensions mismatch");
    Mat C(m, n);
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = ta ? A(p, i) : A(i, p);
            if (av == 0.0) continue;
            for (int j = 0; j < n; ++j) {
                C(i, j) += av * (tb ? B(j, p) : B(p, j));
            }
        }
    }
    return C;
}

inline void axpy(Mat& y, double alpha, const Mat& x) {
    assert(y.same_shape(x));
    for (std::size_t i = 0; i < y.a.size(); ++i) y.a[i] += alpha * x.a[i];
}

}  // namespace eatvul
