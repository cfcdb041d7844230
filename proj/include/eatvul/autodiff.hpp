#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "eatvul/matrix.hpp"

namespace eatvul {

// Reverse-mode tape over Mat values. Nodes are appended in topological
// order; backward() walks the tape in reverse. Sized for desk-scale models
// (a few thousand nodes per sequence), in double precision so the
// finite-difference gradient check is meaningful.
class Tape {
public:
    struct Node {
        Mat value;
        Mat grad;
        const Mat* ext_value = nullptr;  // parameter leaves reference storage
        Mat* ext_grad = nullptr;         // owned by the caller
        std::function<void(Tape&, const Node&)> backward;
    };

    int leaf(Mat v) {
        Node n;
        n.grad = Mat(v.rows, v.cols);
        n.value = std::move(v);
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    // Parameter leaf backed by caller-owned storage; gradients accumulate
    // into *g (may be null when no backward pass will run).
    int extern_leaf(const Mat* v, Mat* g = nullptr) {
        Node n;
        n.ext_value = v;
        n.ext_grad = g;
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    const Mat& value(int id) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        return n.ext_value ? *n.ext_value : n.value;
    }
    Mat& grad(int id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.ext_grad) return *n.ext_grad;
        return n.grad;
    }

    // gather rows of an embedding matrix
    int embedding_rows(int emb, std::vector<int> ids) {
        const Mat& E = value(emb);
        Mat v(static_cast<int>(ids.size()), E.cols);
        for (int t = 0; t < v.rows; ++t)
            for (int j = 0; j < E.cols; ++j) v(t, j) = E(ids[static_cast<std::size_t>(t)], j);
        return push(std::move(v), [emb, ids = std::move(ids)](Tape& tp, const Node& n) {
            Mat& ge = tp.grad(emb);
            for (int t = 0; t < n.grad.rows; ++t)
                for (int j = 0; j < n.grad.cols; ++j)
                    ge(ids[static_cast<std::size_t>(t)], j) += n.grad(t, j);
        });
    }

    int matmul_op(int a, int b, bool ta = false, bool tb = false) {
        Mat v = matmul(value(a), value(b), ta, tb);
        return push(std::move(v), [a, b, ta, tb](Tape& tp, const Node& n) {
            const Mat& A = tp.value(a);
            const Mat& B = tp.value(b);
            const Mat& g = n.grad;
            // dA and dB for C = op(A) op(B)
            Mat dA = ta ? matmul(B, g, tb, true) : matmul(g, B, false, !tb);
            Mat dB = tb ? matmul(g, A, true, ta) : matmul(A, g, !ta, false);
            axpy(tp.grad(a), 1.0, dA);
            axpy(tp.grad(b), 1.0, dB);
        });
    }

    int add(int a, int b) {
        const Mat& A = value(a);
        const Mat& B = value(b);
        if (!A.same_shape(B)) throw std::invalid_argument("add: shape mismatch");
        Mat v = A;
        axpy(v, 1.0, B);
        return push(std::move(v), [a, b](Tape& tp, const Node& n) {
            axpy(tp.grad(a), 1.0, n.grad);
            axpy(tp.grad(b), 1.0, n.grad);
        });
    }

    // A (T x C) + row vector b (1 x C) broadcast over rows
    int add_rowvec(int a, int b) {
        const Mat& A = value(a);
        const Mat& B = value(b);
        Mat v = A;
        for (int i = 0; i < v.rows; ++i)
            for (int j = 0; j < v.cols; ++j) v(i, j) += B(0, j);
        return push(std::move(v), [a, b](Tape& tp, const Node& n) {
            axpy(tp.grad(a), 1.0, n.grad);
            Mat& gb = tp.grad(b);
            for (int i = 0; i < n.grad.rows; ++i)
                for (int j = 0; j < n.grad.cols; ++j) gb(0, j) += n.grad(i, j);
        });
    }

    int hadamard(int a, int b) {
        const Mat& A = value(a);
        const Mat& B = value(b);
        Mat v = A;
        for (std::size_t i = 0; i < v.a.size(); ++i) v.a[i] *= B.a[i];
        return push(std::move(v), [a, b](Tape& tp, const Node& n) {
            const Mat& A2 = tp.value(a);
            const Mat& B2 = tp.value(b);
            Mat& ga = tp.grad(a);
            Mat& gb = tp.grad(b);
            for (std::size_t i = 0; i < n.grad.a.size(); ++i) {
                ga.a[i] += n.grad.a[i] * B2.a[i];
                gb.a[i] += n.grad.a[i] * A2.a[i];
            }
        });
    }

    int sigmoid(int a) {
        Mat v = value(a);
        for (double& x : v.a) x = 1.0 / (1.0 + std::exp(-x));
        return push(std::move(v), [a](Tape& tp, const Node& n) {
            Mat& ga = tp.grad(a);
            for (std::size_t i = 0; i < n.grad.a.size(); ++i) {
                const double y = n.value.a[i];
                ga.a[i] += n.grad.a[i] * y * (1.0 - y);
            }
        });
    }

    int tanh_op(int a) {
        Mat v = value(a);
        for (double& x : v.a) x = std::tanh(x);
        return push(std::move(v), [a](Tape& tp, const Node& n) {
            Mat& ga = tp.grad(a);
            for (std::size_t i = 0; i < n.grad.a.size(); ++i) {
                const double y = n.value.a[i];
                ga.a[i] += n.grad.a[i] * (1.0 - y * y);
            }
        });
    }

    int concat_cols(int a, int b) {
        const Mat& A = value(a);
        const Mat& B = value(b);
        if (A.rows != B.rows) throw std::invalid_argument("concat_cols: row mismatch");
        Mat v(A.rows, A.cols + B.cols);
        for (int i = 0; i < A.rows; ++i) {
            for (int j = 0; j < A.cols; ++j) v(i, j) = A(i, j);
            for (int j = 0; j < B.cols; ++j) v(i, A.cols + j) = B(i, j);
        }
        const int ac = A.cols;
        return push(std::move(v), [a, b, ac](Tape& tp, const Node& n) {
            Mat& ga = tp.grad(a);
            Mat& gb = tp.grad(b);
            for (int i = 0; i < n.grad.rows; ++i) {
                for (int j = 0; j < ac; ++j) ga(i, j) += n.grad(i, j);
                for (int j = ac; j < n.grad.cols; ++j) gb(i, j - ac) += n.grad(i, j);
            }
        });
    }

    int slice_cols(int a, int from, int len) {
        const Mat& A = value(a);
        Mat v(A.rows, len);
        for (int i = 0; i < A.rows; ++i)
            for (int j = 0; j < len; ++j) v(i, j) = A(i, from + j);
        return push(std::move(v), [a, from](Tape& tp, const Node& n) {
            Mat& ga = tp.grad(a);
            for (int i = 0; i < n.grad.rows; ++i)
                for (int j = 0; j < n.grad.cols; ++j) ga(i, from + j) += n.grad(i, j);
        });
    }

    // stack 1 x C rows into a T x C matrix
    int stack_rows(std::vector<int> rows) {
        if (rows.empty()) throw std::invalid_argument("stack_rows: empty");
        const int c = value(rows[0]).cols;
        Mat v(static_cast<int>(rows.size()), c);
        for (int t = 0; t < v.rows; ++t) {
            const Mat& r = value(rows[static_cast<std::size_t>(t)]);
            for (int j = 0; j < c; ++j) v(t, j) = r(0, j);
        }
        return push(std::move(v), [rows = std::move(rows)](Tape& tp, const Node& n) {
            for (int t = 0; t < n.grad.rows; ++t) {
                Mat& gr = tp.grad(rows[static_cast<std::size_t>(t)]);
                for (int j = 0; j < n.grad.cols; ++j) gr(0, j) += n.grad(t, j);
            }
        });
    }

    int scale(int a, double s) {
        Mat v = value(a);
        for (double& x : v.a) x *= s;
        return push(std::move(v), [a, s](Tape& tp, const Node& n) {
            axpy(tp.grad(a), s, n.grad);
        });
    }

    int softmax_rows(int a) {
        Mat v = value(a);
        for (int i = 0; i < v.rows; ++i) {
            double mx = v(i, 0);
            for (int j = 1; j < v.cols; ++j) mx = std::max(mx, v(i, j));
            double sum = 0.0;
            for (int j = 0; j < v.cols; ++j) {
                v(i, j) = std::exp(v(i, j) - mx);
                sum += v(i, j);
            }
            for (int j = 0; j < v.cols; ++j) v(i, j) /= sum;
        }
        return push(std::move(v), [a](Tape& tp, const Node& n) {
            Mat& ga = tp.grad(a);
            for (int i = 0; i < n.grad.rows; ++i) {
                double dot = 0.0;
                for (int j = 0; j < n.grad.cols; ++j) dot += n.grad(i, j) * n.value(i, j);
                for (int j = 0; j < n.grad.cols; ++j)
                    ga(i, j) += n.value(i, j) * (n.grad(i, j) - dot);
            }
        });
    }

    // mean of the rows of A: T x C -> 1 x C
    int mean_over_rows(int a) {
        const Mat& A = value(a);
        Mat v(1, A.cols);
        for (int i = 0; i < A.rows; ++i)
            for (int j = 0; j < A.cols; ++j) v(0, j) += A(i, j);
        for (double& x : v.a) x /= A.rows;
        const int rows = A.rows;
        return push(std::move(v), [a, rows](Tape& tp, const Node& n) {
            Mat& ga = tp.grad(a);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < n.grad.cols; ++j) ga(i, j) += n.grad(0, j) / rows;
        });
    }

    // cross-entropy of a 1 x K logit row against an integer class label
    int cross_entropy(int logits, int label) {
        const Mat& z = value(logits);
        double mx = z(0, 0);
        for (int j = 1; j < z.cols; ++j) mx = std::max(mx, z(0, j));
        double sum = 0.0;
        for (int j = 0; j < z.cols; ++j) sum += std::exp(z(0, j) - mx);
        Mat v(1, 1);
        v(0, 0) = std::log(sum) + mx - z(0, label);
        return push(std::move(v), [logits, label](Tape& tp, const Node& n) {
            const Mat& z2 = tp.value(logits);
            double mx2 = z2(0, 0);
            for (int j = 1; j < z2.cols; ++j) mx2 = std::max(mx2, z2(0, j));
            double sum2 = 0.0;
            for (int j = 0; j < z2.cols; ++j) sum2 += std::exp(z2(0, j) - mx2);
            Mat& gz = tp.grad(logits);
            for (int j = 0; j < z2.cols; ++j) {
                const double p = std::exp(z2(0, j) - mx2) / sum2;
                gz(0, j) += n.grad(0, 0) * (p - (j == label ? 1.0 : 0.0));
            }
        });
    }

    void backward(int root) {
        Node& r = nodes_[static_cast<std::size_t>(root)];
        if (r.value.rows != 1 || r.value.cols != 1)
            throw std::invalid_argument("backward: root must be scalar");
        r.grad(0, 0) = 1.0;
        for (int i = root; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.backward) n.backward(*this, n);
        }
    }

    std::size_t node_count() const { return nodes_.size(); }

private:
    int push(Mat v, std::function<void(Tape&, const Node&)> bw) {
        Node n;
        n.grad = Mat(v.rows, v.cols);
        n.value = std::move(v);
        n.backward = std::move(bw);
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::vector<Node> nodes_;
};

}  // namespace eatvul
