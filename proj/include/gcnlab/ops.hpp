#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "gcnlab/graph.hpp"
#include "gcnlab/rng.hpp"
#include "gcnlab/tape.hpp"
#include "gcnlab/tensor.hpp"

// Differentiable operation set. Every op computes its value eagerly and,
// when a tape is supplied and an input is tracked, records a backward rule.
// Passing tape = nullptr runs pure inference.

namespace gcnlab {

namespace detail {

inline bool tracked(const Tensor& t) { return t.node >= 0; }

// Adds src into the grad buffer of `parent` if that parent is tracked.
inline void scatter(Tape& tape, int parent, const std::vector<double>& src) {
    if (parent < 0) return;
    auto& dst = tape.grad_buf(parent);
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

} // namespace detail

// out = a @ b
inline Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.cols != b.rows)
        throw ValueError("matmul: inner dimensions differ " + shape_str(a) + " @ " +
                         shape_str(b));
    const std::size_t m = a.rows, k = a.cols, n = b.cols;
    Tensor out(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.data.data() + i * k;
        double* orow = out.data.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b.data.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    check_finite(out, "matmul");
    if (tape && (detail::tracked(a) || detail::tracked(b))) {
        int an = a.node, bn = b.node;
        std::vector<double> av = a.data, bv = b.data;
        out.node = tape->add_node(m, n,
            [an, bn, m, k, n, av = std::move(av), bv = std::move(bv)](Tape& t, int self) {
                const auto& g = t.grad_buf(self);
                if (an >= 0) {
                    std::vector<double> da(m * k, 0.0);
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                            double acc = 0.0;
                            for (std::size_t j = 0; j < n; ++j)
                                acc += g[i * n + j] * bv[p * n + j];
                            da[i * k + p] = acc;
                        }
                    detail::scatter(t, an, da);
                }
                if (bn >= 0) {
                    std::vector<double> db(k * n, 0.0);
                    for (std::size_t p = 0; p < k; ++p)
                        for (std::size_t i = 0; i < m; ++i) {
                            const double av_ip = av[i * k + p];
                            if (av_ip == 0.0) continue;
                            for (std::size_t j = 0; j < n; ++j)
                                db[p * n + j] += av_ip * g[i * n + j];
                        }
                    detail::scatter(t, bn, db);
                }
            });
    }
    return out;
}

// out = a + b
inline Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out(a.rows, a.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
    check_finite(out, "add");
    if (tape && (detail::tracked(a) || detail::tracked(b))) {
        int an = a.node, bn = b.node;
        out.node = tape->add_node(a.rows, a.cols, [an, bn](Tape& t, int self) {
            const auto& g = t.grad_buf(self);
            detail::scatter(t, an, g);
            detail::scatter(t, bn, g);
        });
    }
    return out;
}

// out = a + alpha * b
inline Tensor add_scaled(Tape* tape, const Tensor& a, const Tensor& b, double alpha) {
    check_same_shape(a, b, "add_scaled");
    Tensor out(a.rows, a.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = a.data[i] + alpha * b.data[i];
    check_finite(out, "add_scaled");
    if (tape && (detail::tracked(a) || detail::tracked(b))) {
        int an = a.node, bn = b.node;
        out.node = tape->add_node(a.rows, a.cols, [an, bn, alpha](Tape& t, int self) {
            const auto& g = t.grad_buf(self);
            detail::scatter(t, an, g);
            if (bn >= 0) {
                std::vector<double> db(g.size());
                for (std::size_t i = 0; i < g.size(); ++i) db[i] = alpha * g[i];
                detail::scatter(t, bn, db);
            }
        });
    }
    return out;
}

// out = alpha * a
inline Tensor scale(Tape* tape, const Tensor& a, double alpha) {
    Tensor out(a.rows, a.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = alpha * a.data[i];
    check_finite(out, "scale");
    if (tape && detail::tracked(a)) {
        int an = a.node;
        out.node = tape->add_node(a.rows, a.cols, [an, alpha](Tape& t, int self) {
            const auto& g = t.grad_buf(self);
            std::vector<double> da(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) da[i] = alpha * g[i];
            detail::scatter(t, an, da);
        });
    }
    return out;
}

inline Tensor relu(Tape* tape, const Tensor& a) {
    Tensor out(a.rows, a.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = a.data[i] > 0.0 ? a.data[i] : 0.0;
    check_finite(out, "relu");
    if (tape && detail::tracked(a)) {
        int an = a.node;
        std::vector<std::uint8_t> mask(a.data.size());
        for (std::size_t i = 0; i < a.data.size(); ++i) mask[i] = a.data[i] > 0.0;
        out.node = tape->add_node(a.rows, a.cols,
            [an, mask = std::move(mask)](Tape& t, int self) {
                const auto& g = t.grad_buf(self);
                std::vector<double> da(g.size());
                for (std::size_t i = 0; i < g.size(); ++i) da[i] = mask[i] ? g[i] : 0.0;
                detail::scatter(t, an, da);
            });
    }
    return out;
}

// out = a .* b
inline Tensor elementwise_mul(Tape* tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "elementwise_mul");
    Tensor out(a.rows, a.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
    check_finite(out, "elementwise_mul");
    if (tape && (detail::tracked(a) || detail::tracked(b))) {
        int an = a.node, bn = b.node;
        std::vector<double> av = a.data, bv = b.data;
        out.node = tape->add_node(a.rows, a.cols,
            [an, bn, av = std::move(av), bv = std::move(bv)](Tape& t, int self) {
                const auto& g = t.grad_buf(self);
                if (an >= 0) {
                    std::vector<double> da(g.size());
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * bv[i];
                    detail::scatter(t, an, da);
                }
                if (bn >= 0) {
                    std::vector<double> db(g.size());
                    for (std::size_t i = 0; i < g.size(); ++i) db[i] = g[i] * av[i];
                    detail::scatter(t, bn, db);
                }
            });
    }
    return out;
}

// out[i][j] = x[i][j] + b[0][j]
inline Tensor add_row_broadcast(Tape* tape, const Tensor& x, const Tensor& b) {
    if (b.rows != 1 || b.cols != x.cols)
        throw ValueError("add_row_broadcast: bias must be 1x" + std::to_string(x.cols));
    Tensor out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j)
            out(i, j) = x(i, j) + b.data[j];
    check_finite(out, "add_row_broadcast");
    if (tape && (detail::tracked(x) || detail::tracked(b))) {
        int xn = x.node, bn = b.node;
        std::size_t rows = x.rows, cols = x.cols;
        out.node = tape->add_node(rows, cols, [xn, bn, rows, cols](Tape& t, int self) {
            const auto& g = t.grad_buf(self);
            detail::scatter(t, xn, g);
            if (bn >= 0) {
                std::vector<double> db(cols, 0.0);
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j) db[j] += g[i * cols + j];
                detail::scatter(t, bn, db);
            }
        });
    }
    return out;
}

// out[i][j] = x[i][j] * r[0][j]
inline Tensor mul_row_broadcast(Tape* tape, const Tensor& x, const Tensor& r) {
    if (r.rows != 1 || r.cols != x.cols)
        throw ValueError("mul_row_broadcast: scale must be 1x" + std::to_string(x.cols));
    Tensor out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j)
            out(i, j) = x(i, j) * r.data[j];
    check_finite(out, "mul_row_broadcast");
    if (tape && (detail::tracked(x) || detail::tracked(r))) {
        int xn = x.node, rn = r.node;
        std::vector<double> xv = x.data, rv = r.data;
        std::size_t rows = x.rows, cols = x.cols;
        out.node = tape->add_node(rows, cols,
            [xn, rn, rows, cols, xv = std::move(xv), rv = std::move(rv)](Tape& t, int self) {
                const auto& g = t.grad_buf(self);
                if (xn >= 0) {
                    std::vector<double> dx(rows * cols);
                    for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < cols; ++j)
                            dx[i * cols + j] = g[i * cols + j] * rv[j];
                    detail::scatter(t, xn, dx);
                }
                if (rn >= 0) {
                    std::vector<double> dr(cols, 0.0);
                    for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < cols; ++j)
                            dr[j] += g[i * cols + j] * xv[i * cols + j];
                    detail::scatter(t, rn, dr);
                }
            });
    }
    return out;
}

// out = s.data[k] * x, with gradient flowing into both x and entry k of s.
inline Tensor scale_by_entry(Tape* tape, const Tensor& x, const Tensor& s, std::size_t k) {
    if (k >= s.size()) throw ValueError("scale_by_entry: entry index out of range");
    const double sv = s.data[k];
    Tensor out(x.rows, x.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = sv * x.data[i];
    check_finite(out, "scale_by_entry");
    if (tape && (detail::tracked(x) || detail::tracked(s))) {
        int xn = x.node, sn = s.node;
        std::vector<double> xv = x.data;
        std::size_t ssize = s.size();
        out.node = tape->add_node(x.rows, x.cols,
            [xn, sn, sv, k, ssize, xv = std::move(xv)](Tape& t, int self) {
                const auto& g = t.grad_buf(self);
                if (xn >= 0) {
                    std::vector<double> dx(g.size());
                    for (std::size_t i = 0; i < g.size(); ++i) dx[i] = sv * g[i];
                    detail::scatter(t, xn, dx);
                }
                if (sn >= 0) {
                    std::vector<double> ds(ssize, 0.0);
                    for (std::size_t i = 0; i < g.size(); ++i) ds[k] += g[i] * xv[i];
                    detail::scatter(t, sn, ds);
                }
            });
    }
    return out;
}

// Row k of x as a 1 x cols tensor.
inline Tensor row(Tape* tape, const Tensor& x, std::size_t k) {
    if (k >= x.rows) throw ValueError("row: index out of range");
    Tensor out(1, x.cols);
    std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(k * x.cols), x.cols,
                out.data.begin());
    if (tape && detail::tracked(x)) {
        int xn = x.node;
        std::size_t rows = x.rows, cols = x.cols;
        out.node = tape->add_node(1, cols, [xn, k, rows, cols](Tape& t, int self) {
            const auto& g = t.grad_buf(self);
            std::vector<double> dx(rows * cols, 0.0);
            for (std::size_t j = 0; j < cols; ++j) dx[k * cols + j] = g[j];
            detail::scatter(t, xn, dx);
        });
    }
    return out;
}

// Sum of all entries, as a 1x1 scalar.
inline Tensor sum(Tape* tape, const Tensor& x) {
    Tensor out(1, 1);
    double acc = 0.0;
    for (double v : x.data) acc += v;
    out.data[0] = acc;
    check_finite(out, "sum");
    if (tape && detail::tracked(x)) {
        int xn = x.node;
        std::size_t n = x.data.size();
        out.node = tape->add_node(1, 1, [xn, n](Tape& t, int self) {
            const double g = t.grad_buf(self)[0];
            std::vector<double> dx(n, g);
            detail::scatter(t, xn, dx);
        });
    }
    return out;
}

// Sparse-dense product: out[i] = sum_j w(i,j) x[j]. The backward pass
// multiplies by the transpose (identical weights when adj is symmetric).
inline Tensor spmm(Tape* tape, const NormalizedAdjacency& adj, const Tensor& x) {
    const CsrGraph& g = adj.graph;
    if (g.num_nodes != x.rows)
        throw ValueError("spmm: adjacency has " + std::to_string(g.num_nodes) +
                         " nodes but x has " + std::to_string(x.rows) + " rows");
    if (g.edge_weights.size() != g.num_edges())
        throw ValueError("spmm: adjacency is missing edge weights");
    const std::size_t c = x.cols;
    Tensor out(x.rows, c);
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
        double* orow = out.data.data() + i * c;
        for (std::size_t e = g.row_offsets[i]; e < g.row_offsets[i + 1]; ++e) {
            const double w = g.edge_weights[e];
            const double* xrow = x.data.data() + g.col_indices[e] * c;
            for (std::size_t j = 0; j < c; ++j) orow[j] += w * xrow[j];
        }
    }
    check_finite(out, "spmm");
    if (tape && detail::tracked(x)) {
        int xn = x.node;
        auto gp = std::make_shared<const CsrGraph>(g);
        out.node = tape->add_node(x.rows, c, [xn, gp, c](Tape& t, int self) {
            const auto& up = t.grad_buf(self);
            std::vector<double> dx(gp->num_nodes * c, 0.0);
            for (std::size_t i = 0; i < gp->num_nodes; ++i) {
                const double* grow = up.data() + i * c;
                for (std::size_t e = gp->row_offsets[i]; e < gp->row_offsets[i + 1]; ++e) {
                    const double w = gp->edge_weights[e];
                    double* drow = dx.data() + gp->col_indices[e] * c;
                    for (std::size_t j = 0; j < c; ++j) drow[j] += w * grow[j];
                }
            }
            detail::scatter(t, xn, dx);
        });
    }
    return out;
}

namespace detail {

// Shared backward rule for batch/layer norm in their "stats over a group"
// training form. Group = column (batch norm) or row (layer norm).
struct NormSaved {
    std::vector<double> xhat;
    std::vector<double> inv_std; // one per group
    std::vector<double> gamma;
};

} // namespace detail

// Batch normalization over columns. Training mode uses batch statistics
// (biased variance) and updates running stats with the configured momentum;
// inference mode uses the running stats.
inline Tensor batch_norm(Tape* tape, const Tensor& x, NormParams& p, bool training) {
    if (x.rows == 0) throw ValueError("batch_norm: empty input");
    if (x.cols != p.dim())
        throw ValueError("batch_norm: feature dim " + std::to_string(x.cols) +
                         " does not match params dim " + std::to_string(p.dim()));
    const std::size_t m = x.rows, c = x.cols;
    Tensor out(m, c);

    Tensor gamma_t, beta_t;
    int gn = -1, bn = -1;
    if (tape) {
        gamma_t = tape->watch(p.gamma);
        beta_t = tape->watch(p.beta);
        gn = gamma_t.node;
        bn = beta_t.node;
    }
    const std::vector<double>& gamma = p.gamma.value.data;
    const std::vector<double>& beta = p.beta.value.data;

    if (training) {
        std::vector<double> mean(c, 0.0), var(c, 0.0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < c; ++j) mean[j] += x(i, j);
        for (std::size_t j = 0; j < c; ++j) mean[j] /= static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < c; ++j) {
                double d = x(i, j) - mean[j];
                var[j] += d * d;
            }
        for (std::size_t j = 0; j < c; ++j) var[j] /= static_cast<double>(m);

        detail::NormSaved saved;
        saved.xhat.resize(m * c);
        saved.inv_std.resize(c);
        saved.gamma = gamma;
        for (std::size_t j = 0; j < c; ++j)
            saved.inv_std[j] = 1.0 / std::sqrt(var[j] + p.eps);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < c; ++j) {
                double xh = (x(i, j) - mean[j]) * saved.inv_std[j];
                saved.xhat[i * c + j] = xh;
                out(i, j) = xh * gamma[j] + beta[j];
            }
        for (std::size_t j = 0; j < c; ++j) {
            p.running_mean[j] = p.momentum * p.running_mean[j] + (1.0 - p.momentum) * mean[j];
            p.running_var[j] = p.momentum * p.running_var[j] + (1.0 - p.momentum) * var[j];
        }
        check_finite(out, "batch_norm");
        if (tape) {
            int xn = x.node;
            out.node = tape->add_node(m, c,
                [xn, gn, bn, m, c, saved = std::move(saved)](Tape& t, int self) {
                    const auto& g = t.grad_buf(self);
                    std::vector<double> dgamma(c, 0.0), dbeta(c, 0.0);
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < c; ++j) {
                            dgamma[j] += g[i * c + j] * saved.xhat[i * c + j];
                            dbeta[j] += g[i * c + j];
                        }
                    detail::scatter(t, gn, dgamma);
                    detail::scatter(t, bn, dbeta);
                    if (xn >= 0) {
                        // dxhat = g * gamma; dx folds in the mean/var terms
                        std::vector<double> sum_dxhat(c, 0.0), sum_dxhat_xhat(c, 0.0);
                        for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < c; ++j) {
                                double dxh = g[i * c + j] * saved.gamma[j];
                                sum_dxhat[j] += dxh;
                                sum_dxhat_xhat[j] += dxh * saved.xhat[i * c + j];
                            }
                        std::vector<double> dx(m * c);
                        const double inv_m = 1.0 / static_cast<double>(m);
                        for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < c; ++j) {
                                double dxh = g[i * c + j] * saved.gamma[j];
                                dx[i * c + j] = saved.inv_std[j] *
                                    (dxh - inv_m * sum_dxhat[j] -
                                     saved.xhat[i * c + j] * inv_m * sum_dxhat_xhat[j]);
                            }
                        detail::scatter(t, xn, dx);
                    }
                });
        }
        return out;
    }

    // inference: affine transform with frozen statistics
    std::vector<double> inv_std(c);
    for (std::size_t j = 0; j < c; ++j)
        inv_std[j] = 1.0 / std::sqrt(p.running_var[j] + p.eps);
    std::vector<double> xhat(m * c);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            xhat[i * c + j] = (x(i, j) - p.running_mean[j]) * inv_std[j];
            out(i, j) = xhat[i * c + j] * gamma[j] + beta[j];
        }
    check_finite(out, "batch_norm");
    if (tape) {
        int xn = x.node;
        std::vector<double> gamma_copy = gamma;
        out.node = tape->add_node(m, c,
            [xn, gn, bn, m, c, inv_std = std::move(inv_std), xhat = std::move(xhat),
             gamma_copy = std::move(gamma_copy)](Tape& t, int self) {
                const auto& g = t.grad_buf(self);
                std::vector<double> dgamma(c, 0.0), dbeta(c, 0.0);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < c; ++j) {
                        dgamma[j] += g[i * c + j] * xhat[i * c + j];
                        dbeta[j] += g[i * c + j];
                    }
                detail::scatter(t, gn, dgamma);
                detail::scatter(t, bn, dbeta);
                if (xn >= 0) {
                    std::vector<double> dx(m * c);
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < c; ++j)
                            dx[i * c + j] = g[i * c + j] * gamma_copy[j] * inv_std[j];
                    detail::scatter(t, xn, dx);
                }
            });
    }
    return out;
}

// Layer normalization: same formula with statistics per row. Running stats
// are unused; training and inference behave identically.
inline Tensor layer_norm(Tape* tape, const Tensor& x, NormParams& p) {
    if (x.rows == 0) throw ValueError("layer_norm: empty input");
    if (x.cols != p.dim())
        throw ValueError("layer_norm: feature dim does not match params dim");
    const std::size_t m = x.rows, c = x.cols;
    Tensor out(m, c);

    int gn = -1, bn = -1;
    if (tape) {
        gn = tape->watch(p.gamma).node;
        bn = tape->watch(p.beta).node;
    }
    const std::vector<double>& gamma = p.gamma.value.data;
    const std::vector<double>& beta = p.beta.value.data;

    detail::NormSaved saved;
    saved.xhat.resize(m * c);
    saved.inv_std.resize(m);
    saved.gamma = gamma;
    for (std::size_t i = 0; i < m; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += x(i, j);
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            double d = x(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        saved.inv_std[i] = 1.0 / std::sqrt(var + p.eps);
        for (std::size_t j = 0; j < c; ++j) {
            double xh = (x(i, j) - mean) * saved.inv_std[i];
            saved.xhat[i * c + j] = xh;
            out(i, j) = xh * gamma[j] + beta[j];
        }
    }
    check_finite(out, "layer_norm");
    if (tape) {
        int xn = x.node;
        out.node = tape->add_node(m, c,
            [xn, gn, bn, m, c, saved = std::move(saved)](Tape& t, int self) {
                const auto& g = t.grad_buf(self);
                std::vector<double> dgamma(c, 0.0), dbeta(c, 0.0);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < c; ++j) {
                        dgamma[j] += g[i * c + j] * saved.xhat[i * c + j];
                        dbeta[j] += g[i * c + j];
                    }
                detail::scatter(t, gn, dgamma);
                detail::scatter(t, bn, dbeta);
                if (xn >= 0) {
                    std::vector<double> dx(m * c);
                    const double inv_c = 1.0 / static_cast<double>(c);
                    for (std::size_t i = 0; i < m; ++i) {
                        double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                        for (std::size_t j = 0; j < c; ++j) {
                            double dxh = g[i * c + j] * saved.gamma[j];
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * saved.xhat[i * c + j];
                        }
                        for (std::size_t j = 0; j < c; ++j) {
                            double dxh = g[i * c + j] * saved.gamma[j];
                            dx[i * c + j] = saved.inv_std[i] *
                                (dxh - inv_c * sum_dxh -
                                 saved.xhat[i * c + j] * inv_c * sum_dxh_xh);
                        }
                    }
                    detail::scatter(t, xn, dx);
                }
            });
    }
    return out;
}

// Inverted dropout. Training: zero each entry with probability `rate`,
// scale survivors by 1/(1-rate); the mask is recorded so backward reuses
// it. Inference or rate = 0: identity, and the rng is left untouched.
inline Tensor dropout(Tape* tape, const Tensor& x, double rate, bool training, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ValueError("dropout: rate must lie in [0, 1)");
    if (!training || rate == 0.0) return x;
    Tensor out(x.rows, x.cols);
    std::vector<std::uint8_t> keep(x.data.size());
    const double inv_keep = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        keep[i] = rng.uniform01() >= rate;
        out.data[i] = keep[i] ? x.data[i] * inv_keep : 0.0;
    }
    check_finite(out, "dropout");
    if (tape && detail::tracked(x)) {
        int xn = x.node;
        out.node = tape->add_node(x.rows, x.cols,
            [xn, inv_keep, keep = std::move(keep)](Tape& t, int self) {
                const auto& g = t.grad_buf(self);
                std::vector<double> dx(g.size());
                for (std::size_t i = 0; i < g.size(); ++i)
                    dx[i] = keep[i] ? g[i] * inv_keep : 0.0;
                detail::scatter(t, xn, dx);
            });
    }
    return out;
}

namespace detail {
// Numerically stabilized softmax of `n` strided values.
inline void softmax_span(const double* in, double* out, std::size_t n, std::size_t stride) {
    double mx = in[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i * stride]);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i * stride] = std::exp(in[i * stride] - mx);
        z += out[i * stride];
    }
    for (std::size_t i = 0; i < n; ++i) out[i * stride] /= z;
}
} // namespace detail

// Softmax of a single row vector (1 x K).
inline Tensor softmax_vec(Tape* tape, const Tensor& v) {
    if (v.rows != 1) throw ValueError("softmax_vec: expected a 1xK row vector");
    if (v.cols == 0) throw ValueError("softmax_vec: empty vector");
    Tensor out(1, v.cols);
    detail::softmax_span(v.data.data(), out.data.data(), v.cols, 1);
    check_finite(out, "softmax_vec");
    if (tape && detail::tracked(v)) {
        int vn = v.node;
        std::vector<double> s = out.data;
        out.node = tape->add_node(1, v.cols, [vn, s = std::move(s)](Tape& t, int self) {
            const auto& g = t.grad_buf(self);
            double dot = 0.0;
            for (std::size_t i = 0; i < s.size(); ++i) dot += g[i] * s[i];
            std::vector<double> dv(s.size());
            for (std::size_t i = 0; i < s.size(); ++i) dv[i] = s[i] * (g[i] - dot);
            detail::scatter(t, vn, dv);
        });
    }
    return out;
}

// Independent softmax down each column (across rows).
inline Tensor softmax_cols(Tape* tape, const Tensor& x) {
    if (x.rows == 0 || x.cols == 0) throw ValueError("softmax_cols: empty input");
    Tensor out(x.rows, x.cols);
    for (std::size_t j = 0; j < x.cols; ++j)
        detail::softmax_span(x.data.data() + j, out.data.data() + j, x.rows, x.cols);
    check_finite(out, "softmax_cols");
    if (tape && detail::tracked(x)) {
        int xn = x.node;
        std::vector<double> s = out.data;
        std::size_t rows = x.rows, cols = x.cols;
        out.node = tape->add_node(rows, cols,
            [xn, rows, cols, s = std::move(s)](Tape& t, int self) {
                const auto& g = t.grad_buf(self);
                std::vector<double> dx(rows * cols);
                for (std::size_t j = 0; j < cols; ++j) {
                    double dot = 0.0;
                    for (std::size_t i = 0; i < rows; ++i)
                        dot += g[i * cols + j] * s[i * cols + j];
                    for (std::size_t i = 0; i < rows; ++i)
                        dx[i * cols + j] = s[i * cols + j] * (g[i * cols + j] - dot);
                }
                detail::scatter(t, xn, dx);
            });
    }
    return out;
}

// Row-wise log-softmax, stabilized by max subtraction.
inline Tensor log_softmax_rows(Tape* tape, const Tensor& x) {
    if (x.cols == 0) throw ValueError("log_softmax_rows: empty rows");
    Tensor out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* xrow = x.data.data() + i * x.cols;
        double mx = xrow[0];
        for (std::size_t j = 1; j < x.cols; ++j) mx = std::max(mx, xrow[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) z += std::exp(xrow[j] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t j = 0; j < x.cols; ++j) out(i, j) = xrow[j] - lse;
    }
    check_finite(out, "log_softmax_rows");
    if (tape && detail::tracked(x)) {
        int xn = x.node;
        std::vector<double> logp = out.data;
        std::size_t rows = x.rows, cols = x.cols;
        out.node = tape->add_node(rows, cols,
            [xn, rows, cols, logp = std::move(logp)](Tape& t, int self) {
                const auto& g = t.grad_buf(self);
                std::vector<double> dx(rows * cols);
                for (std::size_t i = 0; i < rows; ++i) {
                    double gsum = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) gsum += g[i * cols + j];
                    for (std::size_t j = 0; j < cols; ++j)
                        dx[i * cols + j] =
                            g[i * cols + j] - std::exp(logp[i * cols + j]) * gsum;
                }
                detail::scatter(t, xn, dx);
            });
    }
    return out;
}

// Mean negative log-likelihood over the masked rows of a log-probability
// matrix: -1/|mask| * sum logp[i, labels[i]].
inline Tensor nll_loss(Tape* tape, const Tensor& logp,
                       const std::vector<std::int64_t>& labels,
                       const std::vector<NodeId>& mask) {
    if (mask.empty()) throw ValueError("nll_loss: empty mask");
    if (labels.size() != logp.rows)
        throw ValueError("nll_loss: one label per row required");
    Tensor out(1, 1);
    double acc = 0.0;
    for (NodeId i : mask) {
        if (i >= logp.rows) throw ValueError("nll_loss: mask index out of range");
        std::int64_t y = labels[i];
        if (y < 0 || y >= static_cast<std::int64_t>(logp.cols))
            throw ValueError("nll_loss: masked row " + std::to_string(i) +
                             " has invalid label");
        acc -= logp(i, static_cast<std::size_t>(y));
    }
    out.data[0] = acc / static_cast<double>(mask.size());
    check_finite(out, "nll_loss");
    if (tape && detail::tracked(logp)) {
        int ln = logp.node;
        std::size_t rows = logp.rows, cols = logp.cols;
        std::vector<std::pair<NodeId, std::int64_t>> pairs;
        pairs.reserve(mask.size());
        for (NodeId i : mask) pairs.emplace_back(i, labels[i]);
        out.node = tape->add_node(1, 1,
            [ln, rows, cols, pairs = std::move(pairs)](Tape& t, int self) {
                const double g = t.grad_buf(self)[0];
                const double w = g / static_cast<double>(pairs.size());
                std::vector<double> dl(rows * cols, 0.0);
                for (auto [i, y] : pairs)
                    dl[i * cols + static_cast<std::size_t>(y)] -= w;
                detail::scatter(t, ln, dl);
            });
    }
    return out;
}

} // namespace gcnlab
