#pragma once

// Traced primitives. Each op computes its value eagerly and records the
// adjoint rule that backward() replays.

#include "kt/tape.hpp"

#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace kt {

namespace detail {

inline Tape& common_tape(const Var& a, const Var& b) {
    if (&a.tape() != &b.tape()) {
        throw ContractError("operands recorded on different tapes");
    }
    return a.tape();
}

template <typename F>
Matrix map(const Matrix& x, F f) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    return out;
}

/// Unary elementwise op whose local derivative depends on input and output.
template <typename F, typename D>
Var unary(Var a, const char* name, F f, D dfdx) {
    Tape& t = a.tape();
    return t.record(map(a.value(), f), {a},
                    [ia = a.id(), dfdx](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad(self);
                        const Matrix& x = t.value(ia);
                        const Matrix& y = t.value(self);
                        Matrix& gx = t.grad(ia);
                        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(x[i], y[i]);
                    },
                    name);
}

} // namespace detail

inline Var matmul(Var a, Var b) {
    Tape& t = detail::common_tape(a, b);
    return t.record(matmul(a.value(), b.value()), {a, b},
                    [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad(self);
                        if (t.requires_grad(ia)) gemm_nt_accumulate(g, t.value(ib), t.grad(ia));
                        if (t.requires_grad(ib)) gemm_tn_accumulate(t.value(ia), g, t.grad(ib));
                    },
                    "matmul");
}

/// a * b^T; weights stored as (out x in) are applied with this.
inline Var matmul_nt(Var a, Var b) {
    Tape& t = detail::common_tape(a, b);
    return t.record(matmul_nt(a.value(), b.value()), {a, b},
                    [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad(self);
                        if (t.requires_grad(ia)) gemm_accumulate(g, t.value(ib), t.grad(ia));
                        if (t.requires_grad(ib)) gemm_tn_accumulate(g, t.value(ia), t.grad(ib));
                    },
                    "matmul_nt");
}

inline Var add(Var a, Var b) {
    Tape& t = detail::common_tape(a, b);
    Matrix out = elementwise(Elementwise::add, a.value(), b.value());
    return t.record(std::move(out), {a, b},
                    [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad(self);
                        if (t.requires_grad(ia)) t.grad(ia) += g;
                        if (t.requires_grad(ib)) t.grad(ib) += g;
                    },
                    "add");
}

inline Var sub(Var a, Var b) {
    Tape& t = detail::common_tape(a, b);
    Matrix::require_same_shape(a.value(), b.value(), "sub");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
    return t.record(std::move(out), {a, b},
                    [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad(self);
                        if (t.requires_grad(ia)) t.grad(ia) += g;
                        if (t.requires_grad(ib)) {
                            Matrix& gb = t.grad(ib);
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                        }
                    },
                    "sub");
}

/// Hadamard product.
inline Var mul(Var a, Var b) {
    Tape& t = detail::common_tape(a, b);
    Matrix out = elementwise(Elementwise::mul, a.value(), b.value());
    return t.record(std::move(out), {a, b},
                    [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad(self);
                        if (t.requires_grad(ia)) {
                            Matrix& ga = t.grad(ia);
                            const Matrix& bv = t.value(ib);
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                        }
                        if (t.requires_grad(ib)) {
                            Matrix& gb = t.grad(ib);
                            const Matrix& av = t.value(ia);
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                        }
                    },
                    "mul");
}

/// a + bias, with a 1xn bias broadcast over rows.
inline Var add_row(Var a, Var bias) {
    Tape& t = detail::common_tape(a, bias);
    if (bias.rows() != 1 || bias.cols() != a.cols()) {
        throw DimensionError("add_row: bias " + bias.value().shape() + " does not fit " + a.value().shape());
    }
    Matrix out = a.value();
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bias.value()[c];
    }
    return t.record(std::move(out), {a, bias},
                    [ia = a.id(), ib = bias.id()](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad(self);
                        if (t.requires_grad(ia)) t.grad(ia) += g;
                        if (t.requires_grad(ib)) {
                            Matrix& gb = t.grad(ib);
                            for (std::size_t r = 0; r < g.rows(); ++r) {
                                for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
                            }
                        }
                    },
                    "add_row");
}

/// a * gain, with a 1xn gain broadcast over rows.
inline Var mul_row(Var a, Var gain) {
    Tape& t = detail::common_tape(a, gain);
    if (gain.rows() != 1 || gain.cols() != a.cols()) {
        throw DimensionError("mul_row: gain " + gain.value().shape() + " does not fit " + a.value().shape());
    }
    Matrix out = a.value();
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= gain.value()[c];
    }
    return t.record(std::move(out), {a, gain},
                    [ia = a.id(), ig = gain.id()](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad(self);
                        const Matrix& av = t.value(ia);
                        const Matrix& gv = t.value(ig);
                        if (t.requires_grad(ia)) {
                            Matrix& ga = t.grad(ia);
                            for (std::size_t r = 0; r < g.rows(); ++r) {
                                for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += g(r, c) * gv[c];
                            }
                        }
                        if (t.requires_grad(ig)) {
                            Matrix& gg = t.grad(ig);
                            for (std::size_t r = 0; r < g.rows(); ++r) {
                                for (std::size_t c = 0; c < g.cols(); ++c) gg[c] += g(r, c) * av(r, c);
                            }
                        }
                    },
                    "mul_row");
}

/// scale * a + shift
inline Var affine(Var a, double scale, double shift) {
    Tape& t = a.tape();
    Matrix out = detail::map(a.value(), [=](double x) { return scale * x + shift; });
    return t.record(std::move(out), {a},
                    [ia = a.id(), scale](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad(self);
                        Matrix& ga = t.grad(ia);
                        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += scale * g[i];
                    },
                    "affine");
}

inline Var tanh(Var a) {
    return detail::unary(
        a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(Var a) {
    return detail::unary(
        a, "sigmoid", [](double x) { return sigmoid(x); }, [](double, double y) { return y * (1.0 - y); });
}

inline Var relu(Var a) {
    return detail::unary(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var abs(Var a) {
    return detail::unary(
        a, "abs", [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Var log(Var a) {
    return detail::unary(
        a, "log",
        [](double x) {
            if (!(x > 0.0)) throw NumericError("log of non-positive value");
            return std::log(x);
        },
        [](double x, double) { return 1.0 / x; });
}

/// Gradient passes only where lo < x < hi.
inline Var clamp(Var a, double lo, double hi) {
    return detail::unary(
        a, "clamp", [=](double x) { return x < lo ? lo : (x > hi ? hi : x); },
        [=](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

inline Var sum(Var a) {
    Tape& t = a.tape();
    double total = 0.0;
    for (double v : a.value().values()) total += v;
    return t.record(Matrix::scalar(total), {a},
                    [ia = a.id()](Tape& t, std::size_t self) {
                        const double g = t.grad(self)[0];
                        Matrix& ga = t.grad(ia);
                        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
                    },
                    "sum");
}

/// sum(a o w) for a constant weight matrix w.
inline Var dot_const(Var a, const Matrix& w) {
    Tape& t = a.tape();
    Matrix::require_same_shape(a.value(), w, "dot_const");
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) total += a.value()[i] * w[i];
    return t.record(Matrix::scalar(total), {a},
                    [ia = a.id(), w](Tape& t, std::size_t self) {
                        const double g = t.grad(self)[0];
                        Matrix& ga = t.grad(ia);
                        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * w[i];
                    },
                    "dot_const");
}

/// Per-row sums as a column.
inline Var row_sum(Var a) {
    Tape& t = a.tape();
    const Matrix& x = a.value();
    Matrix out(x.rows(), 1);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) s += x(r, c);
        out[r] = s;
    }
    return t.record(std::move(out), {a},
                    [ia = a.id()](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad(self);
                        Matrix& ga = t.grad(ia);
                        for (std::size_t r = 0; r < ga.rows(); ++r) {
                            for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g[r];
                        }
                    },
                    "row_sum");
}

/// Embedding lookup: row i of the result is table row index[i].
inline Var gather_rows(Var table, std::vector<std::size_t> index) {
    Tape& t = table.tape();
    const Matrix& tv = table.value();
    Matrix out(index.size(), tv.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= tv.rows()) {
            throw EncodingError("gather_rows: index " + std::to_string(index[i]) + " outside table of " +
                                std::to_string(tv.rows()) + " rows");
        }
        std::copy_n(tv.data() + index[i] * tv.cols(), tv.cols(), out.data() + i * tv.cols());
    }
    return t.record(std::move(out), {table},
                    [it = table.id(), index = std::move(index)](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad(self);
                        Matrix& gt = t.grad(it);
                        const std::size_t w = g.cols();
                        for (std::size_t i = 0; i < index.size(); ++i) {
                            for (std::size_t c = 0; c < w; ++c) gt(index[i], c) += g(i, c);
                        }
                    },
                    "gather_rows");
}

/// Column vector with entry r = a(r, column[r]).
inline Var pick(Var a, std::vector<std::size_t> column) {
    Tape& t = a.tape();
    const Matrix& x = a.value();
    if (column.size() != x.rows()) {
        throw DimensionError("pick: " + std::to_string(column.size()) + " indices for " + x.shape());
    }
    Matrix out(x.rows(), 1);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        if (column[r] >= x.cols()) throw EncodingError("pick: column out of range");
        out[r] = x(r, column[r]);
    }
    return t.record(std::move(out), {a},
                    [ia = a.id(), column = std::move(column)](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad(self);
                        Matrix& ga = t.grad(ia);
                        for (std::size_t r = 0; r < column.size(); ++r) ga(r, column[r]) += g[r];
                    },
                    "pick");
}

inline Var hconcat(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("hconcat of nothing");
    Tape& t = parts.front().tape();
    const std::size_t rows = parts.front().rows();
    std::size_t cols = 0;
    for (const Var& p : parts) {
        if (p.rows() != rows) throw DimensionError("hconcat: row count mismatch " + p.value().shape());
        cols += p.cols();
    }
    Matrix out(rows, cols);
    std::vector<std::size_t> ids;
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const Var& p : parts) {
        const Matrix& v = p.value();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(v.data() + r * v.cols(), v.cols(), out.data() + r * cols + off);
        }
        ids.push_back(p.id());
        offsets.push_back(off);
        off += v.cols();
    }
    return t.record(std::move(out), std::span<const Var>(parts),
                    [ids = std::move(ids), offsets = std::move(offsets)](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad(self);
                        for (std::size_t k = 0; k < ids.size(); ++k) {
                            if (!t.requires_grad(ids[k])) continue;
                            Matrix& gp = t.grad(ids[k]);
                            for (std::size_t r = 0; r < gp.rows(); ++r) {
                                for (std::size_t c = 0; c < gp.cols(); ++c) gp(r, c) += g(r, offsets[k] + c);
                            }
                        }
                    },
                    "hconcat");
}

inline Var slice_cols(Var a, std::size_t start, std::size_t count) {
    Tape& t = a.tape();
    const Matrix& x = a.value();
    if (start + count > x.cols()) throw DimensionError("slice_cols out of range on " + x.shape());
    Matrix out(x.rows(), count);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < count; ++c) out(r, c) = x(r, start + c);
    }
    return t.record(std::move(out), {a},
                    [ia = a.id(), start](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad(self);
                        Matrix& ga = t.grad(ia);
                        for (std::size_t r = 0; r < g.rows(); ++r) {
                            for (std::size_t c = 0; c < g.cols(); ++c) ga(r, start + c) += g(r, c);
                        }
                    },
                    "slice_cols");
}

inline Var reshape(Var a, std::size_t rows, std::size_t cols) {
    Tape& t = a.tape();
    if (rows * cols != a.value().size()) {
        throw DimensionError("reshape " + a.value().shape() + " to " + Matrix::shape_string(rows, cols));
    }
    std::vector<double> data(a.value().values().begin(), a.value().values().end());
    return t.record(Matrix(rows, cols, std::move(data)), {a},
                    [ia = a.id()](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad(self);
                        Matrix& ga = t.grad(ia);
                        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                    },
                    "reshape");
}

/// Repeat a 1xn row `count` times.
inline Var tile_rows(Var a, std::size_t count) {
    Tape& t = a.tape();
    if (a.rows() != 1) throw DimensionError("tile_rows expects a single row, got " + a.value().shape());
    const std::size_t n = a.cols();
    Matrix out(count, n);
    for (std::size_t r = 0; r < count; ++r) std::copy_n(a.value().data(), n, out.data() + r * n);
    return t.record(std::move(out), {a},
                    [ia = a.id()](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad(self);
                        Matrix& ga = t.grad(ia);
                        for (std::size_t r = 0; r < g.rows(); ++r) {
                            for (std::size_t c = 0; c < g.cols(); ++c) ga[c] += g(r, c);
                        }
                    },
                    "tile_rows");
}

inline Var softmax_rows(Var a) {
    Tape& t = a.tape();
    return t.record(softmax(a.value(), Axis::rows), {a},
                    [ia = a.id()](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad(self);
                        const Matrix& y = t.value(self);
                        Matrix& ga = t.grad(ia);
                        for (std::size_t r = 0; r < y.rows(); ++r) {
                            double inner = 0.0;
                            for (std::size_t c = 0; c < y.cols(); ++c) inner += g(r, c) * y(r, c);
                            for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += y(r, c) * (g(r, c) - inner);
                        }
                    },
                    "softmax_rows");
}

/// Per-row standardization (x - mean) / sqrt(var + eps), without affine terms.
inline Var layer_norm_rows(Var a, double eps = 1e-5) {
    Tape& t = a.tape();
    const Matrix& x = a.value();
    const std::size_t n = x.cols();
    Matrix out(x.rows(), n);
    auto inv_std = std::make_shared<std::vector<double>>(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < n; ++c) mean += x(r, c);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t c = 0; c < n; ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
        var /= static_cast<double>(n);
        const double s = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = s;
        for (std::size_t c = 0; c < n; ++c) out(r, c) = (x(r, c) - mean) * s;
    }
    return t.record(std::move(out), {a},
                    [ia = a.id(), inv_std](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad(self);
                        const Matrix& y = t.value(self);
                        Matrix& ga = t.grad(ia);
                        const double n = static_cast<double>(y.cols());
                        for (std::size_t r = 0; r < y.rows(); ++r) {
                            double mean_g = 0.0;
                            double mean_gy = 0.0;
                            for (std::size_t c = 0; c < y.cols(); ++c) {
                                mean_g += g(r, c);
                                mean_gy += g(r, c) * y(r, c);
                            }
                            mean_g /= n;
                            mean_gy /= n;
                            for (std::size_t c = 0; c < y.cols(); ++c) {
                                ga(r, c) += (*inv_std)[r] * (g(r, c) - mean_g - y(r, c) * mean_gy);
                            }
                        }
                    },
                    "layer_norm_rows");
}

/// Attention-weighted read from a batch of slot memories.
///
/// memory is B x (N*dim), row b holding N slot vectors of length dim;
/// weights is B x N. Result row b is sum_i weights(b,i) * slot_i.
inline Var memory_read(Var memory, Var weights, std::size_t dim) {
    Tape& t = detail::common_tape(memory, weights);
    const Matrix& m = memory.value();
    const Matrix& w = weights.value();
    const std::size_t slots = w.cols();
    if (m.rows() != w.rows() || m.cols() != slots * dim) {
        throw DimensionError("memory_read: memory " + m.shape() + " vs weights " + w.shape());
    }
    Matrix out(m.rows(), dim);
    for (std::size_t b = 0; b < m.rows(); ++b) {
        for (std::size_t i = 0; i < slots; ++i) {
            const double wi = w(b, i);
            const double* slot = m.data() + b * m.cols() + i * dim;
            for (std::size_t j = 0; j < dim; ++j) out(b, j) += wi * slot[j];
        }
    }
    return t.record(std::move(out), {memory, weights},
                    [im = memory.id(), iw = weights.id(), dim](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad(self);
                        const Matrix& m = t.value(im);
                        const Matrix& w = t.value(iw);
                        const std::size_t slots = w.cols();
                        const bool need_m = t.requires_grad(im);
                        const bool need_w = t.requires_grad(iw);
                        for (std::size_t b = 0; b < m.rows(); ++b) {
                            for (std::size_t i = 0; i < slots; ++i) {
                                const double* slot = m.data() + b * m.cols() + i * dim;
                                if (need_m) {
                                    double* gs = t.grad(im).data() + b * m.cols() + i * dim;
                                    for (std::size_t j = 0; j < dim; ++j) gs[j] += w(b, i) * g(b, j);
                                }
                                if (need_w) {
                                    double acc = 0.0;
                                    for (std::size_t j = 0; j < dim; ++j) acc += slot[j] * g(b, j);
                                    t.grad(iw)(b, i) += acc;
                                }
                            }
                        }
                    },
                    "memory_read");
}

/// Erase-then-add write: slot_i <- slot_i o (1 - w_i e) + w_i a.
///
/// memory is B x (N*dim), weights B x N, erase and add B x dim.
inline Var memory_write(Var memory, Var weights, Var erase, Var add_vec) {
    Tape& t = detail::common_tape(memory, weights);
    detail::common_tape(memory, erase);
    detail::common_tape(memory, add_vec);
    const Matrix& m = memory.value();
    const Matrix& w = weights.value();
    const Matrix& e = erase.value();
    const Matrix& a = add_vec.value();
    const std::size_t slots = w.cols();
    const std::size_t dim = e.cols();
    if (m.rows() != w.rows() || m.cols() != slots * dim || !e.same_shape(a) || e.rows() != m.rows()) {
        throw DimensionError("memory_write: memory " + m.shape() + ", weights " + w.shape() + ", erase " +
                             e.shape() + ", add " + a.shape());
    }
    Matrix out(m.rows(), m.cols());
    for (std::size_t b = 0; b < m.rows(); ++b) {
        for (std::size_t i = 0; i < slots; ++i) {
            const double wi = w(b, i);
            const std::size_t base = b * m.cols() + i * dim;
            for (std::size_t j = 0; j < dim; ++j) {
                out[base + j] = m[base + j] * (1.0 - wi * e(b, j)) + wi * a(b, j);
            }
        }
    }
    return t.record(
        std::move(out), {memory, weights, erase, add_vec},
        [im = memory.id(), iw = weights.id(), ie = erase.id(), ia = add_vec.id()](Tape& t, std::size_t self) {
            const Matrix& g = t.grad(self);
            const Matrix& m = t.value(im);
            const Matrix& w = t.value(iw);
            const Matrix& e = t.value(ie);
            const Matrix& a = t.value(ia);
            const std::size_t slots = w.cols();
            const std::size_t dim = e.cols();
            const bool need_m = t.requires_grad(im);
            const bool need_w = t.requires_grad(iw);
            const bool need_e = t.requires_grad(ie);
            const bool need_a = t.requires_grad(ia);
            for (std::size_t b = 0; b < m.rows(); ++b) {
                for (std::size_t i = 0; i < slots; ++i) {
                    const double wi = w(b, i);
                    const std::size_t base = b * m.cols() + i * dim;
                    double gw = 0.0;
                    for (std::size_t j = 0; j < dim; ++j) {
                        const double gij = g[base + j];
                        if (need_m) t.grad(im)[base + j] += gij * (1.0 - wi * e(b, j));
                        gw += gij * (a(b, j) - m[base + j] * e(b, j));
                        if (need_e) t.grad(ie)(b, j) -= gij * m[base + j] * wi;
                        if (need_a) t.grad(ia)(b, j) += gij * wi;
                    }
                    if (need_w) t.grad(iw)(b, i) += gw;
                }
            }
        },
        "memory_write");
}

/// Multi-head scaled dot-product attention under a strict causal mask.
///
/// q, k and v are (batch*steps) x d with row b*steps + s. Query s attends to
/// keys 0..s-1 only; a query with no visible key yields a zero row. When
/// weights_out is given it receives the (batch*heads*steps) x steps weights,
/// row (b*heads + h)*steps + s.
inline Var causal_attention(Var q, Var k, Var v, std::size_t batch, std::size_t steps, std::size_t heads,
                            Matrix* weights_out = nullptr) {
    Tape& t = detail::common_tape(q, k);
    detail::common_tape(q, v);
    const std::size_t d = q.cols();
    if (heads == 0 || d % heads != 0) {
        throw DimensionError("causal_attention: " + std::to_string(heads) + " heads do not divide width " +
                             std::to_string(d));
    }
    if (q.rows() != batch * steps || !q.value().same_shape(k.value()) || !q.value().same_shape(v.value())) {
        throw DimensionError("causal_attention: q " + q.value().shape() + ", k " + k.value().shape() + ", v " +
                             v.value().shape());
    }
    const std::size_t dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    auto weights = std::make_shared<Matrix>(batch * heads * steps, steps);
    Matrix out(batch * steps, d);
    const Matrix& qv = q.value();
    const Matrix& kv = k.value();
    const Matrix& vv = v.value();
    std::vector<double> scores(steps);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = h * dh;
            for (std::size_t s = 1; s < steps; ++s) {
                const double* qi = qv.data() + (b * steps + s) * d + off;
                for (std::size_t j = 0; j < s; ++j) {
                    const double* kj = kv.data() + (b * steps + j) * d + off;
                    double dot = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) dot += qi[c] * kj[c];
                    scores[j] = dot * scale;
                }
                double* wrow = weights->data() + ((b * heads + h) * steps + s) * steps;
                softmax_inplace(scores.data(), wrow, s);
                double* orow = out.data() + (b * steps + s) * d + off;
                for (std::size_t j = 0; j < s; ++j) {
                    const double* vj = vv.data() + (b * steps + j) * d + off;
                    for (std::size_t c = 0; c < dh; ++c) orow[c] += wrow[j] * vj[c];
                }
            }
        }
    }
    if (weights_out != nullptr) *weights_out = *weights;
    return t.record(
        std::move(out), {q, k, v},
        [iq = q.id(), ik = k.id(), iv = v.id(), weights, batch, steps, heads, scale](Tape& t, std::size_t self) {
            const Matrix& g = t.grad(self);
            const Matrix& qv = t.value(iq);
            const Matrix& kv = t.value(ik);
            const Matrix& vv = t.value(iv);
            const std::size_t d = qv.cols();
            const std::size_t dh = d / heads;
            const bool need_q = t.requires_grad(iq);
            const bool need_k = t.requires_grad(ik);
            const bool need_v = t.requires_grad(iv);
            std::vector<double> dw(steps);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t h = 0; h < heads; ++h) {
                    const std::size_t off = h * dh;
                    for (std::size_t s = 1; s < steps; ++s) {
                        const double* wrow = weights->data() + ((b * heads + h) * steps + s) * steps;
                        const double* gi = g.data() + (b * steps + s) * d + off;
                        double inner = 0.0;
                        for (std::size_t j = 0; j < s; ++j) {
                            const double* vj = vv.data() + (b * steps + j) * d + off;
                            double acc = 0.0;
                            for (std::size_t c = 0; c < dh; ++c) acc += gi[c] * vj[c];
                            dw[j] = acc;
                            inner += wrow[j] * acc;
                            if (need_v) {
                                double* gv = t.grad(iv).data() + (b * steps + j) * d + off;
                                for (std::size_t c = 0; c < dh; ++c) gv[c] += wrow[j] * gi[c];
                            }
                        }
                        const double* qi = qv.data() + (b * steps + s) * d + off;
                        for (std::size_t j = 0; j < s; ++j) {
                            const double ds = wrow[j] * (dw[j] - inner) * scale;
                            const double* kj = kv.data() + (b * steps + j) * d + off;
                            if (need_q) {
                                double* gq = t.grad(iq).data() + (b * steps + s) * d + off;
                                for (std::size_t c = 0; c < dh; ++c) gq[c] += ds * kj[c];
                            }
                            if (need_k) {
                                double* gk = t.grad(ik).data() + (b * steps + j) * d + off;
                                for (std::size_t c = 0; c < dh; ++c) gk[c] += ds * qi[c];
                            }
                        }
                    }
                }
            }
        },
        "causal_attention");
}

} // namespace kt
