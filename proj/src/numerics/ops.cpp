#include "bimind/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "bimind/errors.hpp"

namespace bimind::num {

namespace {

enum class Bcast { Same, Row, Col, Scalar };

bool broadcastable(const Tensor& a, const Tensor& b, Bcast& kind) {
    if (b.rows() == a.rows() && b.cols() == a.cols()) {
        kind = Bcast::Same;
    } else if (b.numel() == 1) {
        kind = Bcast::Scalar;
    } else if (b.rows() == 1 && b.cols() == a.cols()) {
        kind = Bcast::Row;
    } else if (b.cols() == 1 && b.rows() == a.rows()) {
        kind = Bcast::Col;
    } else {
        return false;
    }
    return true;
}

Bcast require_broadcast(const Tensor& a, const Tensor& b, const char* op) {
    Bcast kind{};
    if (!broadcastable(a, b, kind)) {
        throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(b.shape()) + " onto " +
                             shape_string(a.shape()));
    }
    return kind;
}

inline std::size_t bidx(Bcast kind, std::size_t r, std::size_t c, std::size_t cols) {
    switch (kind) {
    case Bcast::Same: return r * cols + c;
    case Bcast::Row: return c;
    case Bcast::Col: return r;
    case Bcast::Scalar: return 0;
    }
    return 0;
}

// Applies a binary functor a[r,c] (op) b[bidx]; returns output tensor with a's shape.
template <typename F>
Tensor binary_forward(const Tensor& a, const Tensor& b, Bcast kind, F f) {
    Tensor out(a.shape());
    const std::size_t m = a.rows(), n = a.cols();
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            out[r * n + c] = f(a[r * n + c], b[bidx(kind, r, c, n)]);
        }
    }
    return out;
}

template <typename F>
Var unary(Var a, const char* op, F forward, Tape::BackwardFn backward) {
    const Tensor& x = a.value();
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = forward(x[i]);
    Tape& t = a.tape();
    return {&t, t.record(std::move(out), {a.id()}, std::move(backward), op)};
}

// Backward helper for unary ops whose derivative is a function of (x, y).
template <typename D>
Tape::BackwardFn unary_backward(std::size_t in, D deriv) {
    return [in, deriv](Tape& t, std::size_t self) {
        if (!t.requires_grad(in)) return;
        const Tensor& g = t.grad(self);
        const Tensor& x = t.value(in);
        const Tensor& y = t.value(self);
        Tensor& gx = t.grad(in);
        for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * deriv(x[i], y[i]);
    };
}

void check_same_tape(Var a, Var b, const char* op) {
    if (&a.tape() != &b.tape()) throw Error(std::string(op) + ": operands recorded on different tapes");
}

} // namespace

void gemm_accumulate(const Tensor& a, bool ta, const Tensor& b, bool tb, Tensor& c) {
    const std::size_t m = ta ? a.cols() : a.rows();
    const std::size_t k = ta ? a.rows() : a.cols();
    const std::size_t kb = tb ? b.cols() : b.rows();
    const std::size_t n = tb ? b.rows() : b.cols();
    if (k != kb || c.rows() != m || c.cols() != n) {
        throw DimensionError("gemm: " + shape_string(a.shape()) + (ta ? "^T" : "") + " x " +
                             shape_string(b.shape()) + (tb ? "^T" : "") + " into " + shape_string(c.shape()));
    }
    const double* A = a.data().data();
    const double* B = b.data().data();
    double* C = c.data().data();
    const std::size_t lda = a.cols(), ldb = b.cols();
    if (!ta && !tb) {
        for (std::size_t i = 0; i < m; ++i) {
            double* crow = C + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = A[i * lda + p];
                if (av == 0.0) continue;
                const double* brow = B + p * ldb;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    } else if (!ta && tb) {
        for (std::size_t i = 0; i < m; ++i) {
            const double* arow = A + i * lda;
            for (std::size_t j = 0; j < n; ++j) {
                const double* brow = B + j * ldb;
                double s = 0.0;
                for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
                C[i * n + j] += s;
            }
        }
    } else if (ta && !tb) {
        for (std::size_t p = 0; p < k; ++p) {
            const double* arow = A + p * lda;
            const double* brow = B + p * ldb;
            for (std::size_t i = 0; i < m; ++i) {
                const double av = arow[i];
                if (av == 0.0) continue;
                double* crow = C + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t p = 0; p < k; ++p) s += A[p * lda + i] * B[j * ldb + p];
                C[i * n + j] += s;
            }
        }
    }
}

Tensor matmul_values(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner extents differ, " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()));
    }
    Tensor c({a.rows(), b.cols()});
    gemm_accumulate(a, false, b, false, c);
    return c;
}

Var add(Var a, Var b) {
    check_same_tape(a, b, "add");
    Bcast kind{};
    if (!broadcastable(a.value(), b.value(), kind) && broadcastable(b.value(), a.value(), kind)) std::swap(a, b);
    kind = require_broadcast(a.value(), b.value(), "add");
    Tensor out = binary_forward(a.value(), b.value(), kind, [](double x, double y) { return x + y; });
    const std::size_t ia = a.id(), ib = b.id();
    Tape& t = a.tape();
    return {&t, t.record(std::move(out), {ia, ib},
                         [ia, ib, kind](Tape& t, std::size_t self) {
                             const Tensor& g = t.grad(self);
                             const std::size_t m = g.rows(), n = g.cols();
                             if (t.requires_grad(ia)) t.grad(ia).accumulate(g);
                             if (t.requires_grad(ib)) {
                                 Tensor& gb = t.grad(ib);
                                 for (std::size_t r = 0; r < m; ++r)
                                     for (std::size_t c = 0; c < n; ++c) gb[bidx(kind, r, c, n)] += g[r * n + c];
                             }
                         },
                         "add")};
}

Var sub(Var a, Var b) {
    check_same_tape(a, b, "sub");
    const Bcast kind = require_broadcast(a.value(), b.value(), "sub");
    Tensor out = binary_forward(a.value(), b.value(), kind, [](double x, double y) { return x - y; });
    const std::size_t ia = a.id(), ib = b.id();
    Tape& t = a.tape();
    return {&t, t.record(std::move(out), {ia, ib},
                         [ia, ib, kind](Tape& t, std::size_t self) {
                             const Tensor& g = t.grad(self);
                             const std::size_t m = g.rows(), n = g.cols();
                             if (t.requires_grad(ia)) t.grad(ia).accumulate(g);
                             if (t.requires_grad(ib)) {
                                 Tensor& gb = t.grad(ib);
                                 for (std::size_t r = 0; r < m; ++r)
                                     for (std::size_t c = 0; c < n; ++c) gb[bidx(kind, r, c, n)] -= g[r * n + c];
                             }
                         },
                         "sub")};
}

Var mul(Var a, Var b) {
    check_same_tape(a, b, "mul");
    Bcast kind{};
    if (!broadcastable(a.value(), b.value(), kind) && broadcastable(b.value(), a.value(), kind)) std::swap(a, b);
    kind = require_broadcast(a.value(), b.value(), "mul");
    Tensor out = binary_forward(a.value(), b.value(), kind, [](double x, double y) { return x * y; });
    const std::size_t ia = a.id(), ib = b.id();
    Tape& t = a.tape();
    return {&t, t.record(std::move(out), {ia, ib},
                         [ia, ib, kind](Tape& t, std::size_t self) {
                             const Tensor& g = t.grad(self);
                             const Tensor& av = t.value(ia);
                             const Tensor& bv = t.value(ib);
                             const std::size_t m = g.rows(), n = g.cols();
                             if (t.requires_grad(ia)) {
                                 Tensor& ga = t.grad(ia);
                                 for (std::size_t r = 0; r < m; ++r)
                                     for (std::size_t c = 0; c < n; ++c)
                                         ga[r * n + c] += g[r * n + c] * bv[bidx(kind, r, c, n)];
                             }
                             if (t.requires_grad(ib)) {
                                 Tensor& gb = t.grad(ib);
                                 for (std::size_t r = 0; r < m; ++r)
                                     for (std::size_t c = 0; c < n; ++c)
                                         gb[bidx(kind, r, c, n)] += g[r * n + c] * av[r * n + c];
                             }
                         },
                         "mul")};
}

Var div(Var a, Var b) {
    check_same_tape(a, b, "div");
    const Bcast kind = require_broadcast(a.value(), b.value(), "div");
    Tensor out = binary_forward(a.value(), b.value(), kind, [](double x, double y) { return x / y; });
    const std::size_t ia = a.id(), ib = b.id();
    Tape& t = a.tape();
    return {&t, t.record(std::move(out), {ia, ib},
                         [ia, ib, kind](Tape& t, std::size_t self) {
                             const Tensor& g = t.grad(self);
                             const Tensor& av = t.value(ia);
                             const Tensor& bv = t.value(ib);
                             const std::size_t m = g.rows(), n = g.cols();
                             if (t.requires_grad(ia)) {
                                 Tensor& ga = t.grad(ia);
                                 for (std::size_t r = 0; r < m; ++r)
                                     for (std::size_t c = 0; c < n; ++c)
                                         ga[r * n + c] += g[r * n + c] / bv[bidx(kind, r, c, n)];
                             }
                             if (t.requires_grad(ib)) {
                                 Tensor& gb = t.grad(ib);
                                 for (std::size_t r = 0; r < m; ++r)
                                     for (std::size_t c = 0; c < n; ++c) {
                                         const double y = bv[bidx(kind, r, c, n)];
                                         gb[bidx(kind, r, c, n)] -= g[r * n + c] * av[r * n + c] / (y * y);
                                     }
                             }
                         },
                         "div")};
}

Var scale(Var a, double c) {
    return unary(a, "scale", [c](double x) { return c * x; },
                 unary_backward(a.id(), [c](double, double) { return c; }));
}

Var add_scalar(Var a, double c) {
    return unary(a, "add_scalar", [c](double x) { return x + c; },
                 unary_backward(a.id(), [](double, double) { return 1.0; }));
}

Var neg(Var a) { return scale(a, -1.0); }

Var matmul(Var a, Var b) {
    check_same_tape(a, b, "matmul");
    Tensor out = matmul_values(a.value(), b.value());
    const std::size_t ia = a.id(), ib = b.id();
    Tape& t = a.tape();
    return {&t, t.record(std::move(out), {ia, ib},
                         [ia, ib](Tape& t, std::size_t self) {
                             const Tensor& g = t.grad(self);
                             // dA = dC * B^T, dB = A^T * dC
                             if (t.requires_grad(ia)) gemm_accumulate(g, false, t.value(ib), true, t.grad(ia));
                             if (t.requires_grad(ib)) gemm_accumulate(t.value(ia), true, g, false, t.grad(ib));
                         },
                         "matmul")};
}

Var transpose(Var a) {
    const Tensor& x = a.value();
    const std::size_t m = x.rows(), n = x.cols();
    Tensor out({n, m});
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) out[c * m + r] = x[r * n + c];
    const std::size_t ia = a.id();
    Tape& t = a.tape();
    return {&t, t.record(std::move(out), {ia},
                         [ia, m, n](Tape& t, std::size_t self) {
                             if (!t.requires_grad(ia)) return;
                             const Tensor& g = t.grad(self);
                             Tensor& gx = t.grad(ia);
                             for (std::size_t r = 0; r < m; ++r)
                                 for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += g[c * m + r];
                         },
                         "transpose")};
}

Var tanh(Var a) {
    return unary(a, "tanh", [](double x) { return std::tanh(x); },
                 unary_backward(a.id(), [](double, double y) { return 1.0 - y * y; }));
}

Var sigmoid(Var a) {
    return unary(a, "sigmoid",
                 [](double x) {
                     if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
                     const double e = std::exp(x);
                     return e / (1.0 + e);
                 },
                 unary_backward(a.id(), [](double, double y) { return y * (1.0 - y); }));
}

Var relu(Var a) {
    return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                 unary_backward(a.id(), [](double x, double) { return x > 0.0 ? 1.0 : 0.0; }));
}

Var softplus(Var a) {
    return unary(a, "softplus",
                 [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
                 unary_backward(a.id(), [](double x, double) {
                     if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
                     const double e = std::exp(x);
                     return e / (1.0 + e);
                 }));
}

Var exp(Var a) {
    return unary(a, "exp", [](double x) { return std::exp(x); },
                 unary_backward(a.id(), [](double, double y) { return y; }));
}

Var log(Var a) {
    return unary(a, "log", [](double x) { return std::log(x); },
                 unary_backward(a.id(), [](double x, double) { return 1.0 / x; }));
}

Var abs(Var a) {
    return unary(a, "abs", [](double x) { return std::abs(x); },
                 unary_backward(a.id(), [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }));
}

Var clamp_min(Var a, double floor) {
    return unary(a, "clamp_min", [floor](double x) { return x < floor ? floor : x; },
                 unary_backward(a.id(), [floor](double x, double) { return x < floor ? 0.0 : 1.0; }));
}

Var softmax_rows(Var x, const Mask* mask) {
    const Tensor& in = x.value();
    const std::size_t m = in.rows(), n = in.cols();
    if (mask && mask->size() != n && mask->size() != m * n) {
        throw DimensionError("softmax_rows: mask of " + std::to_string(mask->size()) + " entries for " +
                             shape_string(in.shape()));
    }
    auto keep = [&](std::size_t r, std::size_t c) {
        if (!mask) return true;
        return (*mask)[mask->size() == n ? c : r * n + c] != 0;
    };
    Tensor out(in.shape());
    for (std::size_t r = 0; r < m; ++r) {
        double mx = -INFINITY;
        for (std::size_t c = 0; c < n; ++c)
            if (keep(r, c)) mx = std::max(mx, in[r * n + c]);
        if (mx == -INFINITY) throw DegenerateInputError("softmax_rows: row " + std::to_string(r) + " is fully masked");
        double s = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            const double e = keep(r, c) ? std::exp(in[r * n + c] - mx) : 0.0;
            out[r * n + c] = e;
            s += e;
        }
        for (std::size_t c = 0; c < n; ++c) out[r * n + c] /= s;
    }
    const std::size_t ix = x.id();
    Tape& t = x.tape();
    return {&t, t.record(std::move(out), {ix},
                         [ix](Tape& t, std::size_t self) {
                             if (!t.requires_grad(ix)) return;
                             const Tensor& g = t.grad(self);
                             const Tensor& y = t.value(self);
                             Tensor& gx = t.grad(ix);
                             const std::size_t m = y.rows(), n = y.cols();
                             for (std::size_t r = 0; r < m; ++r) {
                                 double dot = 0.0;
                                 for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * y[r * n + c];
                                 for (std::size_t c = 0; c < n; ++c)
                                     gx[r * n + c] += y[r * n + c] * (g[r * n + c] - dot);
                             }
                         },
                         "softmax_rows")};
}

Var log_softmax_rows(Var x) {
    const Tensor& in = x.value();
    const std::size_t m = in.rows(), n = in.cols();
    Tensor out(in.shape());
    for (std::size_t r = 0; r < m; ++r) {
        double mx = -INFINITY;
        for (std::size_t c = 0; c < n; ++c) mx = std::max(mx, in[r * n + c]);
        double s = 0.0;
        for (std::size_t c = 0; c < n; ++c) s += std::exp(in[r * n + c] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t c = 0; c < n; ++c) out[r * n + c] = in[r * n + c] - lse;
    }
    const std::size_t ix = x.id();
    Tape& t = x.tape();
    return {&t, t.record(std::move(out), {ix},
                         [ix](Tape& t, std::size_t self) {
                             if (!t.requires_grad(ix)) return;
                             const Tensor& g = t.grad(self);
                             const Tensor& y = t.value(self);
                             Tensor& gx = t.grad(ix);
                             const std::size_t m = y.rows(), n = y.cols();
                             for (std::size_t r = 0; r < m; ++r) {
                                 double gs = 0.0;
                                 for (std::size_t c = 0; c < n; ++c) gs += g[r * n + c];
                                 for (std::size_t c = 0; c < n; ++c)
                                     gx[r * n + c] += g[r * n + c] - std::exp(y[r * n + c]) * gs;
                             }
                         },
                         "log_softmax_rows")};
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t m = parts.front().value().rows();
    std::size_t total = 0;
    std::vector<std::size_t> ids, widths;
    for (const auto& p : parts) {
        check_same_tape(parts.front(), p, "concat_cols");
        if (p.value().rows() != m) {
            throw DimensionError("concat_cols: row mismatch " + shape_string(parts.front().shape()) + " vs " +
                                 shape_string(p.shape()));
        }
        ids.push_back(p.id());
        widths.push_back(p.value().cols());
        total += p.value().cols();
    }
    Tensor out({m, total});
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& v = parts[k].value();
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < widths[k]; ++c) out[r * total + off + c] = v[r * widths[k] + c];
        off += widths[k];
    }
    Tape& t = parts.front().tape();
    auto inputs = ids;
    return {&t, t.record(std::move(out), std::move(inputs),
                         [ids, widths, m, total](Tape& t, std::size_t self) {
                             const Tensor& g = t.grad(self);
                             std::size_t off = 0;
                             for (std::size_t k = 0; k < ids.size(); ++k) {
                                 if (t.requires_grad(ids[k])) {
                                     Tensor& gk = t.grad(ids[k]);
                                     for (std::size_t r = 0; r < m; ++r)
                                         for (std::size_t c = 0; c < widths[k]; ++c)
                                             gk[r * widths[k] + c] += g[r * total + off + c];
                                 }
                                 off += widths[k];
                             }
                         },
                         "concat_cols")};
}

Var slice_cols(Var x, std::size_t start, std::size_t count) {
    const Tensor& in = x.value();
    const std::size_t m = in.rows(), n = in.cols();
    if (count == 0 || start + count > n) {
        throw DimensionError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) + ") out of " +
                             shape_string(in.shape()));
    }
    Tensor out({m, count});
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < count; ++c) out[r * count + c] = in[r * n + start + c];
    const std::size_t ix = x.id();
    Tape& t = x.tape();
    return {&t, t.record(std::move(out), {ix},
                         [ix, start, count, m, n](Tape& t, std::size_t self) {
                             if (!t.requires_grad(ix)) return;
                             const Tensor& g = t.grad(self);
                             Tensor& gx = t.grad(ix);
                             for (std::size_t r = 0; r < m; ++r)
                                 for (std::size_t c = 0; c < count; ++c) gx[r * n + start + c] += g[r * count + c];
                         },
                         "slice_cols")};
}

Var masked_max_rows(Var x, const Mask& row_mask) {
    const Tensor& in = x.value();
    const std::size_t m = in.rows(), n = in.cols();
    if (row_mask.size() != m) {
        throw DimensionError("masked_max_rows: mask of " + std::to_string(row_mask.size()) + " entries for " +
                             shape_string(in.shape()));
    }
    if (std::none_of(row_mask.begin(), row_mask.end(), [](std::uint8_t v) { return v != 0; })) {
        throw DegenerateInputError("masked_max_rows: every row is masked");
    }
    Tensor out({1, n});
    std::vector<std::size_t> argmax(n, 0);
    for (std::size_t c = 0; c < n; ++c) {
        bool found = false;
        for (std::size_t r = 0; r < m; ++r) {
            if (!row_mask[r]) continue;
            const double v = in[r * n + c];
            if (!found || v > out[c]) {
                out[c] = v;
                argmax[c] = r;
                found = true;
            }
        }
    }
    const std::size_t ix = x.id();
    Tape& t = x.tape();
    return {&t, t.record(std::move(out), {ix},
                         [ix, argmax, n](Tape& t, std::size_t self) {
                             if (!t.requires_grad(ix)) return;
                             const Tensor& g = t.grad(self);
                             Tensor& gx = t.grad(ix);
                             for (std::size_t c = 0; c < n; ++c) gx[argmax[c] * n + c] += g[c];
                         },
                         "masked_max_rows")};
}

Var mean(Var x, int axis) {
    const Tensor& in = x.value();
    const std::size_t m = in.rows(), n = in.cols();
    if (axis != 0 && axis != 1) throw DimensionError("mean: axis must be 0 or 1");
    Tensor out = axis == 0 ? Tensor({1, n}) : Tensor({m, 1});
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) out[axis == 0 ? c : r] += in[r * n + c];
    const double denom = axis == 0 ? static_cast<double>(m) : static_cast<double>(n);
    for (auto& v : out.data()) v /= denom;
    const std::size_t ix = x.id();
    Tape& t = x.tape();
    return {&t, t.record(std::move(out), {ix},
                         [ix, axis, m, n, denom](Tape& t, std::size_t self) {
                             if (!t.requires_grad(ix)) return;
                             const Tensor& g = t.grad(self);
                             Tensor& gx = t.grad(ix);
                             for (std::size_t r = 0; r < m; ++r)
                                 for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += g[axis == 0 ? c : r] / denom;
                         },
                         "mean")};
}

Var sum_all(Var x) {
    const Tensor& in = x.value();
    double s = 0.0;
    for (double v : in.data()) s += v;
    const std::size_t ix = x.id();
    Tape& t = x.tape();
    return {&t, t.record(Tensor::scalar(s), {ix},
                         [ix](Tape& t, std::size_t self) {
                             if (!t.requires_grad(ix)) return;
                             const double g = t.grad(self)[0];
                             for (auto& v : t.grad(ix).data()) v += g;
                         },
                         "sum_all")};
}

Var mean_all(Var x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.value().numel())); }

Var gather_rows(Var table, std::span<const std::size_t> ids) {
    const Tensor& tab = table.value();
    const std::size_t v = tab.rows(), d = tab.cols();
    if (ids.empty()) throw DimensionError("gather_rows: empty id list");
    Tensor out({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= v) {
            throw DimensionError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                                 std::to_string(v) + " rows");
        }
        std::copy_n(tab.data().begin() + ids[i] * d, d, out.data().begin() + i * d);
    }
    std::vector<std::size_t> rows(ids.begin(), ids.end());
    const std::size_t it = table.id();
    Tape& t = table.tape();
    return {&t, t.record(std::move(out), {it},
                         [it, rows, d](Tape& t, std::size_t self) {
                             if (!t.requires_grad(it)) return;
                             const Tensor& g = t.grad(self);
                             Tensor& gt = t.grad(it);
                             for (std::size_t i = 0; i < rows.size(); ++i)
                                 for (std::size_t c = 0; c < d; ++c) gt[rows[i] * d + c] += g[i * d + c];
                         },
                         "gather_rows")};
}

Var pick(Var x, std::span<const std::size_t> indices) {
    const Tensor& in = x.value();
    const std::size_t m = in.rows(), n = in.cols();
    if (indices.size() != m) throw DimensionError("pick: one index per row required");
    Tensor out({m, 1});
    for (std::size_t r = 0; r < m; ++r) {
        if (indices[r] >= n) throw DimensionError("pick: index " + std::to_string(indices[r]) + " out of range");
        out[r] = in[r * n + indices[r]];
    }
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    const std::size_t ix = x.id();
    Tape& t = x.tape();
    return {&t, t.record(std::move(out), {ix},
                         [ix, idx, n](Tape& t, std::size_t self) {
                             if (!t.requires_grad(ix)) return;
                             const Tensor& g = t.grad(self);
                             Tensor& gx = t.grad(ix);
                             for (std::size_t r = 0; r < idx.size(); ++r) gx[r * n + idx[r]] += g[r];
                         },
                         "pick")};
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
    check_same_tape(x, gamma, "layer_norm_rows");
    check_same_tape(x, beta, "layer_norm_rows");
    const Tensor& in = x.value();
    const std::size_t m = in.rows(), n = in.cols();
    if (gamma.value().numel() != n || beta.value().numel() != n) {
        throw DimensionError("layer_norm_rows: scale/shift of " + shape_string(gamma.shape()) + " for " +
                             shape_string(in.shape()));
    }
    const Tensor& gv = gamma.value();
    const Tensor& bv = beta.value();
    auto xhat = std::make_shared<Tensor>(in.shape());
    auto inv_std = std::make_shared<std::vector<double>>(m);
    Tensor out(in.shape());
    for (std::size_t r = 0; r < m; ++r) {
        double mu = 0.0;
        for (std::size_t c = 0; c < n; ++c) mu += in[r * n + c];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t c = 0; c < n; ++c) var += (in[r * n + c] - mu) * (in[r * n + c] - mu);
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t c = 0; c < n; ++c) {
            const double xh = (in[r * n + c] - mu) * is;
            (*xhat)[r * n + c] = xh;
            out[r * n + c] = xh * gv[c] + bv[c];
        }
    }
    const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
    Tape& t = x.tape();
    return {&t, t.record(std::move(out), {ix, ig, ib},
                         [ix, ig, ib, xhat, inv_std, m, n](Tape& t, std::size_t self) {
                             const Tensor& g = t.grad(self);
                             const Tensor& gv = t.value(ig);
                             if (t.requires_grad(ig)) {
                                 Tensor& gg = t.grad(ig);
                                 for (std::size_t r = 0; r < m; ++r)
                                     for (std::size_t c = 0; c < n; ++c) gg[c] += g[r * n + c] * (*xhat)[r * n + c];
                             }
                             if (t.requires_grad(ib)) {
                                 Tensor& gb = t.grad(ib);
                                 for (std::size_t r = 0; r < m; ++r)
                                     for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
                             }
                             if (!t.requires_grad(ix)) return;
                             Tensor& gx = t.grad(ix);
                             const double inv_n = 1.0 / static_cast<double>(n);
                             for (std::size_t r = 0; r < m; ++r) {
                                 double mean_d = 0.0, mean_dx = 0.0;
                                 for (std::size_t c = 0; c < n; ++c) {
                                     const double dxh = g[r * n + c] * gv[c];
                                     mean_d += dxh;
                                     mean_dx += dxh * (*xhat)[r * n + c];
                                 }
                                 mean_d *= inv_n;
                                 mean_dx *= inv_n;
                                 for (std::size_t c = 0; c < n; ++c) {
                                     const double dxh = g[r * n + c] * gv[c];
                                     gx[r * n + c] += (*inv_std)[r] * (dxh - mean_d - (*xhat)[r * n + c] * mean_dx);
                                 }
                             }
                         },
                         "layer_norm_rows")};
}

Var dropout(Var x, double p, std::mt19937_64& rng, bool training) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must be in [0, 1)");
    if (!training || p == 0.0) return x;
    const Tensor& in = x.value();
    auto keep = std::make_shared<Tensor>(in.shape());
    std::bernoulli_distribution draw(1.0 - p);
    const double s = 1.0 / (1.0 - p);
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.numel(); ++i) {
        (*keep)[i] = draw(rng) ? s : 0.0;
        out[i] = in[i] * (*keep)[i];
    }
    const std::size_t ix = x.id();
    Tape& t = x.tape();
    return {&t, t.record(std::move(out), {ix},
                         [ix, keep](Tape& t, std::size_t self) {
                             if (!t.requires_grad(ix)) return;
                             const Tensor& g = t.grad(self);
                             Tensor& gx = t.grad(ix);
                             for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * (*keep)[i];
                         },
                         "dropout")};
}

} // namespace bimind::num
