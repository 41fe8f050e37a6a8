#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "stdtrack/autograd.hpp"

namespace stdtrack {

namespace detail {

inline void require_rank(const char* op, const Shape& s, std::size_t r) {
    if (s.size() != r)
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                             shape_str(s));
}

template <typename T, typename F, typename DF>
Var<T> unary(const Var<T>& a, F f, DF df) {
    Tensor<T> out(a.shape());
    const T* x = a.value().data();
    T* y = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) y[i] = f(x[i]);
    return make_result<T>(std::move(out), {a.node()}, [df](Node<T>& self) {
        Node<T>& p = *self.parents[0];
        Tensor<T> g(p.value.shape());
        const T* x = p.value.data();
        const T* y = self.value.data();
        const T* go = self.grad.data();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] = go[i] * df(x[i], y[i]);
        p.accumulate(std::move(g));
    });
}

// Elementwise binary op. Operands share a shape, or one of them holds a single value.
template <typename T, typename F, typename DA, typename DB>
Var<T> binary(const char* op, const Var<T>& a, const Var<T>& b, F f, DA da, DB db) {
    const bool same = a.shape() == b.shape();
    const bool b_scalar = !same && b.numel() == 1;
    const bool a_scalar = !same && !b_scalar && a.numel() == 1;
    if (!same && !a_scalar && !b_scalar) throw DimensionError(op, a.shape(), b.shape());
    const Shape& shape = a_scalar ? b.shape() : a.shape();
    Tensor<T> out(shape);
    const std::size_t n = out.numel();
    const T* x = a.value().data();
    const T* z = b.value().data();
    const std::size_t sx = a_scalar ? 0 : 1, sz = b_scalar ? 0 : 1;
    for (std::size_t i = 0; i < n; ++i) out[i] = f(x[i * sx], z[i * sz]);
    return make_result<T>(std::move(out), {a.node(), b.node()}, [da, db, sx, sz, n](Node<T>& self) {
        Node<T>& pa = *self.parents[0];
        Node<T>& pb = *self.parents[1];
        const T* x = pa.value.data();
        const T* z = pb.value.data();
        const T* y = self.value.data();
        const T* go = self.grad.data();
        if (pa.requires_grad) {
            Tensor<T> g(pa.value.shape());
            for (std::size_t i = 0; i < n; ++i) g[i * sx] += go[i] * da(x[i * sx], z[i * sz], y[i]);
            pa.accumulate(std::move(g));
        }
        if (pb.requires_grad) {
            Tensor<T> g(pb.value.shape());
            for (std::size_t i = 0; i < n; ++i) g[i * sz] += go[i] * db(x[i * sx], z[i * sz], y[i]);
            pb.accumulate(std::move(g));
        }
    });
}

}  // namespace detail

template <typename T>
Var<T> constant(Tensor<T> t) {
    return Var<T>(std::move(t), false);
}

template <typename T>
Var<T> scalar(T v) {
    return Var<T>(Tensor<T>({1}, v), false);
}

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0))
        throw DimensionError("matmul", a.shape(), b.shape());
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> out({m, n});
    kernels::gemm_nn(a.value().data(), b.value().data(), out.data(), m, k, n);
    return make_result<T>(std::move(out), {a.node(), b.node()}, [m, k, n](Node<T>& self) {
        Node<T>& pa = *self.parents[0];
        Node<T>& pb = *self.parents[1];
        if (pa.requires_grad) {
            Tensor<T> g({m, k});
            kernels::gemm_nt(self.grad.data(), pb.value.data(), g.data(), m, n, k);
            pa.accumulate(std::move(g));
        }
        if (pb.requires_grad) {
            Tensor<T> g({k, n});
            kernels::gemm_tn(pa.value.data(), self.grad.data(), g.data(), k, m, n);
            pb.accumulate(std::move(g));
        }
    });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
    detail::require_rank("transpose", a.shape(), 2);
    const std::size_t r = a.dim(0), c = a.dim(1);
    Tensor<T> out({c, r});
    kernels::transpose(a.value().data(), out.data(), r, c);
    return make_result<T>(std::move(out), {a.node()}, [r, c](Node<T>& self) {
        Tensor<T> g({r, c});
        kernels::transpose(self.grad.data(), g.data(), c, r);
        self.parents[0]->accumulate(std::move(g));
    });
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    return detail::binary<T>(
        "add", a, b, [](T x, T z) { return x + z; }, [](T, T, T) { return T(1); },
        [](T, T, T) { return T(1); });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    return detail::binary<T>(
        "sub", a, b, [](T x, T z) { return x - z; }, [](T, T, T) { return T(1); },
        [](T, T, T) { return T(-1); });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    return detail::binary<T>(
        "mul", a, b, [](T x, T z) { return x * z; }, [](T, T z, T) { return z; },
        [](T x, T, T) { return x; });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
    return detail::binary<T>(
        "div", a, b, [](T x, T z) { return x / z; }, [](T, T z, T) { return T(1) / z; },
        [](T, T z, T y) { return -y / z; });
}

// Ties send the gradient to the first operand.
template <typename T>
Var<T> maximum(const Var<T>& a, const Var<T>& b) {
    return detail::binary<T>(
        "maximum", a, b, [](T x, T z) { return x >= z ? x : z; },
        [](T x, T z, T) { return x >= z ? T(1) : T(0); },
        [](T x, T z, T) { return x >= z ? T(0) : T(1); });
}

template <typename T>
Var<T> minimum(const Var<T>& a, const Var<T>& b) {
    return detail::binary<T>(
        "minimum", a, b, [](T x, T z) { return x <= z ? x : z; },
        [](T x, T z, T) { return x <= z ? T(1) : T(0); },
        [](T x, T z, T) { return x <= z ? T(0) : T(1); });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T c) {
    return detail::unary<T>(a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& a, T c) {
    return detail::unary<T>(a, [c](T x) { return x * c; }, [c](T, T) { return c; });
}

template <typename T>
Var<T> neg(const Var<T>& a) {
    return mul_scalar(a, T(-1));
}

template <typename T>
Var<T> exp(const Var<T>& a) {
    return detail::unary<T>(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

/// Natural log with the argument clamped from below at 1e-12.
template <typename T>
Var<T> log(const Var<T>& a) {
    static constexpr T kFloor = T(1e-12);
    return detail::unary<T>(
        a, [](T x) { return std::log(std::max(x, kFloor)); },
        [](T x, T) { return x > kFloor ? T(1) / x : T(0); });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
    return detail::unary<T>(
        a,
        [](T x) {
            if (x >= 0) return T(1) / (T(1) + std::exp(-x));
            const T e = std::exp(x);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
    return detail::unary<T>(
        a, [](T x) { return x < 0 ? T(0) : x; }, [](T x, T) { return x > 0 ? T(1) : T(0); });
}

template <typename T>
Var<T> gelu(const Var<T>& a) {
    const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
    const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
    return detail::unary<T>(
        a, [inv_sqrt2](T x) { return T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2)); },
        [inv_sqrt2, inv_sqrt2pi](T x, T) {
            return T(0.5) * (T(1) + std::erf(x * inv_sqrt2)) + x * std::exp(T(-0.5) * x * x) * inv_sqrt2pi;
        });
}

template <typename T>
Var<T> abs(const Var<T>& a) {
    return detail::unary<T>(
        a, [](T x) { return std::abs(x); },
        [](T x, T) { return x > 0 ? T(1) : (x < 0 ? T(-1) : T(0)); });
}

template <typename T>
Var<T> square(const Var<T>& a) {
    return detail::unary<T>(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

/// x^p for a constant exponent. p = 0 yields ones with zero gradient.
template <typename T>
Var<T> pow_scalar(const Var<T>& a, T p) {
    return detail::unary<T>(
        a, [p](T x) { return p == T(0) ? T(1) : std::pow(x, p); },
        [p](T x, T) { return p == T(0) ? T(0) : p * std::pow(x, p - T(1)); });
}

// ---------------------------------------------------------------------------
// Broadcasting helpers

/// a[M×N] + v, v holding N values.
template <typename T>
Var<T> add_rowvec(const Var<T>& a, const Var<T>& v) {
    detail::require_rank("add_rowvec", a.shape(), 2);
    const std::size_t m = a.dim(0), n = a.dim(1);
    if (v.numel() != n) throw DimensionError("add_rowvec", a.shape(), v.shape());
    Tensor<T> out = a.value();
    const T* pv = v.value().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += pv[j];
    return make_result<T>(std::move(out), {a.node(), v.node()}, [m, n](Node<T>& self) {
        Node<T>& pa = *self.parents[0];
        Node<T>& pv = *self.parents[1];
        if (pa.requires_grad) pa.accumulate(self.grad);
        if (pv.requires_grad) {
            Tensor<T> g(pv.value.shape());
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
            pv.accumulate(std::move(g));
        }
    });
}

/// a[M×N] scaled row-wise by v, v holding M values.
template <typename T>
Var<T> mul_colvec(const Var<T>& a, const Var<T>& v) {
    detail::require_rank("mul_colvec", a.shape(), 2);
    const std::size_t m = a.dim(0), n = a.dim(1);
    if (v.numel() != m) throw DimensionError("mul_colvec", a.shape(), v.shape());
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.value()[i * n + j] * v.value()[i];
    return make_result<T>(std::move(out), {a.node(), v.node()}, [m, n](Node<T>& self) {
        Node<T>& pa = *self.parents[0];
        Node<T>& pv = *self.parents[1];
        if (pa.requires_grad) {
            Tensor<T> g(pa.value.shape());
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[i * n + j] = self.grad[i * n + j] * pv.value[i];
            pa.accumulate(std::move(g));
        }
        if (pv.requires_grad) {
            Tensor<T> g(pv.value.shape());
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[i] += self.grad[i * n + j] * pa.value[i * n + j];
            pv.accumulate(std::move(g));
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Var<T> sum(const Var<T>& a) {
    T s = 0;
    for (T v : a.value().values()) s += v;
    return make_result<T>(Tensor<T>({1}, s), {a.node()}, [](Node<T>& self) {
        Node<T>& p = *self.parents[0];
        p.accumulate(Tensor<T>::full(p.value.shape(), self.grad[0]));
    });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
    return mul_scalar(sum(a), T(1) / static_cast<T>(a.numel()));
}

// ---------------------------------------------------------------------------
// Normalization

/// Softmax along the last axis, max-subtracted.
template <typename T>
Var<T> softmax(const Var<T>& a) {
    if (a.shape().empty()) throw DimensionError("softmax: rank-0 input");
    const std::size_t n = a.shape().back();
    const std::size_t rows = n ? a.numel() / n : 0;
    Tensor<T> out(a.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* x = a.value().data() + r * n;
        T* y = out.data() + r * n;
        const T mx = *std::max_element(x, x + n);
        T s = 0;
        for (std::size_t j = 0; j < n; ++j) s += (y[j] = std::exp(x[j] - mx));
        for (std::size_t j = 0; j < n; ++j) y[j] /= s;
    }
    return make_result<T>(std::move(out), {a.node()}, [rows, n](Node<T>& self) {
        Tensor<T> g(self.value.shape());
        for (std::size_t r = 0; r < rows; ++r) {
            const T* y = self.value.data() + r * n;
            const T* go = self.grad.data() + r * n;
            T dot = 0;
            for (std::size_t j = 0; j < n; ++j) dot += go[j] * y[j];
            for (std::size_t j = 0; j < n; ++j) g[r * n + j] = y[j] * (go[j] - dot);
        }
        self.parents[0]->accumulate(std::move(g));
    });
}

/// Layer normalization over the last axis with affine gamma/beta of that width.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
    if (x.shape().empty()) throw DimensionError("layer_norm: rank-0 input");
    const std::size_t d = x.shape().back();
    if (d == 0 || gamma.numel() != d || beta.numel() != d)
        throw DimensionError("layer_norm", x.shape(), gamma.shape());
    const std::size_t rows = x.numel() / d;
    Tensor<T> out(x.shape());
    Tensor<T> xhat(x.shape());
    std::vector<T> rstd(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x.value().data() + r * d;
        T mu = 0, var = 0;
        for (std::size_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<T>(d);
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<T>(d);
        rstd[r] = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            const T h = (xr[j] - mu) * rstd[r];
            xhat[r * d + j] = h;
            out[r * d + j] = h * gamma.value()[j] + beta.value()[j];
        }
    }
    return make_result<T>(
        std::move(out), {x.node(), gamma.node(), beta.node()},
        [rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
            Node<T>& px = *self.parents[0];
            Node<T>& pg = *self.parents[1];
            Node<T>& pb = *self.parents[2];
            const T* go = self.grad.data();
            if (px.requires_grad) {
                Tensor<T> g(px.value.shape());
                std::vector<T> dh(d);
                for (std::size_t r = 0; r < rows; ++r) {
                    T m1 = 0, m2 = 0;
                    for (std::size_t j = 0; j < d; ++j) {
                        dh[j] = go[r * d + j] * pg.value[j];
                        m1 += dh[j];
                        m2 += dh[j] * xhat[r * d + j];
                    }
                    m1 /= static_cast<T>(d);
                    m2 /= static_cast<T>(d);
                    for (std::size_t j = 0; j < d; ++j)
                        g[r * d + j] = rstd[r] * (dh[j] - m1 - xhat[r * d + j] * m2);
                }
                px.accumulate(std::move(g));
            }
            if (pg.requires_grad || pb.requires_grad) {
                Tensor<T> gg(pg.value.shape()), gb(pb.value.shape());
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) {
                        gg[j] += go[r * d + j] * xhat[r * d + j];
                        gb[j] += go[r * d + j];
                    }
                if (pg.requires_grad) pg.accumulate(std::move(gg));
                if (pb.requires_grad) pb.accumulate(std::move(gb));
            }
        });
}

/// Per-channel statistics of a C×H×W map, as produced by a training-mode batch norm.
template <typename T>
struct ChannelStats {
    std::vector<T> mean;
    std::vector<T> var;  // biased
};

/// Batch normalization of x[C×H×W]. In training mode statistics come from x
/// itself and are written to `batch_stats` when given; otherwise the supplied
/// running statistics are used.
template <typename T>
Var<T> batch_norm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                    const Tensor<T>& running_mean, const Tensor<T>& running_var, T eps,
                    bool training, ChannelStats<T>* batch_stats = nullptr) {
    detail::require_rank("batch_norm2d", x.shape(), 3);
    const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
    if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c || running_var.numel() != c)
        throw DimensionError("batch_norm2d", x.shape(), gamma.shape());
    std::vector<T> mu(c), rstd(c);
    ChannelStats<T> stats;
    for (std::size_t ch = 0; ch < c; ++ch) {
        const T* xc = x.value().data() + ch * hw;
        T m, v;
        if (training) {
            m = 0;
            v = 0;
            for (std::size_t i = 0; i < hw; ++i) m += xc[i];
            m /= static_cast<T>(hw);
            for (std::size_t i = 0; i < hw; ++i) v += (xc[i] - m) * (xc[i] - m);
            v /= static_cast<T>(hw);
            stats.mean.push_back(m);
            stats.var.push_back(v);
        } else {
            m = running_mean[ch];
            v = running_var[ch];
        }
        // NaN propagates so the caller sees a non-finite result rather than a contract error.
        if (v + eps <= 0) throw ContractError("batch_norm2d: non-positive variance + eps");
        mu[ch] = m;
        rstd[ch] = T(1) / std::sqrt(v + eps);
    }
    if (batch_stats) *batch_stats = stats;
    Tensor<T> out(x.shape());
    Tensor<T> xhat(x.shape());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) {
            const T h = (x.value()[ch * hw + i] - mu[ch]) * rstd[ch];
            xhat[ch * hw + i] = h;
            out[ch * hw + i] = h * gamma.value()[ch] + beta.value()[ch];
        }
    return make_result<T>(
        std::move(out), {x.node(), gamma.node(), beta.node()},
        [c, hw, training, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
            Node<T>& px = *self.parents[0];
            Node<T>& pg = *self.parents[1];
            Node<T>& pb = *self.parents[2];
            const T* go = self.grad.data();
            if (px.requires_grad) {
                Tensor<T> g(px.value.shape());
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const T gm = pg.value[ch];
                    if (!training) {
                        for (std::size_t i = 0; i < hw; ++i) g[ch * hw + i] = go[ch * hw + i] * gm * rstd[ch];
                        continue;
                    }
                    T m1 = 0, m2 = 0;
                    for (std::size_t i = 0; i < hw; ++i) {
                        const T dh = go[ch * hw + i] * gm;
                        m1 += dh;
                        m2 += dh * xhat[ch * hw + i];
                    }
                    m1 /= static_cast<T>(hw);
                    m2 /= static_cast<T>(hw);
                    for (std::size_t i = 0; i < hw; ++i)
                        g[ch * hw + i] = rstd[ch] * (go[ch * hw + i] * gm - m1 - xhat[ch * hw + i] * m2);
                }
                px.accumulate(std::move(g));
            }
            if (pg.requires_grad || pb.requires_grad) {
                Tensor<T> gg(pg.value.shape()), gb(pb.value.shape());
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t i = 0; i < hw; ++i) {
                        gg[ch] += go[ch * hw + i] * xhat[ch * hw + i];
                        gb[ch] += go[ch * hw + i];
                    }
                if (pg.requires_grad) pg.accumulate(std::move(gg));
                if (pb.requires_grad) pb.accumulate(std::move(gb));
            }
        });
}

// ---------------------------------------------------------------------------
// Convolution

/// Stride-1 cross-correlation of x[Ci×H×W] with kernel[Co×Ci×k×k] plus bias[Co].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, std::size_t pad) {
    detail::require_rank("conv2d", x.shape(), 3);
    detail::require_rank("conv2d", kernel.shape(), 4);
    const std::size_t ci = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t co = kernel.dim(0), k = kernel.dim(2);
    if (kernel.dim(3) != k || k % 2 == 0)
        throw UnsupportedKernelError("conv2d: kernel must be square with odd side, got " +
                                     shape_str(kernel.shape()));
    if (kernel.dim(1) != ci) throw DimensionError("conv2d", x.shape(), kernel.shape());
    if (bias.numel() != co) throw DimensionError("conv2d bias", kernel.shape(), bias.shape());
    if (h + 2 * pad < k || w + 2 * pad < k) throw DimensionError("conv2d: output would be empty");
    const std::size_t oh = h + 2 * pad - k + 1, ow = w + 2 * pad - k + 1;
    const std::size_t patch = ci * k * k, npix = oh * ow;

    Tensor<T> cols({patch, npix});
    kernels::im2col(x.value().data(), ci, h, w, k, pad, oh, ow, cols.data());
    Tensor<T> out({co, oh, ow});
    for (std::size_t o = 0; o < co; ++o) std::fill_n(out.data() + o * npix, npix, bias.value()[o]);
    kernels::gemm_nn(kernel.value().data(), cols.data(), out.data(), co, patch, npix);

    return make_result<T>(
        std::move(out), {x.node(), kernel.node(), bias.node()},
        [=, cols = std::move(cols)](Node<T>& self) {
            Node<T>& px = *self.parents[0];
            Node<T>& pk = *self.parents[1];
            Node<T>& pb = *self.parents[2];
            const T* go = self.grad.data();
            if (pk.requires_grad) {
                Tensor<T> g(pk.value.shape());
                kernels::gemm_nt(go, cols.data(), g.data(), co, npix, patch);
                pk.accumulate(std::move(g));
            }
            if (pb.requires_grad) {
                Tensor<T> g(pb.value.shape());
                for (std::size_t o = 0; o < co; ++o)
                    for (std::size_t i = 0; i < npix; ++i) g[o] += go[o * npix + i];
                pb.accumulate(std::move(g));
            }
            if (px.requires_grad) {
                std::vector<T> dcols(patch * npix, T(0));
                kernels::gemm_tn(pk.value.data(), go, dcols.data(), patch, co, npix);
                Tensor<T> g(px.value.shape());
                kernels::col2im(dcols.data(), ci, h, w, k, pad, oh, ow, g.data());
                px.accumulate(std::move(g));
            }
        });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
    Tensor<T> out = a.value().reshaped(std::move(shape));
    return make_result<T>(std::move(out), {a.node()}, [](Node<T>& self) {
        Node<T>& p = *self.parents[0];
        p.accumulate(self.grad.reshaped(p.value.shape()));
    });
}

/// Stacks 2-D blocks with equal column counts. Blocks may have zero rows.
template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    const std::size_t cols = parts[0].dim(1);
    std::size_t rows = 0;
    for (const auto& p : parts) {
        detail::require_rank("concat_rows", p.shape(), 2);
        if (p.dim(1) != cols) throw DimensionError("concat_rows", parts[0].shape(), p.shape());
        rows += p.dim(0);
    }
    Tensor<T> out({rows, cols});
    std::vector<typename Var<T>::NodePtr> nodes;
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.value().data(), p.value().data() + p.numel(), out.data() + off);
        off += p.numel();
        nodes.push_back(p.node());
    }
    return make_result<T>(std::move(out), std::move(nodes), [](Node<T>& self) {
        std::size_t off = 0;
        for (auto& p : self.parents) {
            const std::size_t n = p->value.numel();
            if (p->requires_grad && n) {
                Tensor<T> g(p->value.shape());
                std::copy(self.grad.data() + off, self.grad.data() + off + n, g.data());
                p->accumulate(std::move(g));
            }
            off += n;
        }
    });
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, std::size_t begin, std::size_t end) {
    detail::require_rank("slice_rows", a.shape(), 2);
    if (begin > end || end > a.dim(0))
        throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") out of " + shape_str(a.shape()));
    const std::size_t cols = a.dim(1);
    Tensor<T> out({end - begin, cols});
    std::copy(a.value().data() + begin * cols, a.value().data() + end * cols, out.data());
    return make_result<T>(std::move(out), {a.node()}, [begin, cols](Node<T>& self) {
        Node<T>& p = *self.parents[0];
        Tensor<T> g(p.value.shape());
        std::copy(self.grad.data(), self.grad.data() + self.grad.numel(), g.data() + begin * cols);
        p.accumulate(std::move(g));
    });
}

template <typename T>
Var<T> slice_cols(const Var<T>& a, std::size_t begin, std::size_t end) {
    detail::require_rank("slice_cols", a.shape(), 2);
    if (begin > end || end > a.dim(1))
        throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") out of " + shape_str(a.shape()));
    const std::size_t rows = a.dim(0), cols = a.dim(1), w = end - begin;
    Tensor<T> out({rows, w});
    for (std::size_t i = 0; i < rows; ++i)
        std::copy_n(a.value().data() + i * cols + begin, w, out.data() + i * w);
    return make_result<T>(std::move(out), {a.node()}, [rows, cols, begin, w](Node<T>& self) {
        Node<T>& p = *self.parents[0];
        Tensor<T> g(p.value.shape());
        for (std::size_t i = 0; i < rows; ++i)
            std::copy_n(self.grad.data() + i * w, w, g.data() + i * cols + begin);
        p.accumulate(std::move(g));
    });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t rows = parts[0].dim(0);
    std::size_t cols = 0;
    for (const auto& p : parts) {
        detail::require_rank("concat_cols", p.shape(), 2);
        if (p.dim(0) != rows) throw DimensionError("concat_cols", parts[0].shape(), p.shape());
        cols += p.dim(1);
    }
    Tensor<T> out({rows, cols});
    std::vector<typename Var<T>::NodePtr> nodes;
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.dim(1);
        for (std::size_t i = 0; i < rows; ++i)
            std::copy_n(p.value().data() + i * w, w, out.data() + i * cols + off);
        off += w;
        nodes.push_back(p.node());
    }
    return make_result<T>(std::move(out), std::move(nodes), [rows, cols](Node<T>& self) {
        std::size_t off = 0;
        for (auto& p : self.parents) {
            const std::size_t w = p->value.dim(1);
            if (p->requires_grad) {
                Tensor<T> g(p->value.shape());
                for (std::size_t i = 0; i < rows; ++i)
                    std::copy_n(self.grad.data() + i * cols + off, w, g.data() + i * w);
                p->accumulate(std::move(g));
            }
            off += w;
        }
    });
}

/// Picks elements by flat index into a 1-D result.
template <typename T>
Var<T> gather(const Var<T>& a, std::vector<std::size_t> index) {
    Tensor<T> out({index.size()});
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= a.numel()) throw DimensionError("gather: index out of range");
        out[i] = a.value()[index[i]];
    }
    return make_result<T>(std::move(out), {a.node()}, [index = std::move(index)](Node<T>& self) {
        Node<T>& p = *self.parents[0];
        Tensor<T> g(p.value.shape());
        for (std::size_t i = 0; i < index.size(); ++i) g[index[i]] += self.grad[i];
        p.accumulate(std::move(g));
    });
}

// ---------------------------------------------------------------------------
// Operators

template <typename T> Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T> Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T> Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
template <typename T> Var<T> operator/(const Var<T>& a, const Var<T>& b) { return div(a, b); }
template <typename T> Var<T> operator-(const Var<T>& a) { return neg(a); }
template <typename T> Var<T> operator+(const Var<T>& a, T c) { return add_scalar(a, c); }
template <typename T> Var<T> operator-(const Var<T>& a, T c) { return add_scalar(a, -c); }
template <typename T> Var<T> operator*(const Var<T>& a, T c) { return mul_scalar(a, c); }
template <typename T> Var<T> operator*(T c, const Var<T>& a) { return mul_scalar(a, c); }
template <typename T> Var<T> operator-(T c, const Var<T>& a) { return add_scalar(neg(a), c); }

}  // namespace stdtrack
