#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "stdtrack/errors.hpp"

namespace stdtrack {

#ifdef STDTRACK_DOUBLE
using Real = double;
#else
using Real = float;
#endif

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

/// Dense row-major array. Copies are deep; a moved-from tensor is empty.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0))
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_numel(shape_) != data_.size())
            throw DimensionError("tensor: " + shape_str(shape_) + " does not hold " +
                                 std::to_string(data_.size()) + " values");
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s), T(0)); }
    static Tensor ones(Shape s) { return Tensor(std::move(s), T(1)); }
    static Tensor full(Shape s, T v) { return Tensor(std::move(s), v); }

    static Tensor eye(std::size_t n) {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = T(1);
        return t;
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    T& at(std::size_t c, std::size_t i, std::size_t j) {
        return data_[(c * shape_[1] + i) * shape_[2] + j];
    }
    const T& at(std::size_t c, std::size_t i, std::size_t j) const {
        return data_[(c * shape_[1] + i) * shape_[2] + j];
    }

    /// Same data, new shape with equal element count.
    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != numel()) throw DimensionError("reshape", shape_, s);
        return Tensor(std::move(s), data_);
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename U>
    Tensor<U> cast() const {
        return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) throw DimensionError("max_abs_diff", a.shape(), b.shape());
    T m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max<T>(m, std::abs(a[i] - b[i]));
    return m;
}

namespace kernels {

namespace detail {

template <typename T>
void gemm_rows(const T* a, const T* b, T* c, std::size_t rows, std::size_t k, std::size_t n,
               std::size_t j0) {
    for (std::size_t r = 0; r < rows; ++r) {
        T* __restrict crow = c + r * n;
        const T* arow = a + r * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* __restrict brow = b + p * n;
            for (std::size_t j = j0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace detail

// C[M×N] += A[M×K] · B[K×N]. Blocks of 4 rows × 2 vectors of C stay in
// registers across the whole K loop; edges fall back to the scalar loop.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    typedef T vec __attribute__((vector_size(32)));
    constexpr std::size_t L = sizeof(vec) / sizeof(T), kTile = 2 * L;
    auto load = [](const T* p) {
        vec v;
        __builtin_memcpy(&v, p, sizeof v);
        return v;
    };
    auto add_to = [](T* p, vec v) {
        vec o;
        __builtin_memcpy(&o, p, sizeof o);
        o += v;
        __builtin_memcpy(p, &o, sizeof o);
    };
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const T* a0 = a + i * k;
        std::size_t j = 0;
        for (; j + kTile <= n; j += kTile) {
            vec c00{}, c01{}, c10{}, c11{}, c20{}, c21{}, c30{}, c31{};
            for (std::size_t p = 0; p < k; ++p) {
                const T* br = b + p * n + j;
                const vec b0 = load(br), b1 = load(br + L);
                const T x0 = a0[p], x1 = a0[k + p], x2 = a0[2 * k + p], x3 = a0[3 * k + p];
                c00 += x0 * b0, c01 += x0 * b1;
                c10 += x1 * b0, c11 += x1 * b1;
                c20 += x2 * b0, c21 += x2 * b1;
                c30 += x3 * b0, c31 += x3 * b1;
            }
            T* r0 = c + i * n + j;
            add_to(r0, c00), add_to(r0 + L, c01);
            add_to(r0 + n, c10), add_to(r0 + n + L, c11);
            add_to(r0 + 2 * n, c20), add_to(r0 + 2 * n + L, c21);
            add_to(r0 + 3 * n, c30), add_to(r0 + 3 * n + L, c31);
        }
        if (j < n) detail::gemm_rows(a0, b, c + i * n, 4, k, n, j);
    }
    if (i < m) detail::gemm_rows(a + i * k, b, c + i * n, m - i, k, n, 0);
}

template <typename T>
void transpose(const T* src, T* dst, std::size_t rows, std::size_t cols) {
    constexpr std::size_t kBlock = 32;
    for (std::size_t i0 = 0; i0 < rows; i0 += kBlock)
        for (std::size_t j0 = 0; j0 < cols; j0 += kBlock) {
            const std::size_t i1 = std::min(rows, i0 + kBlock), j1 = std::min(cols, j0 + kBlock);
            for (std::size_t i = i0; i < i1; ++i)
                for (std::size_t j = j0; j < j1; ++j) dst[j * rows + i] = src[i * cols + j];
        }
}

// C[M×N] += A[K×M]ᵀ · B[K×N]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    std::vector<T> at(k * m);
    transpose(a, at.data(), k, m);
    gemm_nn(at.data(), b, c, m, k, n);
}

// C[M×N] += A[M×K] · B[N×K]ᵀ
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    std::vector<T> bt(k * n);
    transpose(b, bt.data(), n, k);
    gemm_nn(a, bt.data(), c, m, k, n);
}

// Unfolds x[C×H×W] into columns[(C·k·k) × (H'·W')] for a stride-1 convolution.
template <typename T>
void im2col(const T* x, std::size_t c, std::size_t h, std::size_t w, std::size_t k,
            std::size_t pad, std::size_t oh, std::size_t ow, T* cols) {
    const std::size_t ncols = oh * ow;
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
                T* row = cols + ((ci * k + ky) * k + kx) * ncols;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(pad);
                    T* dst = row + oy * ow;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                        std::fill(dst, dst + ow, T(0));
                        continue;
                    }
                    const T* src = x + (ci * h + static_cast<std::size_t>(iy)) * w;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(pad);
                        dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? T(0) : src[ix];
                    }
                }
            }
}

// Adjoint of im2col: scatters column gradients back onto dx[C×H×W].
template <typename T>
void col2im(const T* cols, std::size_t c, std::size_t h, std::size_t w, std::size_t k,
            std::size_t pad, std::size_t oh, std::size_t ow, T* dx) {
    const std::size_t ncols = oh * ow;
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
                const T* row = cols + ((ci * k + ky) * k + kx) * ncols;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    T* dst = dx + (ci * h + static_cast<std::size_t>(iy)) * w;
                    const T* src = row + oy * ow;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(pad);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[ix] += src[ox];
                    }
                }
            }
}

}  // namespace kernels
}  // namespace stdtrack
