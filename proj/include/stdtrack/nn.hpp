#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "stdtrack/ops.hpp"

namespace stdtrack {

using Rng = std::mt19937_64;

/// A leaf tensor owned by a module. Non-trainable parameters hold buffers such
/// as batch-norm running statistics and never receive gradients.
template <typename T>
class Parameter {
public:
    Parameter() = default;
    explicit Parameter(Tensor<T> init, bool trainable = true)
        : var_(std::move(init), trainable), trainable_(trainable) {}

    const Var<T>& var() const noexcept { return var_; }
    const Tensor<T>& value() const noexcept { return var_.value(); }
    Tensor<T>& value() noexcept { return var_.mutable_value(); }
    const Tensor<T>& grad() const { return var_.grad(); }
    Tensor<T>& grad() { return var_.grad(); }
    const Shape& shape() const noexcept { return var_.shape(); }
    bool trainable() const noexcept { return trainable_; }
    void zero_grad() { var_.zero_grad(); }

private:
    Var<T> var_;
    bool trainable_ = true;
};

template <typename T>
Tensor<T> normal_tensor(Shape shape, T stddev, Rng& rng) {
    Tensor<T> t(std::move(shape));
    std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
    for (auto& v : t.values()) v = static_cast<T>(dist(rng));
    return t;
}

/// Normal samples redrawn until within two standard deviations.
template <typename T>
Tensor<T> trunc_normal_tensor(Shape shape, T stddev, Rng& rng) {
    Tensor<T> t(std::move(shape));
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& v : t.values()) {
        double s;
        do s = dist(rng);
        while (std::abs(s) > 2.0);
        v = static_cast<T>(s * static_cast<double>(stddev));
    }
    return t;
}

template <typename T>
Tensor<T> uniform_tensor(Shape shape, T lo, T hi, Rng& rng) {
    Tensor<T> t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.values()) v = static_cast<T>(dist(rng));
    return t;
}

/// y = x·W + b with W stored as [in × out].
template <typename T>
struct Linear {
    Parameter<T> weight;
    Parameter<T> bias;

    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng)
        : weight(trunc_normal_tensor<T>({in, out}, T(0.02), rng)), bias(Tensor<T>({out})) {}

    std::size_t in_features() const { return weight.shape()[0]; }
    std::size_t out_features() const { return weight.shape()[1]; }

    Var<T> operator()(const Var<T>& x) const { return add_rowvec(matmul(x, weight.var()), bias.var()); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + "weight", weight);
        f(prefix + "bias", bias);
    }
    template <typename F>
    void visit(const std::string& prefix, F&& f) const {
        f(prefix + "weight", weight);
        f(prefix + "bias", bias);
    }
};

template <typename T>
struct LayerNorm {
    Parameter<T> gamma;
    Parameter<T> beta;
    T eps = T(1e-5);

    LayerNorm() = default;
    explicit LayerNorm(std::size_t d) : gamma(Tensor<T>::ones({d})), beta(Tensor<T>({d})) {}

    Var<T> operator()(const Var<T>& x) const { return layer_norm(x, gamma.var(), beta.var(), eps); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + "gamma", gamma);
        f(prefix + "beta", beta);
    }
    template <typename F>
    void visit(const std::string& prefix, F&& f) const {
        f(prefix + "gamma", gamma);
        f(prefix + "beta", beta);
    }
};

/// Multi-head scaled dot-product attention with separate q/k/v/out projections.
template <typename T>
struct MultiHeadAttention {
    Linear<T> q, k, v, out;
    std::size_t heads = 1;

    MultiHeadAttention() = default;
    MultiHeadAttention(std::size_t d, std::size_t num_heads, Rng& rng) : heads(num_heads) {
        if (num_heads == 0 || d % num_heads != 0)
            throw ConfigError("attention: width " + std::to_string(d) + " not divisible by " +
                              std::to_string(num_heads) + " heads");
        q = Linear<T>(d, d, rng);
        k = Linear<T>(d, d, rng);
        v = Linear<T>(d, d, rng);
        out = Linear<T>(d, d, rng);
    }

    std::size_t width() const { return q.in_features(); }

    /// query[Lq×D] attends over key/value[Lk×D]. When `weights` is given it
    /// receives the per-head Lq×Lk attention matrices.
    Var<T> operator()(const Var<T>& query, const Var<T>& key, const Var<T>& value,
                      std::vector<Tensor<T>>* weights = nullptr) const {
        const std::size_t d = width();
        if (query.dim(1) != d || key.dim(1) != d || value.dim(1) != d)
            throw DimensionError("attention", query.shape(), key.shape());
        if (key.dim(0) != value.dim(0)) throw DimensionError("attention k/v", key.shape(), value.shape());
        const std::size_t dh = d / heads;
        const T scale = T(1) / std::sqrt(static_cast<T>(dh));
        const Var<T> qp = q(query), kp = k(key), vp = v(value);
        std::vector<Var<T>> per_head;
        per_head.reserve(heads);
        if (weights) weights->clear();
        for (std::size_t h = 0; h < heads; ++h) {
            const Var<T> qh = heads == 1 ? qp : slice_cols(qp, h * dh, (h + 1) * dh);
            const Var<T> kh = heads == 1 ? kp : slice_cols(kp, h * dh, (h + 1) * dh);
            const Var<T> vh = heads == 1 ? vp : slice_cols(vp, h * dh, (h + 1) * dh);
            const Var<T> attn = softmax(mul_scalar(matmul(qh, transpose(kh)), scale));
            if (weights) weights->push_back(attn.value());
            per_head.push_back(matmul(attn, vh));
        }
        return out(heads == 1 ? per_head[0] : concat_cols(per_head));
    }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        q.visit(prefix + "q.", f);
        k.visit(prefix + "k.", f);
        v.visit(prefix + "v.", f);
        out.visit(prefix + "out.", f);
    }
    template <typename F>
    void visit(const std::string& prefix, F&& f) const {
        q.visit(prefix + "q.", f);
        k.visit(prefix + "k.", f);
        v.visit(prefix + "v.", f);
        out.visit(prefix + "out.", f);
    }
};

template <typename T>
Var<T> multi_head_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                            const MultiHeadAttention<T>& weights) {
    return weights(q, k, v);
}

}  // namespace stdtrack
