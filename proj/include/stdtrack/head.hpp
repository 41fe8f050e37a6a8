#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "stdtrack/nn.hpp"

namespace stdtrack {

template <typename T>
struct BatchNorm2d {
    Parameter<T> gamma, beta;
    Parameter<T> running_mean, running_var;  // buffers
    T eps = T(1e-5);
    T momentum = T(0.1);

    BatchNorm2d() = default;
    explicit BatchNorm2d(std::size_t c)
        : gamma(Tensor<T>::ones({c})),
          beta(Tensor<T>({c})),
          running_mean(Tensor<T>({c}), false),
          running_var(Tensor<T>::ones({c}), false) {}

    std::size_t channels() const { return gamma.value().numel(); }

    /// Training mode normalizes with the map's own statistics and folds them
    /// into the running estimates; otherwise the running estimates are used.
    Var<T> operator()(const Var<T>& x, bool training) {
        if (!training)
            return batch_norm2d(x, gamma.var(), beta.var(), running_mean.value(), running_var.value(), eps, false);
        ChannelStats<T> stats;
        Var<T> y = batch_norm2d(x, gamma.var(), beta.var(), running_mean.value(), running_var.value(), eps,
                                true, &stats);
        const T n = static_cast<T>(x.dim(1) * x.dim(2));
        const T unbias = n > 1 ? n / (n - 1) : T(1);
        for (std::size_t c = 0; c < channels(); ++c) {
            running_mean.value()[c] = (1 - momentum) * running_mean.value()[c] + momentum * stats.mean[c];
            running_var.value()[c] = (1 - momentum) * running_var.value()[c] + momentum * stats.var[c] * unbias;
        }
        return y;
    }

    Var<T> operator()(const Var<T>& x) const {
        return batch_norm2d(x, gamma.var(), beta.var(), running_mean.value(), running_var.value(), eps, false);
    }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + "gamma", gamma);
        f(prefix + "beta", beta);
        f(prefix + "running_mean", running_mean);
        f(prefix + "running_var", running_var);
    }
    template <typename F>
    void visit(const std::string& prefix, F&& f) const {
        f(prefix + "gamma", gamma);
        f(prefix + "beta", beta);
        f(prefix + "running_mean", running_mean);
        f(prefix + "running_var", running_var);
    }
};

template <typename T>
Tensor<T> kaiming_conv(std::size_t co, std::size_t ci, std::size_t k, Rng& rng) {
    return normal_tensor<T>({co, ci, k, k}, static_cast<T>(std::sqrt(2.0 / static_cast<double>(ci * k * k))), rng);
}

/// Training-time block: ReLU(BN(conv1x1(x) + conv3x3(x) + conv5x5(x))), pads 0/1/2.
template <typename T>
struct RepConvBlock {
    Parameter<T> k1, b1, k3, b3, k5, b5;
    BatchNorm2d<T> bn;

    RepConvBlock() = default;
    RepConvBlock(std::size_t ci, std::size_t co, Rng& rng)
        : k1(kaiming_conv<T>(co, ci, 1, rng)),
          b1(Tensor<T>({co})),
          k3(kaiming_conv<T>(co, ci, 3, rng)),
          b3(Tensor<T>({co})),
          k5(kaiming_conv<T>(co, ci, 5, rng)),
          b5(Tensor<T>({co})),
          bn(co) {}

    std::size_t in_channels() const { return k1.shape()[1]; }
    std::size_t out_channels() const { return k1.shape()[0]; }

    Var<T> branch_sum(const Var<T>& x) const {
        return add(add(conv2d(x, k1.var(), b1.var(), 0), conv2d(x, k3.var(), b3.var(), 1)),
                   conv2d(x, k5.var(), b5.var(), 2));
    }

    Var<T> forward(const Var<T>& x, bool training) { return relu(bn(branch_sum(x), training)); }
    Var<T> forward(const Var<T>& x) const { return relu(bn(branch_sum(x))); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        visit_impl(*this, prefix, f);
    }
    template <typename F>
    void visit(const std::string& prefix, F&& f) const {
        visit_impl(*this, prefix, f);
    }

private:
    template <typename Self, typename F>
    static void visit_impl(Self& self, const std::string& prefix, F& f) {
        f(prefix + "k1", self.k1);
        f(prefix + "b1", self.b1);
        f(prefix + "k3", self.k3);
        f(prefix + "b3", self.b3);
        f(prefix + "k5", self.k5);
        f(prefix + "b5", self.b5);
        self.bn.visit(prefix + "bn.", f);
    }
};

/// Inference-time block: ReLU(conv5x5(x; K, b, pad 2)).
template <typename T>
struct MergedConv {
    Parameter<T> kernel, bias;

    Var<T> operator()(const Var<T>& x) const { return relu(conv2d(x, kernel.var(), bias.var(), 2)); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + "kernel", kernel);
        f(prefix + "bias", bias);
    }
    template <typename F>
    void visit(const std::string& prefix, F&& f) const {
        f(prefix + "kernel", kernel);
        f(prefix + "bias", bias);
    }
};

/// Embeds an s×s kernel (s ∈ {1,3,5}) at the center of a zero 5×5 kernel.
template <typename T>
Tensor<T> pad_kernel(const Tensor<T>& k) {
    detail::require_rank("pad_kernel", k.shape(), 4);
    const std::size_t s = k.dim(2);
    if (k.dim(3) != s || (s != 1 && s != 3 && s != 5))
        throw UnsupportedKernelError("pad_kernel: unsupported kernel " + shape_str(k.shape()));
    if (s == 5) return k;
    const std::size_t co = k.dim(0), ci = k.dim(1), off = (5 - s) / 2;
    Tensor<T> out({co, ci, 5, 5});
    for (std::size_t o = 0; o < co; ++o)
        for (std::size_t i = 0; i < ci; ++i)
            for (std::size_t y = 0; y < s; ++y)
                for (std::size_t x = 0; x < s; ++x)
                    out[((o * ci + i) * 5 + y + off) * 5 + x + off] = k[((o * ci + i) * s + y) * s + x];
    return out;
}

template <typename T>
struct MergedKernel {
    Tensor<T> kernel;  // Co×Ci×5×5
    Tensor<T> bias;    // Co
};

/// Sum of the zero-padded branch kernels and of the branch biases.
template <typename T>
MergedKernel<T> merge_branches(const RepConvBlock<T>& block) {
    MergedKernel<T> m{pad_kernel(block.k1.value()), block.b1.value()};
    const Tensor<T> p3 = pad_kernel(block.k3.value());
    const Tensor<T>& p5 = block.k5.value();
    for (std::size_t i = 0; i < m.kernel.numel(); ++i) m.kernel[i] = m.kernel[i] + p3[i] + p5[i];
    for (std::size_t o = 0; o < m.bias.numel(); ++o)
        m.bias[o] = m.bias[o] + block.b3.value()[o] + block.b5.value()[o];
    return m;
}

/// Folds an inference-mode batch norm into the preceding convolution:
///   K' = γ/√(σ²+ε)·K,  b' = β + γ(b − μ)/√(σ²+ε)   per output channel.
template <typename T>
MergedConv<T> fold_bn(const Tensor<T>& kernel, const Tensor<T>& bias, const BatchNorm2d<T>& bn) {
    const std::size_t co = kernel.dim(0);
    const std::size_t per = kernel.numel() / co;
    if (bias.numel() != co || bn.channels() != co) throw DimensionError("fold_bn", kernel.shape(), bias.shape());
    Tensor<T> k(kernel.shape());
    Tensor<T> b({co});
    for (std::size_t o = 0; o < co; ++o) {
        const T denom = bn.running_var.value()[o] + bn.eps;
        if (!(denom > 0)) throw ContractError("fold_bn: non-positive variance + eps in channel " + std::to_string(o));
        const T scale = bn.gamma.value()[o] / std::sqrt(denom);
        for (std::size_t i = 0; i < per; ++i) k[o * per + i] = scale * kernel[o * per + i];
        b[o] = bn.beta.value()[o] + scale * (bias[o] - bn.running_mean.value()[o]);
    }
    return MergedConv<T>{Parameter<T>(std::move(k)), Parameter<T>(std::move(b))};
}

template <typename T>
MergedConv<T> reparameterize(const RepConvBlock<T>& block) {
    const MergedKernel<T> m = merge_branches(block);
    return fold_bn(m.kernel, m.bias, block.bn);
}

template <typename V>
struct HeadMaps {
    V score;   // H×W, sigmoid
    V offset;  // 2×H×W, (x, y) sub-cell offsets
    V size;    // 2×H×W, (w, h) normalized by crop side
};

template <typename T>
using HeadOutput = HeadMaps<Tensor<T>>;

template <typename T>
HeadOutput<T> values_of(const HeadMaps<Var<T>>& m) {
    return {m.score.value(), m.offset.value(), m.size.value()};
}

/// One branch: a stack of conv blocks halving the channel count, then a 1×1 projection.
template <typename T>
struct HeadBranch {
    std::vector<RepConvBlock<T>> blocks;
    std::vector<MergedConv<T>> merged;
    Parameter<T> proj_kernel, proj_bias;

    bool is_merged() const { return !merged.empty() || blocks.empty(); }

    Var<T> forward(const Var<T>& x, bool training) {
        Var<T> h = x;
        if (!merged.empty())
            for (const auto& m : merged) h = m(h);
        else
            for (auto& b : blocks) h = b.forward(h, training);
        return conv2d(h, proj_kernel.var(), proj_bias.var(), 0);
    }

    Var<T> forward(const Var<T>& x) const {
        Var<T> h = x;
        if (!merged.empty())
            for (const auto& m : merged) h = m(h);
        else
            for (const auto& b : blocks) h = b.forward(h);
        return conv2d(h, proj_kernel.var(), proj_bias.var(), 0);
    }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        visit_impl(*this, prefix, f);
    }
    template <typename F>
    void visit(const std::string& prefix, F&& f) const {
        visit_impl(*this, prefix, f);
    }

private:
    template <typename Self, typename F>
    static void visit_impl(Self& self, const std::string& prefix, F& f) {
        for (std::size_t i = 0; i < self.blocks.size(); ++i)
            self.blocks[i].visit(prefix + "blocks." + std::to_string(i) + ".", f);
        for (std::size_t i = 0; i < self.merged.size(); ++i)
            self.merged[i].visit(prefix + "blocks." + std::to_string(i) + ".", f);
        f(prefix + "proj.kernel", self.proj_kernel);
        f(prefix + "proj.bias", self.proj_bias);
    }
};

struct HeadConfig {
    std::size_t in_channels = 64;
    std::size_t blocks = 4;
    double cls_prior = 0.01;  // initial foreground probability of the score map
};

/// Classification branch (1 channel) and regression branch (2 offset + 2 size
/// channels), all passed through a sigmoid.
template <typename T>
class PredictionHead {
public:
    PredictionHead() = default;
    PredictionHead(const HeadConfig& cfg, Rng& rng) : cfg_(cfg) {
        cls_ = make_branch(1, rng);
        reg_ = make_branch(4, rng);
        const T prior = static_cast<T>(cfg.cls_prior);
        cls_.proj_bias.value()[0] = -std::log((T(1) - prior) / prior);
    }

    const HeadConfig& config() const { return cfg_; }
    bool is_merged() const { return cls_.is_merged() && reg_.is_merged(); }
    const HeadBranch<T>& cls_branch() const { return cls_; }
    const HeadBranch<T>& reg_branch() const { return reg_; }
    HeadBranch<T>& cls_branch() { return cls_; }
    HeadBranch<T>& reg_branch() { return reg_; }

    /// features[C×H×W]. Training mode uses per-map batch statistics.
    HeadMaps<Var<T>> forward(const Var<T>& features, bool training) {
        return assemble(cls_.forward(features, training), reg_.forward(features, training));
    }

    HeadMaps<Var<T>> forward(const Var<T>& features) const {
        return assemble(cls_.forward(features), reg_.forward(features));
    }

    /// Same head with every block collapsed to a single 5×5 convolution.
    PredictionHead reparameterized() const {
        PredictionHead out;
        out.cfg_ = cfg_;
        out.cls_ = merge_branch(cls_);
        out.reg_ = merge_branch(reg_);
        return out;
    }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        cls_.visit(prefix + "cls.", f);
        reg_.visit(prefix + "reg.", f);
    }
    template <typename F>
    void visit(const std::string& prefix, F&& f) const {
        cls_.visit(prefix + "cls.", f);
        reg_.visit(prefix + "reg.", f);
    }

    /// Empty merged-form head with the given layout, to be filled by a weights loader.
    static PredictionHead merged_skeleton(const HeadConfig& cfg) {
        PredictionHead out;
        out.cfg_ = cfg;
        for (HeadBranch<T>* br : {&out.cls_, &out.reg_}) {
            std::size_t c = cfg.in_channels;
            for (std::size_t i = 0; i < cfg.blocks; ++i) {
                const std::size_t next = std::max<std::size_t>(1, c / 2);
                br->merged.push_back({Parameter<T>(Tensor<T>({next, c, 5, 5})), Parameter<T>(Tensor<T>({next}))});
                c = next;
            }
            const std::size_t outc = br == &out.cls_ ? 1 : 4;
            br->proj_kernel = Parameter<T>(Tensor<T>({outc, c, 1, 1}));
            br->proj_bias = Parameter<T>(Tensor<T>({outc}));
        }
        return out;
    }

private:
    HeadBranch<T> make_branch(std::size_t out_channels, Rng& rng) const {
        HeadBranch<T> br;
        std::size_t c = cfg_.in_channels;
        for (std::size_t i = 0; i < cfg_.blocks; ++i) {
            const std::size_t next = std::max<std::size_t>(1, c / 2);
            br.blocks.emplace_back(c, next, rng);
            c = next;
        }
        br.proj_kernel = Parameter<T>(normal_tensor<T>({out_channels, c, 1, 1}, T(0.01), rng));
        br.proj_bias = Parameter<T>(Tensor<T>({out_channels}));
        return br;
    }

    static HeadBranch<T> merge_branch(const HeadBranch<T>& src) {
        HeadBranch<T> br;
        if (src.blocks.empty()) {
            for (const auto& m : src.merged)
                br.merged.push_back({Parameter<T>(m.kernel.value()), Parameter<T>(m.bias.value())});
        } else {
            for (const auto& b : src.blocks) br.merged.push_back(reparameterize(b));
        }
        br.proj_kernel = Parameter<T>(src.proj_kernel.value());
        br.proj_bias = Parameter<T>(src.proj_bias.value());
        return br;
    }

    static HeadMaps<Var<T>> assemble(const Var<T>& cls, const Var<T>& reg) {
        const std::size_t h = cls.dim(1), w = cls.dim(2);
        const Var<T> score = sigmoid(reshape(cls, {h, w}));
        const Var<T> r = sigmoid(reshape(reg, {4, h * w}));
        return {score, reshape(slice_rows(r, 0, 2), {2, h, w}), reshape(slice_rows(r, 2, 4), {2, h, w})};
    }

    HeadConfig cfg_;
    HeadBranch<T> cls_, reg_;
};

}  // namespace stdtrack
