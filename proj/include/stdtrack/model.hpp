#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "stdtrack/encoder.hpp"
#include "stdtrack/head.hpp"
#include "stdtrack/mfifm.hpp"

namespace stdtrack {

struct ModelConfig {
    EncoderConfig encoder;
    FusionConfig fusion;
    std::size_t head_blocks = 4;
    bool mask_enhance = true;

    HeadConfig head() const {
        HeadConfig h;
        h.in_channels = encoder.dim;
        h.blocks = head_blocks;
        return h;
    }
};

/// Search-token gating by the fused token: x'_i = x_i + sigmoid(st·x_i / √D)·x_i.
template <typename T>
Var<T> mask_enhance(const Var<T>& x, const Var<T>& st) {
    if (x.shape().size() != 2 || st.shape() != Shape{1, x.dim(1)})
        throw DimensionError("mask_enhance", x.shape(), st.shape());
    const T scale = T(1) / std::sqrt(static_cast<T>(x.dim(1)));
    const Var<T> mask = sigmoid(mul_scalar(matmul(x, transpose(st)), scale));
    return add(x, mul_colvec(x, mask));
}

/// Search tokens [N_x×D] in row-major patch order to a D×gh×gw feature map.
template <typename T>
Var<T> tokens_to_grid(const Var<T>& x, std::size_t gh, std::size_t gw) {
    return reshape(transpose(x), {x.dim(1), gh, gw});
}

template <typename T>
struct FrameOutput {
    FrameTokens<T> tokens;   // raw encoder output
    Var<T> fused;            // F'' for this frame
    HeadMaps<Var<T>> maps;
};

template <typename T>
class Model {
public:
    Model() = default;
    Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        Rng rng(seed);
        encoder_ = Encoder<T>(cfg.encoder, rng);
        mfifm_ = Mfifm<T>(cfg.encoder.dim, cfg.encoder.heads, rng, cfg.fusion);
        head_ = PredictionHead<T>(cfg.head(), rng);
        init_token_ = Parameter<T>(trunc_normal_tensor<T>({1, cfg.encoder.dim}, T(0.02), rng));
    }

    const ModelConfig& config() const { return cfg_; }
    const Encoder<T>& encoder() const { return encoder_; }
    const Mfifm<T>& mfifm() const { return mfifm_; }
    Mfifm<T>& mfifm() { return mfifm_; }
    const PredictionHead<T>& head() const { return head_; }
    PredictionHead<T>& head() { return head_; }
    const Parameter<T>& init_token() const { return init_token_; }

    /// Copy sharing every parameter except the head, which is collapsed to merged form.
    Model reparameterized() const {
        Model m = *this;
        m.head_ = head_.reparameterized();
        return m;
    }

    void set_head(PredictionHead<T> h) { head_ = std::move(h); }

    /// Template crop (standardized) to cached template tokens.
    Var<T> embed_template(const Tensor<T>& image) const { return encoder_.patch_embed(image); }

    FrameOutput<T> forward_frame(const Var<T>& st, const Var<T>& z, const Tensor<T>& search,
                                 const Var<T>& history) const {
        return run(*this, st, z, search, history, false);
    }

    /// Training-mode forward; batch-norm running statistics are updated.
    FrameOutput<T> forward_frame_train(const Var<T>& st, const Var<T>& z, const Tensor<T>& search,
                                       const Var<T>& history) {
        return run(*this, st, z, search, history, true);
    }

    template <typename F>
    void visit(F&& f) {
        visit_impl(*this, f);
    }
    template <typename F>
    void visit(F&& f) const {
        visit_impl(*this, f);
    }

    std::size_t parameter_count(bool trainable_only = true) const {
        std::size_t n = 0;
        visit([&](const std::string&, const Parameter<T>& p) {
            if (!trainable_only || p.trainable()) n += p.value().numel();
        });
        return n;
    }

    void zero_grad() {
        visit([](const std::string&, Parameter<T>& p) {
            if (p.trainable()) p.zero_grad();
        });
    }

private:
    template <typename Self>
    static FrameOutput<T> run(Self& self, const Var<T>& st, const Var<T>& z, const Tensor<T>& search,
                              const Var<T>& history, bool training) {
        const EncoderConfig& ec = self.cfg_.encoder;
        FrameOutput<T> out;
        out.tokens = self.encoder_.encode(st, z, self.encoder_.patch_embed(search));
        out.fused = self.mfifm_.fuse(out.tokens.st, history);
        const Var<T> x = self.cfg_.mask_enhance ? mask_enhance(out.tokens.x, out.fused) : out.tokens.x;
        const Var<T> grid = tokens_to_grid(x, ec.search_grid_h(), ec.search_grid_w());
        if constexpr (std::is_const_v<Self>)
            out.maps = self.head_.forward(grid);
        else
            out.maps = self.head_.forward(grid, training);
        return out;
    }

    template <typename Self, typename F>
    static void visit_impl(Self& self, F& f) {
        self.encoder_.visit("encoder.", f);
        self.mfifm_.visit("mfifm.", f);
        self.head_.visit(self.head_.is_merged() ? "merged.head." : "head.", f);
        f(std::string("init_token"), self.init_token_);
    }

    ModelConfig cfg_;
    Encoder<T> encoder_;
    Mfifm<T> mfifm_;
    PredictionHead<T> head_;
    Parameter<T> init_token_;
};

}  // namespace stdtrack
