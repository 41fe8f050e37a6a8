#pragma once

#include <array>
#include <string>
#include <vector>

#include "stdtrack/nn.hpp"

namespace stdtrack {

struct EncoderConfig {
    std::size_t patch = 8;
    std::size_t dim = 64;
    std::size_t depth = 4;
    std::size_t heads = 4;
    std::size_t template_h = 64, template_w = 64;
    std::size_t search_h = 128, search_w = 128;
    std::size_t mlp_ratio = 4;
    // Per-channel standardization applied to [0,1] pixels.
    std::array<double, 3> pixel_mean{0.485, 0.456, 0.406};
    std::array<double, 3> pixel_std{0.229, 0.224, 0.225};

    std::size_t template_tokens() const { return template_h * template_w / (patch * patch); }
    std::size_t search_tokens() const { return search_h * search_w / (patch * patch); }
    std::size_t search_grid_h() const { return search_h / patch; }
    std::size_t search_grid_w() const { return search_w / patch; }

    void validate() const {
        if (patch == 0) throw ConfigError("encoder: patch size must be positive");
        for (std::size_t side : {template_h, template_w, search_h, search_w})
            if (side == 0 || side % patch != 0)
                throw ConfigError("encoder: resolution " + std::to_string(side) +
                                  " not divisible by patch " + std::to_string(patch));
        if (heads == 0 || dim % heads != 0)
            throw ConfigError("encoder: dim " + std::to_string(dim) + " not divisible by heads " +
                              std::to_string(heads));
    }

    /// Full-size configuration: 256² search, 128² template, 16-pixel patches, ViT-tiny width.
    static EncoderConfig paper_scale() {
        EncoderConfig c;
        c.patch = 16;
        c.dim = 192;
        c.depth = 12;
        c.heads = 3;
        c.template_h = c.template_w = 128;
        c.search_h = c.search_w = 256;
        return c;
    }
};

/// Encoder output split back into its three blocks.
template <typename T>
struct FrameTokens {
    Var<T> st;  // 1×D
    Var<T> z;   // N_z×D
    Var<T> x;   // N_x×D
};

/// Splits image[3×H×W] into non-overlapping P×P patches, one row per patch in
/// row-major patch order; each row is flattened as (channel, dy, dx).
template <typename T>
Tensor<T> extract_patches(const Tensor<T>& image, std::size_t p) {
    detail::require_rank("extract_patches", image.shape(), 3);
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    if (p == 0 || h % p != 0 || w % p != 0)
        throw ConfigError("patch_embed: " + shape_str(image.shape()) + " not divisible by patch " +
                          std::to_string(p));
    const std::size_t gh = h / p, gw = w / p, len = c * p * p;
    Tensor<T> out({gh * gw, len});
    for (std::size_t py = 0; py < gh; ++py)
        for (std::size_t px = 0; px < gw; ++px) {
            T* row = out.data() + (py * gw + px) * len;
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t dy = 0; dy < p; ++dy)
                    for (std::size_t dx = 0; dx < p; ++dx)
                        *row++ = image.at(ch, py * p + dy, px * p + dx);
        }
    return out;
}

template <typename T>
Tensor<T> standardize(const Tensor<T>& image, const EncoderConfig& cfg) {
    detail::require_rank("standardize", image.shape(), 3);
    Tensor<T> out(image.shape());
    const std::size_t hw = image.dim(1) * image.dim(2);
    for (std::size_t ch = 0; ch < image.dim(0); ++ch) {
        const T m = static_cast<T>(cfg.pixel_mean[ch % 3]);
        const T s = static_cast<T>(cfg.pixel_std[ch % 3]);
        for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] = (image[ch * hw + i] - m) / s;
    }
    return out;
}

/// Pre-norm transformer block: x + MSA(LN(x)), then x + MLP(LN(x)).
template <typename T>
struct EncoderBlock {
    LayerNorm<T> ln1;
    MultiHeadAttention<T> attn;
    LayerNorm<T> ln2;
    Linear<T> fc1, fc2;

    EncoderBlock() = default;
    EncoderBlock(const EncoderConfig& cfg, Rng& rng)
        : ln1(cfg.dim),
          attn(cfg.dim, cfg.heads, rng),
          ln2(cfg.dim),
          fc1(cfg.dim, cfg.dim * cfg.mlp_ratio, rng),
          fc2(cfg.dim * cfg.mlp_ratio, cfg.dim, rng) {}

    Var<T> operator()(const Var<T>& x) const {
        const Var<T> h = ln1(x);
        const Var<T> y = add(x, attn(h, h, h));
        return add(y, fc2(gelu(fc1(ln2(y)))));
    }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        ln1.visit(prefix + "ln1.", f);
        attn.visit(prefix + "attn.", f);
        ln2.visit(prefix + "ln2.", f);
        fc1.visit(prefix + "fc1.", f);
        fc2.visit(prefix + "fc2.", f);
    }
    template <typename F>
    void visit(const std::string& prefix, F&& f) const {
        ln1.visit(prefix + "ln1.", f);
        attn.visit(prefix + "attn.", f);
        ln2.visit(prefix + "ln2.", f);
        fc1.visit(prefix + "fc1.", f);
        fc2.visit(prefix + "fc2.", f);
    }
};

/// Joint encoder over [spatiotemporal token; template tokens; search tokens].
template <typename T>
class Encoder {
public:
    Encoder() = default;
    Encoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        const std::size_t d = cfg_.dim;
        proj_ = Linear<T>(3 * cfg_.patch * cfg_.patch, d, rng);
        pos_st_ = Parameter<T>(Tensor<T>({1, d}));
        pos_z_ = Parameter<T>(Tensor<T>({cfg_.template_tokens(), d}));
        pos_x_ = Parameter<T>(Tensor<T>({cfg_.search_tokens(), d}));
        for (std::size_t i = 0; i < cfg_.depth; ++i) blocks_.emplace_back(cfg_, rng);
    }

    const EncoderConfig& config() const { return cfg_; }
    const std::vector<EncoderBlock<T>>& blocks() const { return blocks_; }
    const Linear<T>& projection() const { return proj_; }

    /// image[3×H×W], already standardized, to tokens[(H·W/P²)×D].
    Var<T> patch_embed(const Tensor<T>& image) const {
        return proj_(constant(extract_patches(image, cfg_.patch)));
    }

    FrameTokens<T> encode(const Var<T>& st, const Var<T>& z, const Var<T>& x) const {
        const std::size_t d = cfg_.dim;
        if (st.shape() != Shape{1, d}) throw DimensionError("encode st", st.shape(), Shape{1, d});
        if (z.shape() != pos_z_.shape()) throw DimensionError("encode z", z.shape(), pos_z_.shape());
        if (x.shape() != pos_x_.shape()) throw DimensionError("encode x", x.shape(), pos_x_.shape());
        Var<T> seq = concat_rows<T>({add(st, pos_st_.var()), add(z, pos_z_.var()), add(x, pos_x_.var())});
        for (const auto& b : blocks_) seq = b(seq);
        const std::size_t nz = z.dim(0), nx = x.dim(0);
        return {slice_rows(seq, 0, 1), slice_rows(seq, 1, 1 + nz), slice_rows(seq, 1 + nz, 1 + nz + nx)};
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
        self.proj_.visit(prefix + "patch_proj.", f);
        f(prefix + "pos_st", self.pos_st_);
        f(prefix + "pos_z", self.pos_z_);
        f(prefix + "pos_x", self.pos_x_);
        for (std::size_t i = 0; i < self.blocks_.size(); ++i)
            self.blocks_[i].visit(prefix + "blocks." + std::to_string(i) + ".", f);
    }

    EncoderConfig cfg_;
    Linear<T> proj_;
    Parameter<T> pos_st_, pos_z_, pos_x_;
    std::vector<EncoderBlock<T>> blocks_;
};

}  // namespace stdtrack
