#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "stdtrack/nn.hpp"

namespace stdtrack {

/// Sinusoidal table: pe[p, 2i] = sin(p / 10000^(2i/D)), pe[p, 2i+1] = cos(same).
template <typename T>
Tensor<T> fixed_positional_encoding(std::size_t length, std::size_t d) {
    if (d % 2 != 0) throw ConfigError("positional encoding: width must be even, got " + std::to_string(d));
    Tensor<T> pe({length, d});
    for (std::size_t p = 0; p < length; ++p)
        for (std::size_t i = 0; i < d / 2; ++i) {
            const double angle =
                static_cast<double>(p) / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d));
            pe.at(p, 2 * i) = static_cast<T>(std::sin(angle));
            pe.at(p, 2 * i + 1) = static_cast<T>(std::cos(angle));
        }
    return pe;
}

struct FusionConfig {
    bool positional = true;  // add the sinusoidal table; off only for ablation and tests
    bool residual = false;   // ablation: residual paths around both attention layers
};

/// Enhances the current spatiotemporal token with stored history:
///   F_in = LN([history; current] + P_fix)
///   F'   = LN(MSA(F_in, F_in, F_in))
///   F''  = LN(MCA(F'_last, F', F'))
/// One self-attention layer and one cross-attention layer, nothing else.
template <typename T>
class Mfifm {
public:
    Mfifm() = default;
    Mfifm(std::size_t d, std::size_t heads, Rng& rng, FusionConfig cfg = {})
        : cfg_(cfg), ln_in_(d), msa_(d, heads, rng), ln_mid_(d), mca_(d, heads, rng), ln_out_(d) {
        if (d % 2 != 0) throw ConfigError("mfifm: width must be even, got " + std::to_string(d));
    }

    FusionConfig& config() { return cfg_; }
    const FusionConfig& config() const { return cfg_; }
    const MultiHeadAttention<T>& self_attention() const { return msa_; }
    const MultiHeadAttention<T>& cross_attention() const { return mca_; }

    /// current[1×D], history[M×D] oldest first (M may be 0). Returns F''[1×D].
    Var<T> fuse(const Var<T>& current, const Var<T>& history) const {
        const std::size_t d = msa_.width();
        if (current.shape() != Shape{1, d}) throw DimensionError("fuse current", current.shape(), Shape{1, d});
        if (history.shape().size() != 2 || history.dim(1) != d)
            throw DimensionError("fuse history", history.shape(), Shape{0, d});
        const std::size_t m = history.dim(0);
        Var<T> stack = m == 0 ? current : concat_rows<T>({history, current});
        if (cfg_.positional) stack = add(stack, constant(fixed_positional_encoding<T>(m + 1, d)));
        const Var<T> f_in = ln_in_(stack);
        Var<T> mixed = msa_(f_in, f_in, f_in);
        if (cfg_.residual) mixed = add(mixed, f_in);
        const Var<T> f1 = ln_mid_(mixed);
        const Var<T> query = m == 0 ? f1 : slice_rows(f1, m, m + 1);
        Var<T> cross = mca_(query, f1, f1);
        if (cfg_.residual) cross = add(cross, query);
        return ln_out_(cross);
    }

    Var<T> fuse(const Var<T>& current) const {
        return fuse(current, constant(Tensor<T>({0, msa_.width()})));
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
        self.ln_in_.visit(prefix + "ln_in.", f);
        self.msa_.visit(prefix + "msa.", f);
        self.ln_mid_.visit(prefix + "ln_mid.", f);
        self.mca_.visit(prefix + "mca.", f);
        self.ln_out_.visit(prefix + "ln_out.", f);
    }

    FusionConfig cfg_;
    LayerNorm<T> ln_in_;
    MultiHeadAttention<T> msa_;
    LayerNorm<T> ln_mid_;
    MultiHeadAttention<T> mca_;
    LayerNorm<T> ln_out_;
};

}  // namespace stdtrack
