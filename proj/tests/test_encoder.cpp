#include <gtest/gtest.h>

#include <map>

#include "oracles.hpp"
#include "stdtrack/encoder.hpp"

using namespace stdtrack;

namespace {

EncoderConfig small(std::size_t depth) {
    EncoderConfig c;
    c.patch = 4;
    c.dim = 8;
    c.depth = depth;
    c.heads = 2;
    c.template_h = c.template_w = 8;
    c.search_h = c.search_w = 16;
    return c;
}

// Pixel (ch, y, x) of patch (py, px) lands at column ch·P² + dy·P + dx of row py·gw + px.
Tensor<double> naive_patches(const Tensor<double>& img, std::size_t p) {
    const std::size_t c = img.dim(0), gh = img.dim(1) / p, gw = img.dim(2) / p;
    Tensor<double> out({gh * gw, c * p * p});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < img.dim(1); ++y)
            for (std::size_t x = 0; x < img.dim(2); ++x)
                out.at((y / p) * gw + x / p, ch * p * p + (y % p) * p + x % p) = img.at(ch, y, x);
    return out;
}

}  // namespace

TEST(PatchEmbed, SinglePatchGivesOneToken) {
    Rng rng(1);
    EncoderConfig c = small(0);
    Encoder<double> enc(c, rng);
    std::mt19937_64 r(1);
    EXPECT_EQ(enc.patch_embed(oracle::random<double>({3, 4, 4}, r)).shape(), (Shape{1, 8}));
}

TEST(PatchEmbed, ZeroImageZeroBiasGivesZeroTokens) {
    Rng rng(2);
    Encoder<double> enc(small(0), rng);
    const auto t = enc.patch_embed(Tensor<double>({3, 8, 8})).value();
    for (double v : t.values()) EXPECT_EQ(v, 0.0);
}

TEST(PatchEmbed, MatchesNaiveReshape) {
    std::mt19937_64 r(3);
    const auto img = oracle::random<double>({3, 8, 12}, r);
    EXPECT_EQ(extract_patches(img, 2), naive_patches(img, 2));
    EXPECT_EQ(extract_patches(img, 4), naive_patches(img, 4));

    // With an identity projection the tokens are the flattened patches.
    EncoderConfig c = small(0);
    c.patch = 2;
    c.dim = 12;
    c.template_h = c.template_w = 4;
    c.search_h = c.search_w = 4;
    Rng rng(3);
    Encoder<double> enc(c, rng);
    enc.visit("", [](const std::string& name, Parameter<double>& p) {
        if (name == "patch_proj.weight") p.value() = Tensor<double>::eye(12);
        if (name == "patch_proj.bias") p.value().fill(0);
    });
    EXPECT_EQ(enc.patch_embed(img).value(), naive_patches(img, 2));
}

TEST(PatchEmbed, IndivisibleResolutionRejected) {
    EXPECT_THROW(extract_patches(Tensor<double>({3, 10, 8}), 4), ConfigError);
    EncoderConfig c = small(1);
    c.search_h = 18;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Encoder, DepthZeroAddsPositionalEmbeddings) {
    Rng rng(4);
    Encoder<double> enc(small(0), rng);
    std::mt19937_64 r(4);
    std::map<std::string, Tensor<double>> pos;
    enc.visit("", [&](const std::string& name, Parameter<double>& p) {
        if (name.rfind("pos_", 0) == 0) pos[name] = p.value() = oracle::random<double>(p.shape(), r);
    });
    const auto st = oracle::random<double>({1, 8}, r), z = oracle::random<double>({4, 8}, r),
               x = oracle::random<double>({16, 8}, r);
    const auto out = enc.encode(Var<double>(st), Var<double>(z), Var<double>(x));
    auto check = [](const Tensor<double>& got, const Tensor<double>& in, const Tensor<double>& p) {
        ASSERT_EQ(got.shape(), in.shape());
        for (std::size_t i = 0; i < in.numel(); ++i) EXPECT_DOUBLE_EQ(got[i], in[i] + p[i]);
    };
    check(out.st.value(), st, pos["pos_st"]);
    check(out.z.value(), z, pos["pos_z"]);
    check(out.x.value(), x, pos["pos_x"]);
}

// One pre-norm block evaluated with the naive attention and layer-norm oracles.
TEST(Encoder, SingleBlockMatchesNaiveForward) {
    Rng rng(5);
    Encoder<double> enc(small(1), rng);
    std::mt19937_64 r(5);
    enc.visit("", [&](const std::string& name, Parameter<double>& p) {
        if (name.find("bias") != std::string::npos || name.rfind("pos_", 0) == 0 || name.find("beta") != std::string::npos)
            p.value() = oracle::random<double>(p.shape(), r, -0.1, 0.1);
    });
    const auto st = oracle::random<double>({1, 8}, r), z = oracle::random<double>({4, 8}, r),
               x = oracle::random<double>({16, 8}, r);
    const auto out = enc.encode(Var<double>(st), Var<double>(z), Var<double>(x));

    std::map<std::string, Tensor<double>> P;
    enc.visit("", [&](const std::string& name, const Parameter<double>& p) { P[name] = p.value(); });
    Tensor<double> s({21, 8});
    for (std::size_t j = 0; j < 8; ++j) {
        s.at(0, j) = st[j] + P["pos_st"][j];
        for (std::size_t i = 0; i < 4; ++i) s.at(1 + i, j) = z.at(i, j) + P["pos_z"].at(i, j);
        for (std::size_t i = 0; i < 16; ++i) s.at(5 + i, j) = x.at(i, j) + P["pos_x"].at(i, j);
    }
    const std::string b = "blocks.0.";
    const auto h = oracle::layer_norm_rows(s, P[b + "ln1.gamma"], P[b + "ln1.beta"], 1e-5);
    const auto a = oracle::attention(h, h, h, P[b + "attn.q.weight"], P[b + "attn.q.bias"], P[b + "attn.k.weight"],
                                     P[b + "attn.k.bias"], P[b + "attn.v.weight"], P[b + "attn.v.bias"],
                                     P[b + "attn.out.weight"], P[b + "attn.out.bias"], 2);
    Tensor<double> y = s;
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] += a[i];
    auto u = oracle::add_bias(oracle::matmul(oracle::layer_norm_rows(y, P[b + "ln2.gamma"], P[b + "ln2.beta"], 1e-5),
                                             P[b + "fc1.weight"]),
                              P[b + "fc1.bias"]);
    for (auto& v : u.values()) v = 0.5 * v * (1 + std::erf(v / std::sqrt(2.0)));
    const auto m = oracle::add_bias(oracle::matmul(u, P[b + "fc2.weight"]), P[b + "fc2.bias"]);
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] += m[i];

    double err = 0;
    for (std::size_t j = 0; j < 8; ++j) {
        err = std::max(err, std::abs(out.st.value()[j] - y.at(0, j)));
        for (std::size_t i = 0; i < 4; ++i) err = std::max(err, std::abs(out.z.value().at(i, j) - y.at(1 + i, j)));
        for (std::size_t i = 0; i < 16; ++i) err = std::max(err, std::abs(out.x.value().at(i, j) - y.at(5 + i, j)));
    }
    EXPECT_LT(err, 1e-6);
}

TEST(Encoder, WidthMismatchRejected) {
    Rng rng(6);
    Encoder<double> enc(small(1), rng);
    EXPECT_THROW(enc.encode(Var<double>(Tensor<double>({1, 6})), Var<double>(Tensor<double>({4, 8})),
                            Var<double>(Tensor<double>({16, 8}))),
                 DimensionError);
}

TEST(Encoder, FullScaleTokenCounts) {
    const EncoderConfig c = EncoderConfig::paper_scale();
    // 256²/16² search tokens, 128²/16² template tokens.
    EXPECT_EQ(c.search_tokens(), 256u);
    EXPECT_EQ(c.template_tokens(), 64u);
    c.validate();
}
