#include <gtest/gtest.h>

#include <filesystem>

#include "oracles.hpp"
#include "stdtrack/weights.hpp"

using namespace stdtrack;

namespace {

Var<double> C(const Tensor<double>& t) { return Var<double>(t, false); }

Tensor<double> conv(const Tensor<double>& x, const Tensor<double>& k, const Tensor<double>& b, std::size_t pad) {
    return oracle::conv2d(x, k, b, pad);
}

void randomize_bn(BatchNorm2d<double>& bn, std::mt19937_64& r) {
    bn.gamma.value() = oracle::random<double>(bn.gamma.shape(), r, 0.5, 2.0);
    bn.beta.value() = oracle::random<double>(bn.beta.shape(), r);
    bn.running_mean.value() = oracle::random<double>(bn.running_mean.shape(), r);
    bn.running_var.value() = oracle::random<double>(bn.running_var.shape(), r, 0.2, 3.0);
}

void randomize_block(RepConvBlock<double>& b, std::mt19937_64& r) {
    for (auto* p : {&b.b1, &b.b3, &b.b5}) p->value() = oracle::random<double>(p->shape(), r);
    randomize_bn(b.bn, r);
}

// BN in inference mode applied after a conv output.
Tensor<double> bn_after(const Tensor<double>& y, const BatchNorm2d<double>& bn) {
    Tensor<double> out = y;
    const std::size_t hw = y.dim(1) * y.dim(2);
    for (std::size_t c = 0; c < y.dim(0); ++c)
        for (std::size_t i = 0; i < hw; ++i)
            out[c * hw + i] = (y[c * hw + i] - bn.running_mean.value()[c]) /
                                  std::sqrt(bn.running_var.value()[c] + bn.eps) * bn.gamma.value()[c] +
                              bn.beta.value()[c];
    return out;
}

Tensor<double> relu(Tensor<double> t) {
    for (auto& v : t.values()) v = std::max(v, 0.0);
    return t;
}

}  // namespace

TEST(PadKernel, OneByOneGoesToCenter) {
    const auto p = pad_kernel(Tensor<double>({1, 1, 1, 1}, 5.0));
    ASSERT_EQ(p.shape(), (Shape{1, 1, 5, 5}));
    for (std::size_t i = 0; i < 25; ++i) EXPECT_EQ(p[i], i == 12 ? 5.0 : 0.0);
}

TEST(PadKernel, FiveByFiveUnchanged) {
    std::mt19937_64 r(1);
    const auto k = oracle::random<double>({2, 3, 5, 5}, r);
    EXPECT_EQ(pad_kernel(k), k);
}

TEST(PadKernel, ThreeByThreeConvEquivalence) {
    std::mt19937_64 r(2);
    for (int c = 0; c < 10; ++c) {
        const auto k = oracle::random<double>({2, 3, 3, 3}, r), b = oracle::random<double>({2}, r);
        const auto x = oracle::random<double>({3, 7, 5}, r);
        EXPECT_LT(oracle::max_abs(conv(x, pad_kernel(k), b, 2), conv(x, k, b, 1)), 1e-12);
    }
    EXPECT_THROW(pad_kernel(Tensor<double>({1, 1, 7, 7})), UnsupportedKernelError);
    EXPECT_THROW(pad_kernel(Tensor<double>({1, 1, 2, 2})), UnsupportedKernelError);
}

TEST(MergeBranches, ZeroAndSingleBranch) {
    Rng rng(3);
    RepConvBlock<double> b(2, 3, rng);
    b.k1.value().fill(0);
    b.k3.value().fill(0);
    const auto k5 = b.k5.value();
    auto m = merge_branches(b);
    EXPECT_EQ(m.kernel, k5);
    b.k5.value().fill(0);
    m = merge_branches(b);
    for (double v : m.kernel.values()) EXPECT_EQ(v, 0.0);
    for (double v : m.bias.values()) EXPECT_EQ(v, 0.0);
}

TEST(MergeBranches, EqualsSumOfBranchOutputs) {
    std::mt19937_64 r(4);
    Rng rng(4);
    RepConvBlock<double> b(3, 4, rng);
    randomize_block(b, r);
    const auto m = merge_branches(b);
    for (int i = 0; i < 5; ++i) {
        const auto x = oracle::random<double>({3, 6, 6}, r);
        Tensor<double> ref = conv(x, b.k1.value(), b.b1.value(), 0);
        const auto y3 = conv(x, b.k3.value(), b.b3.value(), 1), y5 = conv(x, b.k5.value(), b.b5.value(), 2);
        for (std::size_t j = 0; j < ref.numel(); ++j) ref[j] += y3[j] + y5[j];
        EXPECT_LT(oracle::max_abs(conv(x, m.kernel, m.bias, 2), ref), 1e-5);
    }
}

TEST(FoldBn, IdentityAndUnitScale) {
    std::mt19937_64 r(5);
    const auto k = oracle::random<double>({2, 2, 5, 5}, r), b = oracle::random<double>({2}, r);
    BatchNorm2d<double> bn(2);
    bn.eps = 0;
    auto f = fold_bn(k, b, bn);
    EXPECT_EQ(f.kernel.value(), k);
    EXPECT_EQ(f.bias.value(), b);
    bn.gamma.value().fill(2);
    bn.running_var.value().fill(4);
    f = fold_bn(k, b, bn);
    EXPECT_EQ(f.kernel.value(), k);
}

TEST(FoldBn, MatchesBnAfterConv) {
    std::mt19937_64 r(6);
    for (int c = 0; c < 10; ++c) {
        const auto k = oracle::random<double>({3, 2, 5, 5}, r), b = oracle::random<double>({3}, r);
        BatchNorm2d<double> bn(3);
        randomize_bn(bn, r);
        const auto f = fold_bn(k, b, bn);
        const auto x = oracle::random<double>({2, 6, 6}, r);
        EXPECT_LT(oracle::max_abs(conv(x, f.kernel.value(), f.bias.value(), 2), bn_after(conv(x, k, b, 2), bn)), 1e-4);
    }
}

TEST(FoldBn, NonPositiveVarianceRejected) {
    BatchNorm2d<double> bn(1);
    bn.eps = 0;
    bn.running_var.value().fill(0);
    EXPECT_THROW(fold_bn(Tensor<double>({1, 1, 5, 5}), Tensor<double>({1}), bn), ContractError);
}

TEST(RepConvBlock, TrivialCases) {
    Rng rng(7);
    std::mt19937_64 r(7);
    RepConvBlock<double> b(2, 2, rng);
    b.bn.eps = 0;
    for (auto* p : {&b.k1, &b.k3, &b.k5}) p->value().fill(0);
    const auto x = oracle::random<double>({2, 4, 4}, r);
    const auto zero_out = b.forward(C(x)).value();
    for (double v : zero_out.values()) EXPECT_EQ(v, 0.0);
    // 1×1 identity on each channel passes ReLU(x) through.
    b.k1.value().fill(0);
    b.k1.value()[0] = b.k1.value()[3] = 1.0;
    EXPECT_EQ(b.forward(C(x)).value(), relu(x));
}

TEST(RepConvBlock, RandomMatchesNaive) {
    Rng rng(8);
    std::mt19937_64 r(8);
    RepConvBlock<double> b(4, 3, rng);
    randomize_block(b, r);
    const auto x = oracle::random<double>({4, 6, 6}, r);
    Tensor<double> s = conv(x, b.k1.value(), b.b1.value(), 0);
    const auto y3 = conv(x, b.k3.value(), b.b3.value(), 1), y5 = conv(x, b.k5.value(), b.b5.value(), 2);
    for (std::size_t j = 0; j < s.numel(); ++j) s[j] += y3[j] + y5[j];
    EXPECT_LT(oracle::max_abs(b.forward(C(x)).value(), relu(bn_after(s, b.bn))), 1e-5);
}

TEST(Reparameterize, SingleBlockIdentityBnIsSumOfPaddedKernels) {
    Rng rng(9);
    RepConvBlock<double> b(2, 2, rng);
    b.bn.eps = 0;
    const auto m = reparameterize(b);
    const auto p1 = pad_kernel(b.k1.value()), p3 = pad_kernel(b.k3.value());
    for (std::size_t i = 0; i < p1.numel(); ++i) EXPECT_DOUBLE_EQ(m.kernel.value()[i], p1[i] + p3[i] + b.k5.value()[i]);
}

TEST(Reparameterize, FullHeadDualForward) {
    std::mt19937_64 r(10);
    HeadConfig hc;
    hc.in_channels = 16;
    hc.blocks = 3;
    Rng rng(10);
    PredictionHead<double> head(hc, rng);
    for (auto* br : {&head.cls_branch(), &head.reg_branch()})
        for (auto& b : br->blocks) randomize_block(b, r);
    const auto merged = head.reparameterized();
    EXPECT_TRUE(merged.is_merged());
    double worst = 0;
    for (int i = 0; i < 20; ++i) {
        const auto x = oracle::random<double>({16, 8, 8}, r);
        const auto a = values_of(head.forward(C(x))), b = values_of(merged.forward(C(x)));
        worst = std::max({worst, oracle::max_abs(a.score, b.score), oracle::max_abs(a.offset, b.offset),
                          oracle::max_abs(a.size, b.size)});
    }
    EXPECT_LT(worst, 1e-8);
}

TEST(Head, OutputsInUnitInterval) {
    HeadConfig hc;
    hc.in_channels = 8;
    hc.blocks = 2;
    Rng rng(11);
    PredictionHead<double> head(hc, rng);
    std::mt19937_64 r(11);
    const auto out = values_of(head.forward(C(oracle::random<double>({8, 5, 5}, r, -3, 3))));
    EXPECT_EQ(out.score.shape(), (Shape{5, 5}));
    EXPECT_EQ(out.offset.shape(), (Shape{2, 5, 5}));
    for (const auto* t : {&out.score, &out.offset, &out.size})
        for (double v : t->values()) {
            EXPECT_GT(v, 0.0);
            EXPECT_LT(v, 1.0);
        }
}

TEST(Reparameterize, ExportReloadIsBitExact) {
    ModelConfig mc;
    mc.encoder.patch = 8;
    mc.encoder.dim = 16;
    mc.encoder.depth = 1;
    mc.encoder.heads = 2;
    mc.encoder.template_h = mc.encoder.template_w = 16;
    mc.encoder.search_h = mc.encoder.search_w = 32;
    mc.head_blocks = 2;
    Model<float> m(mc, 3);
    const auto merged = m.reparameterized();
    const auto path = (std::filesystem::temp_directory_path() / "stdtrack_head_reload.bin").string();
    save_weights(merged, path);
    const auto back = load_weights<float>(mc, path);
    std::filesystem::remove(path);
    EXPECT_TRUE(back.head().is_merged());
    const auto a = model_tensors(merged), b = model_tensors(back);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].first, b[i].first);
        EXPECT_EQ(a[i].second, b[i].second) << a[i].first;
    }
    bool has_prefix = false;
    for (const auto& [name, _] : a) has_prefix = has_prefix || name.rfind("merged.head.", 0) == 0;
    EXPECT_TRUE(has_prefix);
}
