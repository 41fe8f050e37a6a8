#include <gtest/gtest.h>

#include <map>
#include <set>

#include "oracles.hpp"
#include "stdtrack/mfifm.hpp"

using namespace stdtrack;

namespace {

constexpr std::size_t D = 8;

Var<double> C(const Tensor<double>& t) { return Var<double>(t, false); }

Mfifm<double> make(std::uint64_t seed, bool positional = true) {
    Rng rng(seed);
    Mfifm<double> m(D, 2, rng, FusionConfig{positional, false});
    // Generic nonzero biases and norm parameters.
    std::mt19937_64 r(seed + 1);
    m.visit("", [&](const std::string& name, Parameter<double>& p) {
        if (name.find("bias") != std::string::npos || name.find("beta") != std::string::npos)
            p.value() = oracle::random<double>(p.shape(), r, -0.2, 0.2);
        if (name.find("gamma") != std::string::npos) p.value() = oracle::random<double>(p.shape(), r, 0.5, 1.5);
    });
    return m;
}

Tensor<double> stack(const Tensor<double>& hist, const Tensor<double>& cur) {
    Tensor<double> s({hist.dim(0) + 1, D});
    std::copy(hist.values().begin(), hist.values().end(), s.data());
    std::copy(cur.values().begin(), cur.values().end(), s.data() + hist.numel());
    return s;
}

// Direct evaluation of the three-step fusion with the naive oracles.
Tensor<double> naive_fuse(const Mfifm<double>& m, const Tensor<double>& cur, const Tensor<double>& hist, bool pe) {
    std::map<std::string, Tensor<double>> P;
    m.visit("", [&](const std::string& n, const Parameter<double>& p) { P[n] = p.value(); });
    auto s = stack(hist, cur);
    const std::size_t L = s.dim(0);
    if (pe)
        for (std::size_t p = 0; p < L; ++p)
            for (std::size_t i = 0; i < D / 2; ++i) {
                const double a = p / std::pow(10000.0, 2.0 * i / D);
                s.at(p, 2 * i) += std::sin(a);
                s.at(p, 2 * i + 1) += std::cos(a);
            }
    auto att = [&](const std::string& pre, const Tensor<double>& q, const Tensor<double>& kv) {
        return oracle::attention(q, kv, kv, P[pre + "q.weight"], P[pre + "q.bias"], P[pre + "k.weight"],
                                 P[pre + "k.bias"], P[pre + "v.weight"], P[pre + "v.bias"], P[pre + "out.weight"],
                                 P[pre + "out.bias"], 2);
    };
    const auto fin = oracle::layer_norm_rows(s, P["ln_in.gamma"], P["ln_in.beta"], 1e-5);
    const auto f1 = oracle::layer_norm_rows(att("msa.", fin, fin), P["ln_mid.gamma"], P["ln_mid.beta"], 1e-5);
    Tensor<double> q({1, D});
    for (std::size_t j = 0; j < D; ++j) q[j] = f1.at(L - 1, j);
    return oracle::layer_norm_rows(att("mca.", q, f1), P["ln_out.gamma"], P["ln_out.beta"], 1e-5);
}

}  // namespace

TEST(PositionalEncoding, Values) {
    const auto pe = fixed_positional_encoding<double>(4, D);
    for (std::size_t i = 0; i < D; ++i) EXPECT_EQ(pe.at(0, i), i % 2 ? 1.0 : 0.0);
    for (double v : pe.values()) {
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
    }
    EXPECT_NEAR(pe.at(1, 0), 0.8414709848, 1e-10);
    EXPECT_THROW(fixed_positional_encoding<double>(2, 7), ConfigError);
}

TEST(Mfifm, SingleTokenDegenerateCase) {
    const auto m = make(1);
    std::mt19937_64 r(1);
    const auto cur = oracle::random<double>({1, D}, r);
    std::vector<Tensor<double>> w;
    const auto fin = C(cur);
    m.self_attention()(fin, fin, fin, &w);
    for (const auto& h : w) EXPECT_EQ(h[0], 1.0);
    m.cross_attention()(fin, fin, fin, &w);
    for (const auto& h : w) EXPECT_EQ(h[0], 1.0);

    const auto out = m.fuse(C(cur)).value();
    EXPECT_EQ(out.shape(), (Shape{1, D}));
    EXPECT_TRUE(out.all_finite());
    EXPECT_LT(oracle::max_abs(out, naive_fuse(m, cur, Tensor<double>({0, D}), true)), 1e-10);
}

TEST(Mfifm, MatchesNaiveEvaluation) {
    for (std::size_t M : {1u, 3u, 6u}) {
        const auto m = make(10 + M);
        std::mt19937_64 r(M);
        const auto cur = oracle::random<double>({1, D}, r), hist = oracle::random<double>({M, D}, r);
        const auto out = m.fuse(C(cur), C(hist)).value();
        EXPECT_EQ(out.shape(), (Shape{1, D}));
        EXPECT_LT(oracle::max_abs(out, naive_fuse(m, cur, hist, true)), 1e-10) << "M=" << M;
    }
}

TEST(Mfifm, PermutationInvariantWithoutPositions) {
    const auto m = make(2, false);
    std::mt19937_64 r(2);
    const auto cur = oracle::random<double>({1, D}, r), hist = oracle::random<double>({4, D}, r);
    Tensor<double> perm({4, D});
    const std::size_t order[] = {2, 0, 3, 1};
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < D; ++j) perm.at(i, j) = hist.at(order[i], j);
    EXPECT_LT(oracle::max_abs(m.fuse(C(cur), C(hist)).value(), m.fuse(C(cur), C(perm)).value()), 1e-5);
}

TEST(Mfifm, SwappingHistoryChangesOutputWithPositions) {
    const auto m = make(3, true);
    std::mt19937_64 r(3);
    const auto cur = oracle::random<double>({1, D}, r), hist = oracle::random<double>({3, D}, r);
    Tensor<double> swapped = hist;
    for (std::size_t j = 0; j < D; ++j) std::swap(swapped.at(0, j), swapped.at(2, j));
    EXPECT_GT(oracle::max_abs(m.fuse(C(cur), C(hist)).value(), m.fuse(C(cur), C(swapped)).value()), 1e-6);
}

TEST(Mfifm, ExactlyOneSelfAndOneCrossAttention) {
    const auto m = make(4);
    std::set<std::string> modules;
    std::size_t linear_weights = 0;
    m.visit("", [&](const std::string& n, const Parameter<double>& p) {
        if (n.size() > 9 && n.compare(n.size() - 9, 9, ".q.weight") == 0) modules.insert(n.substr(0, n.size() - 9));
        if (p.shape().size() == 2) ++linear_weights;
    });
    EXPECT_EQ(modules, (std::set<std::string>{"msa", "mca"}));
    // Four projections per attention layer and no feed-forward weights.
    EXPECT_EQ(linear_weights, 8u);
}

TEST(Mfifm, WidthMismatchRejected) {
    const auto m = make(5);
    EXPECT_THROW(m.fuse(C(Tensor<double>({1, D})), C(Tensor<double>({2, D + 2}))), DimensionError);
    Rng rng(5);
    EXPECT_THROW(Mfifm<double>(7, 1, rng), ConfigError);
}
