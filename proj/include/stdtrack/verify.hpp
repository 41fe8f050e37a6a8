#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "stdtrack/synthetic.hpp"
#include "stdtrack/training.hpp"

namespace stdtrack {

struct CheckResult {
    std::string name;
    double value = 0;      // measured error or mismatch count
    double tolerance = 0;
    bool pass = false;
};

inline std::ostream& operator<<(std::ostream& os, const CheckResult& r) {
    return os << (r.pass ? "PASS " : "FAIL ") << r.name << " value=" << r.value << " tol=" << r.tolerance;
}

inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-7});
}

using ScalarFn = std::function<Var<double>(const std::vector<Var<double>>&)>;

/// Largest relative error between backprop and central differences over the
/// coordinates of `inputs`, at most `max_coords` per input (evenly strided).
inline double gradcheck(const ScalarFn& f, std::vector<Tensor<double>> inputs, double h = 1e-6,
                        std::size_t max_coords = 64) {
    std::vector<Var<double>> vars;
    for (auto& t : inputs) vars.emplace_back(t, true);
    backward(f(vars));
    std::vector<Tensor<double>> analytic;
    for (auto& v : vars) analytic.push_back(v.grad());

    auto eval = [&]() {
        NoGradGuard ng;
        std::vector<Var<double>> vs;
        for (auto& t : inputs) vs.emplace_back(t, false);
        return f(vs).value()[0];
    };
    double worst = 0;
    for (std::size_t a = 0; a < inputs.size(); ++a) {
        const std::size_t n = inputs[a].numel();
        const std::size_t stride = std::max<std::size_t>(1, n / max_coords);
        for (std::size_t i = 0; i < n; i += stride) {
            const double orig = inputs[a][i];
            inputs[a][i] = orig + h;
            const double up = eval();
            inputs[a][i] = orig - h;
            const double down = eval();
            inputs[a][i] = orig;
            worst = std::max(worst, relative_error(analytic[a][i], (up - down) / (2 * h)));
        }
    }
    return worst;
}

namespace detail {

// Random projection so any output shape reduces to a scalar with a generic gradient.
inline Var<double> project(const Var<double>& y, std::uint64_t salt) {
    Rng rng(0xC0FFEE ^ salt);
    Tensor<double> w = uniform_tensor<double>(y.shape(), -1.0, 1.0, rng);
    return sum(mul(y, constant(w)));
}

// Values bounded away from zero so kinked ops stay differentiable at every probe.
inline Tensor<double> away_from_zero(Shape s, Rng& rng) {
    Tensor<double> t = uniform_tensor<double>(std::move(s), 0.2, 1.5, rng);
    std::bernoulli_distribution sign(0.5);
    for (auto& v : t.values())
        if (sign(rng)) v = -v;
    return t;
}

}  // namespace detail

struct OpCase {
    std::string name;
    ScalarFn fn;
    std::vector<Tensor<double>> inputs;
};

/// One case per differentiable op, inputs drawn from `seed`.
inline std::vector<OpCase> op_cases(std::uint64_t seed) {
    Rng rng(seed);
    auto u = [&](Shape s, double lo = -1.0, double hi = 1.0) { return uniform_tensor<double>(std::move(s), lo, hi, rng); };
    auto nz = [&](Shape s) { return detail::away_from_zero(std::move(s), rng); };
    using V = std::vector<Var<double>>;
    std::vector<OpCase> c;
    std::uint64_t salt = 0;
    auto add_case = [&](std::string name, std::function<Var<double>(const V&)> f, std::vector<Tensor<double>> in) {
        const std::uint64_t s = ++salt;
        c.push_back({std::move(name), [f, s](const V& v) { return detail::project(f(v), s); }, std::move(in)});
    };
    add_case("matmul", [](const V& v) { return matmul(v[0], v[1]); }, {u({3, 4}), u({4, 5})});
    add_case("transpose", [](const V& v) { return transpose(v[0]); }, {u({3, 5})});
    add_case("add", [](const V& v) { return add(v[0], v[1]); }, {u({2, 3}), u({2, 3})});
    add_case("add_broadcast", [](const V& v) { return add(v[0], v[1]); }, {u({2, 3}), u({1})});
    add_case("sub", [](const V& v) { return sub(v[0], v[1]); }, {u({2, 3}), u({2, 3})});
    add_case("mul", [](const V& v) { return mul(v[0], v[1]); }, {u({2, 3}), u({2, 3})});
    add_case("div", [](const V& v) { return div(v[0], v[1]); }, {u({2, 3}), u({2, 3}, 0.5, 2.0)});
    {
        Tensor<double> a = u({2, 3}), b = a;
        for (std::size_t i = 0; i < b.numel(); ++i) b[i] += (i % 2 ? 0.3 : -0.3);
        add_case("maximum", [](const V& v) { return maximum(v[0], v[1]); }, {a, b});
        add_case("minimum", [](const V& v) { return minimum(v[0], v[1]); }, {a, b});
    }
    add_case("add_scalar", [](const V& v) { return add_scalar(v[0], 0.7); }, {u({4})});
    add_case("mul_scalar", [](const V& v) { return mul_scalar(v[0], -1.3); }, {u({4})});
    add_case("neg", [](const V& v) { return neg(v[0]); }, {u({4})});
    add_case("exp", [](const V& v) { return exp(v[0]); }, {u({4})});
    add_case("log", [](const V& v) { return log(v[0]); }, {u({4}, 0.3, 2.0)});
    add_case("sigmoid", [](const V& v) { return sigmoid(v[0]); }, {u({6}, -4, 4)});
    add_case("relu", [](const V& v) { return relu(v[0]); }, {nz({6})});
    add_case("gelu", [](const V& v) { return gelu(v[0]); }, {u({6}, -3, 3)});
    add_case("abs", [](const V& v) { return abs(v[0]); }, {nz({6})});
    add_case("square", [](const V& v) { return square(v[0]); }, {u({6})});
    add_case("pow_scalar", [](const V& v) { return pow_scalar(v[0], 1.5); }, {u({6}, 0.3, 2.0)});
    add_case("add_rowvec", [](const V& v) { return add_rowvec(v[0], v[1]); }, {u({3, 4}), u({4})});
    add_case("mul_colvec", [](const V& v) { return mul_colvec(v[0], v[1]); }, {u({3, 4}), u({3, 1})});
    add_case("sum", [](const V& v) { return sum(v[0]); }, {u({3, 4})});
    add_case("mean", [](const V& v) { return mean(v[0]); }, {u({3, 4})});
    add_case("softmax", [](const V& v) { return softmax(v[0]); }, {u({3, 5}, -2, 2)});
    add_case("layer_norm", [](const V& v) { return layer_norm(v[0], v[1], v[2], 1e-5); },
             {u({3, 6}, -2, 2), u({6}, 0.5, 1.5), u({6})});
    add_case("batch_norm2d_train",
             [](const V& v) {
                 return batch_norm2d(v[0], v[1], v[2], Tensor<double>({3}), Tensor<double>::ones({3}), 1e-5, true);
             },
             {u({3, 4, 4}, -2, 2), u({3}, 0.5, 1.5), u({3})});
    add_case("batch_norm2d_eval",
             [](const V& v) {
                 return batch_norm2d(v[0], v[1], v[2], Tensor<double>({3}, 0.2), Tensor<double>({3}, 1.7), 1e-5, false);
             },
             {u({3, 4, 4}, -2, 2), u({3}, 0.5, 1.5), u({3})});
    for (std::size_t k : {1u, 3u, 5u})
        add_case("conv2d_k" + std::to_string(k),
                 [k](const V& v) { return conv2d(v[0], v[1], v[2], k / 2); },
                 {u({2, 6, 6}), u({3, 2, k, k}), u({3})});
    add_case("conv2d_k3_pad0", [](const V& v) { return conv2d(v[0], v[1], v[2], 0); }, {u({2, 6, 6}), u({3, 2, 3, 3}), u({3})});
    add_case("reshape", [](const V& v) { return reshape(v[0], {6, 2}); }, {u({3, 4})});
    add_case("concat_rows", [](const V& v) { return concat_rows<double>({v[0], v[1]}); }, {u({2, 3}), u({1, 3})});
    add_case("slice_rows", [](const V& v) { return slice_rows(v[0], 1, 3); }, {u({4, 3})});
    add_case("slice_cols", [](const V& v) { return slice_cols(v[0], 1, 3); }, {u({3, 4})});
    add_case("concat_cols", [](const V& v) { return concat_cols<double>({v[0], v[1]}); }, {u({2, 3}), u({2, 2})});
    add_case("gather", [](const V& v) { return gather(v[0], {0, 5, 5, 2}); }, {u({2, 3})});
    add_case("mask_enhance", [](const V& v) { return mask_enhance(v[0], v[1]); }, {u({5, 4}), u({1, 4})});
    add_case("focal_loss",
             [](const V& v) {
                 return focal_loss(sigmoid(v[0]), gaussian_target<double>(4, 4, 1, 2, 1.0));
             },
             {u({4, 4}, -2, 2)});
    add_case("giou_loss", [](const V& v) { return giou_loss(v[0], v[1]); },
             {Tensor<double>({4}, {0.5, 0.5, 0.3, 0.4}), Tensor<double>({4}, {0.55, 0.47, 0.35, 0.3})});
    add_case("giou_loss_disjoint", [](const V& v) { return giou_loss(v[0], v[1]); },
             {Tensor<double>({4}, {0.2, 0.2, 0.1, 0.1}), Tensor<double>({4}, {0.7, 0.6, 0.2, 0.3})});
    add_case("l1_loss", [](const V& v) { return l1_loss(v[0], v[1]); },
             {Tensor<double>({4}, {0.5, 0.5, 0.3, 0.4}), Tensor<double>({4}, {0.55, 0.47, 0.35, 0.3})});
    {
        Rng wr(seed + 7);
        auto mha = std::make_shared<MultiHeadAttention<double>>(6, 2, wr);
        add_case("attention",
                 [mha](const V& v) { return (*mha)(v[0], v[1], v[1]); }, {u({2, 6}), u({4, 6})});
    }
    return c;
}

/// Small model configuration used by the end-to-end gradient check.
inline ModelConfig gradcheck_model_config() {
    ModelConfig mc;
    mc.encoder.patch = 8;
    mc.encoder.dim = 16;
    mc.encoder.depth = 2;
    mc.encoder.heads = 2;
    mc.encoder.template_h = mc.encoder.template_w = 16;
    mc.encoder.search_h = mc.encoder.search_w = 32;
    mc.head_blocks = 2;
    return mc;
}

/// Central-difference check of the full clip loss with respect to
/// `samples` scalar coordinates drawn across all trainable parameters.
inline double clip_gradcheck(std::uint64_t seed, std::size_t samples = 10, double h = 1e-6) {
    Model<double> model(gradcheck_model_config(), seed);
    SyntheticSpec spec;
    spec.frames = 6;
    spec.width = spec.height = 64;
    spec.object_w = spec.object_h = 12;
    spec.start_x = 20;
    spec.start_y = 24;
    spec.dx = 1.5;
    spec.dy = 0.5;
    const Sequence seq = generate_synthetic(spec, seed).sequence;
    TrainConfig tc;
    tc.clip.length = 3;
    tc.clip.max_interval = 1;
    tc.clip.reverse_prob = 0;
    Trainer<double> trainer(model, tc);
    Rng rng(seed);
    const ClipSample clip = *sample_clip(seq.size(), tc.clip, rng);
    const PreparedClip<double> pc = trainer.prepare(seq, clip, rng);

    std::vector<Parameter<double>> params;
    model.visit([&](const std::string&, Parameter<double>& p) {
        if (p.trainable()) params.push_back(p);
    });
    model.zero_grad();
    backward(trainer.clip_loss(pc).total);

    std::size_t total = 0;
    for (auto& p : params) total += p.value().numel();
    Rng pick(seed ^ 0x5EED);
    std::uniform_int_distribution<std::size_t> coord(0, total - 1);
    double worst = 0;
    for (std::size_t s = 0; s < samples; ++s) {
        std::size_t flat = coord(pick), which = 0;
        while (flat >= params[which].value().numel()) flat -= params[which++].value().numel();
        Parameter<double>& p = params[which];
        const double analytic = p.grad()[flat];
        const double orig = p.value()[flat];
        auto loss = [&]() {
            NoGradGuard ng;
            return trainer.clip_loss(pc).total.value()[0];
        };
        p.value()[flat] = orig + h;
        const double up = loss();
        p.value()[flat] = orig - h;
        const double down = loss();
        p.value()[flat] = orig;
        worst = std::max(worst, relative_error(analytic, (up - down) / (2 * h)));
    }
    return worst;
}

/// Gives every batch norm of the head non-trivial affine parameters and
/// running statistics so a merge probe exercises the whole fold.
template <typename T>
void randomize_batch_norms(PredictionHead<T>& head, Rng& rng) {
    std::uniform_real_distribution<double> g(0.5, 1.5), b(-0.3, 0.3), m(-0.2, 0.2), v(0.3, 2.0);
    for (HeadBranch<T>* br : {&head.cls_branch(), &head.reg_branch()})
        for (auto& blk : br->blocks)
            for (std::size_t c = 0; c < blk.bn.channels(); ++c) {
                blk.bn.gamma.value()[c] = static_cast<T>(g(rng));
                blk.bn.beta.value()[c] = static_cast<T>(b(rng));
                blk.bn.running_mean.value()[c] = static_cast<T>(m(rng));
                blk.bn.running_var.value()[c] = static_cast<T>(v(rng));
            }
}

/// Largest absolute difference between the training-form head (inference
/// mode) and `merged` over random feature maps.
template <typename T>
double reparam_deviation(const PredictionHead<T>& training_form, const PredictionHead<T>& merged, std::size_t probes,
                         std::size_t h, std::size_t w, Rng& rng) {
    NoGradGuard ng;
    double worst = 0;
    const std::size_t c = training_form.config().in_channels;
    for (std::size_t i = 0; i < probes; ++i) {
        const Var<T> x = constant(uniform_tensor<T>({c, h, w}, T(-1), T(1), rng));
        const HeadOutput<T> a = values_of(training_form.forward(x));
        const HeadOutput<T> b = values_of(merged.forward(x));
        worst = std::max<double>(worst, max_abs_diff(a.score, b.score));
        worst = std::max<double>(worst, max_abs_diff(a.offset, b.offset));
        worst = std::max<double>(worst, max_abs_diff(a.size, b.size));
    }
    return worst;
}

/// Literal simulation of the maintainer rule on (frame, quality) pairs:
/// append while below capacity; otherwise drop the stored pair with the
/// smallest quality (FIFO: smallest frame), earliest frame on ties, then append.
struct NaiveMaintainer {
    std::size_t capacity;
    EvictionPolicy policy;
    std::vector<std::pair<std::size_t, double>> kept;

    void insert(std::size_t frame, double q) {
        if (kept.size() == capacity) {
            auto victim = kept.begin();
            for (auto it = kept.begin(); it != kept.end(); ++it) {
                const bool better = policy == EvictionPolicy::fifo
                                        ? it->first < victim->first
                                        : (it->second < victim->second ||
                                           (it->second == victim->second && it->first < victim->first));
                if (better) victim = it;
            }
            kept.erase(victim);
        }
        kept.emplace_back(frame, q);
    }
};

/// Counts steps at which the maintainer's retained set differs from the
/// literal simulation over random quality streams.
inline std::size_t stm_oracle_mismatches(std::size_t streams, std::size_t length, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> cap(1, 8);
    std::uniform_real_distribution<double> q(0.0, 1.0);
    std::uniform_int_distribution<int> coarse(0, 4);
    std::size_t mismatches = 0;
    for (std::size_t s = 0; s < streams; ++s) {
        const std::size_t n = cap(rng);
        const EvictionPolicy pol = s % 2 ? EvictionPolicy::fifo : EvictionPolicy::quality;
        TokenMaintainer<int> stm(n, pol);
        NaiveMaintainer naive{n, pol, {}};
        const bool ties = s % 3 == 0;  // coarse qualities force ties
        for (std::size_t t = 1; t <= length; ++t) {
            const double qual = ties ? coarse(rng) / 4.0 : q(rng);
            stm.insert({0, qual, t});
            naive.insert(t, qual);
            std::vector<std::size_t> expect;
            for (const auto& [f, _] : naive.kept) expect.push_back(f);
            mismatches += stm.frames() != expect;
        }
    }
    return mismatches;
}

/// Property suite run by `stdtrack verify`.
inline std::vector<CheckResult> run_property_suite(std::uint64_t seed, std::ostream* log = nullptr) {
    std::vector<CheckResult> out;
    auto record = [&](CheckResult r) {
        r.pass = r.value <= r.tolerance;
        if (log) *log << r << '\n';
        out.push_back(std::move(r));
    };

    for (auto& c : op_cases(seed)) record({"gradcheck." + c.name, gradcheck(c.fn, c.inputs), 1e-3});
    record({"gradcheck.clip_loss", clip_gradcheck(seed), 1e-2});

    {
        Rng rng(seed);
        HeadConfig hc;
        PredictionHead<float> head(hc, rng);
        randomize_batch_norms(head, rng);
        record({"reparam.float32", reparam_deviation(head, head.reparameterized(), 100, 16, 16, rng), 1e-4});
        PredictionHead<double> hd(hc, rng);
        randomize_batch_norms(hd, rng);
        record({"reparam.float64", reparam_deviation(hd, hd.reparameterized(), 100, 16, 16, rng), 1e-8});
    }
    record({"stm.oracle_mismatches", static_cast<double>(stm_oracle_mismatches(1000, 100, seed)), 0});
    return out;
}

}  // namespace stdtrack
