#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "stdtrack/nn.hpp"

namespace stdtrack {

struct AdamWConfig {
    double lr_encoder = 4e-5;
    double lr_rest = 4e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

template <typename T>
struct AdamState {
    Tensor<T> m, v;
    std::size_t step = 0;
};

/// One decoupled-weight-decay Adam step with bias correction:
///   w ← w(1 − lr·wd);  w ← w − lr·m̂/(√v̂ + eps)
template <typename T>
void adamw_update(Tensor<T>& w, const Tensor<T>& g, AdamState<T>& s, double lr, double beta1, double beta2,
                  double eps, double weight_decay) {
    if (w.shape() != g.shape()) throw DimensionError("adamw_update", w.shape(), g.shape());
    if (s.m.shape() != w.shape()) {
        s.m = Tensor<T>(w.shape());
        s.v = Tensor<T>(w.shape());
        s.step = 0;
    }
    ++s.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(s.step));
    const T decay = static_cast<T>(1.0 - lr * weight_decay);
    for (std::size_t i = 0; i < w.numel(); ++i) {
        const double gi = g[i];
        const double m = beta1 * s.m[i] + (1 - beta1) * gi;
        const double v = beta2 * s.v[i] + (1 - beta2) * gi * gi;
        s.m[i] = static_cast<T>(m);
        s.v[i] = static_cast<T>(v);
        w[i] *= decay;
        w[i] -= static_cast<T>(lr * (m / bc1) / (std::sqrt(v / bc2) + eps));
    }
}

/// AdamW over named parameters. Names starting with "encoder." use the
/// encoder learning rate; everything else uses the base rate.
template <typename T>
class AdamW {
public:
    AdamW() = default;
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    void add(const std::string& name, const Parameter<T>& p) {
        if (!p.trainable()) return;
        slots_.push_back({name, p, {}, name.rfind("encoder.", 0) == 0});
    }

    const AdamWConfig& config() const { return cfg_; }
    std::size_t size() const { return slots_.size(); }

    /// Applies one update with both learning rates scaled by `lr_factor`.
    void step(double lr_factor = 1.0) {
        for (auto& s : slots_) {
            const double lr = (s.encoder ? cfg_.lr_encoder : cfg_.lr_rest) * lr_factor;
            adamw_update(s.param.value(), s.param.grad(), s.state, lr, cfg_.beta1, cfg_.beta2, cfg_.eps,
                         cfg_.weight_decay);
        }
    }

    /// Global L2 norm of all gradients, rescaled in place when above `max_norm`.
    double clip_grad_norm(double max_norm) {
        double total = 0;
        for (auto& s : slots_)
            for (T g : s.param.grad().values()) total += static_cast<double>(g) * g;
        total = std::sqrt(total);
        if (max_norm > 0 && total > max_norm) {
            const T f = static_cast<T>(max_norm / (total + 1e-12));
            for (auto& s : slots_)
                for (T& g : s.param.grad().values()) g *= f;
        }
        return total;
    }

private:
    struct Slot {
        std::string name;
        Parameter<T> param;  // shares the model's storage
        AdamState<T> state;
        bool encoder;
    };
    AdamWConfig cfg_;
    std::vector<Slot> slots_;
};

}  // namespace stdtrack
