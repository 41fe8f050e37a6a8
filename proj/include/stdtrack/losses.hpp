#pragma once

#include <cmath>
#include <vector>

#include "stdtrack/ops.hpp"

namespace stdtrack {

struct LossWeights {
    double cls = 1.0;
    double giou = 2.0;
    double l1 = 5.0;

    void validate() const {
        if (cls < 0 || giou < 0 || l1 < 0) throw ConfigError("loss weights must be non-negative");
        if (cls == 0 && giou == 0 && l1 == 0) throw ConfigError("at least one loss weight must be positive");
    }
};

template <typename T>
struct LossParts {
    Var<T> cls, giou, l1;
};

/// Center-point focal loss. Cells with target exactly 1 are positives:
///   −(1−p)^α log p;  elsewhere −(1−t)^β p^α log(1−p).
/// The sum is normalized by the positive count.
template <typename T>
Var<T> focal_loss(const Var<T>& score, const Tensor<T>& target, T alpha = T(2), T beta = T(4)) {
    if (score.shape() != target.shape()) throw DimensionError("focal_loss", score.shape(), target.shape());
    Tensor<T> pos(target.shape()), neg(target.shape());
    std::size_t npos = 0;
    for (std::size_t i = 0; i < target.numel(); ++i) {
        if (target[i] == T(1)) {
            pos[i] = T(1);
            ++npos;
        } else {
            neg[i] = beta == T(0) ? T(1) : std::pow(T(1) - target[i], beta);
        }
    }
    const Var<T> one_minus_p = T(1) - score;
    const Var<T> pos_term = mul(mul(pow_scalar(one_minus_p, alpha), log(score)), constant(std::move(pos)));
    const Var<T> neg_term = mul(mul(pow_scalar(score, alpha), log(one_minus_p)), constant(std::move(neg)));
    return mul_scalar(sum(add(pos_term, neg_term)), T(-1) / static_cast<T>(std::max<std::size_t>(1, npos)));
}

/// Gaussian bump at `cell` with the given sigma in cells; the center is exactly 1.
template <typename T>
Tensor<T> gaussian_target(std::size_t h, std::size_t w, std::size_t row, std::size_t col, double sigma) {
    Tensor<T> t({h, w});
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const double di = static_cast<double>(i) - static_cast<double>(row);
            const double dj = static_cast<double>(j) - static_cast<double>(col);
            t.at(i, j) = (i == row && j == col) ? T(1) : static_cast<T>(std::exp(-(di * di + dj * dj) / (2 * sigma * sigma)));
        }
    return t;
}

namespace detail {
template <typename T>
Var<T> element(const Var<T>& v, std::size_t i) {
    return gather(v, {i});
}
}  // namespace detail

/// 1 − GIoU for boxes given as [cx, cy, w, h].
template <typename T>
Var<T> giou_loss(const Var<T>& pred, const Var<T>& gt) {
    if (pred.numel() != 4 || gt.numel() != 4) throw DimensionError("giou_loss", pred.shape(), gt.shape());
    for (const Var<T>* b : {&pred, &gt})
        if (b->value()[2] <= 0 || b->value()[3] <= 0) throw ContractError("giou_loss: zero-area box");
    using detail::element;
    auto corners = [](const Var<T>& b) {
        const Var<T> cx = element(b, 0), cy = element(b, 1), w = element(b, 2), h = element(b, 3);
        const Var<T> hw = mul_scalar(w, T(0.5)), hh = mul_scalar(h, T(0.5));
        return std::vector<Var<T>>{sub(cx, hw), sub(cy, hh), add(cx, hw), add(cy, hh), mul(w, h)};
    };
    const auto a = corners(pred), b = corners(gt);
    const Var<T> zero = scalar(T(0));
    const Var<T> iw = maximum(sub(minimum(a[2], b[2]), maximum(a[0], b[0])), zero);
    const Var<T> ih = maximum(sub(minimum(a[3], b[3]), maximum(a[1], b[1])), zero);
    const Var<T> inter = mul(iw, ih);
    const Var<T> uni = sub(add(a[4], b[4]), inter);
    const Var<T> ew = sub(maximum(a[2], b[2]), minimum(a[0], b[0]));
    const Var<T> eh = sub(maximum(a[3], b[3]), minimum(a[1], b[1]));
    const Var<T> enclose = mul(ew, eh);
    const Var<T> giou = sub(div(inter, uni), div(sub(enclose, uni), enclose));
    return T(1) - giou;
}

/// Mean absolute difference over the 4 box coordinates.
template <typename T>
Var<T> l1_loss(const Var<T>& pred, const Var<T>& gt) {
    if (pred.numel() != gt.numel()) throw DimensionError("l1_loss", pred.shape(), gt.shape());
    return mean(abs(sub(pred, gt)));
}

template <typename T>
Var<T> total_loss(const LossParts<T>& parts, const LossWeights& w) {
    return add(add(mul_scalar(parts.cls, static_cast<T>(w.cls)), mul_scalar(parts.giou, static_cast<T>(w.giou))),
               mul_scalar(parts.l1, static_cast<T>(w.l1)));
}

}  // namespace stdtrack
