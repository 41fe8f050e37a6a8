#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <utility>

#include "stdtrack/geometry.hpp"
#include "stdtrack/image.hpp"
#include "stdtrack/model.hpp"
#include "stdtrack/stm.hpp"

namespace stdtrack {

/// Square crop window in image pixels and its resize factor. Model-plane
/// coordinates run over [0, out_side).
struct CropParams {
    double cx = 0, cy = 0;  // crop center, image pixels
    double side = 1;        // crop side, image pixels
    double scale = 1;       // out_side / side
    std::size_t out_side = 1;

    double to_image_x(double u) const { return cx - side / 2 + u / scale; }
    double to_image_y(double v) const { return cy - side / 2 + v / scale; }
    double to_model_x(double x) const { return (x - (cx - side / 2)) * scale; }
    double to_model_y(double y) const { return (y - (cy - side / 2)) * scale; }
};

inline CropParams make_crop(const BBox& box, double factor, std::size_t out_side) {
    if (!box.valid()) throw ContractError("crop: degenerate box");
    if (!(factor > 0)) throw ContractError("crop: factor must be positive");
    if (out_side == 0) throw ContractError("crop: output side must be positive");
    CropParams c;
    c.cx = box.cx;
    c.cy = box.cy;
    c.side = factor * std::sqrt(box.w * box.h);
    c.scale = static_cast<double>(out_side) / c.side;
    c.out_side = out_side;
    return c;
}

/// Bilinear resample of the crop window into [3×S×S] with values in [0,1].
/// Pixels outside the frame read as the frame's mean color.
template <typename T>
Tensor<T> sample_crop(const Image& frame, const CropParams& c) {
    const std::size_t s = c.out_side;
    const auto fill = frame.mean_color();
    Tensor<T> out({3, s, s});
    const auto fw = static_cast<std::ptrdiff_t>(frame.width), fh = static_cast<std::ptrdiff_t>(frame.height);
    for (std::size_t v = 0; v < s; ++v) {
        const double sy = c.to_image_y(static_cast<double>(v) + 0.5) - 0.5;
        const double fy0 = std::floor(sy);
        const double ty = sy - fy0;
        const auto y0 = static_cast<std::ptrdiff_t>(fy0);
        for (std::size_t u = 0; u < s; ++u) {
            const double sx = c.to_image_x(static_cast<double>(u) + 0.5) - 0.5;
            const double fx0 = std::floor(sx);
            const double tx = sx - fx0;
            const auto x0 = static_cast<std::ptrdiff_t>(fx0);
            for (std::size_t ch = 0; ch < 3; ++ch) {
                auto px = [&](std::ptrdiff_t x, std::ptrdiff_t y) {
                    if (x < 0 || y < 0 || x >= fw || y >= fh) return fill[ch];
                    return static_cast<double>(frame.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), ch));
                };
                const double top = px(x0, y0) * (1 - tx) + px(x0 + 1, y0) * tx;
                const double bot = px(x0, y0 + 1) * (1 - tx) + px(x0 + 1, y0 + 1) * tx;
                out.at(ch, v, u) = static_cast<T>((top * (1 - ty) + bot * ty) / 255.0);
            }
        }
    }
    return out;
}

template <typename T>
std::pair<Tensor<T>, CropParams> crop_resize(const Image& frame, const BBox& center, double factor,
                                             std::size_t out_side) {
    if (!(factor > 1)) throw ContractError("crop_resize: factor must exceed 1");
    const CropParams c = make_crop(center, factor, out_side);
    return {sample_crop<T>(frame, c), c};
}

/// Outer product of 1-D Hann windows 0.5(1 − cos(2πi/(n−1))).
template <typename T>
Tensor<T> hanning_window(std::size_t h, std::size_t w) {
    if (h < 2 || w < 2) throw ContractError("hanning_window: sides must be at least 2");
    auto hann = [](std::size_t n, std::size_t i) {
        return 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1)));
    };
    Tensor<T> win({h, w});
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) win.at(i, j) = static_cast<T>(hann(h, i) * hann(w, j));
    return win;
}

template <typename T>
struct Decoded {
    BBox box;
    std::size_t row = 0, col = 0;
    Tensor<T> score_used;  // map the peak was taken from
};

/// Peak of score (⊙ window when given; first maximum in row-major order wins),
/// then offsets and size read at the peak from the raw regression maps.
template <typename T>
Decoded<T> decode_box(const HeadOutput<T>& out, const CropParams& crop, const Tensor<T>* window = nullptr) {
    const std::size_t h = out.score.dim(0), w = out.score.dim(1);
    Decoded<T> d;
    d.score_used = out.score;
    if (window) {
        if (window->shape() != out.score.shape()) throw DimensionError("decode_box window", window->shape(), out.score.shape());
        for (std::size_t i = 0; i < d.score_used.numel(); ++i) d.score_used[i] *= (*window)[i];
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < d.score_used.numel(); ++i)
        if (d.score_used[i] > d.score_used[best]) best = i;
    d.row = best / w;
    d.col = best % w;
    const std::size_t hw = h * w;
    const double cxn = (static_cast<double>(d.col) + out.offset[best]) / static_cast<double>(w);
    const double cyn = (static_cast<double>(d.row) + out.offset[hw + best]) / static_cast<double>(h);
    const double s = static_cast<double>(crop.out_side);
    d.box.cx = crop.to_image_x(cxn * s);
    d.box.cy = crop.to_image_y(cyn * s);
    d.box.w = out.size[best] * crop.side;
    d.box.h = out.size[hw + best] * crop.side;
    return d;
}

struct TrackerConfig {
    double search_factor = 4.0;
    double template_factor = 2.0;
    bool use_window = true;
    std::size_t capacity = 6;
    EvictionPolicy policy = EvictionPolicy::quality;
};

template <typename T>
struct TrackerState {
    Var<T> template_tokens;
    BBox box;
    Var<T> token;  // propagated spatiotemporal token
    Stm<T> stm;
    std::size_t frame = 0;  // index of the last processed frame, 1-based
    bool initialized = false;
};

template <typename T>
struct StepResult {
    BBox box;
    double quality = 0;
    std::size_t frame = 0;
    Tensor<T> raw_score;
    Tensor<T> windowed_score;
    std::optional<std::size_t> evicted_frame;
};

/// Replaces the head prediction for a frame; used to inject oracle heads.
template <typename T>
using HeadOverride = std::function<HeadOutput<T>(const CropParams& crop, std::size_t frame)>;

/// Frame-by-frame tracking over shared read-only model weights.
template <typename T>
class Tracker {
public:
    Tracker(const Model<T>& model, TrackerConfig cfg)
        : model_(&model), cfg_(cfg), window_(hanning_window<T>(model.config().encoder.search_grid_h(),
                                                               model.config().encoder.search_grid_w())) {
        state_.stm = Stm<T>(cfg.capacity, cfg.policy);
    }

    const TrackerState<T>& state() const { return state_; }
    const TrackerConfig& config() const { return cfg_; }
    void set_head_override(HeadOverride<T> f) { override_ = std::move(f); }

    void init(const Image& frame, const BBox& box) {
        if (!box.valid()) throw ContractError("tracker init: invalid box");
        NoGradGuard ng;
        const EncoderConfig& ec = model_->config().encoder;
        auto [crop, _] = crop_resize<T>(frame, box, cfg_.template_factor, ec.template_h);
        state_.template_tokens = model_->embed_template(standardize(crop, ec));
        state_.token = model_->init_token().var().detached();
        state_.stm = Stm<T>(cfg_.capacity, cfg_.policy);
        state_.box = box;
        state_.frame = 1;
        state_.initialized = true;
        fw_ = static_cast<double>(frame.width);
        fh_ = static_cast<double>(frame.height);
    }

    StepResult<T> step(const Image& frame) {
        if (!state_.initialized) throw ContractError("tracker step before init");
        NoGradGuard ng;
        const EncoderConfig& ec = model_->config().encoder;
        const std::size_t t = state_.frame + 1;
        auto [search, crop] = crop_resize<T>(frame, state_.box, cfg_.search_factor, ec.search_h);
        const Var<T> history = snapshot_tokens(state_.stm, ec.dim);
        FrameOutput<T> fo = model_->forward_frame(state_.token, state_.template_tokens, standardize(search, ec), history);
        HeadOutput<T> maps = override_ ? override_(crop, t) : values_of(fo.maps);

        StepResult<T> r;
        r.frame = t;
        const Decoded<T> d = decode_box(maps, crop, cfg_.use_window ? &window_ : nullptr);
        r.raw_score = maps.score;
        r.windowed_score = d.score_used;
        r.quality = quality(maps.score);
        r.box = sanitize(d.box);
        if (auto ev = state_.stm.insert({fo.fused, r.quality, t})) r.evicted_frame = ev->frame;
        state_.token = fo.fused;
        state_.box = r.box;
        state_.frame = t;
        return r;
    }

private:
    // Keeps the next search crop well-formed when a prediction degenerates.
    BBox sanitize(BBox b) const {
        const double min_side = 4.0;
        if (!std::isfinite(b.cx) || !std::isfinite(b.cy)) b.cx = state_.box.cx, b.cy = state_.box.cy;
        b.cx = std::clamp(b.cx, 0.0, fw_);
        b.cy = std::clamp(b.cy, 0.0, fh_);
        b.w = std::clamp(std::isfinite(b.w) ? b.w : state_.box.w, min_side, fw_);
        b.h = std::clamp(std::isfinite(b.h) ? b.h : state_.box.h, min_side, fh_);
        return b;
    }

    const Model<T>* model_;
    TrackerConfig cfg_;
    Tensor<T> window_;
    TrackerState<T> state_;
    HeadOverride<T> override_;
    double fw_ = 0, fh_ = 0;
};

/// Head output that reproduces `target` exactly through `decode_box` for a
/// given crop; the peak sits at the target's cell.
template <typename T>
HeadOutput<T> oracle_head_output(const BBox& target, const CropParams& crop, std::size_t h, std::size_t w) {
    HeadOutput<T> o{Tensor<T>({h, w}, T(0.01)), Tensor<T>({2, h, w}, T(0.5)), Tensor<T>({2, h, w}, T(0.25))};
    const double s = static_cast<double>(crop.out_side);
    const double cxn = std::clamp(crop.to_model_x(target.cx) / s, 0.0, 1.0 - 1e-9);
    const double cyn = std::clamp(crop.to_model_y(target.cy) / s, 0.0, 1.0 - 1e-9);
    const auto j = static_cast<std::size_t>(cxn * static_cast<double>(w));
    const auto i = static_cast<std::size_t>(cyn * static_cast<double>(h));
    const std::size_t idx = i * w + j;
    o.score[idx] = T(0.99);
    o.offset[idx] = static_cast<T>(cxn * static_cast<double>(w) - static_cast<double>(j));
    o.offset[h * w + idx] = static_cast<T>(cyn * static_cast<double>(h) - static_cast<double>(i));
    o.size[idx] = static_cast<T>(target.w / crop.side);
    o.size[h * w + idx] = static_cast<T>(target.h / crop.side);
    return o;
}

}  // namespace stdtrack
