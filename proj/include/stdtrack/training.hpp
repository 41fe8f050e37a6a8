#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "stdtrack/losses.hpp"
#include "stdtrack/optim.hpp"
#include "stdtrack/pipeline.hpp"
#include "stdtrack/sequence.hpp"

namespace stdtrack {

struct ClipConfig {
    std::size_t length = 8;          // search frames per clip
    std::size_t max_interval = 200;  // largest gap between consecutive sampled frames
    double reverse_prob = 0.5;
};

/// Frame indices (0-based) of one training clip. `reversed` clips run backwards in time.
struct ClipSample {
    std::size_t template_index = 0;
    std::vector<std::size_t> search_indices;
    bool reversed = false;
};

/// Draws L+1 ordered frames with gaps uniform in [1, min(max_interval, (n−1)/L)],
/// then reverses the whole clip with the configured probability. Returns
/// nothing when the sequence is too short for the clip length.
inline std::optional<ClipSample> sample_clip(std::size_t seq_len, const ClipConfig& cfg, Rng& rng) {
    if (cfg.length == 0 || seq_len < cfg.length + 1) return std::nullopt;
    const std::size_t feasible = (seq_len - 1) / cfg.length;
    const std::size_t gmax = std::max<std::size_t>(1, std::min(cfg.max_interval, feasible));
    std::uniform_int_distribution<std::size_t> gap(1, gmax);
    std::vector<std::size_t> gaps(cfg.length);
    std::size_t span = 0;
    for (auto& g : gaps) span += (g = gap(rng));
    std::uniform_int_distribution<std::size_t> start(0, seq_len - 1 - span);
    std::vector<std::size_t> frames{start(rng)};
    for (std::size_t g : gaps) frames.push_back(frames.back() + g);
    std::bernoulli_distribution flip(cfg.reverse_prob);
    ClipSample c;
    c.reversed = flip(rng);
    if (c.reversed) std::reverse(frames.begin(), frames.end());
    c.template_index = frames.front();
    c.search_indices.assign(frames.begin() + 1, frames.end());
    return c;
}

struct TrainConfig {
    std::size_t steps = 500;
    ClipConfig clip;
    double center_jitter = 0.1;  // fraction of the crop side
    double scale_jitter_min = 0.8, scale_jitter_max = 1.25;
    double target_sigma = 1.0;   // Gaussian classification target, in cells
    LossWeights loss;
    AdamWConfig optim;
    double decay_start = 0.8;    // fraction of steps before the linear decay begins
    double final_lr_factor = 0.1;
    double grad_clip = 0.0;      // global norm; 0 disables
    bool detach_tokens = false;  // cut gradient flow through propagated/stored tokens
    // Normalize head features with per-frame batch statistics. Off, the head
    // batch norms act as the fixed affine maps that inference folds.
    bool bn_batch_stats = false;
    std::size_t capacity = 6;
    EvictionPolicy policy = EvictionPolicy::quality;
    double search_factor = 4.0;
    double template_factor = 2.0;
};

struct StepLoss {
    double total = 0, cls = 0, giou = 0, l1 = 0;
    double lr = 0;
};

class NonFiniteLossError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One search frame of a clip with its crop and normalized target.
template <typename T>
struct PreparedFrame {
    Tensor<T> search;      // standardized 3×S×S
    Tensor<T> target_box;  // [cx, cy, w, h] normalized to the crop
    std::size_t row = 0, col = 0;
};

template <typename T>
struct PreparedClip {
    Tensor<T> template_image;  // standardized
    std::vector<PreparedFrame<T>> frames;
};

template <typename T>
struct ClipLoss {
    Var<T> total;
    double cls = 0, giou = 0, l1 = 0;  // per-frame means
};

template <typename T>
class Trainer {
public:
    Trainer(Model<T>& model, TrainConfig cfg) : model_(&model), cfg_(std::move(cfg)), opt_(cfg_.optim) {
        cfg_.loss.validate();
        model.visit([&](const std::string& name, Parameter<T>& p) { opt_.add(name, p); });
    }

    const TrainConfig& config() const { return cfg_; }
    AdamW<T>& optimizer() { return opt_; }

    /// 1 until `decay_start`, then linear down to `final_lr_factor` at the last step.
    double lr_factor(std::size_t step) const {
        const double total = static_cast<double>(std::max<std::size_t>(1, cfg_.steps));
        const double start = cfg_.decay_start * total;
        const double s = static_cast<double>(step);
        if (s < start || total - start <= 0) return 1.0;
        const double p = std::min(1.0, (s - start) / (total - start));
        return 1.0 - (1.0 - cfg_.final_lr_factor) * p;
    }

    /// Crops for every clip frame. Search crops are centered on the groundtruth
    /// box with center and scale jitter drawn from `rng`.
    PreparedClip<T> prepare(const Sequence& seq, const ClipSample& clip, Rng& rng) const {
        const EncoderConfig& ec = model_->config().encoder;
        PreparedClip<T> pc;
        auto [tmpl, _] = crop_resize<T>(seq.frames.at(clip.template_index), seq.groundtruth.at(clip.template_index),
                                        cfg_.template_factor, ec.template_h);
        pc.template_image = standardize(tmpl, ec);
        std::uniform_real_distribution<double> shift(-cfg_.center_jitter, cfg_.center_jitter);
        std::uniform_real_distribution<double> logscale(std::log(cfg_.scale_jitter_min), std::log(cfg_.scale_jitter_max));
        const auto gh = ec.search_grid_h(), gw = ec.search_grid_w();
        for (std::size_t idx : clip.search_indices) {
            const BBox& gt = seq.groundtruth.at(idx);
            const double side = cfg_.search_factor * std::sqrt(gt.w * gt.h);
            BBox center = gt;
            center.cx += shift(rng) * side;
            center.cy += shift(rng) * side;
            const double sc = std::exp(logscale(rng));
            center.w *= sc;
            center.h *= sc;
            auto [img, crop] = crop_resize<T>(seq.frames.at(idx), center, cfg_.search_factor, ec.search_h);
            PreparedFrame<T> f;
            f.search = standardize(img, ec);
            const double s = static_cast<double>(crop.out_side);
            const double cxn = crop.to_model_x(gt.cx) / s, cyn = crop.to_model_y(gt.cy) / s;
            f.target_box = Tensor<T>({4}, {static_cast<T>(cxn), static_cast<T>(cyn), static_cast<T>(gt.w / crop.side),
                                            static_cast<T>(gt.h / crop.side)});
            f.col = static_cast<std::size_t>(std::clamp(std::floor(cxn * static_cast<double>(gw)), 0.0, static_cast<double>(gw - 1)));
            f.row = static_cast<std::size_t>(std::clamp(std::floor(cyn * static_cast<double>(gh)), 0.0, static_cast<double>(gh - 1)));
            pc.frames.push_back(std::move(f));
        }
        return pc;
    }

    /// Runs the clip through the model with token propagation and the
    /// maintainer, averaging the weighted loss over frames.
    ClipLoss<T> clip_loss(const PreparedClip<T>& pc) {
        const EncoderConfig& ec = model_->config().encoder;
        const std::size_t gh = ec.search_grid_h(), gw = ec.search_grid_w();
        const Var<T> z = model_->embed_template(pc.template_image);
        Var<T> st = model_->init_token().var();
        Stm<T> stm(cfg_.capacity, cfg_.policy);
        std::vector<Var<T>> frame_losses;
        ClipLoss<T> out;
        for (std::size_t k = 0; k < pc.frames.size(); ++k) {
            const PreparedFrame<T>& f = pc.frames[k];
            const Var<T> history = snapshot_tokens(stm, ec.dim);
            FrameOutput<T> fo = cfg_.bn_batch_stats ? model_->forward_frame_train(st, z, f.search, history)
                                                    : std::as_const(*model_).forward_frame(st, z, f.search, history);

            const Tensor<T> target = gaussian_target<T>(gh, gw, f.row, f.col, cfg_.target_sigma);
            const Var<T> cls = focal_loss(fo.maps.score, target);
            const Var<T> pred = box_at(fo.maps, f.row, f.col, gh, gw);
            const Var<T> gt = constant(f.target_box);
            LossParts<T> parts{cls, giou_loss(pred, gt), l1_loss(pred, gt)};
            frame_losses.push_back(total_loss(parts, cfg_.loss));
            out.cls += static_cast<double>(parts.cls.value()[0]);
            out.giou += static_cast<double>(parts.giou.value()[0]);
            out.l1 += static_cast<double>(parts.l1.value()[0]);

            const Var<T> fused = cfg_.detach_tokens ? fo.fused.detached() : fo.fused;
            stm.insert({fused, quality(fo.maps.score.value()), k + 1});
            st = fused;
        }
        const double n = static_cast<double>(std::max<std::size_t>(1, pc.frames.size()));
        Var<T> total = frame_losses.front();
        for (std::size_t k = 1; k < frame_losses.size(); ++k) total = add(total, frame_losses[k]);
        out.total = mul_scalar(total, static_cast<T>(1.0 / n));
        out.cls /= n;
        out.giou /= n;
        out.l1 /= n;
        return out;
    }

    /// Zero grads, forward the clip, backpropagate through every frame, one optimizer update.
    StepLoss train_step(const Sequence& seq, const ClipSample& clip, Rng& rng) {
        model_->zero_grad();
        const PreparedClip<T> pc = prepare(seq, clip, rng);
        const ClipLoss<T> cl = clip_loss(pc);
        const double total = static_cast<double>(cl.total.value()[0]);
        if (!std::isfinite(total)) {
            std::ostringstream os;
            os << "non-finite loss at step " << step_ << " (cls=" << cl.cls << " giou=" << cl.giou << " l1=" << cl.l1 << ")";
            throw NonFiniteLossError(os.str());
        }
        backward(cl.total);
        if (cfg_.grad_clip > 0) opt_.clip_grad_norm(cfg_.grad_clip);
        const double factor = lr_factor(step_);
        opt_.step(factor);
        ++step_;
        return {total, cl.cls, cl.giou, cl.l1, cfg_.optim.lr_rest * factor};
    }

    /// Iterates train_step over random clips from `sequences`.
    void fit(const std::vector<Sequence>& sequences, Rng& rng,
             const std::function<void(std::size_t, const StepLoss&)>& on_step = {}) {
        if (sequences.empty()) throw ContractError("fit: no training sequences");
        std::uniform_int_distribution<std::size_t> pick(0, sequences.size() - 1);
        while (step_ < cfg_.steps) {
            std::optional<ClipSample> clip;
            const Sequence* seq = nullptr;
            for (int attempt = 0; attempt < 100 && !clip; ++attempt) {
                seq = &sequences[pick(rng)];
                clip = sample_clip(seq->size(), cfg_.clip, rng);
            }
            if (!clip) throw ContractError("fit: no sequence long enough for clip length " + std::to_string(cfg_.clip.length));
            const std::size_t s = step_;
            const StepLoss l = train_step(*seq, *clip, rng);
            if (on_step) on_step(s, l);
        }
    }

    std::size_t step_count() const { return step_; }

private:
    static Var<T> box_at(const HeadMaps<Var<T>>& maps, std::size_t row, std::size_t col, std::size_t gh, std::size_t gw) {
        const std::size_t idx = row * gw + col, hw = gh * gw;
        const Var<T> off = gather(maps.offset, {idx, hw + idx});
        const Var<T> size = gather(maps.size, {idx, hw + idx});
        const Var<T> base = constant(Tensor<T>({2}, {static_cast<T>(col), static_cast<T>(row)}));
        const Var<T> scale = constant(Tensor<T>({2}, {T(1) / static_cast<T>(gw), T(1) / static_cast<T>(gh)}));
        const Var<T> center = mul(add(base, off), scale);
        return reshape(concat_rows<T>({reshape(center, {1, 2}), reshape(size, {1, 2})}), {4});
    }

    Model<T>* model_;
    TrainConfig cfg_;
    AdamW<T> opt_;
    std::size_t step_ = 0;
};

}  // namespace stdtrack
