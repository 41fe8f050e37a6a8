#pragma once

#include <algorithm>
#include <cmath>

namespace stdtrack {

/// Axis-aligned box: center and extent in pixels, origin at the top-left.
struct BBox {
    double cx = 0, cy = 0, w = 0, h = 0;

    static BBox from_xywh(double x, double y, double w, double h) { return {x + w / 2, y + h / 2, w, h}; }

    double x0() const { return cx - w / 2; }
    double y0() const { return cy - h / 2; }
    double x1() const { return cx + w / 2; }
    double y1() const { return cy + h / 2; }
    double area() const { return w * h; }
    bool valid() const { return std::isfinite(cx) && std::isfinite(cy) && w > 0 && h > 0 && std::isfinite(w) && std::isfinite(h); }

    friend bool operator==(const BBox&, const BBox&) = default;
};

inline double intersection_area(const BBox& a, const BBox& b) {
    const double iw = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
    const double ih = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
    return iw > 0 && ih > 0 ? iw * ih : 0.0;
}

inline double iou(const BBox& a, const BBox& b) {
    const double inter = intersection_area(a, b);
    const double uni = a.area() + b.area() - inter;
    return uni > 0 ? inter / uni : 0.0;
}

/// Clamps a box to [0,W)×[0,H); degenerate results keep a minimal 1 px extent.
inline BBox clamp_to_frame(const BBox& b, double width, double height) {
    const double x0 = std::clamp(b.x0(), 0.0, width - 1), y0 = std::clamp(b.y0(), 0.0, height - 1);
    const double x1 = std::clamp(b.x1(), x0 + 1, width), y1 = std::clamp(b.y1(), y0 + 1, height);
    return BBox::from_xywh(x0, y0, x1 - x0, y1 - y0);
}

}  // namespace stdtrack
