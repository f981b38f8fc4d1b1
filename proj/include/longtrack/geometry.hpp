#pragma once

#include <algorithm>
#include <cmath>

#include "longtrack/common.hpp"

namespace longtrack {

// Axis-aligned rectangle in corner form, image-space pixels.
struct Box {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    double cx() const { return 0.5 * (x1 + x2); }
    double cy() const { return 0.5 * (y1 + y2); }
    bool valid() const { return width() > 0.0 && height() > 0.0; }

    static Box from_xywh(double x, double y, double w, double h) {
        return Box{x, y, x + w, y + h};
    }
    static Box from_center(double cx, double cy, double w, double h) {
        return Box{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
    }
};

inline bool operator==(const Box& a, const Box& b) {
    return a.x1 == b.x1 && a.y1 == b.y1 && a.x2 == b.x2 && a.y2 == b.y2;
}

inline Box intersection(const Box& a, const Box& b) {
    return Box{std::max(a.x1, b.x1), std::max(a.y1, b.y1),
               std::min(a.x2, b.x2), std::min(a.y2, b.y2)};
}

// area(a ∩ b) / area(a ∪ b); 0 if either rectangle is degenerate.
inline double iou(const Box& a, const Box& b) {
    if (!a.valid() || !b.valid()) return 0.0;
    Box in = intersection(a, b);
    if (!in.valid()) return 0.0;
    double inter = in.area();
    double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

inline double center_distance(const Box& a, const Box& b) {
    double dx = a.cx() - b.cx();
    double dy = a.cy() - b.cy();
    return std::sqrt(dx * dx + dy * dy);
}

inline Box clip_box(const Box& b, double img_w, double img_h) {
    return Box{std::clamp(b.x1, 0.0, img_w), std::clamp(b.y1, 0.0, img_h),
               std::clamp(b.x2, 0.0, img_w), std::clamp(b.y2, 0.0, img_h)};
}

}  // namespace longtrack
