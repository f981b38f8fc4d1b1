#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "longtrack/common.hpp"
#include "longtrack/geometry.hpp"

namespace longtrack {

// Dense CHW tensor with an image-space stride. Row-major [c][y][x], doubles
// throughout; desk-scale sizes make 64-bit cheap and keep gradient checks
// tight.
struct FeatureMap {
    int channels = 0;
    int height = 0;
    int width = 0;
    int stride = 1;  // image pixels per cell
    std::vector<double> data;

    FeatureMap() = default;
    FeatureMap(int c, int h, int w, int s)
        : channels(c), height(h), width(w), stride(s),
          data(static_cast<std::size_t>(c) * h * w, 0.0) {}

    double& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    std::size_t size() const { return data.size(); }
};

struct KernelSpec {
    int in_channels = 1;   // C^u
    int out_channels = 1;  // C^{u+1}
    int kernel_w = 1;      // K_w^u
    int kernel_h = 1;      // K_h^u

    std::size_t weight_count() const {
        return static_cast<std::size_t>(in_channels) * out_channels *
               kernel_w * kernel_h;
    }
    // weights plus one bias per output channel
    std::size_t param_count() const {
        return (static_cast<std::size_t>(in_channels) * kernel_w * kernel_h +
                1) *
               out_channels;
    }
};

// Cross-correlation with same-padding (zeros). Weight layout is
// [out][in][ky][kx]; odd kernel sizes only.
inline FeatureMap conv(const FeatureMap& map, std::span<const double> weights,
                       std::span<const double> bias, const KernelSpec& spec) {
    if (map.channels != spec.in_channels)
        throw ShapeError("conv: map has " + std::to_string(map.channels) +
                         " channels, kernel expects " +
                         std::to_string(spec.in_channels));
    if (weights.size() != spec.weight_count())
        throw ShapeError("conv: weight length " +
                         std::to_string(weights.size()) + " != " +
                         std::to_string(spec.weight_count()));
    if (bias.size() != static_cast<std::size_t>(spec.out_channels))
        throw ShapeError("conv: bias length mismatch");
    if (spec.kernel_w % 2 == 0 || spec.kernel_h % 2 == 0)
        throw ShapeError("conv: even kernel sizes unsupported");

    const int kw = spec.kernel_w, kh = spec.kernel_h;
    const int px = kw / 2, py = kh / 2;
    FeatureMap out(spec.out_channels, map.height, map.width, map.stride);
    for (int o = 0; o < spec.out_channels; ++o) {
        const double* wbase =
            weights.data() +
            static_cast<std::size_t>(o) * spec.in_channels * kh * kw;
        for (int y = 0; y < map.height; ++y) {
            for (int x = 0; x < map.width; ++x) {
                double acc = bias[o];
                for (int i = 0; i < spec.in_channels; ++i) {
                    const double* wrow =
                        wbase + static_cast<std::size_t>(i) * kh * kw;
                    for (int ky = 0; ky < kh; ++ky) {
                        int sy = y + ky - py;
                        if (sy < 0 || sy >= map.height) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            int sx = x + kx - px;
                            if (sx < 0 || sx >= map.width) continue;
                            acc += wrow[ky * kw + kx] * map.at(i, sy, sx);
                        }
                    }
                }
                out.at(o, y, x) = acc;
            }
        }
    }
    return out;
}

// Bilinear read at continuous cell coordinates; cell centers sit at integer
// coordinates. Points up to one cell outside the grid clamp to the edge,
// farther points read 0.
inline double bilinear_sample(const FeatureMap& m, int c, double x, double y) {
    if (x < -1.0 || x > static_cast<double>(m.width) || y < -1.0 ||
        y > static_cast<double>(m.height))
        return 0.0;
    if (x < 0.0) x = 0.0;
    if (y < 0.0) y = 0.0;
    int x0 = static_cast<int>(x);
    int y0 = static_cast<int>(y);
    int x1, y1;
    double lx, ly;
    if (x0 >= m.width - 1) {
        x0 = x1 = m.width - 1;
        lx = 0.0;
    } else {
        x1 = x0 + 1;
        lx = x - x0;
    }
    if (y0 >= m.height - 1) {
        y0 = y1 = m.height - 1;
        ly = 0.0;
    } else {
        y1 = y0 + 1;
        ly = y - y0;
    }
    double top = (1.0 - lx) * m.at(c, y0, x0) + lx * m.at(c, y0, x1);
    double bot = (1.0 - lx) * m.at(c, y1, x0) + lx * m.at(c, y1, x1);
    return (1.0 - ly) * top + ly * bot;
}

// Aligned feature cropping: box is given in input-image pixels and divided by
// the map stride before sampling. Each output bin averages
// samples_per_bin^2 bilinear reads at regularly spaced points inside the bin.
inline FeatureMap roi_align(const FeatureMap& map, const Box& box,
                            int out_size, int samples_per_bin = 2) {
    if (!box.valid()) throw InvalidBoxError("roi_align: degenerate box");
    if (out_size < 1 || samples_per_bin < 1)
        throw ConfigError("roi_align: out_size and samples_per_bin must be >= 1");

    const double s = static_cast<double>(map.stride);
    const double fx1 = box.x1 / s, fy1 = box.y1 / s;
    const double bin_w = box.width() / s / out_size;
    const double bin_h = box.height() / s / out_size;
    const int n = samples_per_bin;

    FeatureMap out(map.channels, out_size, out_size, map.stride);
    for (int c = 0; c < map.channels; ++c) {
        for (int by = 0; by < out_size; ++by) {
            for (int bx = 0; bx < out_size; ++bx) {
                double acc = 0.0;
                for (int sy = 0; sy < n; ++sy) {
                    double y = fy1 + (by + (sy + 0.5) / n) * bin_h;
                    for (int sx = 0; sx < n; ++sx) {
                        double x = fx1 + (bx + (sx + 0.5) / n) * bin_w;
                        acc += bilinear_sample(map, c, x, y);
                    }
                }
                out.at(c, by, bx) = acc / (n * n);
            }
        }
    }
    return out;
}

inline std::vector<double> global_avg_pool(const FeatureMap& map) {
    if (map.channels <= 0 || map.height <= 0 || map.width <= 0)
        throw ShapeError("global_avg_pool: empty map");
    std::vector<double> out(map.channels, 0.0);
    const double inv = 1.0 / (static_cast<double>(map.height) * map.width);
    for (int c = 0; c < map.channels; ++c) {
        double acc = 0.0;
        for (int y = 0; y < map.height; ++y)
            for (int x = 0; x < map.width; ++x) acc += map.at(c, y, x);
        out[c] = acc * inv;
    }
    return out;
}

}  // namespace longtrack
