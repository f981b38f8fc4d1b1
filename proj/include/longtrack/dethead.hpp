#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <vector>

#include "longtrack/dynconv.hpp"
#include "longtrack/featmap.hpp"
#include "longtrack/geometry.hpp"

#include "json.hpp"

namespace longtrack {

// Feature-grid location (i, j) mapped back onto the original image:
// (floor(s/2) + i*s, floor(s/2) + j*s).
inline std::pair<int, int> map_location(int i, int j, int stride) {
    return {stride / 2 + i * stride, stride / 2 + j * stride};
}

struct SampleLabel {
    bool positive = false;
    std::array<double, 4> ltrb{0, 0, 0, 0};  // only meaningful when positive
};

struct SampleGrid {
    int height = 0;
    int width = 0;
    int stride = 1;
    std::vector<SampleLabel> labels;  // [j][i] row-major
    bool zero_positives = false;

    const SampleLabel& at(int i, int j) const { return labels[j * width + i]; }
    int positive_count() const {
        int n = 0;
        for (const SampleLabel& l : labels) n += l.positive ? 1 : 0;
        return n;
    }
};

// Center-region sample assignment. A location is positive when its
// image-space point falls strictly inside the region box
// (cx - r*s, cy - r*s, cx + r*s, cy + r*s) and inside the ground-truth box
// (so the location-to-side distances are all non-negative). Regression and
// center-ness are trained on positives only; negatives carry no target.
inline SampleGrid assign_samples(int grid_h, int grid_w, int stride,
                                 const Box& gt_box, double r = 1.5) {
    if (!gt_box.valid()) throw InvalidBoxError("assign_samples: degenerate box");
    if (r <= 0.0) throw ConfigError("assign_samples: r must be positive");

    SampleGrid grid;
    grid.height = grid_h;
    grid.width = grid_w;
    grid.stride = stride;
    grid.labels.resize(static_cast<std::size_t>(grid_h) * grid_w);

    const double cx = gt_box.cx(), cy = gt_box.cy();
    const double rs = r * stride;
    for (int j = 0; j < grid_h; ++j) {
        for (int i = 0; i < grid_w; ++i) {
            auto [x, y] = map_location(i, j, stride);
            SampleLabel& label = grid.labels[j * grid_w + i];
            bool in_region = x > cx - rs && x < cx + rs && y > cy - rs &&
                             y < cy + rs;
            bool in_box = x >= gt_box.x1 && x <= gt_box.x2 && y >= gt_box.y1 &&
                          y <= gt_box.y2;
            if (in_region && in_box) {
                label.positive = true;
                label.ltrb = {x - gt_box.x1, y - gt_box.y1, gt_box.x2 - x,
                              gt_box.y2 - y};
            }
        }
    }
    grid.zero_positives = grid.positive_count() == 0;
    return grid;
}

// sqrt((min(l,r)/max(l,r)) * (min(t,b)/max(t,b))); 0 when an axis collapses.
inline double centerness_target(double l, double t, double r, double b) {
    double mx = std::max(l, r), my = std::max(t, b);
    if (mx <= 0.0 || my <= 0.0) return 0.0;
    return std::sqrt((std::min(l, r) / mx) * (std::min(t, b) / my));
}

inline Box decode_box(double x, double y, const std::array<double, 4>& ltrb,
                      double img_w, double img_h) {
    return clip_box(Box{x - ltrb[0], y - ltrb[1], x + ltrb[2], y + ltrb[3]},
                    img_w, img_h);
}

// One detection.
struct Candidate {
    Box box;
    double cls_score = 0.0;
    double centerness = 0.0;
    double final_score = 0.0;  // cls_score * centerness
    std::vector<double> embedding;
    int level = 0;  // stride of the source map
};

// Greedy IoU suppression on final_score, then keep at most top_k.
inline std::vector<Candidate> nms(std::vector<Candidate> candidates,
                                  double iou_threshold, int top_k) {
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) {
                         return a.final_score > b.final_score;
                     });
    std::vector<Candidate> kept;
    for (Candidate& c : candidates) {
        bool suppressed = false;
        for (const Candidate& k : kept) {
            if (iou(c.box, k.box) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(std::move(c));
        if (static_cast<int>(kept.size()) >= top_k) break;
    }
    return kept;
}

// Channel contract between the rendered search maps and the head: one
// objectness channel, four regression channels holding (l,t,r,b)/reg_scale,
// and pattern_count appearance channels.
struct EvidenceLayout {
    int objectness_channel = 0;
    int reg_first = 1;
    int pattern_first = 5;
    int pattern_count = 6;
    double reg_scale = 256.0;

    int channels() const { return 5 + pattern_count; }
    int encoder_out() const { return pattern_count + 2; }  // obj+patterns+spare
};

struct HeadParams {
    double objectness_gain = 4.0;  // logits per unit of objectness evidence
    double match_gain = 1.0;       // logits per unit of template match
    double logit_bias = -2.0;
    double score_threshold = 0.3;  // on final_score
    double nms_iou = 0.5;
};

// Reads the embedding at the cell nearest an image-space point, widening the
// search one ring at a time when the cell carries nothing.
inline std::vector<double> sample_embedding(const FeatureMap& embed_map,
                                            double cx, double cy) {
    const int s = embed_map.stride;
    int ci = std::clamp(static_cast<int>(std::lround((cx - s / 2) / s)), 0,
                        embed_map.width - 1);
    int cj = std::clamp(static_cast<int>(std::lround((cy - s / 2) / s)), 0,
                        embed_map.height - 1);
    for (int radius = 0; radius <= 2; ++radius) {
        for (int dj = -radius; dj <= radius; ++dj) {
            for (int di = -radius; di <= radius; ++di) {
                if (std::max(std::abs(di), std::abs(dj)) != radius) continue;
                int i = ci + di, j = cj + dj;
                if (i < 0 || i >= embed_map.width || j < 0 ||
                    j >= embed_map.height)
                    continue;
                std::vector<double> e(embed_map.channels);
                double norm2 = 0.0;
                for (int c = 0; c < embed_map.channels; ++c) {
                    e[c] = embed_map.at(c, j, i);
                    norm2 += e[c] * e[c];
                }
                if (norm2 > 1e-12) return e;
            }
        }
    }
    return std::vector<double>(embed_map.channels, 0.0);
}

namespace detail {

// Fixed head layers for the synthetic evidence contract. Layers 1..4 are
// identity stacks, layer 5 selects the branch-relevant channels into the
// encoder slots, layer 6 is the predictor.
inline DynLayerKernel desk_fixed_layer(const EvidenceLayout& lo,
                                       HeadBranch branch, int layer,
                                       const HeadParams& params) {
    DynLayerKernel k;
    k.branch = branch;
    k.layer = layer;
    const int cf = lo.channels();
    const int ce = lo.encoder_out();
    if (layer >= 1 && layer <= 4) {
        k.spec = KernelSpec{cf, cf, 1, 1};
        k.weights.assign(static_cast<std::size_t>(cf) * cf, 0.0);
        for (int c = 0; c < cf; ++c) k.weights[c * cf + c] = 1.0;
        k.bias.assign(cf, 0.0);
    } else if (layer == 5) {
        k.spec = KernelSpec{cf, ce, 1, 1};
        k.weights.assign(static_cast<std::size_t>(ce) * cf, 0.0);
        k.bias.assign(ce, 0.0);
        if (branch == HeadBranch::Cls) {
            // slot 0 = objectness, slots 1..pattern_count = patterns
            k.weights[0 * cf + lo.objectness_channel] = 1.0;
            for (int c = 0; c < lo.pattern_count; ++c)
                k.weights[(1 + c) * cf + lo.pattern_first + c] = 1.0;
        } else {
            // slots 0..3 = regression channels
            for (int c = 0; c < 4; ++c)
                k.weights[c * cf + lo.reg_first + c] = 1.0;
        }
    } else if (layer == 6) {
        const int out = branch == HeadBranch::Cls ? 2 : 4;
        k.spec = KernelSpec{ce, out, 1, 1};
        k.weights.assign(static_cast<std::size_t>(out) * ce, 0.0);
        k.bias.assign(out, 0.0);
        if (branch == HeadBranch::Cls) {
            // positive-class logit from objectness alone; the template match
            // term only exists in the generated (DC) predictor
            k.weights[0 * ce + 0] = params.objectness_gain;
            k.bias[0] = params.logit_bias;
        } else {
            for (int c = 0; c < 4; ++c)
                k.weights[c * ce + c] = lo.reg_scale;
        }
    } else {
        throw ConfigError("desk head has layers 1..6");
    }
    return k;
}

}  // namespace detail

// Anchor-free detection head over correlated features. The six-layer branch
// structure is fixed; layers named in the integration config come from the
// generated kernel set (DC), the rest use the constructed desk weights. For
// CC/DW/HP the template is fused at the first layer and scored through the
// constructed predictor.
class TrackingHead {
  public:
    TrackingHead(EvidenceLayout layout, CorrelationMethod method,
                 TemplateContext tmpl, HeadParams params)
        : layout_(layout), method_(method), tmpl_(std::move(tmpl)),
          params_(params) {}

    const TemplateContext& template_context() const { return tmpl_; }
    CorrelationMethod method() const { return method_; }

    // Runs the head on each level, decodes every location that clears the
    // score threshold, attaches the nearest stride-4 embedding, then NMS.
    std::vector<Candidate> detect(const std::vector<FeatureMap>& levels,
                                  const FeatureMap& embed_map,
                                  int top_k) const {
        std::vector<Candidate> all;
        for (const FeatureMap& level : levels) {
            detect_level(level, embed_map, all);
        }
        return nms(std::move(all), params_.nms_iou, top_k);
    }

  private:
    void detect_level(const FeatureMap& map, const FeatureMap& embed_map,
                      std::vector<Candidate>& out) const {
        if (map.channels != layout_.channels())
            throw ShapeError("detect: search map channel mismatch");
        const double img_w = static_cast<double>(map.width) * map.stride;
        const double img_h = static_cast<double>(map.height) * map.stride;

        FeatureMap cls_logits = run_cls_branch(map);
        FeatureMap reg = run_reg_branch(map);

        for (int j = 0; j < map.height; ++j) {
            for (int i = 0; i < map.width; ++i) {
                double pos = cls_logits.at(0, j, i);
                double neg = cls_logits.channels > 1 ? cls_logits.at(1, j, i) : 0.0;
                double score = sigmoid(pos - neg);
                std::array<double, 4> ltrb{
                    std::max(0.0, reg.at(0, j, i)), std::max(0.0, reg.at(1, j, i)),
                    std::max(0.0, reg.at(2, j, i)), std::max(0.0, reg.at(3, j, i))};
                double cns = centerness_target(ltrb[0], ltrb[1], ltrb[2], ltrb[3]);
                double final_score = score * cns;
                if (final_score < params_.score_threshold) continue;

                auto [x, y] = map_location(i, j, map.stride);
                Candidate c;
                c.box = decode_box(x, y, ltrb, img_w, img_h);
                if (!c.box.valid()) continue;
                c.cls_score = score;
                c.centerness = cns;
                c.final_score = final_score;
                c.level = map.stride;
                c.embedding =
                    longtrack::sample_embedding(embed_map, c.box.cx(), c.box.cy());
                out.push_back(std::move(c));
            }
        }
    }

    FeatureMap run_cls_branch(const FeatureMap& map) const {
        if (method_ == CorrelationMethod::DC) {
            return run_chain(map, HeadBranch::Cls);
        }
        // CC/DW/HP: fuse at layer 1 over the cls-relevant channels, then
        // score objectness plus the summed match response.
        FeatureMap sel = select_cls_channels(map);
        FeatureMap sel_tmpl = select_cls_channels(tmpl_.crop);
        FeatureMap match;
        switch (method_) {
            case CorrelationMethod::CC:
                match = cross_correlation(sel, sel_tmpl);
                break;
            case CorrelationMethod::DW:
                match = depthwise_correlation(sel, sel_tmpl);
                break;
            case CorrelationMethod::HP:
                match = hadamard_product(sel, global_avg_pool(sel_tmpl));
                break;
            default:
                break;
        }
        FeatureMap logits(2, map.height, map.width, map.stride);
        for (int j = 0; j < map.height; ++j) {
            for (int i = 0; i < map.width; ++i) {
                double m = 0.0;
                for (int c = 0; c < match.channels; ++c) m += match.at(c, j, i);
                double obj = map.at(layout_.objectness_channel, j, i);
                logits.at(0, j, i) = params_.objectness_gain * obj +
                                     params_.match_gain * m +
                                     params_.logit_bias;
            }
        }
        return logits;
    }

    FeatureMap run_reg_branch(const FeatureMap& map) const {
        if (method_ == CorrelationMethod::DC) {
            return run_chain(map, HeadBranch::Reg);
        }
        FeatureMap reg(4, map.height, map.width, map.stride);
        for (int c = 0; c < 4; ++c)
            for (int j = 0; j < map.height; ++j)
                for (int i = 0; i < map.width; ++i)
                    reg.at(c, j, i) =
                        map.at(layout_.reg_first + c, j, i) * layout_.reg_scale;
        return reg;
    }

    FeatureMap run_chain(const FeatureMap& map, HeadBranch branch) const {
        FeatureMap cur = map;
        const IntegrationConfig& cfg = tmpl_.kernels.config;
        const int n = branch == HeadBranch::Cls ? cfg.p : cfg.q;
        for (int layer = 1; layer <= n; ++layer) {
            const DynLayerKernel* dyn = find_kernel(branch, layer);
            if (dyn != nullptr) {
                cur = apply_layer(cur, *dyn);
            } else {
                cur = apply_layer(
                    cur, detail::desk_fixed_layer(layout_, branch, layer, params_));
            }
        }
        return cur;
    }

    const DynLayerKernel* find_kernel(HeadBranch branch, int layer) const {
        for (const DynLayerKernel& k : tmpl_.kernels.layers)
            if (k.branch == branch && k.layer == layer) return &k;
        return nullptr;
    }

    FeatureMap select_cls_channels(const FeatureMap& map) const {
        FeatureMap out(1 + layout_.pattern_count, map.height, map.width,
                       map.stride);
        for (int y = 0; y < map.height; ++y)
            for (int x = 0; x < map.width; ++x) {
                out.at(0, y, x) = map.at(layout_.objectness_channel, y, x);
                for (int c = 0; c < layout_.pattern_count; ++c)
                    out.at(1 + c, y, x) = map.at(layout_.pattern_first + c, y, x);
            }
        return out;
    }

    EvidenceLayout layout_;
    CorrelationMethod method_;
    TemplateContext tmpl_;
    HeadParams params_;
};

// Per-frame candidate records: frame, box (x,y,w,h), scores, then the
// embedding values.
inline void write_candidates_csv(const std::string& path,
                                 const std::vector<std::vector<Candidate>>& frames) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "frame,x,y,w,h,cls_score,centerness,final_score,embedding\n";
    char buf[64];
    for (std::size_t f = 0; f < frames.size(); ++f) {
        for (const Candidate& c : frames[f]) {
            out << f;
            std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%.6f", c.box.x1,
                          c.box.y1, c.box.width(), c.box.height());
            out << buf;
            std::snprintf(buf, sizeof buf, ",%.9f,%.9f,%.9f", c.cls_score,
                          c.centerness, c.final_score);
            out << buf;
            for (double e : c.embedding) {
                std::snprintf(buf, sizeof buf, ",%.9f", e);
                out << buf;
            }
            out << "\n";
        }
    }
}

inline void write_candidates_json(
    const std::string& path, const std::vector<std::vector<Candidate>>& frames) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t f = 0; f < frames.size(); ++f) {
        for (const Candidate& c : frames[f]) {
            arr.push_back(
                {{"frame", f},
                 {"box", {c.box.x1, c.box.y1, c.box.width(), c.box.height()}},
                 {"cls_score", c.cls_score},
                 {"centerness", c.centerness},
                 {"final_score", c.final_score},
                 {"embedding", c.embedding}});
        }
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << arr.dump(2) << "\n";
}

}  // namespace longtrack
