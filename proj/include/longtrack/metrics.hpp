#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "longtrack/geometry.hpp"

#include "json.hpp"

namespace longtrack {

// One evaluated frame: the tracker's report and the ground truth.
struct FrameResult {
    std::optional<Box> pred;
    double confidence = 0.0;
    std::optional<Box> gt;
    bool visible = false;
};

using SequenceResult = std::vector<FrameResult>;

// Success AUC over the 101-point threshold grid t in {0, 0.01, ..., 1}:
// fraction of frames with IoU > t, averaged over the grid (IoU of exactly 1
// also counts at t = 1).
inline double success_auc_from_ious(const std::vector<double>& ious) {
    if (ious.empty()) throw EvalError("success: no valid frames");
    double acc = 0.0;
    for (int k = 0; k <= 100; ++k) {
        double t = k / 100.0;
        int n = 0;
        for (double v : ious)
            if (v > t || (k == 100 && v >= 1.0)) ++n;
        acc += static_cast<double>(n) / ious.size();
    }
    return acc / 101.0;
}

struct OpeScores {
    double success_auc = 0.0;
    double precision_at_20 = 0.0;
};

// One-pass evaluation. Frames with absent ground truth are excluded; a frame
// where the tracker reports nothing while the target is visible scores zero.
inline OpeScores ope_curves(const SequenceResult& results) {
    std::vector<double> ious;
    int precise = 0;
    for (const FrameResult& f : results) {
        if (!f.visible || !f.gt.has_value()) continue;
        if (f.pred.has_value()) {
            ious.push_back(iou(*f.pred, *f.gt));
            if (center_distance(*f.pred, *f.gt) <= 20.0) ++precise;
        } else {
            ious.push_back(0.0);
        }
    }
    if (ious.empty()) throw EvalError("ope_curves: zero valid frames");
    OpeScores s;
    s.success_auc = success_auc_from_ious(ious);
    s.precision_at_20 = static_cast<double>(precise) / ious.size();
    return s;
}

struct ScoredBox {
    Box box;
    double score = 0.0;
};

// Best-success upper bound of a candidate generator: per frame take, among
// the K highest-scored candidates, the one with maximum IoU to the ground
// truth, then integrate the success curve.
inline double topk_upper_bound(
    const std::vector<std::vector<ScoredBox>>& per_frame_candidates,
    const std::vector<std::optional<Box>>& gts, int k) {
    if (k < 1) throw ConfigError("topk_upper_bound: K must be >= 1");
    if (per_frame_candidates.size() != gts.size())
        throw ShapeError("topk_upper_bound: frame count mismatch");
    std::vector<double> ious;
    for (std::size_t f = 0; f < gts.size(); ++f) {
        if (!gts[f].has_value()) continue;
        std::vector<ScoredBox> cands = per_frame_candidates[f];
        std::stable_sort(cands.begin(), cands.end(),
                         [](const ScoredBox& a, const ScoredBox& b) {
                             return a.score > b.score;
                         });
        double best = 0.0;
        int limit = std::min<int>(k, static_cast<int>(cands.size()));
        for (int i = 0; i < limit; ++i)
            best = std::max(best, iou(cands[i].box, *gts[f]));
        ious.push_back(best);
    }
    return success_auc_from_ious(ious);
}

// MaxGM = max over p in [0,1] of sqrt(((1-p)*TPR) * ((1-p)*TNR + p)).
// The inner function is quadratic in p, so the critical point
// p* = (2*TNR - 1) / (2*TNR - 2) is evaluated in closed form and compared
// against the endpoints.
inline double max_gm(double tpr, double tnr) {
    if (tpr < 0.0 || tpr > 1.0 || tnr < 0.0 || tnr > 1.0)
        throw ConfigError("max_gm: rates must be in [0,1]");
    auto value = [&](double p) {
        double g = ((1.0 - p) * tpr) * ((1.0 - p) * tnr + p);
        return g > 0.0 ? std::sqrt(g) : 0.0;
    };
    double best = std::max(value(0.0), value(1.0));
    if (tnr != 1.0) {
        double p = (2.0 * tnr - 1.0) / (2.0 * tnr - 2.0);
        if (p > 0.0 && p < 1.0) best = std::max(best, value(p));
    }
    return best;
}

// OxUvA presence rates. A present prediction counts toward TPR only when it
// also localizes (IoU >= iou_threshold); TNR is the fraction of absent frames
// the tracker declares absent. Degenerate denominators give 1 (vacuous).
struct PresenceRates {
    double tpr = 1.0;
    double tnr = 1.0;
};

inline PresenceRates presence_rates(const SequenceResult& results,
                                    double iou_threshold = 0.5) {
    int present_frames = 0, true_positives = 0;
    int absent_frames = 0, true_negatives = 0;
    for (const FrameResult& f : results) {
        if (f.visible && f.gt.has_value()) {
            ++present_frames;
            if (f.pred.has_value() && iou(*f.pred, *f.gt) >= iou_threshold)
                ++true_positives;
        } else {
            ++absent_frames;
            if (!f.pred.has_value()) ++true_negatives;
        }
    }
    PresenceRates r;
    if (present_frames > 0)
        r.tpr = static_cast<double>(true_positives) / present_frames;
    if (absent_frames > 0)
        r.tnr = static_cast<double>(true_negatives) / absent_frames;
    return r;
}

struct VotLtScores {
    double f_score = 0.0;
    double pr = 0.0;
    double re = 0.0;
    double threshold = 0.0;
};

// VOT-LT style tracking precision/recall. For each confidence threshold:
// Pr = mean IoU over frames the tracker reports while the target is visible,
// Re = summed IoU over those frames divided by the number of visible frames,
// F = harmonic mean; the best-F threshold's triple is returned.
inline VotLtScores vot_lt_fscore(const SequenceResult& results,
                                 const std::vector<double>& thresholds) {
    int visible_frames = 0;
    for (const FrameResult& f : results)
        if (f.visible && f.gt.has_value()) ++visible_frames;
    if (visible_frames == 0) throw EvalError("vot_lt_fscore: no visible frames");

    VotLtScores best;
    bool first = true;
    for (double theta : thresholds) {
        double iou_mass = 0.0;
        int reported = 0;
        for (const FrameResult& f : results) {
            if (!f.visible || !f.gt.has_value()) continue;
            if (!f.pred.has_value() || f.confidence < theta) continue;
            ++reported;
            iou_mass += iou(*f.pred, *f.gt);
        }
        double pr = reported > 0 ? iou_mass / reported : 0.0;
        double re = iou_mass / visible_frames;
        double f = pr + re > 0.0 ? 2.0 * pr * re / (pr + re) : 0.0;
        if (first || f > best.f_score) {
            best = VotLtScores{f, pr, re, theta};
            first = false;
        }
    }
    return best;
}

inline std::vector<double> confidence_thresholds(const SequenceResult& results) {
    std::vector<double> t{0.0};
    for (const FrameResult& f : results)
        if (f.pred.has_value()) t.push_back(f.confidence);
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
}

// Which annotated object the output box lands on: the visible object with the
// highest IoU >= threshold, or -1.
inline int matched_identity(const std::optional<Box>& pred,
                            const std::vector<std::optional<Box>>& object_boxes,
                            double iou_threshold = 0.5) {
    if (!pred.has_value()) return -1;
    int best = -1;
    double best_iou = iou_threshold;
    for (std::size_t o = 0; o < object_boxes.size(); ++o) {
        if (!object_boxes[o].has_value()) continue;
        double v = iou(*pred, *object_boxes[o]);
        if (v >= best_iou) {
            best_iou = v;
            best = static_cast<int>(o);
        }
    }
    return best;
}

// Identity switches of a single-target output against multi-object ground
// truth: transitions between distinct real identities, ignoring frames where
// the output matches nothing.
inline int identity_switches(
    const std::vector<std::optional<Box>>& outputs,
    const std::vector<std::vector<std::optional<Box>>>& per_frame_objects,
    double iou_threshold = 0.5) {
    if (outputs.size() != per_frame_objects.size())
        throw ShapeError("identity_switches: frame count mismatch");
    int switches = 0;
    int last_identity = -1;
    for (std::size_t f = 0; f < outputs.size(); ++f) {
        int id = matched_identity(outputs[f], per_frame_objects[f], iou_threshold);
        if (id >= 0) {
            if (last_identity >= 0 && id != last_identity) ++switches;
            last_identity = id;
        }
    }
    return switches;
}

// --- report emission ----------------------------------------------------------

struct MetricsReport {
    double success_auc = 0.0;
    double precision_20 = 0.0;
    double maxgm = 0.0;
    double tpr = 0.0;
    double tnr = 0.0;
    double f_score = 0.0;
    double pr = 0.0;
    double re = 0.0;
};

inline MetricsReport evaluate_sequence(const SequenceResult& results) {
    MetricsReport r;
    OpeScores ope = ope_curves(results);
    r.success_auc = ope.success_auc;
    r.precision_20 = ope.precision_at_20;
    PresenceRates rates = presence_rates(results);
    r.tpr = rates.tpr;
    r.tnr = rates.tnr;
    r.maxgm = max_gm(r.tpr, r.tnr);
    VotLtScores vot = vot_lt_fscore(results, confidence_thresholds(results));
    r.f_score = vot.f_score;
    r.pr = vot.pr;
    r.re = vot.re;
    return r;
}

inline nlohmann::json to_json(const MetricsReport& r) {
    return {{"success_auc", r.success_auc}, {"precision_20", r.precision_20},
            {"maxgm", r.maxgm},             {"tpr", r.tpr},
            {"tnr", r.tnr},                 {"f_score", r.f_score},
            {"pr", r.pr},                   {"re", r.re}};
}

inline void write_report_json(const std::string& path, const MetricsReport& r) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << to_json(r).dump(2) << "\n";
}

// (threshold, value) rows for external plotting.
inline void write_curve_csv(const std::string& path,
                            const std::vector<std::pair<double, double>>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "threshold,value\n";
    char buf[64];
    for (const auto& [t, v] : rows) {
        std::snprintf(buf, sizeof buf, "%.4f,%.6f\n", t, v);
        out << buf;
    }
}

inline std::vector<std::pair<double, double>> success_curve(
    const SequenceResult& results) {
    std::vector<double> ious;
    for (const FrameResult& f : results) {
        if (!f.visible || !f.gt.has_value()) continue;
        ious.push_back(f.pred.has_value() ? iou(*f.pred, *f.gt) : 0.0);
    }
    if (ious.empty()) throw EvalError("success_curve: zero valid frames");
    std::vector<std::pair<double, double>> rows;
    for (int k = 0; k <= 100; ++k) {
        double t = k / 100.0;
        int n = 0;
        for (double v : ious)
            if (v > t || (k == 100 && v >= 1.0)) ++n;
        rows.emplace_back(t, static_cast<double>(n) / ious.size());
    }
    return rows;
}

}  // namespace longtrack
