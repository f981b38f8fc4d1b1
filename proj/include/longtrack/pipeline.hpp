#pragma once

#include <chrono>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "longtrack/assoc.hpp"
#include "longtrack/dethead.hpp"
#include "longtrack/dynconv.hpp"
#include "longtrack/metrics.hpp"
#include "longtrack/sim.hpp"

namespace longtrack {

enum class TrackMode { Full, Assoc, Top1, PC, Reid };

inline std::string to_string(TrackMode m) {
    switch (m) {
        case TrackMode::Full: return "full";
        case TrackMode::Assoc: return "assoc";
        case TrackMode::Top1: return "top1";
        case TrackMode::PC: return "pc";
        case TrackMode::Reid: return "reid";
    }
    return "full";
}

inline TrackMode mode_from_string(const std::string& s) {
    if (s == "full") return TrackMode::Full;
    if (s == "assoc") return TrackMode::Assoc;
    if (s == "top1") return TrackMode::Top1;
    if (s == "pc") return TrackMode::PC;
    if (s == "reid") return TrackMode::Reid;
    throw ConfigError("unknown track mode '" + s + "'");
}

struct TrackSettings {
    CorrelationMethod correlation = CorrelationMethod::DC;
    IntegrationConfig integration{{1, 6}, {1, 6}, 6, 6};
    AssociationConfig assoc;
    HeadParams head;
    int top_k = 5;

    void validate() const {
        integration.validate();
        assoc.validate();
        if (top_k < 1) throw ConfigError("top_k must be >= 1");
        if (head.score_threshold < 0.0 || head.score_threshold > 1.0)
            throw ConfigError("score_threshold must be in [0,1]");
        if (head.nms_iou < 0.0 || head.nms_iou > 1.0)
            throw ConfigError("nms_iou must be in [0,1]");
    }
};

inline EvidenceLayout desk_layout(int image_size) {
    EvidenceLayout lo;
    lo.reg_scale = static_cast<double>(image_size);
    return lo;
}

// Reference six-layer plan over the synthetic evidence channels: four stacked
// convs, an encoder, and the predictor (2 cls / 4 reg outputs).
inline ChannelPlan desk_channel_plan(const EvidenceLayout& layout) {
    const int cf = layout.channels();
    const int ce = layout.encoder_out();
    ChannelPlan plan;
    for (int k = 0; k < 4; ++k) {
        plan.cls.push_back({cf, cf});
        plan.reg.push_back({cf, cf});
    }
    plan.cls.push_back({cf, ce});
    plan.reg.push_back({cf, ce});
    plan.cls.push_back({ce, 2});
    plan.reg.push_back({ce, 4});
    return plan;
}

// Mean of the raised-cosine bump over its own box; the controller divides by
// it so the generated match weights are calibrated to unit template pooling.
inline constexpr double kNominalCropMass = 0.25;

// Builds encoder weights for which generate_kernels() yields a working head:
// every generated layer reproduces the fixed desk weights through the encoder
// bias, except the cls predictor whose positive-logit row is driven by the
// pooled template pattern (that is where the template information enters).
inline ControllerWeights synthetic_controller(const EvidenceLayout& layout,
                                              const ChannelPlan& plan,
                                              const IntegrationConfig& integration,
                                              const HeadParams& params) {
    integration.validate();
    const int ct = layout.channels();
    const std::size_t cg = param_count(integration, plan);
    ControllerWeights ctrl;
    ctrl.in_channels = ct;
    ctrl.out_channels = static_cast<int>(cg);
    ctrl.weights.assign(cg * static_cast<std::size_t>(ct), 0.0);
    ctrl.bias.assign(cg, 0.0);

    const double pattern_gain = params.match_gain / kNominalCropMass;
    std::size_t pos = 0;
    auto emit_layer = [&](HeadBranch branch, int layer) {
        DynLayerKernel fixed =
            detail::desk_fixed_layer(layout, branch, layer, params);
        const int ce = fixed.spec.in_channels;
        for (std::size_t w = 0; w < fixed.weights.size(); ++w, ++pos) {
            if (branch == HeadBranch::Cls && layer == 6) {
                // predictor row 0: objectness slot stays constant, pattern
                // slots come from the pooled template
                int out_slot = static_cast<int>(w) / ce;
                int in_slot = static_cast<int>(w) % ce;
                if (out_slot == 0 && in_slot >= 1 &&
                    in_slot <= layout.pattern_count) {
                    ctrl.weights[pos * ct + layout.pattern_first + in_slot - 1] =
                        pattern_gain;
                    continue;
                }
            }
            ctrl.bias[pos] = fixed.weights[w];
        }
        for (std::size_t b = 0; b < fixed.bias.size(); ++b, ++pos)
            ctrl.bias[pos] = fixed.bias[b];
    };
    for (int u : integration.cls_layers) emit_layer(HeadBranch::Cls, u);
    for (int v : integration.reg_layers) emit_layer(HeadBranch::Reg, v);
    return ctrl;
}

inline TemplateContext make_template_context(const FeatureMap& template_level,
                                             const Box& target_box,
                                             CorrelationMethod method,
                                             const IntegrationConfig& integration,
                                             const ChannelPlan& plan,
                                             const ControllerWeights& controller) {
    TemplateContext ctx;
    ctx.crop = roi_align(template_level, target_box, 7);
    ctx.pooled = global_avg_pool(ctx.crop);
    if (method == CorrelationMethod::DC)
        ctx.kernels = generate_kernels(template_level, target_box, integration,
                                       plan, controller);
    else {
        ctx.kernels.config = integration;
        ctx.kernels.plan = plan;
    }
    return ctx;
}

// Per-frame strategy stepping shared by the rendered and oracle pipelines.
// full/assoc/reid run the tracklet association; top1 takes the best
// classification score; pc takes the top-5 candidate closest to the last
// prediction.
class ModeStepper {
  public:
    ModeStepper(TrackMode mode, const TrackSettings& settings)
        : mode_(mode), tracker_(settings.assoc) {}

    void initialize(const Box& gt0, std::span<const double> embedding) {
        if (uses_tracker()) tracker_.initialize(gt0, embedding, 0);
        last_box_ = gt0;
    }

    TargetOutput step(int frame, const std::vector<Candidate>& candidates) {
        if (uses_tracker()) return tracker_.step(candidates);
        TargetOutput out;
        out.frame = frame;
        if (candidates.empty()) return out;
        int pick = -1;
        if (mode_ == TrackMode::Top1) {
            double best = -1.0;
            for (std::size_t i = 0; i < candidates.size(); ++i) {
                if (candidates[i].cls_score > best) {
                    best = candidates[i].cls_score;
                    pick = static_cast<int>(i);
                }
            }
        } else {  // PC: nearest to the last prediction among the top 5
            std::vector<int> order(candidates.size());
            for (std::size_t i = 0; i < order.size(); ++i)
                order[i] = static_cast<int>(i);
            std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
                return candidates[a].final_score > candidates[b].final_score;
            });
            if (order.size() > 5) order.resize(5);
            double best = 1e300;
            for (int i : order) {
                double d = center_distance(candidates[i].box, last_box_);
                if (d < best) {
                    best = d;
                    pick = i;
                }
            }
        }
        out.present = true;
        out.box = candidates[pick].box;
        out.confidence = candidates[pick].final_score;
        last_box_ = out.box;
        return out;
    }

    bool uses_tracker() const {
        return mode_ == TrackMode::Full || mode_ == TrackMode::Assoc ||
               mode_ == TrackMode::Reid;
    }

  private:
    TrackMode mode_;
    Tracker tracker_;
    Box last_box_;
};

// Full pipeline on rendered maps: the first frame annotation generates the
// dynamic convolutions and seeds the target's re-id feature, every later
// frame runs detect + the selected strategy.
inline std::vector<TargetOutput> track_scenario(const SyntheticSequence& seq,
                                                TrackMode mode,
                                                const TrackSettings& settings) {
    settings.validate();
    if (mode == TrackMode::Assoc)
        throw ConfigError("track_scenario: assoc mode runs on oracle detections");
    if (!seq.target().visible[0])
        throw ConfigError("track_scenario: target must be visible in frame 0");

    const EvidenceLayout layout = desk_layout(seq.config.image_size);
    const ChannelPlan plan = desk_channel_plan(layout);
    const ControllerWeights controller =
        synthetic_controller(layout, plan, settings.integration, settings.head);

    RenderedFrame first = render_feature_maps(seq, 0, layout);
    const Box gt0 = seq.target().boxes[0];
    TemplateContext ctx =
        make_template_context(first.levels[0], gt0, settings.correlation,
                              settings.integration, plan, controller);
    TrackingHead head(layout, settings.correlation, std::move(ctx),
                      settings.head);
    std::vector<double> emb0 =
        sample_embedding(first.embedding, gt0.cx(), gt0.cy());

    ModeStepper stepper(mode, settings);
    stepper.initialize(gt0, emb0);

    std::vector<TargetOutput> records;
    TargetOutput init;
    init.frame = 0;
    init.present = true;
    init.box = gt0;
    init.confidence = 1.0;
    init.target_id = 0;
    init.active_count = 1;
    records.push_back(init);

    for (int t = 1; t < seq.frames(); ++t) {
        RenderedFrame rendered = render_feature_maps(seq, t, layout);
        std::vector<Candidate> candidates =
            head.detect(rendered.levels, rendered.embedding, settings.top_k);
        records.push_back(stepper.step(t, candidates));
    }
    return records;
}

// Association-only pipeline on externally supplied detections (oracle files
// or the simulator). Frame 0 seeds the target from the candidate that best
// overlaps the annotation.
inline std::vector<TargetOutput> track_candidates(
    const std::vector<std::vector<Candidate>>& frames, const Box& gt0,
    TrackMode mode, const TrackSettings& settings) {
    settings.validate();
    if (frames.empty()) throw ConfigError("track_candidates: no frames");

    double best = 0.0;
    int pick = -1;
    for (std::size_t i = 0; i < frames[0].size(); ++i) {
        double v = iou(frames[0][i].box, gt0);
        if (v > best) {
            best = v;
            pick = static_cast<int>(i);
        }
    }
    if (pick < 0 || best < 0.25)
        throw ConfigError("track_candidates: no frame-0 detection near the annotation");

    ModeStepper stepper(mode == TrackMode::Full ? TrackMode::Reid : mode,
                        settings);
    stepper.initialize(gt0, frames[0][pick].embedding);

    std::vector<TargetOutput> records;
    TargetOutput init;
    init.frame = 0;
    init.present = true;
    init.box = gt0;
    init.confidence = 1.0;
    init.target_id = 0;
    init.active_count = 1;
    records.push_back(init);
    for (std::size_t t = 1; t < frames.size(); ++t)
        records.push_back(stepper.step(static_cast<int>(t), frames[t]));
    return records;
}

// --- evaluation glue -----------------------------------------------------------

inline std::vector<std::optional<Box>> target_gt_boxes(
    const SyntheticSequence& seq) {
    std::vector<std::optional<Box>> out;
    for (int t = 0; t < seq.frames(); ++t) {
        if (seq.target().visible[t])
            out.emplace_back(seq.target().boxes[t]);
        else
            out.emplace_back(std::nullopt);
    }
    return out;
}

inline std::vector<std::vector<std::optional<Box>>> per_frame_object_boxes(
    const SyntheticSequence& seq) {
    std::vector<std::vector<std::optional<Box>>> out(seq.frames());
    for (int t = 0; t < seq.frames(); ++t) {
        for (const ObjectTrack& obj : seq.objects) {
            if (obj.visible[t])
                out[t].emplace_back(obj.boxes[t]);
            else
                out[t].emplace_back(std::nullopt);
        }
    }
    return out;
}

inline std::vector<std::optional<Box>> output_boxes(
    const std::vector<TargetOutput>& records) {
    std::vector<std::optional<Box>> out;
    for (const TargetOutput& r : records) {
        if (r.present)
            out.emplace_back(r.box);
        else
            out.emplace_back(std::nullopt);
    }
    return out;
}

inline SequenceResult to_sequence_result(
    const std::vector<TargetOutput>& records,
    const std::vector<std::optional<Box>>& gt_boxes,
    const std::vector<bool>& visible) {
    if (records.size() != gt_boxes.size() || records.size() != visible.size())
        throw ShapeError("to_sequence_result: frame count mismatch");
    SequenceResult out;
    for (std::size_t t = 0; t < records.size(); ++t) {
        FrameResult f;
        if (records[t].present) {
            f.pred = records[t].box;
            f.confidence = records[t].confidence;
        }
        f.gt = gt_boxes[t];
        f.visible = visible[t];
        out.push_back(f);
    }
    return out;
}

inline SequenceResult to_sequence_result(const std::vector<TargetOutput>& records,
                                         const SyntheticSequence& seq) {
    return to_sequence_result(records, target_gt_boxes(seq),
                              seq.target().visible);
}

// --- suite-level runners ----------------------------------------------------------

struct RecallStats {
    int recovered = 0;
    int total = 0;
    double recall() const {
        return total > 0 ? static_cast<double>(recovered) / total : 1.0;
    }
};

// Fraction of visible planted objects recovered by detect() at IoU >= 0.5.
inline RecallStats detection_recall(const SyntheticSequence& seq,
                                    const TrackSettings& settings) {
    settings.validate();
    const EvidenceLayout layout = desk_layout(seq.config.image_size);
    const ChannelPlan plan = desk_channel_plan(layout);
    const ControllerWeights controller =
        synthetic_controller(layout, plan, settings.integration, settings.head);
    RenderedFrame first = render_feature_maps(seq, 0, layout);
    TemplateContext ctx = make_template_context(
        first.levels[0], seq.target().boxes[0], settings.correlation,
        settings.integration, plan, controller);
    TrackingHead head(layout, settings.correlation, std::move(ctx),
                      settings.head);

    RecallStats stats;
    for (int t = 1; t < seq.frames(); ++t) {
        RenderedFrame rendered = render_feature_maps(seq, t, layout);
        std::vector<Candidate> candidates =
            head.detect(rendered.levels, rendered.embedding, settings.top_k);
        for (const ObjectTrack& obj : seq.objects) {
            if (!obj.visible[t]) continue;
            stats.total += 1;
            for (const Candidate& c : candidates) {
                if (iou(c.box, obj.boxes[t]) >= 0.5) {
                    stats.recovered += 1;
                    break;
                }
            }
        }
    }
    return stats;
}

struct ScenarioScore {
    std::string scenario;
    double success_auc = 0.0;
    double precision_20 = 0.0;
    int switches = 0;
    double ms_per_frame = 0.0;
};

inline ScenarioScore score_scenario(const ScenarioConfig& config, TrackMode mode,
                                    const TrackSettings& settings) {
    SyntheticSequence seq = generate_sequence(config);
    auto start = std::chrono::steady_clock::now();
    std::vector<TargetOutput> records = track_scenario(seq, mode, settings);
    auto elapsed = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - start)
                       .count();
    ScenarioScore s;
    s.scenario = config.name;
    OpeScores ope = ope_curves(to_sequence_result(records, seq));
    s.success_auc = ope.success_auc;
    s.precision_20 = ope.precision_at_20;
    s.switches =
        identity_switches(output_boxes(records), per_frame_object_boxes(seq));
    s.ms_per_frame = elapsed / seq.frames();
    return s;
}

struct AblationRow {
    std::string correlation;
    std::string mode;
    double mean_success = 0.0;
    double mean_precision = 0.0;
    int total_switches = 0;
    double ms_per_frame = 0.0;
    double detection_recall = 0.0;
};

// The correlation-method grid crossed with the association strategies, run
// over the scenario suite. Scenarios within a cell run in parallel workers;
// rows come back in fixed grid order.
inline std::vector<AblationRow> run_ablation(
    const std::vector<ScenarioConfig>& suite, const TrackSettings& base) {
    std::vector<AblationRow> rows;
    for (CorrelationMethod method :
         {CorrelationMethod::CC, CorrelationMethod::DW, CorrelationMethod::HP,
          CorrelationMethod::DC}) {
        TrackSettings settings = base;
        settings.correlation = method;
        // detection recall is a property of the correlation cell, not the
        // association strategy
        double recall_acc = 0.0;
        {
            std::vector<std::future<double>> futs;
            for (const ScenarioConfig& config : suite)
                futs.push_back(std::async(std::launch::async, [&, config] {
                    return detection_recall(generate_sequence(config), settings)
                        .recall();
                }));
            for (auto& f : futs) recall_acc += f.get();
        }
        for (TrackMode mode : {TrackMode::Top1, TrackMode::PC, TrackMode::Reid}) {
            std::vector<std::future<ScenarioScore>> futs;
            for (const ScenarioConfig& config : suite)
                futs.push_back(std::async(std::launch::async, [&, config] {
                    return score_scenario(config, mode, settings);
                }));
            AblationRow row;
            row.correlation = to_string(method);
            row.mode = to_string(mode);
            double ms = 0.0;
            for (auto& f : futs) {
                ScenarioScore s = f.get();
                row.mean_success += s.success_auc;
                row.mean_precision += s.precision_20;
                row.total_switches += s.switches;
                ms += s.ms_per_frame;
            }
            row.mean_success /= suite.size();
            row.mean_precision /= suite.size();
            row.ms_per_frame = ms / suite.size();
            row.detection_recall = recall_acc / suite.size();
            rows.push_back(row);
        }
    }
    return rows;
}

inline void write_ablation_csv(const std::string& path,
                               const std::vector<AblationRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "correlation,mode,success,precision,identity_switches,ms_per_frame,"
           "detection_recall\n";
    char buf[160];
    for (const AblationRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%s,%.4f,%.4f,%d,%.3f,%.4f\n",
                      r.correlation.c_str(), r.mode.c_str(), r.mean_success,
                      r.mean_precision, r.total_switches, r.ms_per_frame,
                      r.detection_recall);
        out << buf;
    }
}

}  // namespace longtrack
