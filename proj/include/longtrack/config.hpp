#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "longtrack/losses.hpp"
#include "longtrack/pipeline.hpp"

#include "json.hpp"

namespace longtrack {

// Everything tunable in one self-describing record. Flags override fields
// after loading; validation defers to the owning modules.
struct EngineConfig {
    TrackSettings track;
    LossWeights loss_weights;
    std::uint64_t seed = 1;
    double tpr_iou = 0.5;
    std::vector<int> topk_values{1, 2, 3, 5, 15, 50};

    void validate() const {
        track.validate();
        loss_weights.validate();
        if (tpr_iou < 0.0 || tpr_iou > 1.0)
            throw ConfigError("metrics: tpr_iou must be in [0,1]");
        for (int k : topk_values)
            if (k < 1) throw ConfigError("metrics: topk values must be >= 1");
    }
};

inline nlohmann::json to_json(const EngineConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    j["correlation"] = to_string(c.track.correlation);
    j["integration"] = {{"cls_layers", c.track.integration.cls_layers},
                        {"reg_layers", c.track.integration.reg_layers},
                        {"p", c.track.integration.p},
                        {"q", c.track.integration.q}};
    j["association"] = {
        {"appearance_weight", c.track.assoc.appearance_weight},
        {"iou_gate", c.track.assoc.iou_gate},
        {"embedding_momentum", c.track.assoc.embedding_momentum},
        {"max_lost_frames", c.track.assoc.max_lost_frames},
        {"reid_recover_threshold", c.track.assoc.reid_recover_threshold},
        {"spawn_score", c.track.assoc.spawn_score}};
    j["head"] = {{"objectness_gain", c.track.head.objectness_gain},
                 {"match_gain", c.track.head.match_gain},
                 {"logit_bias", c.track.head.logit_bias},
                 {"score_threshold", c.track.head.score_threshold},
                 {"nms_iou", c.track.head.nms_iou}};
    j["top_k"] = c.track.top_k;
    j["loss_weights"] = {{"lambda",
                          {c.loss_weights.lambda[0], c.loss_weights.lambda[1],
                           c.loss_weights.lambda[2]}},
                         {"task_log_vars", c.loss_weights.task_log_vars}};
    j["metrics"] = {{"tpr_iou", c.tpr_iou}, {"topk_values", c.topk_values}};
    return j;
}

inline EngineConfig engine_config_from_json(const nlohmann::json& j) {
    EngineConfig c;
    c.seed = j.value("seed", c.seed);
    if (j.contains("correlation"))
        c.track.correlation =
            correlation_from_string(j.at("correlation").get<std::string>());
    if (j.contains("integration")) {
        const auto& ji = j.at("integration");
        c.track.integration.cls_layers =
            ji.value("cls_layers", c.track.integration.cls_layers);
        c.track.integration.reg_layers =
            ji.value("reg_layers", c.track.integration.reg_layers);
        c.track.integration.p = ji.value("p", c.track.integration.p);
        c.track.integration.q = ji.value("q", c.track.integration.q);
    }
    if (j.contains("association")) {
        const auto& ja = j.at("association");
        AssociationConfig& a = c.track.assoc;
        a.appearance_weight = ja.value("appearance_weight", a.appearance_weight);
        a.iou_gate = ja.value("iou_gate", a.iou_gate);
        a.embedding_momentum =
            ja.value("embedding_momentum", a.embedding_momentum);
        a.max_lost_frames = ja.value("max_lost_frames", a.max_lost_frames);
        a.reid_recover_threshold =
            ja.value("reid_recover_threshold", a.reid_recover_threshold);
        a.spawn_score = ja.value("spawn_score", a.spawn_score);
    }
    if (j.contains("head")) {
        const auto& jh = j.at("head");
        HeadParams& h = c.track.head;
        h.objectness_gain = jh.value("objectness_gain", h.objectness_gain);
        h.match_gain = jh.value("match_gain", h.match_gain);
        h.logit_bias = jh.value("logit_bias", h.logit_bias);
        h.score_threshold = jh.value("score_threshold", h.score_threshold);
        h.nms_iou = jh.value("nms_iou", h.nms_iou);
    }
    c.track.top_k = j.value("top_k", c.track.top_k);
    if (j.contains("loss_weights")) {
        const auto& jl = j.at("loss_weights");
        if (jl.contains("lambda")) {
            const auto& lam = jl.at("lambda");
            for (int m = 0; m < 3; ++m)
                for (int n = 0; n < 3; ++n)
                    c.loss_weights.lambda[m][n] = lam.at(m).at(n).get<double>();
        }
        if (jl.contains("task_log_vars")) {
            c.loss_weights.task_log_vars[0] =
                jl.at("task_log_vars").at(0).get<double>();
            c.loss_weights.task_log_vars[1] =
                jl.at("task_log_vars").at(1).get<double>();
        }
    }
    if (j.contains("metrics")) {
        const auto& jm = j.at("metrics");
        c.tpr_iou = jm.value("tpr_iou", c.tpr_iou);
        c.topk_values = jm.value("topk_values", c.topk_values);
    }
    c.validate();
    return c;
}

inline EngineConfig load_engine_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad config file " + path + ": " + e.what());
    }
    return engine_config_from_json(j);
}

inline void save_engine_config(const EngineConfig& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << to_json(c).dump(2) << "\n";
}

}  // namespace longtrack
