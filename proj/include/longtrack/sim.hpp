#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "longtrack/dethead.hpp"
#include "longtrack/featmap.hpp"
#include "longtrack/geometry.hpp"

#include "json.hpp"

namespace longtrack {

inline constexpr int kEmbedDim = 128;

enum class MotionModel { Linear, Crossing, RandomWalk };

inline std::string to_string(MotionModel m) {
    switch (m) {
        case MotionModel::Linear: return "linear";
        case MotionModel::Crossing: return "crossing";
        case MotionModel::RandomWalk: return "random_walk";
    }
    return "linear";
}

inline MotionModel motion_from_string(const std::string& s) {
    if (s == "linear") return MotionModel::Linear;
    if (s == "crossing") return MotionModel::Crossing;
    if (s == "random_walk") return MotionModel::RandomWalk;
    throw ConfigError("unknown motion model '" + s + "'");
}

// Scripted world: one target plus distractors, with ground-truth boxes,
// visibility flags, and latent appearance vectors. Stands in for long-term
// challenges (disappearance, intra-class distractors) at desk scale.
struct ScenarioConfig {
    std::string name = "scenario";
    int image_size = 256;
    int frame_count = 240;
    int distractor_count = 1;
    double appearance_separation = 0.6;   // min pairwise cosine distance
    double embedding_noise_sigma = 0.05;  // expected norm of the perturbation
    double box_noise_sigma = 1.0;         // pixels, oracle detections
    std::vector<std::pair<int, int>> disappearance_intervals;  // [start,end)
    MotionModel motion_model = MotionModel::Linear;
    std::uint64_t seed = 1;

    void validate() const {
        if (image_size < 64 || image_size % 32 != 0)
            throw ConfigError("scenario: image_size must be a multiple of 32, >= 64");
        if (frame_count < 2) throw ConfigError("scenario: frame_count must be >= 2");
        if (distractor_count < 0 || distractor_count > 8)
            throw ConfigError("scenario: distractor_count must be in [0,8]");
        if (appearance_separation <= 0.0 || appearance_separation > 2.0)
            throw ConfigError("scenario: appearance_separation must be in (0,2]");
        if (embedding_noise_sigma < 0.0 || box_noise_sigma < 0.0)
            throw ConfigError("scenario: noise sigmas must be >= 0");
        for (auto [a, b] : disappearance_intervals) {
            if (a < 0 || b > frame_count || a >= b)
                throw ConfigError("scenario: bad disappearance interval");
        }
    }
};

struct ObjectTrack {
    std::vector<Box> boxes;        // per frame
    std::vector<bool> visible;     // per frame
    std::vector<double> amplitude; // per frame rendering brightness
    std::vector<double> latent;    // kEmbedDim, unit norm
};

struct SyntheticSequence {
    ScenarioConfig config;
    std::vector<ObjectTrack> objects;  // index 0 is the target

    int frames() const { return config.frame_count; }
    const ObjectTrack& target() const { return objects[0]; }
};

namespace detail {

// brightness model: distractors sit slightly below the target and surge when
// their box overlaps the visible target, which is what makes the raw
// classification score confusable during crossings
inline constexpr double kTargetAmp = 1.0;
inline constexpr double kDistractorAmp = 0.9;
inline constexpr double kAmpJitter = 0.03;
inline constexpr double kCrossingSurge = 0.45;

inline std::vector<double> random_unit_vector(Rng& rng, int dim) {
    std::vector<double> v(dim);
    double norm2 = 0.0;
    for (double& x : v) {
        x = rng.normal();
        norm2 += x * x;
    }
    double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
    return v;
}

inline std::vector<std::vector<double>> draw_separated_latents(
    Rng& rng, int count, double min_separation) {
    std::vector<std::vector<double>> latents;
    for (int o = 0; o < count; ++o) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            std::vector<double> v = random_unit_vector(rng, kEmbedDim);
            placed = true;
            for (const auto& u : latents) {
                double dot = 0.0;
                for (int d = 0; d < kEmbedDim; ++d) dot += u[d] * v[d];
                if (1.0 - dot < min_separation) {
                    placed = false;
                    break;
                }
            }
            if (placed) latents.push_back(std::move(v));
        }
        if (!placed)
            throw ConfigError("scenario: cannot satisfy appearance separation");
    }
    return latents;
}

struct PathState {
    double cx, cy, vx, vy;
};

inline void reflect_step(PathState& p, double lo_x, double hi_x, double lo_y,
                         double hi_y) {
    p.cx += p.vx;
    p.cy += p.vy;
    if (p.cx < lo_x) { p.cx = 2 * lo_x - p.cx; p.vx = -p.vx; }
    if (p.cx > hi_x) { p.cx = 2 * hi_x - p.cx; p.vx = -p.vx; }
    if (p.cy < lo_y) { p.cy = 2 * lo_y - p.cy; p.vy = -p.vy; }
    if (p.cy > hi_y) { p.cy = 2 * hi_y - p.cy; p.vy = -p.vy; }
    p.cx = std::clamp(p.cx, lo_x, hi_x);
    p.cy = std::clamp(p.cy, lo_y, hi_y);
}

inline std::vector<double> noisy_unit(const std::vector<double>& latent,
                                      double sigma, Rng& rng) {
    std::vector<double> v = latent;
    if (sigma > 0.0) {
        const double per_dim = sigma / std::sqrt(static_cast<double>(kEmbedDim));
        for (double& x : v) x += rng.normal(0.0, per_dim);
    }
    double norm2 = 0.0;
    for (double x : v) norm2 += x * x;
    double inv = 1.0 / std::sqrt(std::max(norm2, 1e-12));
    for (double& x : v) x *= inv;
    return v;
}

// separable raised-cosine bump with support exactly the box, peak 1 at center
inline double bump(double x, double y, const Box& b) {
    double dx = x - b.cx(), dy = y - b.cy();
    double hw = 0.5 * b.width(), hh = 0.5 * b.height();
    if (std::abs(dx) >= hw || std::abs(dy) >= hh) return 0.0;
    double cx = std::cos(3.14159265358979323846 * dx / b.width());
    double cy = std::cos(3.14159265358979323846 * dy / b.height());
    return cx * cx * cy * cy;
}

}  // namespace detail

// Deterministic for a fixed seed; objects follow the configured motion model
// and boxes stay inside the image.
inline SyntheticSequence generate_sequence(const ScenarioConfig& config) {
    config.validate();
    const int T = config.frame_count;
    const double S = config.image_size;
    const int n_objects = 1 + config.distractor_count;

    SyntheticSequence seq;
    seq.config = config;
    seq.objects.resize(n_objects);

    Rng latent_rng = Rng::derive(config.seed, 0x4c41544eULL);
    auto latents = detail::draw_separated_latents(latent_rng, n_objects,
                                                  config.appearance_separation);

    Rng geo = Rng::derive(config.seed, 0x47454f4dULL);
    const double base = std::round(0.20 * S);

    std::vector<double> widths(n_objects), heights(n_objects);
    widths[0] = base;
    heights[0] = std::round(base * geo.uniform(0.95, 1.05));
    for (int o = 1; o < n_objects; ++o) {
        if (config.motion_model == MotionModel::Crossing && o == 1) {
            widths[o] = widths[0];  // the crossing distractor mirrors the target
            heights[o] = heights[0];
        } else {
            widths[o] = std::round(base * geo.uniform(0.85, 1.1));
            heights[o] = std::round(base * geo.uniform(0.85, 1.1));
        }
    }

    // trajectories
    for (int o = 0; o < n_objects; ++o) {
        ObjectTrack& track = seq.objects[o];
        track.latent = latents[o];
        track.boxes.resize(T);
        track.visible.assign(T, true);
        track.amplitude.assign(T, 1.0);

        const double margin_x = 0.5 * widths[o] + 2.0;
        const double margin_y = 0.5 * heights[o] + 2.0;
        const double lo_x = margin_x, hi_x = S - margin_x;
        const double lo_y = margin_y, hi_y = S - margin_y;

        detail::PathState p{};
        Rng walk = Rng::derive(config.seed, 0x57414c4bULL, o);
        switch (config.motion_model) {
            case MotionModel::Linear: {
                p.cx = walk.uniform(lo_x, hi_x);
                p.cy = walk.uniform(lo_y, hi_y);
                double speed = S * walk.uniform(0.4, 0.8) / T;
                double angle = walk.uniform(0.0, 2.0 * 3.14159265358979323846);
                p.vx = speed * std::cos(angle);
                p.vy = speed * std::sin(angle);
                break;
            }
            case MotionModel::Crossing: {
                double step = (hi_x - lo_x) / (T - 1);
                if (o == 0) {
                    p = {lo_x, S / 2.0, step, 0.0};
                } else if (o == 1) {
                    // opposite direction, slight vertical offset: the paths
                    // meet mid-sequence with IoU above 0.5
                    p = {hi_x, S / 2.0 + 12.0, -step, 0.0};
                } else {
                    // additional distractors sweep vertically, phased so they
                    // cross the target's path while the target is elsewhere;
                    // only the head-on distractor overlaps it deeply
                    double step_y = (hi_y - lo_y) / (T - 1);
                    double side = o % 2 == 0 ? -1.0 : 1.0;
                    double x = std::clamp(
                        S / 2.0 + side * (44.0 + 12.0 * (o - 2)), lo_x, hi_x);
                    p = {x, o % 2 == 0 ? lo_y : hi_y, 0.0,
                         o % 2 == 0 ? step_y : -step_y};
                }
                break;
            }
            case MotionModel::RandomWalk: {
                p.cx = walk.uniform(lo_x, hi_x);
                p.cy = walk.uniform(lo_y, hi_y);
                p.vx = walk.normal(0.0, 0.6);
                p.vy = walk.normal(0.0, 0.6);
                break;
            }
        }
        for (int t = 0; t < T; ++t) {
            if (t > 0) {
                if (config.motion_model == MotionModel::RandomWalk) {
                    p.vx = 0.9 * p.vx + walk.normal(0.0, 0.25);
                    p.vy = 0.9 * p.vy + walk.normal(0.0, 0.25);
                }
                detail::reflect_step(p, lo_x, hi_x, lo_y, hi_y);
            }
            track.boxes[t] = Box::from_center(p.cx, p.cy, widths[o], heights[o]);
        }
    }

    // target visibility
    for (auto [a, b] : config.disappearance_intervals)
        for (int t = a; t < b; ++t) seq.objects[0].visible[t] = false;

    // per-frame brightness
    Rng amp_rng = Rng::derive(config.seed, 0x414d5053ULL);
    for (int t = 0; t < T; ++t) {
        seq.objects[0].amplitude[t] = std::clamp(
            detail::kTargetAmp + amp_rng.normal(0.0, detail::kAmpJitter), 0.9,
            1.1);
        for (int o = 1; o < n_objects; ++o) {
            double amp =
                detail::kDistractorAmp + amp_rng.normal(0.0, detail::kAmpJitter);
            if (seq.objects[0].visible[t]) {
                double overlap = iou(seq.objects[0].boxes[t], seq.objects[o].boxes[t]);
                amp += detail::kCrossingSurge * std::min(1.0, overlap / 0.5);
            }
            seq.objects[o].amplitude[t] = std::clamp(amp, 0.75, 1.45);
        }
    }
    return seq;
}

// --- rendering ---------------------------------------------------------------

struct RenderedFrame {
    std::vector<FeatureMap> levels;  // strides 8, 16, 32
    FeatureMap embedding;            // stride 4, kEmbedDim channels
};

// Plants every visible object as a smooth bump: an objectness channel, exact
// (l,t,r,b)/reg_scale regression channels, and appearance-pattern channels
// derived from the object's latent vector. Cells contested by overlapping
// objects go to the brightest bump. Invisible objects leave no trace.
inline RenderedFrame render_feature_maps(const SyntheticSequence& seq, int frame,
                                         const EvidenceLayout& layout) {
    if (frame < 0 || frame >= seq.frames())
        throw ConfigError("render: frame out of range");
    const int S = seq.config.image_size;

    // fixed projection of the 128-D latents into the pattern channels
    Rng proj_rng = Rng::derive(seq.config.seed, 0x50524f4aULL);
    const int E = layout.pattern_count;
    std::vector<double> projection(static_cast<std::size_t>(E) * kEmbedDim);
    for (double& v : projection) v = proj_rng.normal(0.0, 1.0);

    std::vector<int> vis;
    std::vector<std::vector<double>> patterns;
    for (std::size_t o = 0; o < seq.objects.size(); ++o) {
        if (!seq.objects[o].visible[frame]) continue;
        vis.push_back(static_cast<int>(o));
        std::vector<double> pat(E, 0.0);
        double norm2 = 0.0;
        for (int e = 0; e < E; ++e) {
            double acc = 0.0;
            for (int d = 0; d < kEmbedDim; ++d)
                acc += projection[e * kEmbedDim + d] * seq.objects[o].latent[d];
            pat[e] = acc;
            norm2 += acc * acc;
        }
        double inv = 1.0 / std::sqrt(std::max(norm2, 1e-12));
        for (double& v : pat) v *= inv;
        patterns.push_back(std::move(pat));
    }

    RenderedFrame out;
    for (int stride : {8, 16, 32}) {
        const int grid = S / stride;
        FeatureMap map(layout.channels(), grid, grid, stride);
        for (int j = 0; j < grid; ++j) {
            for (int i = 0; i < grid; ++i) {
                auto [x, y] = map_location(i, j, stride);
                double best = 0.0;
                int winner = -1;
                for (std::size_t k = 0; k < vis.size(); ++k) {
                    const ObjectTrack& obj = seq.objects[vis[k]];
                    double b = detail::bump(x, y, obj.boxes[frame]) *
                               obj.amplitude[frame];
                    if (b > best) {
                        best = b;
                        winner = static_cast<int>(k);
                    }
                }
                if (winner < 0) continue;
                const ObjectTrack& obj = seq.objects[vis[winner]];
                const Box& gb = obj.boxes[frame];
                map.at(layout.objectness_channel, j, i) = best;
                map.at(layout.reg_first + 0, j, i) = (x - gb.x1) / layout.reg_scale;
                map.at(layout.reg_first + 1, j, i) = (y - gb.y1) / layout.reg_scale;
                map.at(layout.reg_first + 2, j, i) = (gb.x2 - x) / layout.reg_scale;
                map.at(layout.reg_first + 3, j, i) = (gb.y2 - y) / layout.reg_scale;
                for (int e = 0; e < E; ++e)
                    map.at(layout.pattern_first + e, j, i) =
                        best * patterns[winner][e];
            }
        }
        out.levels.push_back(std::move(map));
    }

    // stride-4 embedding map: cells near an object's center carry its latent
    // vector plus per-cell noise
    const int egrid = S / 4;
    out.embedding = FeatureMap(kEmbedDim, egrid, egrid, 4);
    std::vector<double> owner_dist(static_cast<std::size_t>(egrid) * egrid, 1e30);
    std::vector<int> owner(static_cast<std::size_t>(egrid) * egrid, -1);
    for (std::size_t k = 0; k < vis.size(); ++k) {
        const ObjectTrack& obj = seq.objects[vis[k]];
        const Box& gb = obj.boxes[frame];
        double rho = std::max(8.0, 0.3 * std::min(gb.width(), gb.height()));
        int i0 = std::max(0, static_cast<int>((gb.cx() - rho - 2) / 4));
        int i1 = std::min(egrid - 1, static_cast<int>((gb.cx() + rho + 2) / 4));
        int j0 = std::max(0, static_cast<int>((gb.cy() - rho - 2) / 4));
        int j1 = std::min(egrid - 1, static_cast<int>((gb.cy() + rho + 2) / 4));
        for (int j = j0; j <= j1; ++j) {
            for (int i = i0; i <= i1; ++i) {
                auto [x, y] = map_location(i, j, 4);
                double d = std::max(std::abs(x - gb.cx()), std::abs(y - gb.cy()));
                if (d > rho) continue;
                std::size_t idx = static_cast<std::size_t>(j) * egrid + i;
                if (d < owner_dist[idx]) {
                    owner_dist[idx] = d;
                    owner[idx] = static_cast<int>(vis[k]);
                }
            }
        }
    }
    for (int j = 0; j < egrid; ++j) {
        for (int i = 0; i < egrid; ++i) {
            std::size_t idx = static_cast<std::size_t>(j) * egrid + i;
            if (owner[idx] < 0) continue;
            Rng cell_rng = Rng::derive(seq.config.seed, 0x454d4244ULL,
                                       static_cast<std::uint64_t>(frame), idx);
            std::vector<double> e = detail::noisy_unit(
                seq.objects[owner[idx]].latent,
                seq.config.embedding_noise_sigma, cell_rng);
            for (int c = 0; c < kEmbedDim; ++c) out.embedding.at(c, j, i) = e[c];
        }
    }
    return out;
}

// --- oracle detections --------------------------------------------------------

struct OracleNoise {
    double box_sigma = 0.0;
    double embed_sigma = 0.0;
    int clutter_count = 0;
};

// One candidate per visible object (noisy box, noisy embedding, score near 1)
// plus optional low-score clutter.
inline std::vector<Candidate> oracle_detect(const SyntheticSequence& seq,
                                            int frame,
                                            const OracleNoise& noise) {
    if (frame < 0 || frame >= seq.frames())
        throw ConfigError("oracle_detect: frame out of range");
    const double S = seq.config.image_size;
    std::vector<Candidate> out;
    for (std::size_t o = 0; o < seq.objects.size(); ++o) {
        const ObjectTrack& obj = seq.objects[o];
        if (!obj.visible[frame]) continue;
        Rng rng = Rng::derive(seq.config.seed, 0x44455453ULL,
                              static_cast<std::uint64_t>(frame), o);
        Box b = obj.boxes[frame];
        if (noise.box_sigma > 0.0) {
            b.x1 += rng.normal(0.0, noise.box_sigma);
            b.y1 += rng.normal(0.0, noise.box_sigma);
            b.x2 += rng.normal(0.0, noise.box_sigma);
            b.y2 += rng.normal(0.0, noise.box_sigma);
            b = clip_box(b, S, S);
            if (!b.valid()) b = clip_box(obj.boxes[frame], S, S);
        }
        Candidate c;
        c.box = b;
        c.cls_score = std::clamp(0.98 * obj.amplitude[frame] - 0.02, 0.05, 0.999);
        c.centerness = 1.0;
        c.final_score = c.cls_score;
        c.embedding = detail::noisy_unit(obj.latent, noise.embed_sigma, rng);
        c.level = 8;
        out.push_back(std::move(c));
    }
    if (noise.clutter_count > 0) {
        Rng rng = Rng::derive(seq.config.seed, 0x434c5554ULL,
                              static_cast<std::uint64_t>(frame));
        for (int k = 0; k < noise.clutter_count; ++k) {
            double w = S * rng.uniform(0.08, 0.25);
            double h = S * rng.uniform(0.08, 0.25);
            double cx = rng.uniform(w / 2, S - w / 2);
            double cy = rng.uniform(h / 2, S - h / 2);
            Candidate c;
            c.box = Box::from_center(cx, cy, w, h);
            c.cls_score = rng.uniform(0.1, 0.45);
            c.centerness = 1.0;
            c.final_score = c.cls_score;
            c.embedding = detail::random_unit_vector(rng, kEmbedDim);
            c.level = 8;
            out.push_back(std::move(c));
        }
    }
    return out;
}

inline OracleNoise oracle_noise_from(const ScenarioConfig& config,
                                     int clutter = 0) {
    return OracleNoise{config.box_noise_sigma, config.embedding_noise_sigma,
                       clutter};
}

// --- the standard scenario suite -----------------------------------------------

// Ten seeded scenarios spanning 0-4 distractors, 0-3 disappearances and all
// motion models; they anchor the acceptance checks and the ablation grid.
inline std::vector<ScenarioConfig> standard_suite() {
    std::vector<ScenarioConfig> suite;
    auto make = [](const std::string& name, MotionModel m, int distractors,
                   std::vector<std::pair<int, int>> gaps, std::uint64_t seed) {
        ScenarioConfig c;
        c.name = name;
        c.motion_model = m;
        c.distractor_count = distractors;
        c.disappearance_intervals = std::move(gaps);
        c.seed = seed;
        return c;
    };
    suite.push_back(make("s01", MotionModel::Linear, 0, {}, 101));
    suite.push_back(make("s02", MotionModel::Linear, 2, {}, 102));
    suite.push_back(make("s03", MotionModel::Linear, 1, {{100, 130}}, 103));
    suite.push_back(make("s04", MotionModel::Crossing, 1, {}, 104));
    suite.push_back(make("s05", MotionModel::Crossing, 2, {{60, 75}}, 105));
    suite.push_back(make("s06", MotionModel::RandomWalk, 2, {}, 106));
    suite.push_back(make("s07", MotionModel::Crossing, 1, {}, 107));
    suite.push_back(
        make("s08", MotionModel::RandomWalk, 4, {{50, 70}, {150, 160}}, 108));
    suite.push_back(make("s09", MotionModel::Linear, 3,
                         {{40, 55}, {110, 160}, {200, 210}}, 109));
    suite.push_back(make("s10", MotionModel::Crossing, 4, {{30, 50}}, 110));
    return suite;
}

inline bool is_crossing_scenario(const ScenarioConfig& c) {
    return c.motion_model == MotionModel::Crossing && c.distractor_count >= 1;
}

// --- serialization --------------------------------------------------------------

inline nlohmann::json to_json(const ScenarioConfig& c) {
    nlohmann::json intervals = nlohmann::json::array();
    for (auto [a, b] : c.disappearance_intervals) intervals.push_back({a, b});
    return {{"name", c.name},
            {"image_size", c.image_size},
            {"frame_count", c.frame_count},
            {"distractor_count", c.distractor_count},
            {"appearance_separation", c.appearance_separation},
            {"embedding_noise_sigma", c.embedding_noise_sigma},
            {"box_noise_sigma", c.box_noise_sigma},
            {"disappearance_intervals", intervals},
            {"motion_model", to_string(c.motion_model)},
            {"seed", c.seed}};
}

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
    ScenarioConfig c;
    c.name = j.value("name", "scenario");
    c.image_size = j.at("image_size").get<int>();
    c.frame_count = j.at("frame_count").get<int>();
    c.distractor_count = j.at("distractor_count").get<int>();
    c.appearance_separation = j.at("appearance_separation").get<double>();
    c.embedding_noise_sigma = j.at("embedding_noise_sigma").get<double>();
    c.box_noise_sigma = j.at("box_noise_sigma").get<double>();
    for (const auto& e : j.at("disappearance_intervals"))
        c.disappearance_intervals.emplace_back(e.at(0).get<int>(),
                                               e.at(1).get<int>());
    c.motion_model = motion_from_string(j.at("motion_model").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
}

inline void save_scenario(const ScenarioConfig& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << to_json(c).dump(2) << "\n";
}

inline ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad scenario file " + path + ": " + e.what());
    }
    return scenario_from_json(j);
}

// One "x,y,w,h" line per frame, "0,0,0,0" when the target is absent.
inline void write_groundtruth(const SyntheticSequence& seq,
                              const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    char buf[96];
    for (int t = 0; t < seq.frames(); ++t) {
        if (seq.target().visible[t]) {
            const Box& b = seq.target().boxes[t];
            std::snprintf(buf, sizeof buf, "%.2f,%.2f,%.2f,%.2f\n", b.x1, b.y1,
                          b.width(), b.height());
            out << buf;
        } else {
            out << "0,0,0,0\n";
        }
    }
}

inline void write_visibility(const SyntheticSequence& seq,
                             const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (int t = 0; t < seq.frames(); ++t)
        out << (seq.target().visible[t] ? 1 : 0) << "\n";
}

inline std::vector<std::optional<Box>> load_groundtruth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    std::vector<std::optional<Box>> boxes;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        double x, y, w, h;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &x, &y, &w, &h) != 4)
            throw IoError("bad groundtruth row: " + line);
        if (w <= 0.0 || h <= 0.0)
            boxes.push_back(std::nullopt);
        else
            boxes.push_back(Box::from_xywh(x, y, w, h));
    }
    return boxes;
}

inline std::vector<bool> load_visibility(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    std::vector<bool> vis;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        vis.push_back(line[0] != '0');
    }
    return vis;
}

struct DetectionFile {
    std::vector<std::vector<Candidate>> frames;
    std::vector<std::vector<int>> ids;  // parallel to frames; -1 for clutter
};

// MOT-style rows frame,id,x,y,w,h,score with a sidecar embedding file
// (frame, id, 128 reals per row).
inline void write_oracle_detections(const SyntheticSequence& seq,
                                    const OracleNoise& noise,
                                    const std::string& dets_path,
                                    const std::string& emb_path) {
    std::ofstream dets(dets_path);
    if (!dets) throw IoError("cannot write " + dets_path);
    std::ofstream embs(emb_path);
    if (!embs) throw IoError("cannot write " + emb_path);
    char buf[96];
    for (int t = 0; t < seq.frames(); ++t) {
        std::vector<Candidate> cands = oracle_detect(seq, t, noise);
        std::size_t k = 0;
        for (std::size_t o = 0; o < seq.objects.size(); ++o) {
            if (!seq.objects[o].visible[t]) continue;
            const Candidate& c = cands[k++];
            std::snprintf(buf, sizeof buf, "%d,%zu,%.3f,%.3f,%.3f,%.3f,%.6f\n",
                          t, o, c.box.x1, c.box.y1, c.box.width(),
                          c.box.height(), c.final_score);
            dets << buf;
            embs << t << "," << o;
            for (double e : c.embedding) {
                std::snprintf(buf, sizeof buf, ",%.9f", e);
                embs << buf;
            }
            embs << "\n";
        }
        for (; k < cands.size(); ++k) {  // clutter rows, id -1
            const Candidate& c = cands[k];
            std::snprintf(buf, sizeof buf, "%d,-1,%.3f,%.3f,%.3f,%.3f,%.6f\n",
                          t, c.box.x1, c.box.y1, c.box.width(), c.box.height(),
                          c.final_score);
            dets << buf;
            embs << t << ",-1";
            for (double e : c.embedding) {
                std::snprintf(buf, sizeof buf, ",%.9f", e);
                embs << buf;
            }
            embs << "\n";
        }
    }
}

inline DetectionFile load_detections(const std::string& dets_path,
                                     const std::string& emb_path) {
    std::ifstream dets(dets_path);
    if (!dets) throw IoError("cannot read " + dets_path);
    std::ifstream embs(emb_path);
    if (!embs) throw IoError("cannot read " + emb_path);

    DetectionFile out;
    auto ensure_frame = [&](int f) {
        if (f < 0) throw IoError("negative frame index in detections");
        while (static_cast<int>(out.frames.size()) <= f) {
            out.frames.emplace_back();
            out.ids.emplace_back();
        }
    };
    std::string line;
    while (std::getline(dets, line)) {
        if (line.empty()) continue;
        int f, id;
        double x, y, w, h, score;
        if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf,%lf,%lf", &f, &id, &x,
                        &y, &w, &h, &score) != 7)
            throw IoError("bad detection row: " + line);
        ensure_frame(f);
        Candidate c;
        c.box = Box::from_xywh(x, y, w, h);
        c.cls_score = score;
        c.centerness = 1.0;
        c.final_score = score;
        c.level = 8;
        out.frames[f].push_back(std::move(c));
        out.ids[f].push_back(id);
    }
    std::vector<std::size_t> next(out.frames.size(), 0);
    while (std::getline(embs, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        if (!std::getline(ss, tok, ',')) throw IoError("bad embedding row");
        int f = std::stoi(tok);
        if (!std::getline(ss, tok, ',')) throw IoError("bad embedding row");
        if (f < 0 || f >= static_cast<int>(out.frames.size()))
            throw IoError("embedding row for unknown frame " + std::to_string(f));
        if (next[f] >= out.frames[f].size())
            throw IoError("embedding rows exceed detections for frame " +
                          std::to_string(f));
        std::vector<double> e;
        e.reserve(kEmbedDim);
        while (std::getline(ss, tok, ',')) e.push_back(std::stod(tok));
        if (static_cast<int>(e.size()) != kEmbedDim)
            throw IoError("embedding row has " + std::to_string(e.size()) +
                          " values, expected " + std::to_string(kEmbedDim));
        out.frames[f][next[f]++].embedding = std::move(e);
    }
    for (std::size_t f = 0; f < out.frames.size(); ++f)
        if (next[f] != out.frames[f].size())
            throw IoError("missing embedding rows for frame " + std::to_string(f));
    return out;
}

}  // namespace longtrack
