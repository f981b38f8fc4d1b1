#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "longtrack/dethead.hpp"
#include "longtrack/geometry.hpp"

#include "json.hpp"

namespace longtrack {

// Cosine distance 1 - <a,b>/(|a||b|), in [0, 2].
inline double embed_distance(std::span<const double> a,
                             std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("embed_distance: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na <= 0.0 || nb <= 0.0)
        throw ConfigError("embed_distance: zero vector");
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

inline std::vector<double> normalized(std::span<const double> v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    std::vector<double> out(v.begin(), v.end());
    if (n > 0.0)
        for (double& x : out) x /= n;
    return out;
}

// --- Kalman filter ---------------------------------------------------------

// Constant-velocity state on (cx, cy, aspect, height) and their velocities.
struct KalmanState {
    Eigen::Matrix<double, 8, 1> mean = Eigen::Matrix<double, 8, 1>::Zero();
    Eigen::Matrix<double, 8, 8> cov = Eigen::Matrix<double, 8, 8>::Zero();
    bool resymmetrized = false;

    Box box() const {
        double a = mean(2), h = mean(3);
        double w = a * h;
        return Box::from_center(mean(0), mean(1), w, h);
    }
};

inline Eigen::Vector4d box_to_measurement(const Box& b) {
    return Eigen::Vector4d(b.cx(), b.cy(), b.width() / b.height(), b.height());
}

class KalmanFilter {
  public:
    explicit KalmanFilter(double pos_weight = 1.0 / 20.0,
                          double vel_weight = 1.0 / 160.0)
        : pos_weight_(pos_weight), vel_weight_(vel_weight) {
        motion_.setIdentity();
        for (int i = 0; i < 4; ++i) motion_(i, i + 4) = 1.0;
        observation_.setZero();
        for (int i = 0; i < 4; ++i) observation_(i, i) = 1.0;
    }

    KalmanState initiate(const Eigen::Vector4d& measurement) const {
        KalmanState s;
        s.mean.head<4>() = measurement;
        double h = measurement(3);
        Eigen::Matrix<double, 8, 1> std;
        std << 2 * pos_weight_ * h, 2 * pos_weight_ * h, 1e-2,
            2 * pos_weight_ * h, 10 * vel_weight_ * h, 10 * vel_weight_ * h,
            1e-5, 10 * vel_weight_ * h;
        s.cov = std.array().square().matrix().asDiagonal();
        return s;
    }

    void predict(KalmanState& s) const {
        double h = s.mean(3);
        Eigen::Matrix<double, 8, 1> std;
        std << pos_weight_ * h, pos_weight_ * h, 1e-2, pos_weight_ * h,
            vel_weight_ * h, vel_weight_ * h, 1e-5, vel_weight_ * h;
        Eigen::Matrix<double, 8, 8> q =
            std.array().square().matrix().asDiagonal();
        s.mean = motion_ * s.mean;
        s.cov = motion_ * s.cov * motion_.transpose() + q;
        enforce_symmetry(s);
    }

    void update(KalmanState& s, const Eigen::Vector4d& measurement) const {
        double h = s.mean(3);
        Eigen::Vector4d std(pos_weight_ * h, pos_weight_ * h, 1e-1,
                            pos_weight_ * h);
        Eigen::Matrix4d r = std.array().square().matrix().asDiagonal();
        Eigen::Matrix4d innovation_cov =
            observation_ * s.cov * observation_.transpose() + r;
        Eigen::Matrix<double, 8, 4> gain =
            s.cov * observation_.transpose() *
            innovation_cov.ldlt().solve(Eigen::Matrix4d::Identity());
        Eigen::Vector4d innovation = measurement - observation_ * s.mean;
        s.mean += gain * innovation;
        // Joseph form keeps the covariance PSD under roundoff
        Eigen::Matrix<double, 8, 8> ikh =
            Eigen::Matrix<double, 8, 8>::Identity() - gain * observation_;
        s.cov = ikh * s.cov * ikh.transpose() + gain * r * gain.transpose();
        enforce_symmetry(s);
        s.mean(2) = std::max(s.mean(2), 1e-6);
        s.mean(3) = std::max(s.mean(3), 1e-6);
    }

  private:
    void enforce_symmetry(KalmanState& s) const {
        Eigen::Matrix<double, 8, 8> sym = 0.5 * (s.cov + s.cov.transpose());
        if ((sym - s.cov).cwiseAbs().maxCoeff() > 1e-9) s.resymmetrized = true;
        s.cov = sym;
        for (int i = 0; i < 8; ++i) {
            if (s.cov(i, i) < 0.0) {
                s.cov(i, i) = 0.0;
                s.resymmetrized = true;
            }
        }
    }

    double pos_weight_;
    double vel_weight_;
    Eigen::Matrix<double, 8, 8> motion_;
    Eigen::Matrix<double, 4, 8> observation_;
};

// --- Hungarian assignment ---------------------------------------------------

struct AssignmentResult {
    std::vector<std::pair<int, int>> matches;  // (row, col)
    std::vector<int> unmatched_rows;
    std::vector<int> unmatched_cols;
    double total_cost = 0.0;
};

// Minimum-cost one-to-one assignment; entries above `gate` are forbidden.
// Among assignments restricted to allowed entries, cardinality is maximized
// first, then total cost minimized (forbidden and dummy entries share one
// large sentinel, so every avoidable sentinel is avoided).
inline AssignmentResult hungarian(
    const std::vector<std::vector<double>>& cost,
    double gate = std::numeric_limits<double>::infinity()) {
    const int n_rows = static_cast<int>(cost.size());
    const int n_cols = n_rows > 0 ? static_cast<int>(cost[0].size()) : 0;
    AssignmentResult result;
    if (n_rows == 0 || n_cols == 0) {
        for (int i = 0; i < n_rows; ++i) result.unmatched_rows.push_back(i);
        for (int j = 0; j < n_cols; ++j) result.unmatched_cols.push_back(j);
        return result;
    }
    for (const auto& row : cost)
        if (static_cast<int>(row.size()) != n_cols)
            throw ShapeError("hungarian: ragged cost matrix");

    const double kBig = 1e7;
    const int n = std::max(n_rows, n_cols);
    auto entry = [&](int i, int j) -> double {
        if (i >= n_rows || j >= n_cols) return kBig;
        double c = cost[i][j];
        if (!std::isfinite(c)) throw ConfigError("hungarian: non-finite cost");
        return c > gate ? kBig : c;
    };

    // Shortest-augmenting-path assignment with potentials (1-indexed).
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
        std::vector<char> used(n + 1, false);
        do {
            used[j0] = true;
            int i0 = p[j0], j1 = -1;
            double delta = std::numeric_limits<double>::infinity();
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = entry(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<char> row_matched(n_rows, false), col_matched(n_cols, false);
    for (int j = 1; j <= n; ++j) {
        int i = p[j];
        if (i == 0) continue;
        int row = i - 1, col = j - 1;
        if (row >= n_rows || col >= n_cols) continue;
        if (cost[row][col] > gate) continue;  // sentinel assignment
        result.matches.emplace_back(row, col);
        result.total_cost += cost[row][col];
        row_matched[row] = true;
        col_matched[col] = true;
    }
    std::sort(result.matches.begin(), result.matches.end());
    for (int i = 0; i < n_rows; ++i)
        if (!row_matched[i]) result.unmatched_rows.push_back(i);
    for (int j = 0; j < n_cols; ++j)
        if (!col_matched[j]) result.unmatched_cols.push_back(j);
    return result;
}

// --- tracklets and association ----------------------------------------------

enum class TrackStatus { Active, Lost, Removed };

struct HistoryEntry {
    int frame = 0;
    Box box;
    double score = 0.0;
};

// One maintained identity: motion state, appearance state, lifecycle.
struct Tracklet {
    int id = 0;
    KalmanState kalman;
    std::vector<double> embedding;  // smoothed, unit norm
    TrackStatus status = TrackStatus::Active;
    int frames_since_seen = 0;
    bool is_target = false;
    std::vector<HistoryEntry> history;
    Box last_box;
    double last_score = 0.0;
};

struct AssociationConfig {
    double appearance_weight = 0.5;     // vs. motion IoU in stage 1
    double iou_gate = 0.3;              // minimum IoU for stage-2 matches
    double embedding_momentum = 0.9;
    int max_lost_frames = 30;
    double reid_recover_threshold = 0.4;  // cosine-distance bound
    double spawn_score = 0.5;             // min final_score to open a tracklet

    void validate() const {
        if (appearance_weight < 0.0 || appearance_weight > 1.0)
            throw ConfigError("assoc: appearance_weight must be in [0,1]");
        if (iou_gate < 0.0 || iou_gate > 1.0)
            throw ConfigError("assoc: iou_gate must be in [0,1]");
        if (embedding_momentum < 0.0 || embedding_momentum > 1.0)
            throw ConfigError("assoc: embedding_momentum must be in [0,1]");
        if (max_lost_frames < 0)
            throw ConfigError("assoc: max_lost_frames must be >= 0");
        if (reid_recover_threshold < 0.0 || reid_recover_threshold > 2.0)
            throw ConfigError("assoc: reid_recover_threshold must be in [0,2]");
        if (spawn_score < 0.0 || spawn_score > 1.0)
            throw ConfigError("assoc: spawn_score must be in [0,1]");
    }
};

struct AssociationOutcome {
    std::vector<std::pair<int, int>> matches;  // (tracklet index, candidate index)
    std::vector<int> spawned;                  // tracklet indices created
    std::vector<int> lost;                     // tracklet indices left unmatched
};

namespace detail {

inline double appearance_distance(const Tracklet& t, const Candidate& c) {
    double n = 0.0;
    for (double v : c.embedding) n += v * v;
    if (n <= 1e-12 || t.embedding.empty()) return 1.0;  // uninformative
    return embed_distance(t.embedding, c.embedding);
}

}  // namespace detail

// Three-clue box linking. Stage 1 matches every live tracklet by appearance
// plus predicted-box IoU, gated on appearance alone so a re-detection far
// from the stale motion estimate can still reclaim its tracklet. Stage 2
// matches what remains by IoU among tracklets seen in the previous frame.
// Unmatched high-score candidates spawn tracklets; unmatched tracklets age
// toward removal.
inline AssociationOutcome associate(std::vector<Tracklet>& tracklets,
                                    const std::vector<Candidate>& candidates,
                                    const AssociationConfig& cfg,
                                    const KalmanFilter& kf, int& next_id,
                                    int frame) {
    cfg.validate();
    AssociationOutcome outcome;

    std::vector<int> live;
    std::vector<char> was_active(tracklets.size(), false);
    for (std::size_t t = 0; t < tracklets.size(); ++t) {
        if (tracklets[t].status == TrackStatus::Removed) continue;
        was_active[t] = tracklets[t].status == TrackStatus::Active;
        kf.predict(tracklets[t].kalman);
        live.push_back(static_cast<int>(t));
    }

    std::vector<char> cand_matched(candidates.size(), false);
    std::vector<char> track_matched(tracklets.size(), false);

    // stage 1: appearance + motion
    if (!live.empty() && !candidates.empty()) {
        const double big = 1e3;
        std::vector<std::vector<double>> cost(
            live.size(), std::vector<double>(candidates.size(), big));
        for (std::size_t a = 0; a < live.size(); ++a) {
            const Tracklet& t = tracklets[live[a]];
            Box predicted = t.kalman.box();
            for (std::size_t b = 0; b < candidates.size(); ++b) {
                double app = detail::appearance_distance(t, candidates[b]);
                if (app > cfg.reid_recover_threshold) continue;  // gated
                double motion = 1.0 - iou(predicted, candidates[b].box);
                cost[a][b] = cfg.appearance_weight * app +
                             (1.0 - cfg.appearance_weight) * motion;
            }
        }
        AssignmentResult res = hungarian(cost, big - 1.0);
        for (auto [a, b] : res.matches) {
            track_matched[live[a]] = true;
            cand_matched[b] = true;
            outcome.matches.emplace_back(live[a], b);
        }
    }

    // stage 2: IoU fallback for tracklets that were active last frame
    {
        std::vector<int> rows;
        for (int t : live)
            if (!track_matched[t] && was_active[t]) rows.push_back(t);
        std::vector<int> cols;
        for (std::size_t b = 0; b < candidates.size(); ++b)
            if (!cand_matched[b]) cols.push_back(static_cast<int>(b));
        if (!rows.empty() && !cols.empty()) {
            std::vector<std::vector<double>> cost(
                rows.size(), std::vector<double>(cols.size(), 0.0));
            for (std::size_t a = 0; a < rows.size(); ++a) {
                Box predicted = tracklets[rows[a]].kalman.box();
                for (std::size_t b = 0; b < cols.size(); ++b)
                    cost[a][b] = 1.0 - iou(predicted, candidates[cols[b]].box);
            }
            AssignmentResult res = hungarian(cost, 1.0 - cfg.iou_gate);
            for (auto [a, b] : res.matches) {
                track_matched[rows[a]] = true;
                cand_matched[cols[b]] = true;
                outcome.matches.emplace_back(rows[a], cols[b]);
            }
        }
    }

    // apply matches
    for (auto [t, b] : outcome.matches) {
        Tracklet& tr = tracklets[t];
        const Candidate& c = candidates[b];
        kf.update(tr.kalman, box_to_measurement(c.box));
        double n = 0.0;
        for (double v : c.embedding) n += v * v;
        if (n > 1e-12) {
            std::vector<double> incoming = normalized(c.embedding);
            for (std::size_t k = 0; k < tr.embedding.size(); ++k)
                tr.embedding[k] = cfg.embedding_momentum * tr.embedding[k] +
                                  (1.0 - cfg.embedding_momentum) * incoming[k];
            tr.embedding = normalized(tr.embedding);
        }
        tr.status = TrackStatus::Active;
        tr.frames_since_seen = 0;
        tr.last_box = c.box;
        tr.last_score = c.final_score;
        tr.history.push_back({frame, c.box, c.final_score});
    }

    // age unmatched tracklets
    for (int t : live) {
        if (track_matched[t]) continue;
        Tracklet& tr = tracklets[t];
        tr.frames_since_seen += 1;
        tr.status = tr.frames_since_seen > cfg.max_lost_frames
                        ? TrackStatus::Removed
                        : TrackStatus::Lost;
        outcome.lost.push_back(t);
    }

    // spawn tracklets from unmatched confident candidates
    for (std::size_t b = 0; b < candidates.size(); ++b) {
        if (cand_matched[b]) continue;
        const Candidate& c = candidates[b];
        if (c.final_score < cfg.spawn_score) continue;
        Tracklet tr;
        tr.id = next_id++;
        tr.kalman = kf.initiate(box_to_measurement(c.box));
        tr.embedding = normalized(c.embedding);
        tr.status = TrackStatus::Active;
        tr.last_box = c.box;
        tr.last_score = c.final_score;
        tr.history.push_back({frame, c.box, c.final_score});
        tracklets.push_back(std::move(tr));
        outcome.spawned.push_back(static_cast<int>(tracklets.size()) - 1);
    }
    return outcome;
}

// Per-frame single-target output.
struct TargetOutput {
    int frame = 0;
    bool present = false;
    Box box;
    double confidence = 0.0;
    int target_id = -1;
    int active_count = 0;
};

// Maintains tracklets for the target and every detected similar; emits the
// target box per frame. The frame-1 annotation seeds the target tracklet and
// its re-id feature is kept for recovery after long absence.
class Tracker {
  public:
    explicit Tracker(AssociationConfig cfg = {}, KalmanFilter kf = KalmanFilter())
        : cfg_(cfg), kf_(kf) {
        cfg_.validate();
    }

    void initialize(const Box& target_box, std::span<const double> embedding,
                    int frame = 0) {
        if (!target_box.valid())
            throw InvalidBoxError("tracker: degenerate initial box");
        tracklets_.clear();
        Tracklet t;
        t.id = next_id_++;
        t.kalman = kf_.initiate(box_to_measurement(target_box));
        t.embedding = normalized(embedding);
        t.is_target = true;
        t.last_box = target_box;
        t.last_score = 1.0;
        t.history.push_back({frame, target_box, 1.0});
        tracklets_.push_back(std::move(t));
        initial_target_embedding_ = tracklets_[0].embedding;
        frame_ = frame;
        initialized_ = true;
    }

    TargetOutput step(const std::vector<Candidate>& candidates) {
        if (!initialized_) throw StateError("tracker: step before initialize");
        frame_ += 1;
        AssociationOutcome outcome =
            associate(tracklets_, candidates, cfg_, kf_, next_id_, frame_);

        TargetOutput out;
        out.frame = frame_;
        int target_idx = find_target();
        out.target_id = target_idx >= 0 ? tracklets_[target_idx].id : -1;

        int matched_cand = -1;
        if (target_idx >= 0) {
            for (auto [t, b] : outcome.matches)
                if (t == target_idx) matched_cand = b;
        }
        if (matched_cand >= 0) {
            out.present = true;
            out.box = candidates[matched_cand].box;
            out.confidence = candidates[matched_cand].final_score;
        } else {
            // target missing this frame: try re-identification against the
            // kept first-frame feature among candidates nobody else claimed
            int recovered = recover_target(candidates, outcome, target_idx);
            if (recovered >= 0) {
                out.present = true;
                out.box = candidates[recovered].box;
                out.confidence = candidates[recovered].final_score;
                out.target_id = tracklets_[find_target()].id;
            }
        }
        for (const Tracklet& t : tracklets_)
            out.active_count += t.status == TrackStatus::Active ? 1 : 0;
        return out;
    }

    const std::vector<Tracklet>& tracklets() const { return tracklets_; }
    const std::vector<double>& initial_target_embedding() const {
        return initial_target_embedding_;
    }

  private:
    int find_target() const {
        for (std::size_t t = 0; t < tracklets_.size(); ++t)
            if (tracklets_[t].is_target) return static_cast<int>(t);
        return -1;
    }

    // A candidate re-acquires the target when its embedding sits within the
    // recover threshold of the initial target feature and no other active
    // tracklet claimed it. Only candidates that opened a tracklet this frame
    // (or matched the lost target itself) are eligible.
    int recover_target(const std::vector<Candidate>& candidates,
                       const AssociationOutcome& outcome, int target_idx) {
        int best_cand = -1, best_tracklet = -1;
        double best = cfg_.reid_recover_threshold;
        for (int spawned : outcome.spawned) {
            const Tracklet& t = tracklets_[spawned];
            if (t.history.empty()) continue;
            double n = 0.0;
            for (double v : t.embedding) n += v * v;
            if (n <= 1e-12) continue;
            double d = embed_distance(initial_target_embedding_, t.embedding);
            if (d < best) {
                best = d;
                best_tracklet = spawned;
                best_cand = find_candidate(candidates, t.last_box);
            }
        }
        if (best_tracklet < 0 || best_cand < 0) return -1;
        if (target_idx >= 0) tracklets_[target_idx].is_target = false;
        tracklets_[best_tracklet].is_target = true;
        return best_cand;
    }

    static int find_candidate(const std::vector<Candidate>& candidates,
                              const Box& box) {
        for (std::size_t b = 0; b < candidates.size(); ++b)
            if (candidates[b].box == box) return static_cast<int>(b);
        return -1;
    }

    AssociationConfig cfg_;
    KalmanFilter kf_;
    std::vector<Tracklet> tracklets_;
    std::vector<double> initial_target_embedding_;
    int next_id_ = 0;
    int frame_ = 0;
    bool initialized_ = false;
};

// --- result records ----------------------------------------------------------

inline void write_results_csv(const std::string& path,
                              const std::vector<TargetOutput>& records) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "frame,present,x,y,w,h,confidence,target_id,active_tracklets\n";
    char buf[160];
    for (const TargetOutput& r : records) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.4f,%.4f,%.4f,%.4f,%.6f,%d,%d\n",
                      r.frame, r.present ? 1 : 0, r.box.x1, r.box.y1,
                      r.box.width(), r.box.height(), r.confidence, r.target_id,
                      r.active_count);
        out << buf;
    }
}

inline void write_results_json(const std::string& path,
                               const std::vector<TargetOutput>& records) {
    nlohmann::json arr = nlohmann::json::array();
    for (const TargetOutput& r : records) {
        arr.push_back({{"frame", r.frame},
                       {"present", r.present},
                       {"box", {r.box.x1, r.box.y1, r.box.width(), r.box.height()}},
                       {"confidence", r.confidence},
                       {"target_id", r.target_id},
                       {"active_tracklets", r.active_count}});
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << arr.dump(2) << "\n";
}

inline std::vector<TargetOutput> load_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    std::vector<TargetOutput> records;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (header) {
            header = false;
            continue;
        }
        if (line.empty()) continue;
        TargetOutput r;
        double x, y, w, h;
        int present;
        if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf,%lf,%lf,%d,%d",
                        &r.frame, &present, &x, &y, &w, &h, &r.confidence,
                        &r.target_id, &r.active_count) != 9)
            throw IoError("bad result row: " + line);
        r.present = present != 0;
        r.box = Box::from_xywh(x, y, w, h);
        records.push_back(r);
    }
    return records;
}

}  // namespace longtrack
