#include <catch2/catch_amalgamated.hpp>
#include <functional>

#include "longtrack/assoc.hpp"

using namespace longtrack;

namespace {

// exhaustive assignment oracle: maximum cardinality over allowed entries,
// minimum total cost among those
struct BruteResult {
    int cardinality = 0;
    double cost = 0.0;
};

BruteResult brute_force_assignment(const std::vector<std::vector<double>>& cost,
                                   double gate) {
    int n = static_cast<int>(cost.size());
    int m = n > 0 ? static_cast<int>(cost[0].size()) : 0;
    BruteResult best;
    std::vector<int> col_used(m, 0);
    std::function<void(int, int, double)> rec = [&](int row, int matched,
                                                    double acc) {
        if (row == n) {
            if (matched > best.cardinality ||
                (matched == best.cardinality && acc < best.cost)) {
                best.cardinality = matched;
                best.cost = acc;
            }
            return;
        }
        rec(row + 1, matched, acc);  // leave row unmatched
        for (int j = 0; j < m; ++j) {
            if (col_used[j] || cost[row][j] > gate) continue;
            col_used[j] = 1;
            rec(row + 1, matched + 1, acc + cost[row][j]);
            col_used[j] = 0;
        }
    };
    best.cost = 1e300;
    rec(0, 0, 0.0);
    if (best.cardinality == 0) best.cost = 0.0;
    return best;
}

Candidate make_candidate(const Box& b, double score,
                         const std::vector<double>& emb) {
    Candidate c;
    c.box = b;
    c.cls_score = score;
    c.centerness = 1.0;
    c.final_score = score;
    c.embedding = emb;
    return c;
}

std::vector<double> unit_vec(int dim, int axis) {
    std::vector<double> v(dim, 0.0);
    v[axis] = 1.0;
    return v;
}

// textbook reference filter with its own matrix algebra (raw arrays,
// Gauss-Jordan inverse)
struct ReferenceKalman {
    double wp, wv;
    std::array<double, 8> mean{};
    std::array<std::array<double, 8>, 8> cov{};

    void initiate(const std::array<double, 4>& z) {
        mean = {z[0], z[1], z[2], z[3], 0, 0, 0, 0};
        std::array<double, 8> s{2 * wp * z[3], 2 * wp * z[3], 1e-2,
                                2 * wp * z[3], 10 * wv * z[3], 10 * wv * z[3],
                                1e-5, 10 * wv * z[3]};
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) cov[i][j] = i == j ? s[i] * s[i] : 0.0;
    }

    void predict() {
        double h = mean[3];
        std::array<double, 8> next{};
        for (int i = 0; i < 4; ++i) next[i] = mean[i] + mean[i + 4];
        for (int i = 4; i < 8; ++i) next[i] = mean[i];
        mean = next;
        // F P F^T with F = [I I; 0 I]
        std::array<std::array<double, 8>, 8> p{};
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) {
                double v = cov[i][j];
                if (i < 4) v += cov[i + 4][j];
                p[i][j] = v;
            }
        std::array<std::array<double, 8>, 8> q{};
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) {
                double v = p[i][j];
                if (j < 4) v += p[i][j + 4];
                q[i][j] = v;
            }
        std::array<double, 8> s{wp * h, wp * h, 1e-2, wp * h,
                                wv * h, wv * h, 1e-5, wv * h};
        for (int i = 0; i < 8; ++i) q[i][i] += s[i] * s[i];
        cov = q;
    }

    void update(const std::array<double, 4>& z) {
        double h = mean[3];
        std::array<double, 4> rdiag{wp * h, wp * h, 1e-1, wp * h};
        // S = P[0:4][0:4] + R, inverted by Gauss-Jordan
        double s[4][8] = {};
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) s[i][j] = cov[i][j];
            s[i][i] += rdiag[i] * rdiag[i];
            s[i][4 + i] = 1.0;
        }
        for (int c = 0; c < 4; ++c) {
            int pivot = c;
            for (int r = c + 1; r < 4; ++r)
                if (std::abs(s[r][c]) > std::abs(s[pivot][c])) pivot = r;
            std::swap_ranges(s[c], s[c] + 8, s[pivot]);
            double d = s[c][c];
            for (int k = 0; k < 8; ++k) s[c][k] /= d;
            for (int r = 0; r < 4; ++r) {
                if (r == c) continue;
                double f = s[r][c];
                for (int k = 0; k < 8; ++k) s[r][k] -= f * s[c][k];
            }
        }
        double sinv[4][4];
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) sinv[i][j] = s[i][4 + j];
        // K = P H^T S^-1, H = [I 0]
        double gain[8][4] = {};
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 4; ++j)
                for (int k = 0; k < 4; ++k) gain[i][j] += cov[i][k] * sinv[k][j];
        std::array<double, 4> innov{z[0] - mean[0], z[1] - mean[1],
                                    z[2] - mean[2], z[3] - mean[3]};
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 4; ++j) mean[i] += gain[i][j] * innov[j];
        // P = (I - K H) P  (plain form; matches Joseph within tolerance)
        std::array<std::array<double, 8>, 8> next{};
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) {
                double v = cov[i][j];
                for (int k = 0; k < 4; ++k) v -= gain[i][k] * cov[k][j];
                next[i][j] = v;
            }
        cov = next;
    }
};

}  // namespace

TEST_CASE("embed_distance basics", "[assoc]") {
    std::vector<double> a = unit_vec(128, 0);
    std::vector<double> b = unit_vec(128, 1);
    std::vector<double> na(128, 0.0);
    na[0] = -1.0;
    REQUIRE(embed_distance(a, a) == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(embed_distance(a, b) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(embed_distance(a, na) == Catch::Approx(2.0).margin(1e-12));
    REQUIRE_THROWS_AS(embed_distance(a, std::vector<double>(128, 0.0)),
                      ConfigError);
    // symmetry; zero only for positively parallel vectors
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> u(16), v(16);
        for (double& x : u) x = rng.normal();
        for (double& x : v) x = rng.normal();
        REQUIRE(embed_distance(u, v) ==
                Catch::Approx(embed_distance(v, u)).margin(1e-12));
        std::vector<double> scaled = u;
        for (double& x : scaled) x *= 3.7;
        REQUIRE(embed_distance(u, scaled) == Catch::Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("kalman: noiseless constant velocity advances the mean", "[assoc]") {
    KalmanFilter kf(0.0, 0.0);
    KalmanState s = kf.initiate(Eigen::Vector4d(0.0, 0.0, 1.0, 1.0));
    s.mean(4) = 1.0;  // vx = 1 per frame
    for (int k = 0; k < 3; ++k) kf.predict(s);
    REQUIRE(s.mean(0) == Catch::Approx(3.0).margin(1e-12));
    REQUIRE(s.mean(1) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("kalman: consistent measurement keeps the mean, shrinks covariance",
          "[assoc]") {
    KalmanFilter kf;
    KalmanState s = kf.initiate(Eigen::Vector4d(50.0, 60.0, 1.0, 40.0));
    kf.predict(s);
    Eigen::Vector4d predicted = s.mean.head<4>();
    double trace_before = s.cov.trace();
    kf.update(s, predicted);
    for (int i = 0; i < 4; ++i)
        REQUIRE(s.mean(i) == Catch::Approx(predicted(i)).margin(1e-9));
    REQUIRE(s.cov.trace() < trace_before);
}

TEST_CASE("kalman matches the textbook reference on a random walk", "[assoc]") {
    KalmanFilter kf;
    ReferenceKalman ref{1.0 / 20.0, 1.0 / 160.0};
    Rng rng(21);
    Eigen::Vector4d z0(100.0, 90.0, 1.2, 50.0);
    KalmanState s = kf.initiate(z0);
    ref.initiate({z0(0), z0(1), z0(2), z0(3)});
    for (int t = 0; t < 40; ++t) {
        kf.predict(s);
        ref.predict();
        Eigen::Vector4d z(100.0 + rng.normal(0.0, 4.0),
                          90.0 + rng.normal(0.0, 4.0),
                          1.2 + rng.normal(0.0, 0.02),
                          50.0 + rng.normal(0.0, 1.5));
        kf.update(s, z);
        ref.update({z(0), z(1), z(2), z(3)});
        for (int i = 0; i < 8; ++i)
            REQUIRE(s.mean(i) == Catch::Approx(ref.mean[i]).margin(1e-9));
    }
}

TEST_CASE("kalman covariance stays symmetric PSD", "[assoc]") {
    KalmanFilter kf;
    Rng rng(31);
    KalmanState s = kf.initiate(Eigen::Vector4d(10, 10, 1.0, 30.0));
    for (int t = 0; t < 60; ++t) {
        kf.predict(s);
        if (t % 3 != 0)
            kf.update(s, Eigen::Vector4d(10 + rng.normal(0, 5), 10 + rng.normal(0, 5),
                                         1.0 + rng.normal(0, 0.05),
                                         30.0 + rng.normal(0, 2)));
        REQUIRE((s.cov - s.cov.transpose()).cwiseAbs().maxCoeff() <= 1e-9);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 8, 8>> es(s.cov);
        REQUIRE(es.eigenvalues().minCoeff() >= -1e-9);
    }
}

TEST_CASE("hungarian: 2x2 example and gating", "[assoc]") {
    AssignmentResult r = hungarian({{1, 2}, {2, 1}});
    REQUIRE(r.matches == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});
    REQUIRE(r.total_cost == Catch::Approx(2.0));

    AssignmentResult gated = hungarian({{5.0}}, 1.0);
    REQUIRE(gated.matches.empty());
    REQUIRE(gated.unmatched_rows == std::vector<int>{0});
    REQUIRE(gated.unmatched_cols == std::vector<int>{0});
}

TEST_CASE("hungarian equals exhaustive search on random matrices", "[assoc]") {
    Rng rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        int n = rng.uniform_int(1, 6), m = rng.uniform_int(1, 6);
        bool gated = trial % 3 == 0;
        double gate = gated ? 0.7 : 1e18;
        std::vector<std::vector<double>> cost(n, std::vector<double>(m));
        for (auto& row : cost)
            for (double& v : row) v = rng.uniform_int(0, 1024) / 1024.0;
        AssignmentResult ours = hungarian(cost, gate);
        BruteResult brute = brute_force_assignment(cost, gate);
        REQUIRE(static_cast<int>(ours.matches.size()) == brute.cardinality);
        REQUIRE(ours.total_cost == brute.cost);  // dyadic values: exact
        // one-to-one
        std::vector<int> rows, cols;
        for (auto [r, c] : ours.matches) {
            rows.push_back(r);
            cols.push_back(c);
        }
        std::sort(rows.begin(), rows.end());
        std::sort(cols.begin(), cols.end());
        REQUIRE(std::adjacent_find(rows.begin(), rows.end()) == rows.end());
        REQUIRE(std::adjacent_find(cols.begin(), cols.end()) == cols.end());
    }
}

TEST_CASE("associate: matched, aged, and spawned tracklets", "[assoc]") {
    AssociationConfig cfg;
    KalmanFilter kf;
    int next_id = 0;
    std::vector<Tracklet> tracklets;

    Box b{100, 100, 150, 150};
    std::vector<double> emb = unit_vec(128, 3);
    Candidate seed = make_candidate(b, 0.9, emb);

    // spawn from an unmatched confident candidate
    AssociationOutcome o1 = associate(tracklets, {seed}, cfg, kf, next_id, 1);
    REQUIRE(o1.spawned.size() == 1);
    REQUIRE(tracklets.size() == 1);
    REQUIRE(tracklets[0].status == TrackStatus::Active);

    // a candidate at the predicted position with the same embedding matches
    AssociationOutcome o2 = associate(tracklets, {seed}, cfg, kf, next_id, 2);
    REQUIRE(o2.matches.size() == 1);
    REQUIRE(tracklets[0].frames_since_seen == 0);

    // no candidates: the tracklet ages into lost
    AssociationOutcome o3 = associate(tracklets, {}, cfg, kf, next_id, 3);
    REQUIRE(o3.lost.size() == 1);
    REQUIRE(tracklets[0].frames_since_seen == 1);
    REQUIRE(tracklets[0].status == TrackStatus::Lost);

    // low-score candidates may match but never spawn
    Candidate weak = make_candidate(Box{300, 300, 340, 340}, 0.2, unit_vec(128, 5));
    AssociationOutcome o4 = associate(tracklets, {weak}, cfg, kf, next_id, 4);
    REQUIRE(o4.spawned.empty());
    REQUIRE(tracklets.size() == 1);

    // after max_lost_frames the tracklet is removed
    for (int k = 0; k < cfg.max_lost_frames + 2; ++k)
        associate(tracklets, {}, cfg, kf, next_id, 5 + k);
    REQUIRE(tracklets[0].status == TrackStatus::Removed);
}

TEST_CASE("associate: smoothed embedding keeps unit norm", "[assoc]") {
    AssociationConfig cfg;
    KalmanFilter kf;
    int next_id = 0;
    std::vector<Tracklet> tracklets;
    Rng rng(51);
    Box b{50, 50, 90, 90};
    for (int t = 0; t < 10; ++t) {
        std::vector<double> emb(128);
        for (double& v : emb) v = rng.normal();
        associate(tracklets, {make_candidate(b, 0.9, emb)}, cfg, kf, next_id, t);
        double norm2 = 0.0;
        for (double v : tracklets[0].embedding) norm2 += v * v;
        REQUIRE(std::sqrt(norm2) == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("associate never assigns one candidate to two tracklets", "[assoc]") {
    AssociationConfig cfg;
    KalmanFilter kf;
    Rng rng(61);
    for (int trial = 0; trial < 20; ++trial) {
        int next_id = 0;
        std::vector<Tracklet> tracklets;
        std::vector<Candidate> first;
        for (int k = 0; k < 4; ++k) {
            double x = 40.0 * k + rng.uniform(0, 10);
            first.push_back(make_candidate(Box{x, 10, x + 30, 45}, 0.9,
                                           unit_vec(128, k)));
        }
        associate(tracklets, first, cfg, kf, next_id, 1);
        std::vector<Candidate> second;
        for (int k = 0; k < 3; ++k) {
            double x = 40.0 * k + rng.uniform(0, 10);
            second.push_back(make_candidate(Box{x, 12, x + 30, 47}, 0.9,
                                            unit_vec(128, rng.uniform_int(0, 3))));
        }
        AssociationOutcome o = associate(tracklets, second, cfg, kf, next_id, 2);
        std::vector<int> cands;
        for (auto [t, c] : o.matches) cands.push_back(c);
        std::sort(cands.begin(), cands.end());
        REQUIRE(std::adjacent_find(cands.begin(), cands.end()) == cands.end());
    }
}

TEST_CASE("tracker: step before initialize is a state error", "[assoc]") {
    Tracker tracker;
    REQUIRE_THROWS_AS(tracker.step({}), StateError);
}

TEST_CASE("tracker: visible target is emitted, absence is reported", "[assoc]") {
    Tracker tracker;
    Box gt{100, 100, 150, 160};
    std::vector<double> emb = unit_vec(128, 7);
    tracker.initialize(gt, emb);

    TargetOutput out = tracker.step({make_candidate(gt, 0.88, emb)});
    REQUIRE(out.present);
    REQUIRE(out.confidence == Catch::Approx(0.88));
    REQUIRE(iou(out.box, gt) == Catch::Approx(1.0));

    TargetOutput missing = tracker.step({});
    REQUIRE_FALSE(missing.present);
}

TEST_CASE("tracker: exactly one target tracklet, stable id while matched",
          "[assoc]") {
    Tracker tracker;
    Box gt{60, 60, 110, 110};
    std::vector<double> target_emb = unit_vec(128, 1);
    tracker.initialize(gt, target_emb);
    int first_id = -1;
    Rng rng(71);
    for (int t = 0; t < 20; ++t) {
        std::vector<Candidate> cands;
        Box moved{60.0 + t, 60.0, 110.0 + t, 110.0};
        cands.push_back(make_candidate(moved, 0.9, target_emb));
        cands.push_back(
            make_candidate(Box{200, 200, 240, 240}, 0.8, unit_vec(128, 9)));
        TargetOutput out = tracker.step(cands);
        REQUIRE(out.present);
        if (first_id < 0) first_id = out.target_id;
        REQUIRE(out.target_id == first_id);
        int targets = 0;
        for (const Tracklet& tr : tracker.tracklets())
            targets += tr.is_target ? 1 : 0;
        REQUIRE(targets == 1);
    }
}

TEST_CASE("tracker: re-identification recovers the target after removal",
          "[assoc]") {
    AssociationConfig cfg;
    cfg.max_lost_frames = 5;
    Tracker tracker(cfg);
    Box gt{40, 40, 90, 90};
    std::vector<double> target_emb = unit_vec(128, 2);
    tracker.initialize(gt, target_emb);

    // distractor stays visible the whole time
    Box db{200, 60, 250, 110};
    std::vector<double> distractor_emb = unit_vec(128, 11);
    tracker.step({make_candidate(gt, 0.9, target_emb),
                  make_candidate(db, 0.85, distractor_emb)});

    // long absence: target tracklet ages out entirely
    for (int t = 0; t < 8; ++t) {
        TargetOutput out = tracker.step({make_candidate(db, 0.85, distractor_emb)});
        REQUIRE_FALSE(out.present);
    }

    // reappearance elsewhere: recovered through the kept first-frame feature
    Box back{140, 150, 190, 200};
    TargetOutput out = tracker.step({make_candidate(back, 0.9, target_emb),
                                     make_candidate(db, 0.85, distractor_emb)});
    REQUIRE(out.present);
    REQUIRE(iou(out.box, back) == Catch::Approx(1.0));
    int targets = 0;
    for (const Tracklet& tr : tracker.tracklets())
        targets += tr.is_target ? 1 : 0;
    REQUIRE(targets == 1);
}
