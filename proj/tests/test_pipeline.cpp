#include <catch2/catch_amalgamated.hpp>

#include "longtrack/config.hpp"
#include "longtrack/pipeline.hpp"

using namespace longtrack;

namespace {

ScenarioConfig suite_scenario(const std::string& name) {
    for (const ScenarioConfig& c : standard_suite())
        if (c.name == name) return c;
    throw std::runtime_error("unknown scenario " + name);
}

}  // namespace

TEST_CASE("synthetic controller: generated vector length equals param_count",
          "[pipeline]") {
    EvidenceLayout layout = desk_layout(256);
    ChannelPlan plan = desk_channel_plan(layout);
    HeadParams params;
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        IntegrationConfig cfg;
        for (int u = 1; u <= 6; ++u) {
            if (rng.uniform() < 0.5) cfg.cls_layers.push_back(u);
            if (rng.uniform() < 0.5) cfg.reg_layers.push_back(u);
        }
        ControllerWeights ctrl = synthetic_controller(layout, plan, cfg, params);
        REQUIRE(static_cast<std::size_t>(ctrl.out_channels) ==
                param_count(cfg, plan));
    }
}

TEST_CASE("detect on rendered maps: a single sharp blob is found", "[pipeline]") {
    ScenarioConfig sc;
    sc.motion_model = MotionModel::Linear;
    sc.distractor_count = 0;
    sc.frame_count = 60;
    sc.seed = 404;
    SyntheticSequence seq = generate_sequence(sc);

    TrackSettings settings;
    EvidenceLayout layout = desk_layout(sc.image_size);
    ChannelPlan plan = desk_channel_plan(layout);
    ControllerWeights ctrl =
        synthetic_controller(layout, plan, settings.integration, settings.head);
    RenderedFrame first = render_feature_maps(seq, 0, layout);
    TemplateContext ctx = make_template_context(
        first.levels[0], seq.target().boxes[0], CorrelationMethod::DC,
        settings.integration, plan, ctrl);
    TrackingHead head(layout, CorrelationMethod::DC, std::move(ctx),
                      settings.head);

    for (int t : {10, 30, 55}) {
        RenderedFrame f = render_feature_maps(seq, t, layout);
        std::vector<Candidate> cands = head.detect(f.levels, f.embedding, 5);
        REQUIRE_FALSE(cands.empty());
        REQUIRE(iou(cands[0].box, seq.target().boxes[t]) >= 0.7);
        REQUIRE(cands[0].embedding.size() == kEmbedDim);
    }
}

TEST_CASE("detect on rendered maps: two plants survive suppression",
          "[pipeline]") {
    ScenarioConfig sc;
    sc.motion_model = MotionModel::Linear;
    sc.distractor_count = 1;
    sc.frame_count = 60;
    sc.seed = 405;
    SyntheticSequence seq = generate_sequence(sc);

    TrackSettings settings;
    EvidenceLayout layout = desk_layout(sc.image_size);
    ChannelPlan plan = desk_channel_plan(layout);
    ControllerWeights ctrl =
        synthetic_controller(layout, plan, settings.integration, settings.head);
    RenderedFrame first = render_feature_maps(seq, 0, layout);
    TemplateContext ctx = make_template_context(
        first.levels[0], seq.target().boxes[0], CorrelationMethod::DC,
        settings.integration, plan, ctrl);
    TrackingHead head(layout, CorrelationMethod::DC, std::move(ctx),
                      settings.head);

    // pick a frame where the two objects are clearly apart
    int frame = -1;
    for (int t = 1; t < seq.frames(); ++t)
        if (center_distance(seq.objects[0].boxes[t], seq.objects[1].boxes[t]) >
            120.0) {
            frame = t;
            break;
        }
    REQUIRE(frame > 0);
    RenderedFrame f = render_feature_maps(seq, frame, layout);
    std::vector<Candidate> cands = head.detect(f.levels, f.embedding, 5);
    REQUIRE(cands.size() >= 2);
    bool target_hit = false, distractor_hit = false;
    for (const Candidate& c : cands) {
        target_hit |= iou(c.box, seq.objects[0].boxes[frame]) >= 0.5;
        distractor_hit |= iou(c.box, seq.objects[1].boxes[frame]) >= 0.5;
    }
    REQUIRE(target_hit);
    REQUIRE(distractor_hit);
}

TEST_CASE("detection recall on a crossing scenario stays high", "[pipeline]") {
    SyntheticSequence seq = generate_sequence(suite_scenario("s04"));
    TrackSettings settings;
    RecallStats stats = detection_recall(seq, settings);
    REQUIRE(stats.total > 0);
    REQUIRE(stats.recall() >= 0.95);
}

TEST_CASE("reid mode tracks through a crossing without switching", "[pipeline]") {
    SyntheticSequence seq = generate_sequence(suite_scenario("s04"));
    TrackSettings settings;
    std::vector<TargetOutput> records =
        track_scenario(seq, TrackMode::Reid, settings);
    REQUIRE(records.size() == static_cast<std::size_t>(seq.frames()));
    REQUIRE(identity_switches(output_boxes(records),
                              per_frame_object_boxes(seq)) == 0);
    OpeScores ope = ope_curves(to_sequence_result(records, seq));
    REQUIRE(ope.success_auc >= 0.95);
}

TEST_CASE("top1 mode switches identity on the crossing fixture", "[pipeline]") {
    SyntheticSequence seq = generate_sequence(suite_scenario("s07"));
    TrackSettings settings;
    std::vector<TargetOutput> top1 =
        track_scenario(seq, TrackMode::Top1, settings);
    std::vector<TargetOutput> reid =
        track_scenario(seq, TrackMode::Reid, settings);
    int sw_top1 =
        identity_switches(output_boxes(top1), per_frame_object_boxes(seq));
    int sw_reid =
        identity_switches(output_boxes(reid), per_frame_object_boxes(seq));
    REQUIRE(sw_top1 >= 1);
    REQUIRE(sw_reid == 0);
}

TEST_CASE("disappearance intervals drive the present flag", "[pipeline]") {
    // association-only run on noiseless oracle detections
    ScenarioConfig sc = suite_scenario("s03");
    sc.embedding_noise_sigma = 0.0;
    sc.box_noise_sigma = 0.0;
    SyntheticSequence seq = generate_sequence(sc);
    std::vector<std::vector<Candidate>> frames;
    OracleNoise none;
    for (int t = 0; t < seq.frames(); ++t)
        frames.push_back(oracle_detect(seq, t, none));
    TrackSettings settings;
    std::vector<TargetOutput> records =
        track_candidates(frames, seq.target().boxes[0], TrackMode::Assoc,
                         settings);
    int agree = 0;
    for (int t = 0; t < seq.frames(); ++t)
        agree += records[t].present == seq.target().visible[t] ? 1 : 0;
    REQUIRE(agree == seq.frames());
}

TEST_CASE("full mode re-runs bit-identically", "[pipeline]") {
    SyntheticSequence seq = generate_sequence(suite_scenario("s02"));
    TrackSettings settings;
    std::vector<TargetOutput> a = track_scenario(seq, TrackMode::Full, settings);
    std::vector<TargetOutput> b = track_scenario(seq, TrackMode::Full, settings);
    REQUIRE(a.size() == b.size());
    for (std::size_t t = 0; t < a.size(); ++t) {
        REQUIRE(a[t].present == b[t].present);
        REQUIRE(a[t].box == b[t].box);
        REQUIRE(a[t].confidence == b[t].confidence);
        REQUIRE(a[t].target_id == b[t].target_id);
        REQUIRE(a[t].active_count == b[t].active_count);
    }
}

TEST_CASE("pc mode follows position, not appearance", "[pipeline]") {
    SyntheticSequence seq = generate_sequence(suite_scenario("s04"));
    TrackSettings settings;
    std::vector<TargetOutput> records =
        track_scenario(seq, TrackMode::PC, settings);
    // pc emits whenever candidates exist; on this scenario that is every frame
    int present = 0;
    for (const TargetOutput& r : records) present += r.present ? 1 : 0;
    REQUIRE(present == seq.frames());
}

TEST_CASE("all four correlation methods run the full pipeline", "[pipeline]") {
    ScenarioConfig sc;
    sc.motion_model = MotionModel::Linear;
    sc.distractor_count = 1;
    sc.frame_count = 40;
    sc.seed = 406;
    SyntheticSequence seq = generate_sequence(sc);
    for (CorrelationMethod m :
         {CorrelationMethod::CC, CorrelationMethod::DW, CorrelationMethod::HP,
          CorrelationMethod::DC}) {
        TrackSettings settings;
        settings.correlation = m;
        std::vector<TargetOutput> records =
            track_scenario(seq, TrackMode::Reid, settings);
        OpeScores ope = ope_curves(to_sequence_result(records, seq));
        INFO("method " << to_string(m));
        REQUIRE(ope.success_auc >= 0.9);
    }
}

TEST_CASE("engine config round-trips and validates", "[pipeline]") {
    EngineConfig cfg;
    cfg.seed = 42;
    cfg.track.correlation = CorrelationMethod::HP;
    cfg.track.assoc.appearance_weight = 0.7;
    cfg.track.top_k = 7;
    nlohmann::json j = to_json(cfg);
    EngineConfig back = engine_config_from_json(j);
    REQUIRE(back.seed == 42);
    REQUIRE(back.track.correlation == CorrelationMethod::HP);
    REQUIRE(back.track.assoc.appearance_weight == Catch::Approx(0.7));
    REQUIRE(back.track.top_k == 7);

    nlohmann::json bad = j;
    bad["association"]["appearance_weight"] = 1.5;
    REQUIRE_THROWS_AS(engine_config_from_json(bad), ConfigError);
    nlohmann::json bad2 = j;
    bad2["integration"]["cls_layers"] = {0, 3};
    REQUIRE_THROWS_AS(engine_config_from_json(bad2), ConfigError);
}
