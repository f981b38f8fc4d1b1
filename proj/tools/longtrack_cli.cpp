// Command-line entry point: simulate scenarios, run tracking, evaluate
// results, and sweep the correlation/association ablation grid.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "longtrack/longtrack.hpp"

#include "CLI11.hpp"

namespace fs = std::filesystem;
using namespace longtrack;

namespace {

ScenarioConfig resolve_scenario(const std::string& arg) {
    for (const ScenarioConfig& c : standard_suite()) {
        if (c.name == arg) return c;
        if (arg.size() > c.name.size() &&
            arg.compare(arg.size() - c.name.size(), c.name.size(), c.name) == 0 &&
            !fs::exists(arg) && arg.find('/') != std::string::npos)
            return c;  // e.g. "fixtures/s07" without the files on disk
    }
    fs::path p(arg);
    if (fs::is_directory(p)) return load_scenario((p / "scenario.json").string());
    if (fs::exists(p)) return load_scenario(p.string());
    throw IoError("scenario '" + arg +
                  "' is neither a builtin id nor a readable path");
}

struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;

    EngineConfig engine() const {
        EngineConfig cfg;
        if (!config_path.empty()) cfg = load_engine_config(config_path);
        if (seed_set) cfg.seed = seed;
        return cfg;
    }
};

void ensure_dir(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out);
}

std::vector<TargetOutput> run_track(const EngineConfig& cfg,
                                    const std::string& scenario_arg,
                                    const std::string& dets_path,
                                    const std::string& emb_path,
                                    const std::string& gt_path, TrackMode mode,
                                    bool seed_set, std::uint64_t seed) {
    if (!scenario_arg.empty()) {
        ScenarioConfig sc = resolve_scenario(scenario_arg);
        if (seed_set) sc.seed = seed;
        SyntheticSequence seq = generate_sequence(sc);
        if (mode == TrackMode::Assoc) {
            std::vector<std::vector<Candidate>> frames;
            for (int t = 0; t < seq.frames(); ++t)
                frames.push_back(oracle_detect(seq, t, oracle_noise_from(sc)));
            return track_candidates(frames, seq.target().boxes[0], mode,
                                    cfg.track);
        }
        return track_scenario(seq, mode, cfg.track);
    }
    if (dets_path.empty() || emb_path.empty() || gt_path.empty())
        throw IoError("track: need --scenario, or --dets/--emb/--gt together");
    DetectionFile dets = load_detections(dets_path, emb_path);
    std::vector<std::optional<Box>> gt = load_groundtruth(gt_path);
    if (gt.size() != dets.frames.size())
        throw IoError("track: detection and groundtruth frame counts differ (" +
                      std::to_string(dets.frames.size()) + " vs " +
                      std::to_string(gt.size()) + ")");
    if (gt.empty() || !gt[0].has_value())
        throw IoError("track: first-frame annotation missing");
    return track_candidates(dets.frames, *gt[0], mode, cfg.track);
}

void cmd_simulate(const CommonOpts& common, const std::string& scenario_arg,
                  const std::string& out, int clutter) {
    common.engine();  // validates the config file if one was given
    ScenarioConfig sc = resolve_scenario(scenario_arg);
    if (common.seed_set) sc.seed = common.seed;
    SyntheticSequence seq = generate_sequence(sc);
    ensure_dir(out);
    fs::path dir(out);
    save_scenario(sc, (dir / "scenario.json").string());
    write_groundtruth(seq, (dir / "groundtruth.txt").string());
    write_visibility(seq, (dir / "visible.txt").string());
    OracleNoise noise = oracle_noise_from(sc, clutter);
    write_oracle_detections(seq, noise, (dir / "dets.csv").string(),
                            (dir / "emb.csv").string());
    std::cout << "wrote scenario '" << sc.name << "' (" << seq.frames()
              << " frames) to " << out << "\n";
}

void cmd_track(const CommonOpts& common, const std::string& scenario_arg,
               const std::string& dets, const std::string& emb,
               const std::string& gt, const std::string& mode_str,
               const std::string& correlation, const std::string& out,
               int topk) {
    EngineConfig cfg = common.engine();
    if (!correlation.empty())
        cfg.track.correlation = correlation_from_string(correlation);
    if (topk > 0) cfg.track.top_k = topk;
    cfg.validate();
    TrackMode mode = mode_from_string(mode_str);
    std::vector<TargetOutput> records =
        run_track(cfg, scenario_arg, dets, emb, gt, mode, common.seed_set,
                  common.seed);
    ensure_dir(out);
    fs::path dir(out);
    write_results_csv((dir / "result.csv").string(), records);
    write_results_json((dir / "result.json").string(), records);
    int present = 0;
    for (const TargetOutput& r : records) present += r.present ? 1 : 0;
    std::cout << "tracked " << records.size() << " frames (" << present
              << " present) -> " << out << "\n";
}

void cmd_eval(const CommonOpts& common, const std::string& results_path,
              const std::string& gt_path, const std::string& visible_path,
              const std::string& dets, const std::string& emb,
              const std::string& out) {
    EngineConfig cfg = common.engine();
    std::vector<TargetOutput> records = load_results_csv(results_path);
    std::vector<std::optional<Box>> gt = load_groundtruth(gt_path);
    std::vector<bool> visible;
    if (!visible_path.empty()) {
        visible = load_visibility(visible_path);
    } else {
        for (const auto& b : gt) visible.push_back(b.has_value());
    }
    if (records.size() != gt.size() || visible.size() != gt.size())
        throw IoError("eval: frame counts differ between results (" +
                      std::to_string(records.size()) + "), groundtruth (" +
                      std::to_string(gt.size()) + ") and visibility (" +
                      std::to_string(visible.size()) + ")");
    SequenceResult seq = to_sequence_result(records, gt, visible);

    ensure_dir(out);
    fs::path dir(out);
    MetricsReport report;
    OpeScores ope = ope_curves(seq);
    report.success_auc = ope.success_auc;
    report.precision_20 = ope.precision_at_20;
    PresenceRates rates = presence_rates(seq, cfg.tpr_iou);
    report.tpr = rates.tpr;
    report.tnr = rates.tnr;
    report.maxgm = max_gm(report.tpr, report.tnr);
    VotLtScores vot = vot_lt_fscore(seq, confidence_thresholds(seq));
    report.f_score = vot.f_score;
    report.pr = vot.pr;
    report.re = vot.re;
    write_report_json((dir / "report.json").string(), report);
    write_curve_csv((dir / "success_curve.csv").string(), success_curve(seq));

    if (!dets.empty() && !emb.empty()) {
        DetectionFile df = load_detections(dets, emb);
        if (df.frames.size() != gt.size())
            throw IoError("eval: detection frame count differs from groundtruth");
        std::vector<std::vector<ScoredBox>> per_frame(df.frames.size());
        for (std::size_t f = 0; f < df.frames.size(); ++f)
            for (const Candidate& c : df.frames[f])
                per_frame[f].push_back({c.box, c.final_score});
        std::vector<std::pair<double, double>> rows;
        for (int k : cfg.topk_values)
            rows.emplace_back(k, topk_upper_bound(per_frame, gt, k));
        std::ofstream tk((dir / "topk.csv").string());
        if (!tk) throw IoError("cannot write topk.csv");
        tk << "k,success_auc\n";
        for (auto [k, v] : rows) tk << static_cast<int>(k) << "," << v << "\n";
    }
    std::cout << to_json(report).dump(2) << "\n";
}

void cmd_ablate(const CommonOpts& common, const std::string& out,
                const std::vector<std::string>& scenario_args) {
    EngineConfig cfg = common.engine();
    std::vector<ScenarioConfig> suite;
    if (scenario_args.empty()) {
        suite = standard_suite();
    } else {
        for (const std::string& s : scenario_args)
            suite.push_back(resolve_scenario(s));
    }
    std::vector<AblationRow> rows = run_ablation(suite, cfg.track);
    ensure_dir(out);
    write_ablation_csv((fs::path(out) / "ablation.csv").string(), rows);
    std::printf("%-5s %-5s %9s %10s %9s %10s %8s\n", "corr", "mode", "success",
                "precision", "switches", "ms/frame", "recall");
    for (const AblationRow& r : rows)
        std::printf("%-5s %-5s %9.4f %10.4f %9d %10.3f %8.4f\n",
                    r.correlation.c_str(), r.mode.c_str(), r.mean_success,
                    r.mean_precision, r.total_switches, r.ms_per_frame,
                    r.detection_recall);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"long-term tracking engine on synthetic sequences"};
    app.require_subcommand(1);
    app.fallthrough();  // --config/--seed may follow the subcommand

    CommonOpts common;
    app.add_option("--config", common.config_path, "engine config JSON");
    auto* seed_opt = app.add_option("--seed", common.seed, "override the seed");

    std::string scenario, dets, emb, gt, visible, results, out = "out";
    std::string mode = "full", correlation;
    int topk = 0, clutter = 0;
    std::vector<std::string> suite_args;

    CLI::App* sim = app.add_subcommand("simulate", "generate a scenario and export it");
    sim->add_option("--scenario", scenario, "builtin id (s01..s10) or scenario.json path")
        ->required();
    sim->add_option("--out", out, "output directory");
    sim->add_option("--clutter", clutter, "clutter detections per frame");

    CLI::App* trk = app.add_subcommand("track", "run the tracker");
    trk->add_option("--scenario", scenario, "builtin id or scenario.json path");
    trk->add_option("--dets", dets, "detections CSV (association-only source)");
    trk->add_option("--emb", emb, "embedding sidecar CSV");
    trk->add_option("--gt", gt, "groundtruth.txt");
    trk->add_option("--mode", mode, "full|assoc|top1|pc|reid");
    trk->add_option("--correlation", correlation, "cc|dw|hp|dc");
    trk->add_option("--out", out, "output directory");
    trk->add_option("--topk", topk, "candidates kept per frame");

    CLI::App* ev = app.add_subcommand("eval", "evaluate a result file");
    ev->add_option("--results", results, "result.csv from track")->required();
    ev->add_option("--gt", gt, "groundtruth.txt")->required();
    ev->add_option("--visible", visible, "visible.txt");
    ev->add_option("--dets", dets, "detections CSV for the top-K table");
    ev->add_option("--emb", emb, "embedding sidecar CSV");
    ev->add_option("--out", out, "output directory");

    CLI::App* ab = app.add_subcommand("ablate", "correlation x association grid");
    ab->add_option("--out", out, "output directory");
    ab->add_option("--scenario", suite_args, "subset of scenarios (default: all)");

    try {
        app.parse(argc, argv);
        common.seed_set = seed_opt->count() > 0;
        if (sim->parsed()) cmd_simulate(common, scenario, out, clutter);
        if (trk->parsed())
            cmd_track(common, scenario, dets, emb, gt, mode, correlation, out,
                      topk);
        if (ev->parsed())
            cmd_eval(common, results, gt, visible, dets, emb, out);
        if (ab->parsed()) cmd_ablate(common, out, suite_args);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
