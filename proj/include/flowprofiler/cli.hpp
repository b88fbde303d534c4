#pragma once

// Subcommand front end: extract, tune, rq1, rq2, synth, report.
// Exit codes: 0 success, 2 config error, 3 input parse failure,
// 4 degenerate result.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flowprofiler/experiment.hpp"

namespace flowprofiler {

namespace cli_detail {

inline std::optional<std::filesystem::path> cache_dir_override(const std::optional<std::string>& flag) {
    if (const char* env = std::getenv("FLOWPROFILER_CACHE")) return std::filesystem::path(env);
    if (flag) return std::filesystem::path(*flag);
    return std::nullopt;
}

inline SynthCorpusSpec synth_spec_from(const ConfigView& cfg, const std::string& prefix) {
    SynthCorpusSpec spec;
    spec.enabled = true;
    spec.preset = cfg.get_string(prefix + ".preset", "stock5");
    spec.background = static_cast<size_t>(cfg.get_int(prefix + ".background", 6));
    spec.background_flows_per_hour = cfg.get_double(prefix + ".background_flows_per_hour", 170.0);
    std::string tier = cfg.get_string(prefix + ".holdout", "none");
    if (tier != "none") spec.holdout = parse_tier(tier);
    spec.duration = cfg.get_double(prefix + ".duration", 8100.0);
    spec.baseline_fraction = cfg.get_double(prefix + ".baseline_fraction", 0.6);
    spec.seed = static_cast<uint64_t>(cfg.get_int(prefix + ".seed", 7));
    return spec;
}

inline void print_report(std::ostream& os, const EvaluationReport& r) {
    auto line = [&os](const char* name, const std::optional<double>& v) {
        os << "  " << name << ": ";
        if (v) os << fmt_g9(*v);
        else os << "--";
        os << "\n";
    };
    os << "setting: " << r.setting << "\n";
    if (r.clusters) os << "  clusters: " << *r.clusters << "\n";
    else os << "  clusters: --\n";
    line("noise_pct", r.noise_pct);
    line("nmi", r.nmi);
    line("silhouette", r.silhouette);
    line("known_acc_post", r.known_acc_post);
    line("novel_purity", r.novel_purity);
    line("novel_share", r.novel_share);
    line("update_time_s", r.update_time_s);
    os << "  dataset: " << r.dataset_id << "\n  config_hash: " << r.config_hash << "\n";
}

} // namespace cli_detail

inline int cli_main(const std::vector<std::string>& args) {
    CLI::App app{"packet-to-profile toolkit: flow features, baseline clustering, incremental adaptation"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "runs", clusterer, labels_path, report_path, csv_out;
    std::vector<std::string> overrides, captures;
    std::optional<std::string> cache_flag;
    std::optional<uint64_t> seed_flag;

    auto add_common = [&](CLI::App* cmd, bool with_clusterer) {
        cmd->add_option("--config", config_path, "experiment config file")->required();
        cmd->add_option("--out", out_dir, "output root directory");
        cmd->add_option_function<uint64_t>("--seed", [&](uint64_t s) { seed_flag = s; }, "override the config seed");
        cmd->add_option("--set", overrides, "override a config key, key=value (repeatable)");
        cmd->add_option_function<std::string>("--cache", [&](std::string c) { cache_flag = std::move(c); },
                                              "feature cache directory");
        if (with_clusterer) cmd->add_option("--clusterer", clusterer, "dbscan|birch|minibatch");
    };

    auto* cmd_extract = app.add_subcommand("extract", "decode captures into the feature cache");
    cmd_extract->add_option("--captures", captures, "pcap files")->required()->expected(-1);
    cmd_extract->add_option("--labels", labels_path, "device label inventory CSV")->required();
    cmd_extract->add_option("--out", out_dir, "cache directory");
    cmd_extract->add_option("--set", overrides, "override a flow option, key=value");

    auto* cmd_tune = app.add_subcommand("tune", "grid-search DBSCAN parameters");
    add_common(cmd_tune, false);
    auto* cmd_rq1 = app.add_subcommand("rq1", "static baseline profiling with DBSCAN");
    add_common(cmd_rq1, false);
    auto* cmd_rq2 = app.add_subcommand("rq2", "incremental adaptation with a stream clusterer");
    add_common(cmd_rq2, true);

    auto* cmd_synth = app.add_subcommand("synth", "generate a labeled synthetic corpus");
    cmd_synth->add_option("--config", config_path, "synth config file")->required();
    cmd_synth->add_option("--out", out_dir, "corpus output directory")->required();
    cmd_synth->add_option_function<uint64_t>("--seed", [&](uint64_t s) { seed_flag = s; }, "override the config seed");
    cmd_synth->add_option("--set", overrides, "override a config key, key=value");

    auto* cmd_report = app.add_subcommand("report", "print a run report");
    cmd_report->add_option("path", report_path, "run directory or report.json")->required();
    cmd_report->add_option("--csv", csv_out, "also write a flat CSV");

    std::vector<const char*> argv;
    argv.push_back("flowprofiler");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (cmd_extract->parsed()) {
            auto inventory = DeviceInventory::load(labels_path);
            ExtractionConfig ecfg;
            for (const auto& o : overrides) {
                ConfigTable t;
                apply_override(t, o);
                ConfigView v(t, "--set");
                ecfg.flow.idle_timeout = v.get_double("flow.idle_timeout", ecfg.flow.idle_timeout);
                ecfg.flow.reorder_tolerance = v.get_double("flow.reorder_tolerance", ecfg.flow.reorder_tolerance);
                ecfg.flow.per_flow_packet_cap =
                    static_cast<size_t>(v.get_int("flow.per_flow_packet_cap",
                                                  static_cast<int64_t>(ecfg.flow.per_flow_packet_cap)));
            }
            auto cache = cli_detail::cache_dir_override(cache_flag).value_or(std::filesystem::path(out_dir));
            for (const auto& c : captures) {
                auto res = extract_capture_cached(c, inventory.macs(), ecfg, cache);
                std::cout << c << ": " << res.features.size() << " flows, "
                          << (res.hit ? "cache hit" : "extracted") << " -> " << res.csv_path.string() << "\n";
            }
            return 0;
        }

        if (cmd_tune->parsed() || cmd_rq1->parsed() || cmd_rq2->parsed()) {
            auto plan = build_plan(config_path, overrides, std::filesystem::path(out_dir), seed_flag,
                                   clusterer.empty() ? std::nullopt : std::optional<std::string>(clusterer),
                                   cli_detail::cache_dir_override(cache_flag));
            if (cmd_tune->parsed()) {
                auto extracted = extract_captures(plan.baseline_captures, plan.known_macs(), plan);
                auto names = device_names_of(extracted.features, plan.inventory);
                std::optional<Scaler> scaler;
                auto scaled = scale_points(extracted.features, plan.scale_mode, scaler);
                auto truth = label_ids_of(names);
                auto grid = default_grid(scaled);
                if (grid.empty()) throw DegenerateGrid("could not build a parameter grid");
                auto res = grid_search(scaled, truth, grid);
                auto dir = make_run_dir(plan.out_root, "tune");
                write_score_table_csv(dir / "grid_scores.csv", res.table);
                if (!res.best) {
                    std::cerr << "no eligible grid cell; scores written to " << dir.string() << "\n";
                    throw DegenerateGrid("every grid cell degenerated to fewer than 2 clusters");
                }
                const auto& best = res.table[*res.best_index];
                std::cout << "best: eps=" << fmt_g9(best.params.eps) << " min_pts=" << best.params.min_pts
                          << " nmi=" << fmt_g9(best.nmi)
                          << " silhouette=" << (best.silhouette ? fmt_g9(*best.silhouette) : "--")
                          << " noise_pct=" << fmt_g9(best.noise_fraction * 100.0) << "\n"
                          << "scores: " << (dir / "grid_scores.csv").string() << "\n";
                return 0;
            }
            RunArtifacts artifacts = cmd_rq1->parsed() ? run_rq1(plan) : run_rq2(plan);
            cli_detail::print_report(std::cout, artifacts.report);
            std::cout << "artifacts: " << artifacts.dir.string() << "\n";
            return 0;
        }

        if (cmd_synth->parsed()) {
            ConfigTable table = load_config(config_path);
            for (const auto& o : overrides) apply_override(table, o);
            ConfigView cfg(table, std::filesystem::path(config_path).filename().string());
            auto spec = cli_detail::synth_spec_from(cfg, "synth");
            if (seed_flag) spec.seed = *seed_flag;
            auto files = build_synth_corpus(spec, out_dir);
            std::cout << "baseline: " << files.baseline_pcap.string() << "\n";
            if (!files.stream_pcap.empty()) std::cout << "stream: " << files.stream_pcap.string() << "\n";
            std::cout << "labels: " << files.labels_csv.string() << "\n";
            if (files.holdout_mac) std::cout << "holdout: " << files.holdout_mac->str() << "\n";
            return 0;
        }

        if (cmd_report->parsed()) {
            std::filesystem::path p(report_path);
            if (std::filesystem::is_directory(p)) p /= "report.json";
            std::ifstream in(p);
            if (!in) throw IoFailure("cannot open report: " + p.string());
            nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
            if (j.is_discarded()) throw ParseError("malformed report JSON: " + p.string());
            EvaluationReport r;
            r.setting = j.value("setting", "");
            auto opt = [&j](const char* key) -> std::optional<double> {
                if (j.contains(key) && !j[key].is_null()) return j[key].get<double>();
                return std::nullopt;
            };
            if (j.contains("clusters") && !j["clusters"].is_null()) r.clusters = j["clusters"].get<int>();
            r.noise_pct = opt("noise_pct");
            r.nmi = opt("nmi");
            r.silhouette = opt("silhouette");
            r.known_acc_post = opt("known_acc_post");
            r.novel_purity = opt("novel_purity");
            r.novel_share = opt("novel_share");
            r.update_time_s = opt("update_time_s");
            r.config_hash = j.value("config_hash", "");
            r.dataset_id = j.value("dataset_id", "");
            cli_detail::print_report(std::cout, r);
            if (!csv_out.empty()) {
                write_text_file(csv_out, EvaluationReport::csv_header() + r.csv_row());
                std::cout << "csv: " << csv_out << "\n";
            }
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 3;
    } catch (const DegenerateResult& e) {
        std::cerr << "degenerate result: " << e.what() << "\n";
        return 4;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

inline int cli_main(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return cli_main(args);
}

} // namespace flowprofiler
