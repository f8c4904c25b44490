#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "openset/pipeline.hpp"

using namespace openset;

int main(int argc, char** argv) {
    CLI::App app{"Open-set semi-supervised curation pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "run";
    std::string format = "jsonl";
    std::uint64_t seed = 0;
    bool seed_given = false;

    app.add_option("--config", config_path, "Run configuration file (key = value lines)");
    app.add_option("--out", out_dir, "Output directory");
    app.add_option("--format", format, "Store format: jsonl or csv")
        ->check(CLI::IsMember({"jsonl", "csv"}));
    app.add_option("--seed", seed, "Master seed override")->each([&](const std::string&) {
        seed_given = true;
    });

    // Global flags may appear before or after the subcommand name.
    for (const auto& stage : kStageOrder)
        app.add_subcommand(stage, "Run the '" + stage + "' stage")->fallthrough();
    app.add_subcommand("run-all", "Run every stage in order (plus the uniform ablation)")
        ->fallthrough();
    app.add_subcommand("sweep", "Contamination/cluster-count grid over seeds")->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        PipelineConfig cfg =
            config_path.empty() ? PipelineConfig() : PipelineConfig::from_file(config_path);
        cfg.store_format = format_from_name(format);
        if (seed_given) {
            cfg.seed = seed;
            cfg.synth.seed = seed;
        }

        const std::string sub = app.get_subcommands().front()->get_name();
        if (sub == "run-all") {
            run_pipeline(cfg, out_dir);
        } else if (sub == "sweep") {
            run_sweep(cfg, out_dir);
        } else {
            StageResult r = run_stage(sub, cfg, out_dir);
            if (!r.skipped)
                std::cerr << "[done] " << r.stage << " (" << r.seconds << "s)\n";
        }
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
}
