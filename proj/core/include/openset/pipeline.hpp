#pragma once

#include <string>

#include "openset/gmm.hpp"
#include "openset/mixmatch.hpp"
#include "openset/ssl.hpp"
#include "openset/store.hpp"

namespace openset {

// Flat key=value run configuration; every default is explicit and echoed
// into the run manifest.
struct PipelineConfig {
    std::string input_store;  // empty: generate synthetic data
    StoreFormat store_format = StoreFormat::Jsonl;
    std::uint64_t seed = 0;

    SyntheticSpec synth;
    SslConfig ssl;
    GmmConfig gmm;
    std::size_t n_clusters = 12;

    double ood_smoothing = 1e-6;
    ScoreNormalization ood_norm = ScoreNormalization::MinMax;

    double plan_tolerance = 1e-9;
    double plan_delta_w = 1e-3;

    MixMatchConfig mixmatch;

    std::vector<double> sweep_contamination = {0.8, 1.0, 1.5};
    std::vector<std::size_t> sweep_n_clusters = {};
    std::vector<std::uint64_t> sweep_seeds = {0, 1, 2};

    static PipelineConfig from_file(const std::string& path);
    static PipelineConfig from_text(const std::string& text);
    void apply_override(const std::string& key, const std::string& value);
    std::string to_json() const;
};

// Content digest used for idempotent stage skipping.
std::uint64_t file_digest(const std::string& path);

struct StageResult {
    std::string stage;
    std::vector<std::string> outputs;
    bool skipped = false;
    double seconds = 0.0;
};

// Stages in order: gen-synth, train-ssl, fit-gmm, score, plan, train-semisl, eval.
extern const std::vector<std::string> kStageOrder;

// Executes exactly one stage inside `out_dir`; skips with a notice when the
// outputs already exist and the recorded input digests match.
StageResult run_stage(const std::string& stage, const PipelineConfig& cfg,
                      const std::string& out_dir);

struct RunManifest {
    std::string config_json;
    std::vector<StageResult> stages;
    std::string out_dir;
    std::string version;
};

RunManifest run_pipeline(const PipelineConfig& cfg, const std::string& out_dir);

void write_manifest(const RunManifest& m, const std::string& path);

// Contamination x seed grid (Table-1-shaped) and optional cluster-count
// sweep; per-cell failures are recorded and do not abort the grid.
void run_sweep(const PipelineConfig& cfg, const std::string& out_dir);

}  // namespace openset
