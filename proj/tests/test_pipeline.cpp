#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "openset/pipeline.hpp"

using namespace openset;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) {
        path = fs::temp_directory_path() / name;
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

PipelineConfig tiny_config() {
    return PipelineConfig::from_text(R"(
        seed = 3
        synth_n_labeled = 12
        synth_n_unlabeled_inlier = 60
        synth_n_ood = 40
        synth_n_val = 10
        synth_n_test = 20
        synth_n_classes = 3
        synth_raw_dim = 8
        ssl_epochs = 2
        ssl_batch_n = 8
        ssl_latent_dim = 4
        ssl_hidden_dims = 16
        gmm_n_clusters = 4
        gmm_n_restarts = 2
        mm_epochs = 2
        mm_batch_labeled = 8
        mm_batch_unlabeled = 8
        mm_hidden_dims = 16
    )");
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config parsing: defaults, overrides, bad keys") {
    PipelineConfig cfg = PipelineConfig::from_text("seed = 9\nssl_epsilon = 0.1\n# comment\n");
    CHECK(cfg.seed == 9);
    CHECK(cfg.ssl.epsilon == doctest::Approx(0.1));
    CHECK(cfg.n_clusters == 12);  // default untouched
    CHECK_THROWS_AS(PipelineConfig::from_text("no_such_key = 1"), ValidationError);
    CHECK_THROWS_AS(PipelineConfig::from_text("garbage line"), ValidationError);
}

TEST_CASE("stage out of order raises a dependency error naming the prerequisite") {
    TempDir dir("openset_dep_test");
    PipelineConfig cfg = tiny_config();
    CHECK_THROWS_WITH_AS(run_stage("fit-gmm", cfg, dir.path.string()),
                         doctest::Contains("train-ssl"), ValidationError);
}

TEST_CASE("rerunning a completed stage skips it") {
    TempDir dir("openset_skip_test");
    PipelineConfig cfg = tiny_config();
    StageResult first = run_stage("gen-synth", cfg, dir.path.string());
    CHECK_FALSE(first.skipped);
    StageResult second = run_stage("gen-synth", cfg, dir.path.string());
    CHECK(second.skipped);
    // A config change invalidates the digest.
    cfg.synth.n_ood = 41;
    StageResult third = run_stage("gen-synth", cfg, dir.path.string());
    CHECK_FALSE(third.skipped);
}

TEST_CASE("full pipeline is deterministic: byte-identical reports") {
    TempDir a("openset_det_a"), b("openset_det_b");
    PipelineConfig cfg = tiny_config();
    run_pipeline(cfg, a.path.string());
    run_pipeline(cfg, b.path.string());
    for (const char* f : {"store.jsonl", "embeddings.jsonl", "gmm.json", "scores.csv", "plan.json",
                          "report.json", "report_clusters.csv"})
        CHECK(slurp(a.path / f) == slurp(b.path / f));

    // Manifest references existing artifacts.
    CHECK(fs::exists(a.path / "manifest.json"));
    CHECK(fs::exists(a.path / "classifier_ood_weighted.json"));
    CHECK(fs::exists(a.path / "classifier_uniform.json"));
    CHECK(fs::exists(a.path / "trace_ood_weighted.csv"));
}

TEST_CASE("score stage emits the documented CSV layout") {
    TempDir dir("openset_stage_csv");
    PipelineConfig cfg = tiny_config();
    for (const char* stage : {"gen-synth", "train-ssl", "fit-gmm", "score"})
        run_stage(stage, cfg, dir.path.string());
    std::ifstream in(dir.path / "scores.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "id,cluster,ood_score,ood_score_norm");
    CHECK(fs::exists(dir.path / "scores_cis.json"));
}

TEST_CASE("ingest path: external store flows through gen-synth stage") {
    TempDir dir("openset_ingest");
    PipelineConfig cfg = tiny_config();
    Store s = generate_synthetic_openset(cfg.synth);
    fs::path external = dir.path / "external.csv";
    save_store(s, external.string(), StoreFormat::Csv);

    PipelineConfig cfg2 = cfg;
    cfg2.input_store = external.string();
    cfg2.store_format = StoreFormat::Csv;
    run_stage("gen-synth", cfg2, dir.path.string());
    Store loaded = load_store((dir.path / "store.jsonl").string(), StoreFormat::Jsonl);
    CHECK(loaded.records.size() == s.records.size());
}
