#include "openset/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "openset/metrics.hpp"

namespace openset {

namespace fs = std::filesystem;
using nlohmann::json;

static const char* kVersion = "0.1.0";

const std::vector<std::string> kStageOrder = {"gen-synth", "train-ssl", "fit-gmm", "score",
                                              "plan",      "train-semisl", "eval"};

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::uint64_t parse_u64(const std::string& v) { return std::stoull(v); }
std::size_t parse_size(const std::string& v) { return static_cast<std::size_t>(std::stoull(v)); }
double parse_f64(const std::string& v) { return std::stod(v); }
bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValidationError("bad boolean value: " + v);
}

std::vector<std::size_t> parse_size_list(const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& s : split_list(v)) out.push_back(parse_size(s));
    return out;
}

}  // namespace

void PipelineConfig::apply_override(const std::string& key, const std::string& value) {
    if (key == "input_store") input_store = value;
    else if (key == "format") store_format = format_from_name(value);
    else if (key == "seed") seed = parse_u64(value);
    else if (key == "synth_n_labeled") synth.n_labeled = parse_size(value);
    else if (key == "synth_n_unlabeled_inlier") synth.n_unlabeled_inlier = parse_size(value);
    else if (key == "synth_n_ood") synth.n_ood = parse_size(value);
    else if (key == "synth_n_val") synth.n_val = parse_size(value);
    else if (key == "synth_n_test") synth.n_test = parse_size(value);
    else if (key == "synth_n_classes") synth.n_classes = parse_size(value);
    else if (key == "synth_n_ood_components") synth.n_ood_components = parse_size(value);
    else if (key == "synth_raw_dim") synth.raw_dim = parse_size(value);
    else if (key == "synth_class_separation") synth.class_separation = parse_f64(value);
    else if (key == "synth_ood_offset") synth.ood_offset = parse_f64(value);
    else if (key == "ssl_epsilon") ssl.epsilon = parse_f64(value);
    else if (key == "ssl_tau") ssl.tau = parse_f64(value);
    else if (key == "ssl_learning_rate") ssl.learning_rate = parse_f64(value);
    else if (key == "ssl_batch_n") ssl.batch_n = parse_size(value);
    else if (key == "ssl_epochs") ssl.epochs = parse_size(value);
    else if (key == "ssl_augment_sigma") ssl.augment_sigma = parse_f64(value);
    else if (key == "ssl_hidden_dims") ssl.hidden_dims = parse_size_list(value);
    else if (key == "ssl_latent_dim") ssl.latent_dim = parse_size(value);
    else if (key == "ssl_normalize_embeddings") ssl.normalize_embeddings = parse_bool(value);
    else if (key == "gmm_n_clusters") n_clusters = parse_size(value);
    else if (key == "gmm_max_iter") gmm.max_iter = parse_size(value);
    else if (key == "gmm_tol") gmm.tol = parse_f64(value);
    else if (key == "gmm_n_restarts") gmm.n_restarts = parse_size(value);
    else if (key == "gmm_cov_type") gmm.cov_type = covariance_from_name(value);
    else if (key == "gmm_cov_floor") gmm.cov_floor = parse_f64(value);
    else if (key == "ood_smoothing") ood_smoothing = parse_f64(value);
    else if (key == "ood_normalization")
        ood_norm = value == "rank" ? ScoreNormalization::Rank : ScoreNormalization::MinMax;
    else if (key == "plan_tolerance") plan_tolerance = parse_f64(value);
    else if (key == "plan_delta_w") plan_delta_w = parse_f64(value);
    else if (key == "mm_k_augment") mixmatch.k_augment = parse_size(value);
    else if (key == "mm_temperature") mixmatch.temperature = parse_f64(value);
    else if (key == "mm_alpha") mixmatch.mixup_alpha = parse_f64(value);
    else if (key == "mm_lambda_u") mixmatch.lambda_u = parse_f64(value);
    else if (key == "mm_ramp_steps") mixmatch.ramp_steps = parse_size(value);
    else if (key == "mm_batch_labeled") mixmatch.batch_labeled = parse_size(value);
    else if (key == "mm_batch_unlabeled") mixmatch.batch_unlabeled = parse_size(value);
    else if (key == "mm_learning_rate") mixmatch.learning_rate = parse_f64(value);
    else if (key == "mm_epochs") mixmatch.epochs = parse_size(value);
    else if (key == "mm_augment_sigma") mixmatch.augment_sigma = parse_f64(value);
    else if (key == "mm_sampler_mode") mixmatch.sampler_mode = sampler_mode_from_name(value);
    else if (key == "mm_hidden_dims") mixmatch.hidden_dims = parse_size_list(value);
    else if (key == "sweep_contamination") {
        sweep_contamination.clear();
        for (const auto& s : split_list(value)) sweep_contamination.push_back(parse_f64(s));
    } else if (key == "sweep_n_clusters")
        sweep_n_clusters = parse_size_list(value);
    else if (key == "sweep_seeds") {
        sweep_seeds.clear();
        for (const auto& s : split_list(value)) sweep_seeds.push_back(parse_u64(s));
    } else
        throw ValidationError("unknown config key: " + key);
}

PipelineConfig PipelineConfig::from_text(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
            if (!blank)
                throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
            continue;
        }
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ValidationError("config line " + std::to_string(line_no) + ": empty key");
        cfg.apply_override(key, value);
    }
    return cfg;
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

std::string PipelineConfig::to_json() const {
    json j;
    j["input_store"] = input_store;
    j["format"] = store_format == StoreFormat::Jsonl ? "jsonl" : "csv";
    j["seed"] = seed;
    j["synth"] = {{"n_labeled", synth.n_labeled},
                  {"n_unlabeled_inlier", synth.n_unlabeled_inlier},
                  {"n_ood", synth.n_ood},
                  {"n_val", synth.n_val},
                  {"n_test", synth.n_test},
                  {"n_classes", synth.n_classes},
                  {"n_ood_components", synth.n_ood_components},
                  {"raw_dim", synth.raw_dim},
                  {"class_separation", synth.class_separation},
                  {"ood_offset", synth.ood_offset}};
    j["ssl"] = {{"epsilon", ssl.epsilon},
                {"tau", ssl.tau},
                {"learning_rate", ssl.learning_rate},
                {"batch_n", ssl.batch_n},
                {"epochs", ssl.epochs},
                {"augment_sigma", ssl.augment_sigma},
                {"hidden_dims", ssl.hidden_dims},
                {"latent_dim", ssl.latent_dim},
                {"normalize_embeddings", ssl.normalize_embeddings}};
    j["gmm"] = {{"n_clusters", n_clusters},
                {"max_iter", gmm.max_iter},
                {"tol", gmm.tol},
                {"n_restarts", gmm.n_restarts},
                {"cov_type", covariance_name(gmm.cov_type)},
                {"cov_floor", gmm.cov_floor}};
    j["ood"] = {{"smoothing", ood_smoothing},
                {"normalization", ood_norm == ScoreNormalization::Rank ? "rank" : "minmax"}};
    j["plan"] = {{"tolerance", plan_tolerance}, {"delta_w", plan_delta_w}};
    j["mixmatch"] = {{"k_augment", mixmatch.k_augment},
                     {"temperature", mixmatch.temperature},
                     {"mixup_alpha", mixmatch.mixup_alpha},
                     {"lambda_u", mixmatch.lambda_u},
                     {"ramp_steps", mixmatch.ramp_steps},
                     {"batch_labeled", mixmatch.batch_labeled},
                     {"batch_unlabeled", mixmatch.batch_unlabeled},
                     {"learning_rate", mixmatch.learning_rate},
                     {"epochs", mixmatch.epochs},
                     {"augment_sigma", mixmatch.augment_sigma},
                     {"sampler_mode", sampler_mode_name(mixmatch.sampler_mode)},
                     {"hidden_dims", mixmatch.hidden_dims}};
    j["sweep"] = {{"contamination", sweep_contamination},
                  {"n_clusters", sweep_n_clusters},
                  {"seeds", sweep_seeds}};
    j["version"] = kVersion;
    return j.dump(2);
}

std::uint64_t file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot digest missing file: " + path);
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    return h;
}

namespace {

std::uint64_t string_digest(const std::string& s, std::uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

struct Paths {
    fs::path dir;
    fs::path store() const { return dir / "store.jsonl"; }
    fs::path encoder() const { return dir / "encoder.json"; }
    fs::path embeddings() const { return dir / "embeddings.jsonl"; }
    fs::path gmm() const { return dir / "gmm.json"; }
    fs::path scores() const { return dir / "scores.csv"; }
    fs::path scores_cis() const { return dir / "scores_cis.json"; }
    fs::path plan() const { return dir / "plan.json"; }
    fs::path classifier(SamplerMode m) const {
        return dir / (std::string("classifier_") + sampler_mode_name(m) + ".json");
    }
    fs::path trace(SamplerMode m) const {
        return dir / (std::string("trace_") + sampler_mode_name(m) + ".csv");
    }
    fs::path report() const { return dir / "report.json"; }
    fs::path report_csv() const { return dir / "report_clusters.csv"; }
    fs::path state() const { return dir / "stage_state.json"; }
};

json load_state(const Paths& p) {
    std::ifstream in(p.state());
    if (!in) return json::object();
    json j = json::parse(in, nullptr, false);
    return j.is_discarded() ? json::object() : j;
}

void store_state(const Paths& p, const json& state) {
    std::ofstream out(p.state());
    out << state.dump(2);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void require_artifact(const fs::path& path, const std::string& producing_stage) {
    if (!fs::exists(path))
        throw ValidationError("missing artifact " + path.string() + "; run stage '" +
                              producing_stage + "' first");
}

}  // namespace

StageResult run_stage(const std::string& stage, const PipelineConfig& cfg,
                      const std::string& out_dir) {
    Paths p{fs::path(out_dir)};
    fs::create_directories(p.dir);

    std::string state_key = stage;
    if (stage == "train-semisl")
        state_key += std::string(":") + sampler_mode_name(cfg.mixmatch.sampler_mode);

    // Input digest: config plus every upstream artifact the stage reads.
    std::uint64_t digest = string_digest(cfg.to_json());
    std::vector<fs::path> inputs, outputs;

    if (stage == "gen-synth") {
        outputs = {p.store()};
        if (!cfg.input_store.empty()) inputs.push_back(cfg.input_store);
    } else if (stage == "train-ssl") {
        inputs = {p.store()};
        outputs = {p.encoder(), p.embeddings()};
    } else if (stage == "fit-gmm") {
        inputs = {p.embeddings()};
        outputs = {p.gmm()};
    } else if (stage == "score") {
        inputs = {p.embeddings(), p.gmm()};
        outputs = {p.scores(), p.scores_cis()};
    } else if (stage == "plan") {
        inputs = {p.scores(), p.scores_cis()};
        outputs = {p.plan()};
    } else if (stage == "train-semisl") {
        inputs = {p.store()};
        if (cfg.mixmatch.sampler_mode == SamplerMode::OodWeighted) {
            inputs.push_back(p.plan());
            inputs.push_back(p.scores());
        }
        outputs = {p.classifier(cfg.mixmatch.sampler_mode), p.trace(cfg.mixmatch.sampler_mode)};
    } else if (stage == "eval") {
        inputs = {p.store(), p.scores(), p.scores_cis()};
        outputs = {p.report(), p.report_csv()};
    } else {
        throw ValidationError("unknown stage: " + stage);
    }

    static const std::map<std::string, std::string> kProducer = {
        {p.store().filename().string(), "gen-synth"},
        {p.encoder().filename().string(), "train-ssl"},
        {p.embeddings().filename().string(), "train-ssl"},
        {p.gmm().filename().string(), "fit-gmm"},
        {p.scores().filename().string(), "score"},
        {p.scores_cis().filename().string(), "score"},
        {p.plan().filename().string(), "plan"}};
    for (const auto& in : inputs) {
        auto it = kProducer.find(in.filename().string());
        require_artifact(in, it != kProducer.end() ? it->second : "(external input)");
        digest = string_digest(std::to_string(file_digest(in.string())), digest);
    }

    json state = load_state(p);
    auto t0 = std::chrono::steady_clock::now();
    StageResult result;
    result.stage = stage;
    for (const auto& o : outputs) result.outputs.push_back(o.string());

    bool all_outputs_exist = std::all_of(outputs.begin(), outputs.end(),
                                         [](const fs::path& o) { return fs::exists(o); });
    if (all_outputs_exist && state.contains(state_key) &&
        state[state_key].get<std::string>() == std::to_string(digest)) {
        std::cerr << "[skip] stage " << state_key << ": outputs up to date\n";
        result.skipped = true;
        return result;
    }

    if (stage == "gen-synth") {
        Store store;
        if (cfg.input_store.empty()) {
            store = generate_synthetic_openset(cfg.synth);
        } else {
            std::vector<std::string> warnings;
            store = load_store(cfg.input_store, cfg.store_format, &warnings);
            for (const auto& w : warnings) std::cerr << "[warn] " << w << "\n";
        }
        save_store(store, p.store().string(), StoreFormat::Jsonl);
    } else if (stage == "train-ssl") {
        Store store = load_store(p.store().string(), StoreFormat::Jsonl);
        SslConfig ssl = cfg.ssl;
        ssl.seed = cfg.seed * 1000003ull + 1;
        SslResult r = train_encoder(store, ssl);
        write_text(p.encoder(), r.encoder.to_json());
        save_store(r.embeddings, p.embeddings().string(), StoreFormat::Jsonl);
    } else if (stage == "fit-gmm") {
        Store emb = load_store(p.embeddings().string(), StoreFormat::Jsonl);
        std::vector<Vec> data;
        for (const auto& r : emb.records)
            if (r.split == Split::Labeled || r.split == Split::Unlabeled) data.push_back(r.vector);
        GmmConfig gc = cfg.gmm;
        gc.seed = cfg.seed * 1000003ull + 2;
        GmmModel model = fit_em(data, cfg.n_clusters, gc);
        write_text(p.gmm(), model.to_json());
    } else if (stage == "score") {
        Store emb = load_store(p.embeddings().string(), StoreFormat::Jsonl);
        GmmModel model = GmmModel::from_json(read_text(p.gmm()));
        std::vector<std::string> warnings;
        OodScoreTable table =
            score_table(model, emb, cfg.ood_smoothing, /*score_eval_splits=*/true, cfg.ood_norm,
                        &warnings);
        for (const auto& w : warnings) std::cerr << "[warn] " << w << "\n";
        table.save_csv(p.scores().string());
        write_text(p.scores_cis(), table.sidecar_json());
    } else if (stage == "plan") {
        OodScoreTable table = OodScoreTable::load_csv(p.scores().string(), p.scores_cis().string());
        SamplerPlan plan =
            build_plan(table, cfg.plan_tolerance, cfg.plan_delta_w, cfg.seed * 1000003ull + 3);
        write_text(p.plan(), plan.to_json(table.ids));
    } else if (stage == "train-semisl") {
        Store store = load_store(p.store().string(), StoreFormat::Jsonl);
        MixMatchConfig mm = cfg.mixmatch;
        mm.seed = cfg.seed * 1000003ull + 4;
        SemiSlResult r;
        if (mm.sampler_mode == SamplerMode::OodWeighted) {
            OodScoreTable table = OodScoreTable::load_csv(p.scores().string(), p.scores_cis().string());
            SamplerPlan plan =
                build_plan(table, cfg.plan_tolerance, cfg.plan_delta_w, cfg.seed * 1000003ull + 3);
            r = train_semisl(store, cfg.synth.n_classes, mm, &plan, &table);
        } else {
            r = train_semisl(store, cfg.synth.n_classes, mm, nullptr, nullptr);
        }
        write_text(p.classifier(mm.sampler_mode), r.classifier.to_json());
        save_trace_csv(r.trace, p.trace(mm.sampler_mode).string());
    } else if (stage == "eval") {
        Store store = load_store(p.store().string(), StoreFormat::Jsonl);
        OodScoreTable table = OodScoreTable::load_csv(p.scores().string(), p.scores_cis().string());

        json report;
        report["config"] = json::parse(cfg.to_json());

        // OOD detection quality over the unlabeled pool.
        Vec ood_scores;
        std::vector<int> ood_labels;
        std::vector<std::optional<bool>> truth(table.ids.size());
        for (std::size_t i = 0; i < table.ids.size(); ++i) {
            const EmbeddingRecord* rec = store.find(table.ids[i]);
            if (!rec) continue;
            if (rec->ood_truth) truth[i] = *rec->ood_truth;
            if (rec->split == Split::Unlabeled && rec->ood_truth) {
                ood_scores.push_back(table.scores[i]);
                ood_labels.push_back(*rec->ood_truth ? 1 : 0);
            }
        }
        bool has_both = std::count(ood_labels.begin(), ood_labels.end(), 1) > 0 &&
                        std::count(ood_labels.begin(), ood_labels.end(), 0) > 0;
        if (has_both) report["ood_auroc"] = auroc(ood_scores, ood_labels);

        bool any_truth = std::any_of(truth.begin(), truth.end(), [](const auto& t) { return t.has_value(); });
        std::ofstream cluster_csv(p.report_csv());
        cluster_csv << "cluster,cis,inlier_count,ood_count\n";
        if (any_truth) {
            auto purity = cluster_purity_report(table, truth);
            for (const auto& row : purity.rows)
                cluster_csv << row.cluster << ',' << row.cis << ',' << row.inlier_count << ','
                            << row.ood_count << "\n";
            if (purity.rank_correlation) report["cis_ood_rank_correlation"] = *purity.rank_correlation;
        }

        for (SamplerMode mode : {SamplerMode::OodWeighted, SamplerMode::Uniform}) {
            if (!fs::exists(p.classifier(mode))) continue;
            Mlp clf = Mlp::from_json(read_text(p.classifier(mode)));
            json jm;
            jm["test_accuracy"] = evaluate_accuracy(clf, store, Split::Test);
            jm["val_accuracy"] = evaluate_accuracy(clf, store, Split::Validation);

            // Group aggregation when bag identifiers exist.
            std::map<std::string, std::vector<int>> group_votes;
            std::map<std::string, Vec> group_weights;
            std::map<std::string, int> group_truth;
            for (const auto& rec : store.records) {
                if (!rec.group_id || rec.split != Split::Test) continue;
                Vec logits = mlp_forward(clf, rec.vector);
                int pred = static_cast<int>(std::max_element(logits.begin(), logits.end()) -
                                            logits.begin());
                group_votes[*rec.group_id].push_back(pred);
                double w = 1.0;
                try {
                    w = 1.0 - table.scores_norm[table.index_of(rec.id)];
                } catch (const ValidationError&) {
                }
                group_weights[*rec.group_id].push_back(w);
                if (rec.label) group_truth[*rec.group_id] = *rec.label;
            }
            if (!group_votes.empty()) {
                std::size_t correct_plain = 0, correct_weighted = 0, n_groups = 0;
                double entropy_sum = 0.0, entropy_correct_sum = 0.0;
                std::size_t n_correct = 0;
                for (const auto& [gid, votes] : group_votes) {
                    int truth_label = group_truth.count(gid) ? group_truth[gid] : -1;
                    int plain = aggregate_group(votes);
                    int weighted = aggregate_group(votes, &group_weights[gid]);
                    if (plain == truth_label) ++correct_plain;
                    if (weighted == truth_label) ++correct_weighted;
                    double h = vote_entropy(votes);
                    entropy_sum += h;
                    if (weighted == truth_label) {
                        entropy_correct_sum += h;
                        ++n_correct;
                    }
                    ++n_groups;
                }
                jm["group_accuracy_plurality"] = static_cast<double>(correct_plain) / n_groups;
                jm["group_accuracy_weighted"] = static_cast<double>(correct_weighted) / n_groups;
                jm["group_entropy_all"] = entropy_sum / static_cast<double>(n_groups);
                if (n_correct)
                    jm["group_entropy_correct_only"] =
                        entropy_correct_sum / static_cast<double>(n_correct);
            }
            report[std::string("classifier_") + sampler_mode_name(mode)] = std::move(jm);
        }
        write_text(p.report(), report.dump(2));
    }

    state[state_key] = std::to_string(digest);
    store_state(p, state);
    auto t1 = std::chrono::steady_clock::now();
    result.seconds = std::chrono::duration<double>(t1 - t0).count();
    return result;
}

RunManifest run_pipeline(const PipelineConfig& cfg, const std::string& out_dir) {
    RunManifest m;
    m.config_json = cfg.to_json();
    m.out_dir = out_dir;
    m.version = kVersion;
    for (const auto& stage : kStageOrder) {
        if (stage == "train-semisl") {
            // Both the curriculum mode and the uniform ablation.
            for (SamplerMode mode : {SamplerMode::OodWeighted, SamplerMode::Uniform}) {
                PipelineConfig c = cfg;
                c.mixmatch.sampler_mode = mode;
                m.stages.push_back(run_stage(stage, c, out_dir));
            }
        } else {
            m.stages.push_back(run_stage(stage, cfg, out_dir));
        }
    }
    write_manifest(m, (fs::path(out_dir) / "manifest.json").string());
    return m;
}

void write_manifest(const RunManifest& m, const std::string& path) {
    json j;
    j["config"] = json::parse(m.config_json);
    j["out_dir"] = m.out_dir;
    j["version"] = m.version;
    j["stages"] = json::array();
    for (const auto& s : m.stages) {
        json js;
        js["stage"] = s.stage;
        js["outputs"] = s.outputs;
        js["skipped"] = s.skipped;
        js["seconds"] = s.seconds;
        j["stages"].push_back(std::move(js));
    }
    write_text(path, j.dump(2));
}

void run_sweep(const PipelineConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream summary(fs::path(out_dir) / "sweep_summary.csv");
    summary << "contamination,n_clusters,seed,status,ood_auroc,acc_ood_weighted,acc_uniform\n";

    std::vector<std::size_t> cluster_grid = cfg.sweep_n_clusters;
    if (cluster_grid.empty()) cluster_grid.push_back(cfg.n_clusters);

    struct CellStat {
        Vec acc_w, acc_u, aurocs;
    };
    std::map<std::pair<double, std::size_t>, CellStat> cells;

    for (double contamination : cfg.sweep_contamination) {
        for (std::size_t ncls : cluster_grid) {
            for (std::uint64_t seed : cfg.sweep_seeds) {
                PipelineConfig c = cfg;
                c.seed = seed;
                c.synth.seed = seed;
                c.n_clusters = ncls;
                c.synth.n_ood = static_cast<std::size_t>(
                    contamination * static_cast<double>(cfg.synth.n_unlabeled_inlier) + 0.5);
                std::ostringstream cell;
                cell << "cell_c" << contamination << "_k" << ncls << "_s" << seed;
                std::string cell_dir = (fs::path(out_dir) / cell.str()).string();
                summary << contamination << ',' << ncls << ',' << seed << ',';
                try {
                    run_pipeline(c, cell_dir);
                    json report = json::parse(read_text(fs::path(cell_dir) / "report.json"));
                    double auc = report.value("ood_auroc", -1.0);
                    double aw = report["classifier_ood_weighted"].value("test_accuracy", -1.0);
                    double au = report["classifier_uniform"].value("test_accuracy", -1.0);
                    summary << "ok," << auc << ',' << aw << ',' << au << "\n";
                    auto& stat = cells[{contamination, ncls}];
                    stat.acc_w.push_back(aw);
                    stat.acc_u.push_back(au);
                    stat.aurocs.push_back(auc);
                } catch (const std::exception& e) {
                    summary << "error: " << e.what() << ",,,\n";
                }
            }
        }
    }

    std::ofstream agg(fs::path(out_dir) / "sweep_aggregate.csv");
    agg << "contamination,n_clusters,mean_acc_ood_weighted,std_acc_ood_weighted,"
           "mean_acc_uniform,std_acc_uniform,mean_ood_auroc\n";
    auto mean_std = [](const Vec& v) {
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double s = 0.0;
        for (double x : v) s += (x - m) * (x - m);
        s = v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0;
        return std::pair<double, double>{m, s};
    };
    for (const auto& [key, stat] : cells) {
        if (stat.acc_w.empty()) continue;
        auto [mw, sw] = mean_std(stat.acc_w);
        auto [mu, su] = mean_std(stat.acc_u);
        auto [ma, _] = mean_std(stat.aurocs);
        agg << key.first << ',' << key.second << ',' << mw << ',' << sw << ',' << mu << ',' << su
            << ',' << ma << "\n";
    }
}

}  // namespace openset
