#include "openset/store.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace openset {

using nlohmann::json;

const char* split_name(Split s) {
    switch (s) {
        case Split::Labeled: return "labeled";
        case Split::Unlabeled: return "unlabeled";
        case Split::Validation: return "validation";
        case Split::Test: return "test";
    }
    return "?";
}

Split split_from_name(const std::string& name) {
    if (name == "labeled") return Split::Labeled;
    if (name == "unlabeled") return Split::Unlabeled;
    if (name == "validation") return Split::Validation;
    if (name == "test") return Split::Test;
    throw ValidationError("unknown split name: " + name);
}

std::vector<std::size_t> Store::indices_of(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].split == s) out.push_back(i);
    return out;
}

const EmbeddingRecord* Store::find(const std::string& id) const {
    for (const auto& r : records)
        if (r.id == id) return &r;
    return nullptr;
}

Store validate_store(std::vector<EmbeddingRecord> records, std::vector<std::string>* warnings) {
    Store store;
    std::unordered_set<std::string> seen;
    for (auto& r : records) {
        if (!seen.insert(r.id).second)
            throw ValidationError("duplicate record id: " + r.id);
        if (r.vector.empty())
            throw ValidationError("record " + r.id + ": empty vector");
        if (store.dim == 0) store.dim = r.vector.size();
        if (r.vector.size() != store.dim)
            throw ValidationError("record " + r.id + ": dimension mismatch (got " +
                                  std::to_string(r.vector.size()) + ", expected " +
                                  std::to_string(store.dim) + ")");
        if (!all_finite(r.vector))
            throw ValidationError("record " + r.id + ": non-finite vector component");
        const bool needs_label = r.split != Split::Unlabeled;
        if (needs_label && !r.label)
            throw ValidationError("record " + r.id + ": split '" + split_name(r.split) +
                                  "' requires a label");
        if (!needs_label && r.label) {
            if (warnings)
                warnings->push_back("record " + r.id + ": label on unlabeled record ignored");
            r.label.reset();
        }
        if (r.label && *r.label < 0)
            throw ValidationError("record " + r.id + ": negative label");
    }
    store.records = std::move(records);
    return store;
}

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

EmbeddingRecord record_from_json(const json& j, std::size_t line_no) {
    EmbeddingRecord r;
    try {
        r.id = j.at("id").get<std::string>();
        r.split = split_from_name(j.at("split").get<std::string>());
        if (j.contains("label") && !j["label"].is_null()) r.label = j["label"].get<int>();
        r.vector = j.at("vector").get<Vec>();
        if (j.contains("ood_truth") && !j["ood_truth"].is_null()) r.ood_truth = j["ood_truth"].get<bool>();
        if (j.contains("group_id") && !j["group_id"].is_null()) r.group_id = j["group_id"].get<std::string>();
    } catch (const json::exception& e) {
        throw ValidationError("line " + std::to_string(line_no) + ": bad record: " + e.what());
    }
    return r;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

}  // namespace

StoreFormat format_from_name(const std::string& name) {
    if (name == "jsonl") return StoreFormat::Jsonl;
    if (name == "csv") return StoreFormat::Csv;
    throw ValidationError("unknown store format: " + name);
}

Store load_store(const std::string& path, StoreFormat format, std::vector<std::string>* warnings) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open store file: " + path);

    std::vector<EmbeddingRecord> records;
    std::string line;
    std::size_t line_no = 0;

    if (format == StoreFormat::Jsonl) {
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded())
                throw ValidationError("line " + std::to_string(line_no) + ": malformed JSON");
            records.push_back(record_from_json(j, line_no));
        }
    } else {
        if (!std::getline(in, line)) throw ValidationError("empty CSV store: " + path);
        ++line_no;
        auto header = split_csv_line(line);
        if (header.size() < 5 || header[0] != "id" || header[1] != "split")
            throw ValidationError("bad CSV header in " + path);
        const std::size_t dim = header.size() - 5;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            auto cells = split_csv_line(line);
            if (cells.size() != header.size())
                throw ValidationError("line " + std::to_string(line_no) + ": wrong cell count");
            EmbeddingRecord r;
            r.id = cells[0];
            r.split = split_from_name(cells[1]);
            if (!cells[2].empty()) r.label = std::stoi(cells[2]);
            if (!cells[3].empty()) r.group_id = cells[3];
            if (!cells[4].empty()) r.ood_truth = (cells[4] == "1" || cells[4] == "true");
            r.vector.reserve(dim);
            for (std::size_t i = 5; i < cells.size(); ++i) {
                try {
                    r.vector.push_back(std::stod(cells[i]));
                } catch (const std::exception&) {
                    throw ValidationError("line " + std::to_string(line_no) + ": bad vector cell '" +
                                          cells[i] + "'");
                }
            }
            records.push_back(std::move(r));
        }
    }
    return validate_store(std::move(records), warnings);
}

void save_store(const Store& store, const std::string& path, StoreFormat format) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write store file: " + path);

    if (format == StoreFormat::Jsonl) {
        for (const auto& r : store.records) {
            json j;
            j["id"] = r.id;
            j["split"] = split_name(r.split);
            j["label"] = r.label ? json(*r.label) : json(nullptr);
            json vec = json::array();
            for (double v : r.vector) vec.push_back(v);
            j["vector"] = std::move(vec);
            j["ood_truth"] = r.ood_truth ? json(*r.ood_truth) : json(nullptr);
            j["group_id"] = r.group_id ? json(*r.group_id) : json(nullptr);
            out << j.dump() << "\n";
        }
    } else {
        out << "id,split,label,group_id,ood_truth";
        for (std::size_t d = 0; d < store.dim; ++d) out << ",v" << d;
        out << "\n";
        for (const auto& r : store.records) {
            out << r.id << ',' << split_name(r.split) << ',';
            if (r.label) out << *r.label;
            out << ',';
            if (r.group_id) out << *r.group_id;
            out << ',';
            if (r.ood_truth) out << (*r.ood_truth ? "1" : "0");
            for (double v : r.vector) out << ',' << fmt_double(v);
            out << "\n";
        }
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

void SyntheticSpec::validate() const {
    if (n_classes < 2) throw ValidationError("synthetic spec: C must be >= 2");
    if (raw_dim < 2) throw ValidationError("synthetic spec: raw_dim must be >= 2");
    if (class_separation <= 0) throw ValidationError("synthetic spec: class_separation must be > 0");
    if (ood_offset <= 0) throw ValidationError("synthetic spec: ood_offset must be > 0");
    if (n_ood > 0 && n_ood_components == 0)
        throw ValidationError("synthetic spec: n_ood > 0 requires n_ood_components >= 1");
}

namespace {

Vec gaussian_vec(std::size_t dim, Rng& rng, double sigma = 1.0) {
    std::normal_distribution<double> gauss(0.0, sigma);
    Vec v(dim);
    for (auto& x : v) x = gauss(rng);
    return v;
}

double dist(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace

SyntheticGroundTruth synthetic_ground_truth(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ull);

    SyntheticGroundTruth gt;
    // Rejection placement; the scale grows until the separation constraint fits.
    double scale = spec.class_separation;
    while (gt.class_means.size() < spec.n_classes) {
        Vec cand = gaussian_vec(spec.raw_dim, rng, scale);
        bool ok = true;
        for (const auto& m : gt.class_means)
            if (dist(cand, m) < spec.class_separation) { ok = false; break; }
        if (ok) gt.class_means.push_back(std::move(cand));
        else scale *= 1.02;
    }
    scale = spec.ood_offset;
    while (gt.ood_means.size() < spec.n_ood_components) {
        Vec cand = gaussian_vec(spec.raw_dim, rng, scale);
        bool ok = true;
        for (const auto& m : gt.class_means)
            if (dist(cand, m) < spec.ood_offset) { ok = false; break; }
        if (ok) gt.ood_means.push_back(std::move(cand));
        else scale *= 1.02;
    }
    return gt;
}

Store generate_synthetic_openset(const SyntheticSpec& spec) {
    spec.validate();
    auto gt = synthetic_ground_truth(spec);
    Rng rng(spec.seed);
    std::uniform_int_distribution<std::size_t> pick_class(0, spec.n_classes - 1);

    std::vector<EmbeddingRecord> records;
    std::size_t counter = 0;

    auto sample_inlier = [&](Split split, bool with_label, bool with_truth) {
        std::size_t c = pick_class(rng);
        Vec v = gaussian_vec(spec.raw_dim, rng);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += gt.class_means[c][i];
        EmbeddingRecord r;
        r.id = "s" + std::to_string(counter++);
        r.split = split;
        if (with_label) r.label = static_cast<int>(c);
        if (with_truth) r.ood_truth = false;
        r.vector = std::move(v);
        records.push_back(std::move(r));
    };

    for (std::size_t i = 0; i < spec.n_labeled; ++i) sample_inlier(Split::Labeled, true, false);
    for (std::size_t i = 0; i < spec.n_unlabeled_inlier; ++i) sample_inlier(Split::Unlabeled, false, true);
    if (spec.n_ood > 0) {
        std::uniform_int_distribution<std::size_t> pick_ood(0, spec.n_ood_components - 1);
        for (std::size_t i = 0; i < spec.n_ood; ++i) {
            std::size_t c = pick_ood(rng);
            Vec v = gaussian_vec(spec.raw_dim, rng);
            for (std::size_t k = 0; k < v.size(); ++k) v[k] += gt.ood_means[c][k];
            EmbeddingRecord r;
            r.id = "s" + std::to_string(counter++);
            r.split = Split::Unlabeled;
            r.ood_truth = true;
            r.vector = std::move(v);
            records.push_back(std::move(r));
        }
    }
    for (std::size_t i = 0; i < spec.n_val; ++i) sample_inlier(Split::Validation, true, false);
    for (std::size_t i = 0; i < spec.n_test; ++i) sample_inlier(Split::Test, true, false);

    return validate_store(std::move(records));
}

}  // namespace openset
