#include "openset/ood.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace openset {

using nlohmann::json;

std::size_t OodScoreTable::index_of(const std::string& id) const {
    auto it = std::find(ids.begin(), ids.end(), id);
    if (it == ids.end()) throw ValidationError("score table has no id " + id);
    return static_cast<std::size_t>(it - ids.begin());
}

Vec cluster_impurity(const Mat& resp, const std::vector<bool>& labeled_mask, double smoothing,
                     std::vector<std::string>* warnings) {
    if (labeled_mask.size() != resp.rows)
        throw ValidationError("cluster_impurity: mask/responsibility row mismatch");
    if (smoothing <= 0) throw ValidationError("cluster_impurity: smoothing must be > 0");

    Vec cis(resp.cols, 0.0);
    for (std::size_t j = 0; j < resp.cols; ++j) {
        double labeled_mass = 0.0, unlabeled_mass = 0.0;
        for (std::size_t i = 0; i < resp.rows; ++i)
            (labeled_mask[i] ? labeled_mass : unlabeled_mass) += resp(i, j);
        if (labeled_mass + unlabeled_mass == 0.0) {
            if (warnings)
                warnings->push_back("cluster " + std::to_string(j) + " has zero total mass");
            cis[j] = 0.0;
            continue;
        }
        cis[j] = -std::log((labeled_mass + smoothing) /
                           (labeled_mass + unlabeled_mass + smoothing));
    }
    return cis;
}

double ood_score(const double* resp_row, const Vec& cis) {
    double s = 0.0;
    for (std::size_t j = 0; j < cis.size(); ++j) s += cis[j] * resp_row[j];
    return s;
}

Vec normalize_scores(const Vec& raw, ScoreNormalization mode) {
    if (raw.empty()) throw ValidationError("normalize_scores: empty input");
    Vec out(raw.size());
    if (mode == ScoreNormalization::MinMax) {
        auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
        double lo = *lo_it, hi = *hi_it;
        if (hi == lo) {
            std::fill(out.begin(), out.end(), 0.5);
            return out;
        }
        for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - lo) / (hi - lo);
        return out;
    }
    // Rank mode: empirical CDF with mid-rank tie handling.
    for (std::size_t i = 0; i < raw.size(); ++i) {
        double below = 0.0, ties = 0.0;
        for (double v : raw) {
            if (v < raw[i]) below += 1.0;
            else if (v == raw[i]) ties += 1.0;
        }
        out[i] = (below + 0.5 * ties) / static_cast<double>(raw.size());
    }
    return out;
}

OodScoreTable score_table(const GmmModel& model, const Store& embeddings, double smoothing,
                          bool score_eval_splits, ScoreNormalization norm_mode,
                          std::vector<std::string>* warnings) {
    std::vector<Vec> fit_data;
    std::vector<bool> labeled_mask;
    std::vector<std::size_t> fit_rows;  // record index per fit row
    std::vector<std::size_t> extra_rows;
    for (std::size_t i = 0; i < embeddings.records.size(); ++i) {
        Split s = embeddings.records[i].split;
        if (s == Split::Labeled || s == Split::Unlabeled) {
            fit_data.push_back(embeddings.records[i].vector);
            labeled_mask.push_back(s == Split::Labeled);
            fit_rows.push_back(i);
        } else if (score_eval_splits) {
            extra_rows.push_back(i);
        }
    }
    if (fit_data.empty()) throw ValidationError("score_table: no labeled/unlabeled samples");

    Mat resp = e_step(model, fit_data);
    OodScoreTable table;
    table.smoothing = smoothing;
    table.cis = cluster_impurity(resp, labeled_mask, smoothing, warnings);

    auto hard = hard_assignments(resp);
    Vec unlabeled_raw;
    for (std::size_t r = 0; r < fit_rows.size(); ++r) {
        const auto& rec = embeddings.records[fit_rows[r]];
        table.ids.push_back(rec.id);
        table.origins.push_back(rec.split);
        table.scores.push_back(ood_score(resp.row(r), table.cis));
        table.clusters.push_back(hard[r]);
        if (rec.split == Split::Unlabeled) unlabeled_raw.push_back(table.scores.back());
    }
    for (std::size_t i : extra_rows) {
        const auto& rec = embeddings.records[i];
        std::vector<Vec> one{rec.vector};
        Mat r1 = e_step(model, one);
        table.ids.push_back(rec.id);
        table.origins.push_back(rec.split);
        table.scores.push_back(ood_score(r1.row(0), table.cis));
        table.clusters.push_back(hard_assignments(r1)[0]);
    }

    // Normalization anchored to the unlabeled pool; other origins are mapped
    // through the same transform and clamped.
    if (unlabeled_raw.empty()) unlabeled_raw = table.scores;
    table.scores_norm.resize(table.scores.size());
    if (norm_mode == ScoreNormalization::MinMax) {
        auto [lo_it, hi_it] = std::minmax_element(unlabeled_raw.begin(), unlabeled_raw.end());
        double lo = *lo_it, hi = *hi_it;
        for (std::size_t i = 0; i < table.scores.size(); ++i) {
            double v = (hi == lo) ? 0.5 : (table.scores[i] - lo) / (hi - lo);
            table.scores_norm[i] = std::clamp(v, 0.0, 1.0);
        }
    } else {
        for (std::size_t i = 0; i < table.scores.size(); ++i) {
            double below = 0.0, ties = 0.0;
            for (double v : unlabeled_raw) {
                if (v < table.scores[i]) below += 1.0;
                else if (v == table.scores[i]) ties += 1.0;
            }
            table.scores_norm[i] = (below + 0.5 * ties) / static_cast<double>(unlabeled_raw.size());
        }
    }
    return table;
}

void OodScoreTable::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write score table: " + path);
    out << "id,cluster,ood_score,ood_score_norm\n";
    char buf[64];
    for (std::size_t i = 0; i < ids.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g", clusters[i], scores[i], scores_norm[i]);
        out << ids[i] << ',' << buf << "\n";
    }
}

std::string OodScoreTable::sidecar_json() const {
    json j;
    j["cis"] = cis;
    j["smoothing"] = smoothing;
    json origins_j = json::array();
    for (Split s : origins) origins_j.push_back(split_name(s));
    j["origins"] = std::move(origins_j);
    return j.dump(2);
}

OodScoreTable OodScoreTable::load_csv(const std::string& csv_path, const std::string& sidecar_path) {
    std::ifstream in(csv_path);
    if (!in) throw ValidationError("cannot open score table: " + csv_path);
    OodScoreTable t;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t p1 = line.find(','), p2 = line.find(',', p1 + 1), p3 = line.find(',', p2 + 1);
        if (p1 == std::string::npos || p2 == std::string::npos || p3 == std::string::npos)
            throw ValidationError("bad score table row: " + line);
        t.ids.push_back(line.substr(0, p1));
        t.clusters.push_back(std::stoul(line.substr(p1 + 1, p2 - p1 - 1)));
        t.scores.push_back(std::stod(line.substr(p2 + 1, p3 - p2 - 1)));
        t.scores_norm.push_back(std::stod(line.substr(p3 + 1)));
    }
    std::ifstream side(sidecar_path);
    if (!side) throw ValidationError("cannot open score sidecar: " + sidecar_path);
    json j = json::parse(side);
    t.cis = j.at("cis").get<Vec>();
    t.smoothing = j.at("smoothing").get<double>();
    if (j.contains("origins"))
        for (const auto& s : j["origins"]) t.origins.push_back(split_from_name(s.get<std::string>()));
    return t;
}

}  // namespace openset
