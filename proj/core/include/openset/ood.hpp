#pragma once

#include <string>

#include "openset/gmm.hpp"
#include "openset/store.hpp"

namespace openset {

struct OodScoreTable {
    std::vector<std::string> ids;
    std::vector<Split> origins;          // split each scored sample came from
    Vec cis;                             // per-cluster impurity, length N_cls
    Vec scores;                          // raw OOD score per sample
    Vec scores_norm;                     // min-max normalized over the unlabeled pool
    std::vector<std::size_t> clusters;   // argmax-responsibility hard assignment
    double smoothing = 1e-6;

    std::size_t index_of(const std::string& id) const;

    void save_csv(const std::string& path) const;
    static OodScoreTable load_csv(const std::string& csv_path, const std::string& sidecar_path);
    std::string sidecar_json() const;
};

enum class ScoreNormalization { MinMax, Rank };

// CIS(c_j) = -log((L_j + delta) / (L_j + U_j + delta)) with L/U the labeled
// and unlabeled membership masses. A zero-mass cluster scores 0 and appends
// a warning.
Vec cluster_impurity(const Mat& resp, const std::vector<bool>& labeled_mask, double smoothing,
                     std::vector<std::string>* warnings = nullptr);

// Membership-weighted sum of cluster impurities for one responsibility row.
double ood_score(const double* resp_row, const Vec& cis);

// Min-max over the pool; a constant (or single-element) pool maps to 0.5.
Vec normalize_scores(const Vec& raw, ScoreNormalization mode = ScoreNormalization::MinMax);

// e_step -> cluster_impurity -> ood_score -> normalize_scores over the
// labeled+unlabeled fitting population; extra splits may be scored too.
OodScoreTable score_table(const GmmModel& model, const Store& embeddings, double smoothing,
                          bool score_eval_splits = false,
                          ScoreNormalization norm_mode = ScoreNormalization::MinMax,
                          std::vector<std::string>* warnings = nullptr);

}  // namespace openset
