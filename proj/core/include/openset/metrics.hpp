#pragma once

#include <optional>
#include <string>

#include "openset/ood.hpp"

namespace openset {

// Mann-Whitney AUROC with mid-rank tie handling; labels are 1 = positive.
double auroc(const Vec& scores, const std::vector<int>& labels);

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

// Shannon entropy of the vote histogram, in nats by default.
double vote_entropy(const std::vector<int>& votes, bool bits = false);

// Plurality vote, or weighted vote when weights are given; ties go to the
// smallest class index.
int aggregate_group(const std::vector<int>& votes, const Vec* weights = nullptr);

struct ClusterPurityRow {
    std::size_t cluster;
    double cis;
    std::size_t inlier_count;
    std::size_t ood_count;
};

struct ClusterPurityReport {
    std::vector<ClusterPurityRow> rows;
    // Spearman rank correlation between CIS and OOD fraction; absent when
    // fewer than two occupied clusters.
    std::optional<double> rank_correlation;
};

ClusterPurityReport cluster_purity_report(const OodScoreTable& table,
                                          const std::vector<std::optional<bool>>& ood_truth);

double spearman_rank_correlation(const Vec& a, const Vec& b);

}  // namespace openset
