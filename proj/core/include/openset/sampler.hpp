#pragma once

#include <string>

#include "openset/ood.hpp"

namespace openset {

// Walker alias table; single-draw probability equals the input weights
// exactly up to floating-point rounding.
struct AliasTable {
    Vec prob;
    std::vector<std::size_t> alias;

    static AliasTable build(const Vec& weights);
    std::size_t draw(Rng& rng) const;
    // Analytic single-draw probability mass, for verification.
    Vec single_draw_probabilities() const;
};

struct SamplerGroup {
    std::vector<std::size_t> clusters;  // member cluster indices
    double cis = 0.0;                   // mass-weighted mean of member CIS
    std::vector<std::size_t> members;   // indices into the score table (unlabeled only)
    Vec member_weights;                 // simplex, proportional to 1/(OOD + delta_w)
    AliasTable member_alias;
};

struct SamplerPlan {
    std::vector<SamplerGroup> groups;
    Vec group_weights;  // simplex, proportional to 1/(group CIS + delta_w)
    AliasTable group_alias;
    double merge_tolerance = 1e-9;
    double delta_w = 1e-3;
    std::uint64_t seed = 0;

    // Marginal draw probability per unlabeled score-table index.
    Vec marginal_probabilities(std::size_t table_size) const;
    // Exact expected OOD score of one draw.
    double expected_drawn_score(const Vec& scores) const;

    std::string to_json(const std::vector<std::string>& table_ids) const;
};

// Single-link chaining of near-equal CIS values; returns the partition as
// cluster-index groups plus each group's mass-weighted CIS (mass = number of
// hard-assigned samples, uniform when no sample counts are given).
std::vector<std::pair<std::vector<std::size_t>, double>> merge_super_clusters(
    const Vec& cis, double tolerance, const std::vector<std::size_t>* cluster_counts = nullptr);

SamplerPlan build_plan(const OodScoreTable& table, double tolerance, double delta_w,
                       std::uint64_t seed);

struct DrawRecord {
    std::size_t step;
    std::size_t table_index;
    std::size_t group;
};

// Two-stage draw: group by inverse impurity, then member by inverse OOD;
// i.i.d. with replacement.
std::vector<DrawRecord> draw_batch(const SamplerPlan& plan, std::size_t batch_size, Rng& rng,
                                   std::size_t step_offset = 0);

std::vector<std::size_t> exposure_histogram(const std::vector<DrawRecord>& log,
                                            const OodScoreTable& table, std::size_t n_bins);

void save_draw_log(const std::vector<DrawRecord>& log, const OodScoreTable& table,
                   const std::string& path);

}  // namespace openset
