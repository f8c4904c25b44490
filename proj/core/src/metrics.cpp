#include "openset/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace openset {

namespace {

// Mid-rank assignment (1-based).
Vec mid_ranks(const Vec& values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    Vec ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double auroc(const Vec& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw ValidationError("auroc: length mismatch");
    std::size_t n_pos = 0, n_neg = 0;
    for (int l : labels) (l ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) throw ValidationError("auroc: both classes must be present");

    Vec ranks = mid_ranks(scores);
    double rank_sum_pos = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i]) rank_sum_pos += ranks[i];
    double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size()) throw ValidationError("accuracy: length mismatch");
    if (predictions.empty()) throw ValidationError("accuracy: empty input");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        if (predictions[i] == labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

double vote_entropy(const std::vector<int>& votes, bool bits) {
    if (votes.empty()) throw ValidationError("vote_entropy: empty group");
    std::map<int, std::size_t> hist;
    for (int v : votes) hist[v]++;
    double h = 0.0;
    for (const auto& [label, count] : hist) {
        double f = static_cast<double>(count) / static_cast<double>(votes.size());
        h -= f * std::log(f);
    }
    return bits ? h / std::log(2.0) : h;
}

int aggregate_group(const std::vector<int>& votes, const Vec* weights) {
    if (votes.empty()) throw ValidationError("aggregate_group: empty group");
    if (weights && weights->size() != votes.size())
        throw ValidationError("aggregate_group: weight/vote length mismatch");
    std::map<int, double> mass;
    for (std::size_t i = 0; i < votes.size(); ++i)
        mass[votes[i]] += weights ? (*weights)[i] : 1.0;
    int best = votes[0];
    double best_mass = -1.0;
    for (const auto& [label, m] : mass) {
        // std::map iterates labels in increasing order; strict > keeps the
        // smallest class on ties.
        if (m > best_mass) {
            best_mass = m;
            best = label;
        }
    }
    return best;
}

double spearman_rank_correlation(const Vec& a, const Vec& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw ValidationError("rank correlation needs >= 2 paired values");
    Vec ra = mid_ranks(a), rb = mid_ranks(b);
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= static_cast<double>(ra.size());
    mb /= static_cast<double>(rb.size());
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        double da = ra[i] - ma, db = rb[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va == 0.0 || vb == 0.0) throw ValidationError("rank correlation undefined for constant input");
    return cov / std::sqrt(va * vb);
}

ClusterPurityReport cluster_purity_report(const OodScoreTable& table,
                                          const std::vector<std::optional<bool>>& ood_truth) {
    if (ood_truth.size() != table.ids.size())
        throw ValidationError("cluster_purity_report: truth/table length mismatch");
    bool any_truth = false;
    for (const auto& t : ood_truth)
        if (t) { any_truth = true; break; }
    if (!any_truth) throw ValidationError("cluster_purity_report: no ood_truth available");

    std::vector<std::size_t> inliers(table.cis.size(), 0), oods(table.cis.size(), 0);
    for (std::size_t i = 0; i < table.ids.size(); ++i) {
        if (!ood_truth[i]) continue;
        (*ood_truth[i] ? oods : inliers)[table.clusters[i]]++;
    }

    ClusterPurityReport report;
    Vec cis_vals, ood_fracs;
    for (std::size_t c = 0; c < table.cis.size(); ++c) {
        std::size_t total = inliers[c] + oods[c];
        report.rows.push_back({c, table.cis[c], inliers[c], oods[c]});
        if (total > 0) {
            cis_vals.push_back(table.cis[c]);
            ood_fracs.push_back(static_cast<double>(oods[c]) / static_cast<double>(total));
        }
    }
    if (cis_vals.size() >= 2) {
        try {
            report.rank_correlation = spearman_rank_correlation(cis_vals, ood_fracs);
        } catch (const ValidationError&) {
            report.rank_correlation.reset();  // constant column
        }
    }
    return report;
}

}  // namespace openset
