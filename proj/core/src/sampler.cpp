#include "openset/sampler.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace openset {

using nlohmann::json;

AliasTable AliasTable::build(const Vec& weights) {
    if (weights.empty()) throw ValidationError("alias table: empty weights");
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0 || !std::isfinite(w)) throw ValidationError("alias table: bad weight");
        total += w;
    }
    if (total <= 0.0) throw ValidationError("alias table: all weights zero");

    const std::size_t n = weights.size();
    AliasTable t;
    t.prob.assign(n, 0.0);
    t.alias.assign(n, 0);
    Vec scaled(n);
    for (std::size_t i = 0; i < n; ++i) scaled[i] = weights[i] / total * static_cast<double>(n);

    std::vector<std::size_t> small, large;
    for (std::size_t i = 0; i < n; ++i)
        (scaled[i] < 1.0 ? small : large).push_back(i);

    while (!small.empty() && !large.empty()) {
        std::size_t s = small.back(); small.pop_back();
        std::size_t l = large.back(); large.pop_back();
        t.prob[s] = scaled[s];
        t.alias[s] = l;
        scaled[l] = (scaled[l] + scaled[s]) - 1.0;
        (scaled[l] < 1.0 ? small : large).push_back(l);
    }
    for (std::size_t i : small) { t.prob[i] = 1.0; t.alias[i] = i; }
    for (std::size_t i : large) { t.prob[i] = 1.0; t.alias[i] = i; }
    return t;
}

std::size_t AliasTable::draw(Rng& rng) const {
    std::uniform_int_distribution<std::size_t> column(0, prob.size() - 1);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::size_t c = column(rng);
    return coin(rng) < prob[c] ? c : alias[c];
}

Vec AliasTable::single_draw_probabilities() const {
    const std::size_t n = prob.size();
    Vec p(n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
        p[c] += prob[c] / static_cast<double>(n);
        p[alias[c]] += (1.0 - prob[c]) / static_cast<double>(n);
    }
    return p;
}

std::vector<std::pair<std::vector<std::size_t>, double>> merge_super_clusters(
    const Vec& cis, double tolerance, const std::vector<std::size_t>* cluster_counts) {
    if (cis.empty()) throw ValidationError("merge_super_clusters: empty CIS");
    for (double v : cis)
        if (!std::isfinite(v)) throw ValidationError("merge_super_clusters: non-finite CIS");

    std::vector<std::size_t> order(cis.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cis[a] < cis[b]; });

    std::vector<std::pair<std::vector<std::size_t>, double>> groups;
    std::vector<std::size_t> cur{order[0]};
    for (std::size_t i = 1; i < order.size(); ++i) {
        // Single-link chaining on the sorted values.
        if (cis[order[i]] - cis[order[i - 1]] <= tolerance) {
            cur.push_back(order[i]);
        } else {
            groups.push_back({std::move(cur), 0.0});
            cur = {order[i]};
        }
    }
    groups.push_back({std::move(cur), 0.0});

    for (auto& [members, group_cis] : groups) {
        double mass = 0.0, weighted = 0.0;
        for (std::size_t c : members) {
            double w = cluster_counts ? static_cast<double>((*cluster_counts)[c]) : 1.0;
            mass += w;
            weighted += w * cis[c];
        }
        if (mass > 0.0) {
            group_cis = weighted / mass;
        } else {
            for (std::size_t c : members) group_cis += cis[c];
            group_cis /= static_cast<double>(members.size());
        }
        std::sort(members.begin(), members.end());
    }
    return groups;
}

SamplerPlan build_plan(const OodScoreTable& table, double tolerance, double delta_w,
                       std::uint64_t seed) {
    if (delta_w <= 0) throw ValidationError("build_plan: delta_w must be > 0");

    std::vector<std::size_t> unlabeled;
    for (std::size_t i = 0; i < table.ids.size(); ++i)
        if (table.origins.empty() || table.origins[i] == Split::Unlabeled) unlabeled.push_back(i);
    if (unlabeled.empty()) throw ValidationError("build_plan: no unlabeled samples in score table");

    std::vector<std::size_t> counts(table.cis.size(), 0);
    for (std::size_t i : unlabeled) counts[table.clusters[i]]++;

    auto merged = merge_super_clusters(table.cis, tolerance, &counts);

    SamplerPlan plan;
    plan.merge_tolerance = tolerance;
    plan.delta_w = delta_w;
    plan.seed = seed;

    for (auto& [members, group_cis] : merged) {
        SamplerGroup g;
        g.clusters = members;
        g.cis = group_cis;
        for (std::size_t i : unlabeled)
            if (std::binary_search(members.begin(), members.end(), table.clusters[i]))
                g.members.push_back(i);
        if (g.members.empty()) continue;  // dropped; weights renormalize below

        double wsum = 0.0;
        g.member_weights.reserve(g.members.size());
        for (std::size_t i : g.members) {
            double w = 1.0 / (table.scores[i] + delta_w);
            g.member_weights.push_back(w);
            wsum += w;
        }
        for (auto& w : g.member_weights) w /= wsum;
        g.member_alias = AliasTable::build(g.member_weights);
        plan.groups.push_back(std::move(g));
    }
    if (plan.groups.empty()) throw ValidationError("build_plan: every group is empty");

    double wsum = 0.0;
    plan.group_weights.reserve(plan.groups.size());
    for (const auto& g : plan.groups) {
        double w = 1.0 / (g.cis + delta_w);
        plan.group_weights.push_back(w);
        wsum += w;
    }
    for (auto& w : plan.group_weights) w /= wsum;
    plan.group_alias = AliasTable::build(plan.group_weights);
    return plan;
}

Vec SamplerPlan::marginal_probabilities(std::size_t table_size) const {
    Vec p(table_size, 0.0);
    for (std::size_t g = 0; g < groups.size(); ++g)
        for (std::size_t m = 0; m < groups[g].members.size(); ++m)
            p[groups[g].members[m]] += group_weights[g] * groups[g].member_weights[m];
    return p;
}

double SamplerPlan::expected_drawn_score(const Vec& scores) const {
    double e = 0.0;
    for (std::size_t g = 0; g < groups.size(); ++g)
        for (std::size_t m = 0; m < groups[g].members.size(); ++m)
            e += group_weights[g] * groups[g].member_weights[m] * scores[groups[g].members[m]];
    return e;
}

std::string SamplerPlan::to_json(const std::vector<std::string>& table_ids) const {
    json j;
    j["merge_tolerance"] = merge_tolerance;
    j["delta_w"] = delta_w;
    j["seed"] = seed;
    j["group_weights"] = group_weights;
    j["groups"] = json::array();
    for (const auto& g : groups) {
        json jg;
        jg["clusters"] = g.clusters;
        jg["cis"] = g.cis;
        json ids = json::array();
        for (std::size_t i : g.members) ids.push_back(table_ids[i]);
        jg["member_ids"] = std::move(ids);
        jg["member_weights"] = g.member_weights;
        j["groups"].push_back(std::move(jg));
    }
    return j.dump(2);
}

std::vector<DrawRecord> draw_batch(const SamplerPlan& plan, std::size_t batch_size, Rng& rng,
                                   std::size_t step_offset) {
    std::vector<DrawRecord> out;
    out.reserve(batch_size);
    for (std::size_t b = 0; b < batch_size; ++b) {
        std::size_t g = plan.group_alias.draw(rng);
        std::size_t m = plan.groups[g].member_alias.draw(rng);
        out.push_back({step_offset + b, plan.groups[g].members[m], g});
    }
    return out;
}

std::vector<std::size_t> exposure_histogram(const std::vector<DrawRecord>& log,
                                            const OodScoreTable& table, std::size_t n_bins) {
    if (log.empty()) throw ValidationError("exposure_histogram: empty draw log");
    if (n_bins == 0) throw ValidationError("exposure_histogram: n_bins must be >= 1");
    auto [lo_it, hi_it] = std::minmax_element(table.scores.begin(), table.scores.end());
    double lo = *lo_it, hi = *hi_it;
    std::vector<std::size_t> bins(n_bins, 0);
    for (const auto& d : log) {
        double s = table.scores[d.table_index];
        std::size_t b = (hi == lo) ? 0
                                   : std::min(n_bins - 1, static_cast<std::size_t>(
                                                              (s - lo) / (hi - lo) * n_bins));
        bins[b]++;
    }
    return bins;
}

void save_draw_log(const std::vector<DrawRecord>& log, const OodScoreTable& table,
                   const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write draw log: " + path);
    out << "step,id,group,ood_score\n";
    char buf[32];
    for (const auto& d : log) {
        std::snprintf(buf, sizeof(buf), "%.17g", table.scores[d.table_index]);
        out << d.step << ',' << table.ids[d.table_index] << ',' << d.group << ',' << buf << "\n";
    }
}

}  // namespace openset
