#include "openset/gmm.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include <json.hpp>

namespace openset {

using nlohmann::json;

const char* covariance_name(CovarianceType t) {
    return t == CovarianceType::Diagonal ? "diagonal" : "full";
}

CovarianceType covariance_from_name(const std::string& name) {
    if (name == "diagonal") return CovarianceType::Diagonal;
    if (name == "full") return CovarianceType::Full;
    throw ValidationError("unknown covariance type: " + name);
}

std::string GmmModel::to_json() const {
    json j;
    j["cov_type"] = covariance_name(cov_type);
    j["priors"] = priors;
    j["components"] = json::array();
    for (const auto& c : components) {
        json jc;
        jc["mean"] = c.mean;
        jc["cov"] = c.cov;
        j["components"].push_back(std::move(jc));
    }
    j["log_likelihood_trace"] = log_likelihood_trace;
    j["converged"] = converged;
    return j.dump(2);
}

GmmModel GmmModel::from_json(const std::string& text) {
    json j = json::parse(text);
    GmmModel m;
    m.cov_type = covariance_from_name(j.at("cov_type").get<std::string>());
    m.priors = j.at("priors").get<Vec>();
    for (const auto& jc : j.at("components")) {
        GmmComponent c;
        c.mean = jc.at("mean").get<Vec>();
        c.cov = jc.at("cov").get<Vec>();
        m.components.push_back(std::move(c));
    }
    m.log_likelihood_trace = j.at("log_likelihood_trace").get<std::vector<double>>();
    m.converged = j.at("converged").get<bool>();
    if (m.priors.size() != m.components.size())
        throw ValidationError("GMM: prior/component count mismatch");
    return m;
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// In-place Cholesky of a row-major symmetric matrix; returns false if not PD.
bool cholesky(Vec& a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            if (i == j) {
                if (s <= 0.0) return false;
                a[i * n + j] = std::sqrt(s);
            } else {
                a[i * n + j] = s / a[j * n + j];
            }
        }
        for (std::size_t j = i + 1; j < n; ++j) a[i * n + j] = 0.0;
    }
    return true;
}

}  // namespace

double log_gaussian_pdf(const Vec& z, const Vec& mean, const Vec& cov, CovarianceType type) {
    const std::size_t d = mean.size();
    if (z.size() != d) throw ValidationError("log_gaussian_pdf: dimension mismatch");

    if (type == CovarianceType::Diagonal) {
        if (cov.size() != d) throw ValidationError("log_gaussian_pdf: bad diagonal covariance size");
        double logdet = 0.0, maha = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            if (cov[i] <= 0.0) throw NumericError("non-positive diagonal variance");
            logdet += std::log(cov[i]);
            double diff = z[i] - mean[i];
            maha += diff * diff / cov[i];
        }
        return -0.5 * (static_cast<double>(d) * kLog2Pi + logdet + maha);
    }

    if (cov.size() != d * d) throw ValidationError("log_gaussian_pdf: bad full covariance size");
    Vec chol = cov;
    if (!cholesky(chol, d)) throw NumericError("covariance not positive definite");
    // Solve L y = (z - mean); maha = |y|^2, logdet = 2 sum log L_ii.
    Vec y(d);
    double logdet = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double s = z[i] - mean[i];
        for (std::size_t k = 0; k < i; ++k) s -= chol[i * d + k] * y[k];
        y[i] = s / chol[i * d + i];
        logdet += 2.0 * std::log(chol[i * d + i]);
    }
    double maha = dot(y, y);
    return -0.5 * (static_cast<double>(d) * kLog2Pi + logdet + maha);
}

Mat e_step(const GmmModel& model, const std::vector<Vec>& data, double* total_ll) {
    const std::size_t n = data.size();
    const std::size_t k = model.n_components();
    Mat resp(n, k);
    double ll = 0.0;
    Vec logp(k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j)
            logp[j] = std::log(model.priors[j]) +
                      log_gaussian_pdf(data[i], model.components[j].mean, model.components[j].cov,
                                       model.cov_type);
        double lse = log_sum_exp(logp);
        if (!std::isfinite(lse))
            throw NumericError("e_step: sample " + std::to_string(i) +
                               " has zero density under every component");
        for (std::size_t j = 0; j < k; ++j) resp(i, j) = std::exp(logp[j] - lse);
        ll += lse;
    }
    if (total_ll) *total_ll = ll;
    return resp;
}

void m_step(const std::vector<Vec>& data, const Mat& resp, GmmModel& model, double cov_floor) {
    const std::size_t n = data.size();
    const std::size_t k = resp.cols;
    const std::size_t d = data.front().size();

    std::vector<std::size_t> empty;
    for (std::size_t j = 0; j < k; ++j) {
        double nk = 0.0;
        for (std::size_t i = 0; i < n; ++i) nk += resp(i, j);
        if (nk < 1e-8) {
            empty.push_back(j);
            continue;
        }
        model.priors[j] = nk / static_cast<double>(n);
        auto& comp = model.components[j];
        comp.mean.assign(d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double w = resp(i, j);
            for (std::size_t c = 0; c < d; ++c) comp.mean[c] += w * data[i][c];
        }
        for (auto& m : comp.mean) m /= nk;

        if (model.cov_type == CovarianceType::Diagonal) {
            comp.cov.assign(d, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                double w = resp(i, j);
                for (std::size_t c = 0; c < d; ++c) {
                    double diff = data[i][c] - comp.mean[c];
                    comp.cov[c] += w * diff * diff;
                }
            }
            for (auto& v : comp.cov) v = v / nk + cov_floor;
        } else {
            comp.cov.assign(d * d, 0.0);
            Vec diff(d);
            for (std::size_t i = 0; i < n; ++i) {
                double w = resp(i, j);
                for (std::size_t c = 0; c < d; ++c) diff[c] = data[i][c] - comp.mean[c];
                for (std::size_t r = 0; r < d; ++r)
                    for (std::size_t c = 0; c < d; ++c) comp.cov[r * d + c] += w * diff[r] * diff[c];
            }
            for (auto& v : comp.cov) v /= nk;
            for (std::size_t c = 0; c < d; ++c) comp.cov[c * d + c] += cov_floor;
        }
    }

    if (!empty.empty()) {
        // Re-seed each starved component at the worst-fit sample so the
        // component count stays fixed.
        for (std::size_t j : empty) {
            std::size_t worst = 0;
            double worst_ll = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < n; ++i) {
                Vec logp;
                for (std::size_t c = 0; c < k; ++c) {
                    if (std::find(empty.begin(), empty.end(), c) != empty.end()) continue;
                    logp.push_back(std::log(model.priors[c]) +
                                   log_gaussian_pdf(data[i], model.components[c].mean,
                                                    model.components[c].cov, model.cov_type));
                }
                double lse = logp.empty() ? 0.0 : log_sum_exp(logp);
                if (lse < worst_ll) {
                    worst_ll = lse;
                    worst = i;
                }
            }
            auto& comp = model.components[j];
            comp.mean = data[worst];
            if (model.cov_type == CovarianceType::Diagonal) {
                comp.cov.assign(d, 1.0 + cov_floor);
            } else {
                comp.cov.assign(d * d, 0.0);
                for (std::size_t c = 0; c < d; ++c) comp.cov[c * d + c] = 1.0 + cov_floor;
            }
            model.priors[j] = 1.0 / static_cast<double>(n);
        }
    }

    double psum = std::accumulate(model.priors.begin(), model.priors.end(), 0.0);
    for (auto& p : model.priors) p /= psum;
}

std::vector<std::size_t> hard_assignments(const Mat& resp) {
    std::vector<std::size_t> out(resp.rows);
    for (std::size_t i = 0; i < resp.rows; ++i) {
        const double* row = resp.row(i);
        out[i] = static_cast<std::size_t>(std::max_element(row, row + resp.cols) - row);
    }
    return out;
}

namespace {

double sq_dist(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

// k-means++ D^2 seeding.
std::vector<Vec> seed_means(const std::vector<Vec>& data, std::size_t k, Rng& rng) {
    std::vector<Vec> means;
    std::uniform_int_distribution<std::size_t> first(0, data.size() - 1);
    means.push_back(data[first(rng)]);
    Vec d2(data.size());
    while (means.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& m : means) best = std::min(best, sq_dist(data[i], m));
            d2[i] = best;
            total += best;
        }
        std::size_t chosen;
        if (total <= 0.0) {
            chosen = first(rng);
        } else {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng), acc = 0.0;
            chosen = data.size() - 1;
            for (std::size_t i = 0; i < data.size(); ++i) {
                acc += d2[i];
                if (acc >= target) { chosen = i; break; }
            }
        }
        means.push_back(data[chosen]);
    }
    return means;
}

GmmModel init_model(const std::vector<Vec>& data, std::size_t k, const GmmConfig& cfg, Rng& rng) {
    const std::size_t d = data.front().size();
    Vec global_var(d, 0.0), global_mean(d, 0.0);
    for (const auto& x : data)
        for (std::size_t c = 0; c < d; ++c) global_mean[c] += x[c];
    for (auto& m : global_mean) m /= static_cast<double>(data.size());
    for (const auto& x : data)
        for (std::size_t c = 0; c < d; ++c) {
            double diff = x[c] - global_mean[c];
            global_var[c] += diff * diff;
        }
    for (auto& v : global_var) v = v / static_cast<double>(data.size()) + cfg.cov_floor;

    GmmModel model;
    model.cov_type = cfg.cov_type;
    model.priors.assign(k, 1.0 / static_cast<double>(k));
    auto means = seed_means(data, k, rng);
    for (std::size_t j = 0; j < k; ++j) {
        GmmComponent c;
        c.mean = means[j];
        if (cfg.cov_type == CovarianceType::Diagonal) {
            c.cov = global_var;
        } else {
            c.cov.assign(d * d, 0.0);
            for (std::size_t i = 0; i < d; ++i) c.cov[i * d + i] = global_var[i];
        }
        model.components.push_back(std::move(c));
    }
    return model;
}

}  // namespace

GmmModel fit_em(const std::vector<Vec>& data, std::size_t n_components, const GmmConfig& cfg) {
    if (n_components == 0) throw ValidationError("fit_em: n_components must be >= 1");
    if (data.size() < n_components)
        throw ValidationError("fit_em: need at least as many samples as components (" +
                              std::to_string(data.size()) + " < " + std::to_string(n_components) + ")");

    Rng rng(cfg.seed);
    GmmModel best;
    double best_ll = -std::numeric_limits<double>::infinity();

    for (std::size_t restart = 0; restart < std::max<std::size_t>(1, cfg.n_restarts); ++restart) {
        GmmModel model = init_model(data, n_components, cfg, rng);
        double prev_ll = -std::numeric_limits<double>::infinity();
        model.log_likelihood_trace.clear();
        for (std::size_t iter = 0; iter < cfg.max_iter; ++iter) {
            double ll = 0.0;
            Mat resp = e_step(model, data, &ll);
            model.log_likelihood_trace.push_back(ll);
            if (std::isfinite(prev_ll) && std::abs(ll - prev_ll) < cfg.tol * std::abs(ll)) {
                model.converged = true;
                break;
            }
            prev_ll = ll;
            m_step(data, resp, model, cfg.cov_floor);
        }
        double final_ll = model.log_likelihood_trace.back();
        if (final_ll > best_ll) {
            best_ll = final_ll;
            best = std::move(model);
        }
    }
    return best;
}

}  // namespace openset
