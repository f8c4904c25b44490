#pragma once

#include <string>

#include "openset/common.hpp"

namespace openset {

enum class CovarianceType { Diagonal, Full };

const char* covariance_name(CovarianceType t);
CovarianceType covariance_from_name(const std::string& name);

// One mixture component; `cov` is a D-vector of diagonal variances or a
// row-major D x D matrix depending on the model's covariance type.
struct GmmComponent {
    Vec mean;
    Vec cov;
};

struct GmmModel {
    CovarianceType cov_type = CovarianceType::Diagonal;
    Vec priors;
    std::vector<GmmComponent> components;
    std::vector<double> log_likelihood_trace;
    bool converged = false;

    std::size_t n_components() const { return components.size(); }
    std::size_t dim() const { return components.front().mean.size(); }

    std::string to_json() const;
    static GmmModel from_json(const std::string& text);
};

struct GmmConfig {
    std::size_t max_iter = 500;
    double tol = 1e-6;  // relative log-likelihood change
    std::size_t n_restarts = 5;
    std::uint64_t seed = 0;
    CovarianceType cov_type = CovarianceType::Diagonal;
    double cov_floor = 1e-6;
};

// Exact log-density of N(z; mean, cov), evaluated in the log domain.
double log_gaussian_pdf(const Vec& z, const Vec& mean, const Vec& cov, CovarianceType type);

// Row-stochastic posterior memberships; also returns total log-likelihood
// when `total_ll` is non-null.
Mat e_step(const GmmModel& model, const std::vector<Vec>& data, double* total_ll = nullptr);

// Weighted MLE update of priors/means/covariances; components whose total
// responsibility falls below 1e-8 are re-seeded at the worst-fit sample.
void m_step(const std::vector<Vec>& data, const Mat& resp, GmmModel& model, double cov_floor);

GmmModel fit_em(const std::vector<Vec>& data, std::size_t n_components, const GmmConfig& cfg);

std::vector<std::size_t> hard_assignments(const Mat& resp);

}  // namespace openset
