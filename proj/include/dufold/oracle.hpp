#pragma once

#include <vector>

#include "dufold/tensor.hpp"

namespace dufold {

/// Gaussian prior N(mean, cov) used to verify the posterior-score theory in
/// closed form. Dimension is capped at 16: this is an oracle, not a solver.
struct GaussianPriorSpec {
    Tensor mean;  // (n)
    Tensor cov;   // (n, n), symmetric positive-definite
};

void validate(const GaussianPriorSpec& prior);

/// Finite mixture of point masses for brute-force posterior checks.
struct DiscretePriorSpec {
    std::vector<Tensor> atoms;     // each (n)
    std::vector<double> weights;   // positive, sum to 1
};

void validate(const DiscretePriorSpec& prior);

struct AnalyticPosterior {
    Tensor mean;  // (n)
    Tensor cov;   // (n, n)
    // context
    Tensor A;
    double sigma_y = 0.0;
    Tensor y;
    double sigma_t = 0.0;
};

/// Conjugate update: Sigma_post = (Sigma^-1 + A^T A / sigma_y^2)^-1,
/// mu_post = Sigma_post (Sigma^-1 mu + A^T y / sigma_y^2).
AnalyticPosterior gaussian_posterior(const GaussianPriorSpec& prior, const Tensor& A,
                                     double sigma_y, const Tensor& y);

/// grad_{x_t} log p(x_t | y) where p(x_t | y) = N(mu_post, Sigma_post + sigma_t^2 I).
Tensor gaussian_conditional_score(const GaussianPriorSpec& prior, const Tensor& A, double sigma_y,
                                  const Tensor& y, double sigma_t, const Tensor& x_t);

/// E[x | x_t, y] via the precision-weighted combination of the posterior
/// given y and the noisy observation x_t; returns x_t at sigma_t = 0.
Tensor gaussian_mmse(const GaussianPriorSpec& prior, const Tensor& A, double sigma_y,
                     const Tensor& y, double sigma_t, const Tensor& x_t);

/// argmin_x 1/2 ||A x - y||^2 + h_t(x) with the quadratic conditional
/// regularizer h_t(x) = (sigma_y^2 / 2) (x - m_t)^T C_t^-1 (x - m_t), where
/// (m_t, C_t) parameterize p(x | x_t) under the Gaussian prior.
Tensor composite_argmin_quadratic(const GaussianPriorSpec& prior, const Tensor& A, double sigma_y,
                                  const Tensor& y, double sigma_t, const Tensor& x_t);

/// Exhaustive posterior mean over a discrete prior, log-sum-exp stabilized.
Tensor discrete_mmse(const DiscretePriorSpec& prior, const Tensor& A, double sigma_y,
                     const Tensor& y, double sigma_t, const Tensor& x_t);

/// Random-config sweep over both identities:
///   (b)  gaussian_mmse == x_t + sigma_t^2 * score
///   (a)  composite_argmin_quadratic == gaussian_mmse
/// Dimensions n <= 8, sigma_t in [0.05, 5], sigma_y in [0.05, 1].
struct OracleSweepResult {
    double max_residual_b = 0.0;
    double max_residual_a = 0.0;
    int configs = 0;
};

OracleSweepResult oracle_sweep(int n_configs, std::uint64_t seed);

}  // namespace dufold
