#pragma once

#include <cmath>
#include <functional>

#include "dufold/autodiff.hpp"
#include "dufold/denoiser.hpp"
#include "dufold/oracle.hpp"
#include "dufold/tensor.hpp"

namespace dufold::test {

inline double rel_err(const Tensor& got, const Tensor& want) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < got.raw_size(); ++i) {
        const double d = got[i] - want[i];
        num += d * d;
        den += want[i] * want[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.raw_size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// Autodiff-vs-central-differences audit of a scalar graph over one Param.
inline double audit_rel_err(const Tensor& x0,
                            const std::function<ad::Var(const ad::Var&)>& build,
                            double h = 1e-6) {
    ad::Param p("audit", x0);
    ad::Var loss = build(ad::leaf(p));
    ad::backward(loss);
    const Tensor g_ad = p.grad;
    auto f = [&](const Tensor& x) {
        ad::NoGradGuard ng;
        ad::Param tmp("tmp", x);
        return ad::val(build(ad::leaf(tmp)));
    };
    const Tensor g_fd = ad::finite_difference_gradient(f, x0, h);
    return rel_err(g_ad, g_fd);
}

/// Closed-form conditional-mean denoiser for a Gaussian prior; the sampler
/// oracle of the posterior-sampling tests.
struct GaussianOracleDenoiser final : Denoiser {
    GaussianPriorSpec prior;
    Tensor A;
    double sigma_y = 0.5;
    Tensor y;

    Tensor denoise(const Tensor& x_t, const Measurement&, const LinearOperator&, double sigma_t,
                   double) const override {
        return gaussian_mmse(prior, A, sigma_y, y, sigma_t, x_t);
    }
};

/// The 1-D reference problem: prior N(0,1), A = 1, sigma_y = 0.5, y = 1.
/// Posterior N(0.8, 0.2); at sigma_t = 1, x_t = 0.5 the MMSE is 0.75.
inline GaussianOracleDenoiser reference_oracle_1d() {
    GaussianOracleDenoiser d;
    d.prior.mean = Tensor::zeros({1});
    d.prior.cov = Tensor::full({1, 1}, 1.0);
    d.A = Tensor::full({1, 1}, 1.0);
    d.sigma_y = 0.5;
    d.y = Tensor::full({1}, 1.0);
    return d;
}

}  // namespace dufold::test
