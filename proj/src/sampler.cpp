#include "dufold/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "dufold/errors.hpp"

namespace dufold {

SamplerState init_state(const NoiseSchedule& schedule, const Shape& shape, Rng rng) {
    SamplerState st;
    st.rng = rng;
    st.x = st.rng.randn(shape);
    for (std::size_t i = 0; i < st.x.raw_size(); ++i) st.x[i] *= schedule.sigma_max;
    st.index = 0;
    return st;
}

namespace {

double grid_time(const StepGrid& grid, int i) {
    // Normalized position handed to the denoiser alongside sigma.
    return 1.0 - static_cast<double>(i) / static_cast<double>(grid.nfe);
}

void edm_step(SamplerState& st, const Denoiser& den, const Measurement& meas,
              const LinearOperator& op, const StepGrid& grid, const SamplerConfig& cfg) {
    const double sigma = grid.sigmas[st.index];
    const double sigma_next = grid.sigmas[st.index + 1];

    double sigma_hat = sigma;
    if (cfg.s_churn > 0.0 && sigma > 0.0) {
        const double gamma =
            std::min(cfg.s_churn / static_cast<double>(grid.nfe), std::sqrt(2.0) - 1.0);
        sigma_hat = sigma * (1.0 + gamma);
        const double lift = std::sqrt(sigma_hat * sigma_hat - sigma * sigma) * cfg.s_noise;
        Tensor eps = st.rng.randn(st.x.shape(), st.x.is_complex());
        axpy(st.x, lift, eps);
    }

    const Tensor d0 = den.denoise(st.x, meas, op, sigma_hat, grid_time(grid, st.index));
    // dx/dsigma = (x - D(x; sigma)) / sigma
    Tensor drift = sub(st.x, d0);
    const double h = sigma_next - sigma_hat;
    Tensor x_euler = st.x;
    axpy(x_euler, h / sigma_hat, drift);

    if (cfg.second_order && sigma_next > 0.0) {
        const Tensor d1 = den.denoise(x_euler, meas, op, sigma_next, grid_time(grid, st.index + 1));
        Tensor drift1 = sub(x_euler, d1);
        axpy(st.x, 0.5 * h / sigma_hat, drift);
        axpy(st.x, 0.5 * h / sigma_next, drift1);
    } else {
        st.x = std::move(x_euler);
    }
}

void ancestral_step(SamplerState& st, const Denoiser& den, const Measurement& meas,
                    const LinearOperator& op, const StepGrid& grid) {
    const double sigma = grid.sigmas[st.index];
    const double sigma_next = grid.sigmas[st.index + 1];
    const Tensor x0 = den.denoise(st.x, meas, op, sigma, grid_time(grid, st.index));
    if (sigma_next <= 0.0) {
        st.x = x0;
        return;
    }
    // Exact Gaussian bridge of the variance-exploding chain given the clean
    // estimate: mean = x0 + r (x - x0), var = sigma_next^2 (1 - r),
    // r = sigma_next^2 / sigma^2.
    const double r = (sigma_next * sigma_next) / (sigma * sigma);
    Tensor mean = x0;
    Tensor diff = sub(st.x, x0);
    axpy(mean, r, diff);
    const double std = sigma_next * std::sqrt(std::max(0.0, 1.0 - r));
    Tensor eps = st.rng.randn(st.x.shape(), st.x.is_complex());
    axpy(mean, std, eps);
    st.x = std::move(mean);
}

}  // namespace

void reverse_step(SamplerState& state, const Denoiser& den, const Measurement& meas,
                  const LinearOperator& op, const StepGrid& grid, const SamplerConfig& cfg) {
    if (state.index < 0 || state.index >= grid.nfe)
        throw ContractError("reverse_step: grid index " + std::to_string(state.index) +
                            " out of range for nfe " + std::to_string(grid.nfe));
    if (cfg.family == ScheduleFamily::EDM)
        edm_step(state, den, meas, op, grid, cfg);
    else
        ancestral_step(state, den, meas, op, grid);
    ++state.index;
}

Tensor sample(const Measurement& meas, const LinearOperator& op, const Denoiser& den,
              const NoiseSchedule& schedule, const SamplerConfig& cfg, TrajectorySink* sink) {
    if (cfg.nfe < 1) throw ArgumentError("sample: nfe must be >= 1");
    const StepGrid grid = step_grid(schedule, cfg.nfe);
    SamplerState st = init_state(schedule, op.input_shape(), Rng(cfg.seed));
    if (sink) sink->record(0, grid.sigmas[0], st.x);
    for (int i = 0; i < cfg.nfe; ++i) {
        reverse_step(st, den, meas, op, grid, cfg);
        if (sink) sink->record(i + 1, grid.sigmas[i + 1], st.x);
    }
    return st.x;
}

}  // namespace dufold
