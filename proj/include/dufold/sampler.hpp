#pragma once

#include <cstdint>

#include "dufold/denoiser.hpp"
#include "dufold/linop.hpp"
#include "dufold/schedule.hpp"

namespace dufold {

struct SamplerConfig {
    ScheduleFamily family = ScheduleFamily::EDM;
    int nfe = 18;
    double s_churn = 0.0;  // EDM stochasticity; 0 = deterministic
    double s_noise = 1.0;
    bool second_order = true;  // Heun correction (EDM family)
    std::uint64_t seed = 0;
};

struct SamplerState {
    Tensor x;
    int index = 0;
    Rng rng{0};
};

/// x_T ~ N(0, sigma_max^2 I).
SamplerState init_state(const NoiseSchedule& schedule, const Shape& shape, Rng rng);

/// Optional per-step trajectory capture (debug dumps).
struct TrajectorySink {
    virtual ~TrajectorySink() = default;
    virtual void record(int step_index, double sigma, const Tensor& x) = 0;
};

/// One reverse update from grid index state.index. EDM family: optional
/// churn, Euler step along dx/dsigma = (x - D(x)) / sigma, optional Heun
/// correction when the target sigma is positive. Other families: ancestral
/// update through the clean estimate x_t^K.
void reverse_step(SamplerState& state, const Denoiser& den, const Measurement& meas,
                  const LinearOperator& op, const StepGrid& grid, const SamplerConfig& cfg);

/// Full reverse pass from sigma_max to 0; returns x_0.
Tensor sample(const Measurement& meas, const LinearOperator& op, const Denoiser& den,
              const NoiseSchedule& schedule, const SamplerConfig& cfg,
              TrajectorySink* sink = nullptr);

}  // namespace dufold
