#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dufold/rng.hpp"

namespace dufold {

enum class ScheduleFamily : std::uint8_t { EDM = 0, VE = 1, VP = 2, iDDPM = 3 };

const char* schedule_family_name(ScheduleFamily f);
ScheduleFamily schedule_family_from_name(const std::string& name);

/// Noise-level trajectory sigma(t) for t in [0, 1], per diffusion family.
struct NoiseSchedule {
    ScheduleFamily family = ScheduleFamily::EDM;
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;        // EDM inference-grid warp
    double beta_min = 0.1;   // VP
    double beta_max = 20.0;  // VP

    static NoiseSchedule edm();
    static NoiseSchedule ve();
    static NoiseSchedule vp();
    static NoiseSchedule iddpm();
    static NoiseSchedule for_family(ScheduleFamily f);
};

/// sigma at normalized time t in [0, 1]; monotone nondecreasing with
/// sigma(0) = sigma_min and sigma(1) = sigma_max exactly.
double sigma_at(const NoiseSchedule& s, double t);

/// Decreasing sigma ladder for sampling: nfe + 1 entries, first sigma_max,
/// last exactly 0.
struct StepGrid {
    int nfe = 0;
    std::vector<double> sigmas;
};

StepGrid step_grid(const NoiseSchedule& s, int nfe);

/// Network input/output scalings (Karras-style preconditioning).
struct Preconditioner {
    ScheduleFamily family = ScheduleFamily::EDM;
    double sigma_data = 0.5;
};

struct PrecondCoeffs {
    double c_skip = 1.0;
    double c_out = 0.0;
    double c_in = 1.0;
    double c_noise = 0.0;  // only meaningful for sigma > 0
};

PrecondCoeffs precondition_coeffs(const Preconditioner& pre, double sigma);

/// Training-time noise-level draw: log-normal in sigma for EDM, uniform t
/// mapped through sigma_at for the other families. Always lands in
/// [sigma_min, sigma_max].
double sample_sigma_train(const NoiseSchedule& s, Rng& rng);

/// Normalized log-noise coordinate in [0, 1]; the conditioning "time" fed to
/// the weight nets (equals t exactly for the VE geometric schedule).
double noise_time(const NoiseSchedule& s, double sigma);

}  // namespace dufold
