#include "dufold/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "dufold/errors.hpp"

namespace dufold {

const char* schedule_family_name(ScheduleFamily f) {
    switch (f) {
        case ScheduleFamily::EDM: return "edm";
        case ScheduleFamily::VE: return "ve";
        case ScheduleFamily::VP: return "vp";
        case ScheduleFamily::iDDPM: return "iddpm";
    }
    return "?";
}

ScheduleFamily schedule_family_from_name(const std::string& name) {
    if (name == "edm") return ScheduleFamily::EDM;
    if (name == "ve") return ScheduleFamily::VE;
    if (name == "vp") return ScheduleFamily::VP;
    if (name == "iddpm") return ScheduleFamily::iDDPM;
    throw ConfigError("unknown schedule family '" + name + "'");
}

NoiseSchedule NoiseSchedule::edm() {
    return NoiseSchedule{};
}

NoiseSchedule NoiseSchedule::ve() {
    NoiseSchedule s;
    s.family = ScheduleFamily::VE;
    s.sigma_min = 0.01;
    s.sigma_max = 100.0;
    return s;
}

NoiseSchedule NoiseSchedule::vp() {
    NoiseSchedule s;
    s.family = ScheduleFamily::VP;
    return s;
}

NoiseSchedule NoiseSchedule::iddpm() {
    NoiseSchedule s;
    s.family = ScheduleFamily::iDDPM;
    return s;
}

NoiseSchedule NoiseSchedule::for_family(ScheduleFamily f) {
    switch (f) {
        case ScheduleFamily::EDM: return edm();
        case ScheduleFamily::VE: return ve();
        case ScheduleFamily::VP: return vp();
        case ScheduleFamily::iDDPM: return iddpm();
    }
    return edm();
}

namespace {

void check_schedule(const NoiseSchedule& s) {
    if (!(s.sigma_min > 0.0) || !(s.sigma_max > s.sigma_min))
        throw ArgumentError("schedule: need 0 < sigma_min < sigma_max");
}

// Raw VP noise curve sigma(t) = sqrt(exp(0.5 b_d t^2 + b_min t) - 1).
double vp_sigma_raw(const NoiseSchedule& s, double t) {
    const double bd = s.beta_max - s.beta_min;
    return std::sqrt(std::expm1(0.5 * bd * t * t + s.beta_min * t));
}

// Raw iDDPM cosine curve sigma(u) = sqrt(1/alphabar(u) - 1) with
// alphabar(u) = f(u)/f(0), f(u) = cos^2(pi/2 * (u+s)/(1+s)); u is capped
// below 1 to keep the curve finite (f(1) = 0).
constexpr double kIddpmS = 0.008;
constexpr double kIddpmCap = 0.98;

double iddpm_sigma_raw(double t) {
    const double u = t * kIddpmCap;
    const double f = [](double v) {
        const double c = std::cos(0.5 * M_PI * (v + kIddpmS) / (1.0 + kIddpmS));
        return c * c;
    }(u);
    const double f0 = [](double v) {
        const double c = std::cos(0.5 * M_PI * (v + kIddpmS) / (1.0 + kIddpmS));
        return c * c;
    }(0.0);
    const double abar = f / f0;
    return std::sqrt(1.0 / abar - 1.0);
}

}  // namespace

double sigma_at(const NoiseSchedule& s, double t) {
    check_schedule(s);
    if (t < 0.0 || t > 1.0) throw ArgumentError("sigma_at: t must lie in [0, 1]");
    switch (s.family) {
        case ScheduleFamily::EDM:
            return s.sigma_min + t * (s.sigma_max - s.sigma_min);
        case ScheduleFamily::VE:
            return s.sigma_min * std::pow(s.sigma_max / s.sigma_min, t);
        case ScheduleFamily::VP: {
            // Affinely rescaled so the endpoints hit [sigma_min, sigma_max] exactly.
            const double hi = vp_sigma_raw(s, 1.0);
            return s.sigma_min + (s.sigma_max - s.sigma_min) * vp_sigma_raw(s, t) / hi;
        }
        case ScheduleFamily::iDDPM: {
            const double lo = iddpm_sigma_raw(0.0), hi = iddpm_sigma_raw(1.0);
            return s.sigma_min + (s.sigma_max - s.sigma_min) * (iddpm_sigma_raw(t) - lo) / (hi - lo);
        }
    }
    throw ArgumentError("sigma_at: unknown family");
}

StepGrid step_grid(const NoiseSchedule& s, int nfe) {
    check_schedule(s);
    if (nfe < 1) throw ArgumentError("step_grid: nfe must be >= 1");
    StepGrid g;
    g.nfe = nfe;
    g.sigmas.resize(static_cast<std::size_t>(nfe) + 1);
    if (nfe == 1) {
        g.sigmas = {s.sigma_max, 0.0};
        return g;
    }
    if (s.family == ScheduleFamily::EDM) {
        const double a = std::pow(s.sigma_max, 1.0 / s.rho);
        const double b = std::pow(s.sigma_min, 1.0 / s.rho);
        for (int i = 0; i < nfe; ++i)
            g.sigmas[i] = std::pow(a + (b - a) * static_cast<double>(i) / (nfe - 1), s.rho);
    } else {
        for (int i = 0; i < nfe; ++i)
            g.sigmas[i] = sigma_at(s, 1.0 - static_cast<double>(i) / (nfe - 1));
    }
    g.sigmas[nfe] = 0.0;
    return g;
}

PrecondCoeffs precondition_coeffs(const Preconditioner& pre, double sigma) {
    if (sigma < 0.0) throw ArgumentError("precondition_coeffs: sigma must be >= 0");
    if (!(pre.sigma_data > 0.0)) throw ArgumentError("precondition_coeffs: sigma_data must be > 0");
    const double sd = pre.sigma_data;
    PrecondCoeffs c;
    switch (pre.family) {
        case ScheduleFamily::EDM: {
            const double s2 = sigma * sigma, d2 = sd * sd;
            c.c_skip = d2 / (s2 + d2);
            c.c_out = sigma * sd / std::sqrt(s2 + d2);
            c.c_in = 1.0 / std::sqrt(s2 + d2);
            c.c_noise = sigma > 0.0 ? 0.25 * std::log(sigma) : 0.0;
            return c;
        }
        case ScheduleFamily::VE: {
            // c_skip = 1, c_out = sigma, c_in = 1, c_noise = ln(sigma/2)
            c.c_skip = 1.0;
            c.c_out = sigma;
            c.c_in = 1.0;
            c.c_noise = sigma > 0.0 ? std::log(0.5 * sigma) : 0.0;
            return c;
        }
        case ScheduleFamily::VP: {
            // c_skip = 1, c_out = -sigma, c_in = 1/sqrt(sigma^2 + 1),
            // c_noise = (M - 1) * t(sigma) with t inverting the raw VP curve, M = 1000
            c.c_skip = 1.0;
            c.c_out = -sigma;
            c.c_in = 1.0 / std::sqrt(sigma * sigma + 1.0);
            const NoiseSchedule vp = NoiseSchedule::vp();
            const double bd = vp.beta_max - vp.beta_min;
            const double t = sigma > 0.0
                                 ? (std::sqrt(vp.beta_min * vp.beta_min +
                                              2.0 * bd * std::log1p(sigma * sigma)) -
                                    vp.beta_min) /
                                       bd
                                 : 0.0;
            c.c_noise = 999.0 * t;
            return c;
        }
        case ScheduleFamily::iDDPM: {
            // c_skip = 1, c_out = -sigma, c_in = 1/sqrt(sigma^2 + 1),
            // c_noise = M - 1 - argmin_j |u_j - sigma| over the cosine sigma ladder, M = 1000
            c.c_skip = 1.0;
            c.c_out = -sigma;
            c.c_in = 1.0 / std::sqrt(sigma * sigma + 1.0);
            constexpr int M = 1000;
            int best = 0;
            double best_d = std::abs(iddpm_sigma_raw(0.0) - sigma);
            for (int j = 1; j < M; ++j) {
                const double d = std::abs(iddpm_sigma_raw(static_cast<double>(j) / (M - 1)) - sigma);
                if (d < best_d) {
                    best_d = d;
                    best = j;
                }
            }
            c.c_noise = static_cast<double>(M - 1 - best);
            return c;
        }
    }
    throw ArgumentError("precondition_coeffs: unknown family");
}

double sample_sigma_train(const NoiseSchedule& s, Rng& rng) {
    check_schedule(s);
    if (s.family == ScheduleFamily::EDM) {
        // ln(sigma) ~ N(-1.2, 1.2^2) clamped into range, mixed with a 20%
        // log-uniform floor so the high-sigma end of the ladder still gets
        // training signal (the unfolding weights must learn to contract
        // large-magnitude iterates there).
        if (rng.uniform() < 0.8) {
            const double ln_sigma = -1.2 + 1.2 * rng.normal();
            return std::clamp(std::exp(ln_sigma), s.sigma_min, s.sigma_max);
        }
        return s.sigma_min * std::pow(s.sigma_max / s.sigma_min, rng.uniform());
    }
    return sigma_at(s, rng.uniform());
}

double noise_time(const NoiseSchedule& s, double sigma) {
    check_schedule(s);
    const double lo = std::log(s.sigma_min), hi = std::log(s.sigma_max);
    if (sigma <= s.sigma_min) return 0.0;
    if (sigma >= s.sigma_max) return 1.0;
    return (std::log(sigma) - lo) / (hi - lo);
}

}  // namespace dufold
