#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dufold/tensor.hpp"

namespace dufold {

constexpr double kPsnrCap = 99.0;

/// 10 log10(peak^2 / MSE); an exact match reports the capped value 99 dB and
/// sets *exact when provided.
double psnr(const Tensor& x, const Tensor& ref, double peak = 1.0, bool* exact = nullptr);

/// Mean local SSIM over valid 7x7 box windows (k1 = 0.01, k2 = 0.03).
double ssim(const Tensor& x, const Tensor& ref, double peak = 1.0);

struct MetricReport {
    std::vector<std::string> names;
    std::vector<double> psnr_db;
    std::vector<double> ssim_val;
    std::vector<char> exact;  // capped-PSNR flag per image
    std::uint64_t config_fingerprint = 0;

    double psnr_mean = 0.0, psnr_std = 0.0;
    double ssim_mean = 0.0, ssim_std = 0.0;

    void add(std::string name, double p, double s, bool was_exact);
    void finalize();
    void write_csv(std::ostream& os) const;
    void write_jsonl(std::ostream& os) const;
};

}  // namespace dufold
