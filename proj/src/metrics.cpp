#include "dufold/metrics.hpp"

#include <cmath>
#include <ostream>

#include "dufold/errors.hpp"

namespace dufold {

double psnr(const Tensor& x, const Tensor& ref, double peak, bool* exact) {
    check_same_layout(x, ref, "psnr");
    if (!(peak > 0.0)) throw ArgumentError("psnr: peak must be > 0");
    double mse = 0.0;
    for (std::size_t i = 0; i < x.raw_size(); ++i) {
        const double d = x[i] - ref[i];
        mse += d * d;
    }
    mse /= static_cast<double>(x.raw_size());
    if (exact) *exact = (mse == 0.0);
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

namespace {

double ssim_channel(const double* a, const double* b, std::size_t H, std::size_t W, double c1,
                    double c2) {
    constexpr std::size_t win = 7;
    const double n = static_cast<double>(win * win);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t y = 0; y + win <= H; ++y)
        for (std::size_t x = 0; x + win <= W; ++x) {
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            for (std::size_t dy = 0; dy < win; ++dy)
                for (std::size_t dx = 0; dx < win; ++dx) {
                    const double va = a[(y + dy) * W + x + dx];
                    const double vb = b[(y + dy) * W + x + dx];
                    sa += va;
                    sb += vb;
                    saa += va * va;
                    sbb += vb * vb;
                    sab += va * vb;
                }
            const double mua = sa / n, mub = sb / n;
            const double vara = saa / n - mua * mua;
            const double varb = sbb / n - mub * mub;
            const double cov = sab / n - mua * mub;
            const double num = (2.0 * mua * mub + c1) * (2.0 * cov + c2);
            const double den = (mua * mua + mub * mub + c1) * (vara + varb + c2);
            total += num / den;
            ++count;
        }
    return total / static_cast<double>(count);
}

}  // namespace

double ssim(const Tensor& x, const Tensor& ref, double peak) {
    check_same_layout(x, ref, "ssim");
    if (x.is_complex()) throw ArgumentError("ssim: complex images unsupported (use magnitudes)");
    const Shape& s = x.shape();
    if (s.size() < 2) throw ArgumentError("ssim: expected (C, H, W) or (H, W)");
    const std::size_t W = s.back(), H = s[s.size() - 2];
    if (H < 7 || W < 7) throw ArgumentError("ssim: image smaller than the 7x7 window");
    std::size_t channels = 1;
    for (std::size_t i = 0; i + 2 < s.size(); ++i) channels *= s[i];
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    double total = 0.0;
    for (std::size_t c = 0; c < channels; ++c)
        total += ssim_channel(x.data() + c * H * W, ref.data() + c * H * W, H, W, c1, c2);
    return total / static_cast<double>(channels);
}

void MetricReport::add(std::string name, double p, double s, bool was_exact) {
    names.push_back(std::move(name));
    psnr_db.push_back(p);
    ssim_val.push_back(s);
    exact.push_back(was_exact ? 1 : 0);
}

namespace {
void mean_std(const std::vector<double>& v, double& mean, double& std_out) {
    mean = 0.0;
    std_out = 0.0;
    if (v.empty()) return;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    std_out = std::sqrt(acc / static_cast<double>(v.size()));
}
}  // namespace

void MetricReport::finalize() {
    mean_std(psnr_db, psnr_mean, psnr_std);
    mean_std(ssim_val, ssim_mean, ssim_std);
}

void MetricReport::write_csv(std::ostream& os) const {
    os << "name,psnr_db,ssim,exact\n";
    for (std::size_t i = 0; i < names.size(); ++i)
        os << names[i] << "," << psnr_db[i] << "," << ssim_val[i] << ","
           << static_cast<int>(exact[i]) << "\n";
    os << "mean," << psnr_mean << "," << ssim_mean << ",\n";
    os << "std," << psnr_std << "," << ssim_std << ",\n";
}

void MetricReport::write_jsonl(std::ostream& os) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        os << "{\"name\":\"" << names[i] << "\",\"psnr_db\":" << psnr_db[i]
           << ",\"ssim\":" << ssim_val[i] << ",\"exact\":" << (exact[i] ? "true" : "false") << "}\n";
    os << "{\"aggregate\":true,\"fingerprint\":" << config_fingerprint << ",\"psnr_mean\":" << psnr_mean
       << ",\"psnr_std\":" << psnr_std << ",\"ssim_mean\":" << ssim_mean << ",\"ssim_std\":" << ssim_std
       << "}\n";
}

}  // namespace dufold
