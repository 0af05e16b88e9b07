#include "dufold/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>

namespace dufold::detail {

namespace {
// FFTW plan creation/destruction is not thread-safe; execution of a plan on
// its own arrays is, so the whole per-call transform stays under one lock.
std::mutex g_fftw_mutex;
}  // namespace

void fft2_unitary(std::complex<double>* data, std::size_t H, std::size_t W, bool inverse) {
    std::lock_guard<std::mutex> lock(g_fftw_mutex);
    fftw_complex* buf = reinterpret_cast<fftw_complex*>(data);
    fftw_plan plan = fftw_plan_dft_2d(static_cast<int>(H), static_cast<int>(W), buf, buf,
                                      inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
    const double scale = 1.0 / std::sqrt(static_cast<double>(H) * static_cast<double>(W));
    for (std::size_t i = 0; i < H * W; ++i) data[i] *= scale;
}

}  // namespace dufold::detail
