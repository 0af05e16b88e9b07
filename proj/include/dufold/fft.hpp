#pragma once

#include <complex>
#include <cstddef>

namespace dufold::detail {

/// In-place unitary 2-D DFT over a row-major H x W complex buffer.
/// Forward and inverse are both scaled by 1/sqrt(H*W) so the pair is
/// norm-preserving. Thread-safe (FFTW planning is serialized internally).
void fft2_unitary(std::complex<double>* data, std::size_t H, std::size_t W, bool inverse);

}  // namespace dufold::detail
