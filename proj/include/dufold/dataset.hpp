#pragma once

#include <string>
#include <vector>

#include "dufold/oracle.hpp"
#include "dufold/rng.hpp"
#include "dufold/tensor.hpp"

namespace dufold {

struct ImageDataset {
    std::vector<Tensor> items;  // uniform shape
    std::size_t channels = 1;
    std::string provenance;

    std::size_t size() const { return items.size(); }
    bool empty() const { return items.empty(); }
};

enum class SynthKind { grf, shapes, gauss1d };
SynthKind synth_kind_from_name(const std::string& name);

/// Synthetic stand-ins for full-scale datasets:
///   grf    - smoothed Gaussian random fields rescaled to [0, 1]
///   shapes - random ellipses and rectangles on a dark background
///   gauss1d- vectors drawn from a Gaussian prior (oracle-coupled tests);
///            uses a default smooth prior of dimension `size` (<= 16)
ImageDataset gen_synthetic(SynthKind kind, int n, std::size_t size, Rng& rng);
ImageDataset gen_gauss1d(const GaussianPriorSpec& prior, int n, Rng& rng);

/// Default smooth Gaussian prior used by the gauss1d generator.
GaussianPriorSpec default_gauss1d_prior(std::size_t dim);

struct Normalized {
    Tensor data;
    double scale = 1.0;  // recorded for inversion
};

/// Divides by the p-th percentile of absolute values.
Normalized normalize_percentile(const Tensor& data, double p = 99.0);
Tensor denormalize(const Tensor& data, double scale);

}  // namespace dufold
