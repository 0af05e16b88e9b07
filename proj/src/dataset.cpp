#include "dufold/dataset.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "dufold/errors.hpp"
#include "dufold/linop.hpp"

namespace dufold {

SynthKind synth_kind_from_name(const std::string& name) {
    if (name == "grf") return SynthKind::grf;
    if (name == "shapes") return SynthKind::shapes;
    if (name == "gauss1d") return SynthKind::gauss1d;
    throw ArgumentError("gen_synthetic: unknown kind '" + name + "'");
}

namespace {

Tensor gen_grf(std::size_t size, Rng& rng, const LinearOperator& smooth) {
    Tensor noise = rng.randn({1, size, size});
    Tensor field = smooth.apply(smooth.apply(noise));
    const double lo = field.min(), hi = field.max();
    const double span = hi - lo;
    Tensor out = Tensor::zeros({1, size, size});
    for (std::size_t i = 0; i < out.raw_size(); ++i)
        out[i] = span > 0.0 ? (field[i] - lo) / span : 0.5;
    return out;
}

Tensor gen_shapes(std::size_t size, Rng& rng) {
    Tensor img = Tensor::full({1, size, size}, 0.05);
    const int n_shapes = 3 + static_cast<int>(rng.below(5));
    for (int s = 0; s < n_shapes; ++s) {
        const bool ellipse = rng.uniform() < 0.5;
        const double cy = rng.uniform() * size;
        const double cx = rng.uniform() * size;
        const double ry = (0.06 + 0.18 * rng.uniform()) * size;
        const double rx = (0.06 + 0.18 * rng.uniform()) * size;
        const double val = 0.25 + 0.75 * rng.uniform();
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                const double dy = (y - cy) / ry, dx = (x - cx) / rx;
                const bool inside = ellipse ? (dy * dy + dx * dx <= 1.0)
                                            : (std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0);
                if (inside) img[y * size + x] = val;
            }
    }
    return img;
}

}  // namespace

GaussianPriorSpec default_gauss1d_prior(std::size_t dim) {
    if (dim == 0 || dim > 16) throw ArgumentError("gauss1d prior: dim must be in [1, 16]");
    GaussianPriorSpec prior;
    prior.mean = Tensor::zeros({dim});
    prior.cov = Tensor::zeros({dim, dim});
    const double ell = std::max(1.0, dim / 4.0);
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j) {
            const double d = static_cast<double>(i) - static_cast<double>(j);
            prior.cov[i * dim + j] = std::exp(-0.5 * d * d / (ell * ell)) + (i == j ? 0.1 : 0.0);
        }
    return prior;
}

ImageDataset gen_gauss1d(const GaussianPriorSpec& prior, int n, Rng& rng) {
    validate(prior);
    if (n < 1) throw ArgumentError("gen_gauss1d: n must be >= 1");
    const std::size_t dim = prior.mean.numel();
    Eigen::MatrixXd cov(dim, dim);
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j) cov(i, j) = prior.cov[i * dim + j];
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw DegeneracyError("gen_gauss1d: prior cov not SPD");
    const Eigen::MatrixXd L = llt.matrixL();

    ImageDataset ds;
    ds.channels = 1;
    ds.provenance = "synthetic:gauss1d";
    for (int k = 0; k < n; ++k) {
        Tensor z = rng.randn({dim});
        Tensor x = Tensor::zeros({dim});
        for (std::size_t i = 0; i < dim; ++i) {
            double acc = prior.mean[i];
            for (std::size_t j = 0; j <= i; ++j) acc += L(i, j) * z[j];
            x[i] = acc;
        }
        ds.items.push_back(std::move(x));
    }
    return ds;
}

ImageDataset gen_synthetic(SynthKind kind, int n, std::size_t size, Rng& rng) {
    if (n < 1) throw ArgumentError("gen_synthetic: n must be >= 1");
    ImageDataset ds;
    ds.channels = 1;
    switch (kind) {
        case SynthKind::grf: {
            ds.provenance = "synthetic:grf";
            const std::size_t ksize = 2 * (size / 16) + 1;
            LinOpPtr smooth = make_gaussian_blur({1, size, size}, std::max<std::size_t>(3, ksize),
                                                 std::max(1.0, size / 24.0),
                                                 std::max(1.0, size / 24.0), 0.0);
            for (int i = 0; i < n; ++i) ds.items.push_back(gen_grf(size, rng, *smooth));
            return ds;
        }
        case SynthKind::shapes: {
            ds.provenance = "synthetic:shapes";
            for (int i = 0; i < n; ++i) ds.items.push_back(gen_shapes(size, rng));
            return ds;
        }
        case SynthKind::gauss1d:
            return gen_gauss1d(default_gauss1d_prior(size), n, rng);
    }
    throw ArgumentError("gen_synthetic: unknown kind");
}

Normalized normalize_percentile(const Tensor& data, double p) {
    if (data.raw_size() == 0) throw ArgumentError("normalize_percentile: empty data");
    if (!(p > 0.0) || p > 100.0) throw ArgumentError("normalize_percentile: p must be in (0, 100]");
    std::vector<double> mags(data.raw_size());
    for (std::size_t i = 0; i < data.raw_size(); ++i) mags[i] = std::abs(data[i]);
    std::sort(mags.begin(), mags.end());
    const std::size_t idx = std::min(
        mags.size() - 1,
        static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(mags.size()))) -
            (p > 0.0 ? 1 : 0));
    const double scale = mags[idx];
    if (scale == 0.0) throw DataError("normalize_percentile: degenerate data (zero percentile)");
    Normalized out;
    out.scale = scale;
    out.data = scaled(data, 1.0 / scale);
    return out;
}

Tensor denormalize(const Tensor& data, double scale) {
    return scaled(data, scale);
}

}  // namespace dufold
