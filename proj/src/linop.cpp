#include "dufold/linop.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <vector>

#include "dufold/binio.hpp"
#include "dufold/errors.hpp"
#include "dufold/fft.hpp"

namespace dufold {

const char* op_kind_name(OpKind k) {
    switch (k) {
        case OpKind::identity: return "identity";
        case OpKind::dense: return "dense";
        case OpKind::blur: return "blur";
        case OpKind::superres: return "superres";
        case OpKind::inpaint: return "inpaint";
        case OpKind::mri: return "mri";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Masks

namespace {

Tensor mask_uniform1d(double accel, std::size_t H, std::size_t W) {
    const std::size_t stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(accel)));
    const std::size_t band = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.08 * W)));
    const std::size_t c0 = (W - band) / 2;
    std::vector<char> keep(W, 0);
    for (std::size_t x = 0; x < W; x += stride) keep[x] = 1;
    for (std::size_t x = c0; x < std::min(W, c0 + band); ++x) keep[x] = 1;
    Tensor m = Tensor::zeros({H, W});
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) m[y * W + x] = keep[x] ? 1.0 : 0.0;
    return m;
}

Tensor mask_gaussian1d(double accel, std::uint64_t seed, std::size_t H, std::size_t W) {
    const std::size_t target =
        std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(W / accel)), 1, W);
    Rng rng(seed);
    std::vector<char> keep(W, 0);
    std::size_t count = 0, attempts = 0;
    while (count < target && attempts < 1000 * W) {
        ++attempts;
        const long col = std::lround(W / 2.0 + rng.normal() * (W / 6.0));
        if (col < 0 || col >= static_cast<long>(W) || keep[col]) continue;
        keep[col] = 1;
        ++count;
    }
    for (std::size_t d = 0; count < target && d < W; ++d) {  // deterministic tail fill
        for (long s : {+1, -1}) {
            const long col = static_cast<long>(W / 2) + s * static_cast<long>(d);
            if (col >= 0 && col < static_cast<long>(W) && !keep[col]) {
                keep[col] = 1;
                if (++count >= target) break;
            }
        }
    }
    Tensor m = Tensor::zeros({H, W});
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) m[y * W + x] = keep[x] ? 1.0 : 0.0;
    return m;
}

Tensor mask_gaussian2d(double accel, std::uint64_t seed, std::size_t H, std::size_t W) {
    const std::size_t target =
        std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(H * W / accel)), 1, H * W);
    Rng rng(seed);
    Tensor m = Tensor::zeros({H, W});
    std::size_t count = 0, attempts = 0;
    while (count < target && attempts < 1000 * H * W) {
        ++attempts;
        const long y = std::lround(H / 2.0 + rng.normal() * (H / 6.0));
        const long x = std::lround(W / 2.0 + rng.normal() * (W / 6.0));
        if (y < 0 || y >= static_cast<long>(H) || x < 0 || x >= static_cast<long>(W)) continue;
        double& cell = m[static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)];
        if (cell == 0.0) {
            cell = 1.0;
            ++count;
        }
    }
    return m;
}

Tensor mask_dust(double drop_p, std::uint64_t seed, std::size_t H, std::size_t W) {
    // Seed rate calibrated so the post-dilation drop fraction lands near
    // drop_p: P(dropped) = 1 - (1 - p0)^9 for interior pixels.
    const double p0 = 1.0 - std::pow(1.0 - drop_p, 1.0 / 9.0);
    Rng rng(seed);
    std::vector<char> seed_drop(H * W, 0);
    for (std::size_t i = 0; i < H * W; ++i) seed_drop[i] = rng.uniform() < p0 ? 1 : 0;
    Tensor m = Tensor::zeros({H, W});
    for (long y = 0; y < static_cast<long>(H); ++y)
        for (long x = 0; x < static_cast<long>(W); ++x) {
            bool dropped = false;
            for (long dy = -1; dy <= 1 && !dropped; ++dy)
                for (long dx = -1; dx <= 1 && !dropped; ++dx) {
                    const long sy = y + dy, sx = x + dx;
                    if (sy < 0 || sy >= static_cast<long>(H) || sx < 0 || sx >= static_cast<long>(W))
                        continue;
                    dropped = seed_drop[sy * W + sx];
                }
            m[y * W + x] = dropped ? 0.0 : 1.0;
        }
    return m;
}

}  // namespace

Tensor realize_mask(const MaskSpec& spec, std::size_t H, std::size_t W) {
    if (H == 0 || W == 0) throw ArgumentError("realize_mask: empty grid");
    switch (spec.pattern) {
        case MaskSpec::Pattern::uniform1d:
            if (spec.accel < 1.0) throw ArgumentError("uniform1d: acceleration must be >= 1");
            return mask_uniform1d(spec.accel, H, W);
        case MaskSpec::Pattern::gaussian1d:
            if (spec.accel < 1.0) throw ArgumentError("gaussian1d: acceleration must be >= 1");
            return mask_gaussian1d(spec.accel, spec.seed, H, W);
        case MaskSpec::Pattern::gaussian2d:
            if (spec.accel < 1.0) throw ArgumentError("gaussian2d: acceleration must be >= 1");
            return mask_gaussian2d(spec.accel, spec.seed, H, W);
        case MaskSpec::Pattern::dust:
            if (spec.accel < 0.0 || spec.accel >= 1.0)
                throw ArgumentError("dust: drop probability must be in [0, 1)");
            return mask_dust(spec.accel, spec.seed, H, W);
    }
    throw ArgumentError("realize_mask: unknown pattern");
}

CoilMaps make_coil_maps(std::size_t n_coils, std::size_t H, std::size_t W, Rng& rng) {
    if (n_coils < 1) throw ArgumentError("make_coil_maps: n_coils must be >= 1");
    CoilMaps cm;
    cm.n_coils = n_coils;
    cm.maps = Tensor::zeros({n_coils, H, W}, /*complex=*/true);

    const double radius = n_coils > 1 ? 0.35 * std::min(H, W) : 0.0;
    const double width = 0.6 * std::min(H, W);
    const double angle0 = rng.uniform() * 2.0 * M_PI;

    std::vector<double> mag(n_coils * H * W);
    for (std::size_t c = 0; c < n_coils; ++c) {
        const double ang = angle0 + 2.0 * M_PI * c / static_cast<double>(n_coils);
        const double cy = H / 2.0 + radius * std::sin(ang);
        const double cx = W / 2.0 + radius * std::cos(ang);
        const double a0 = (rng.uniform() - 0.5) * 2.0 * M_PI;
        const double a1 = (rng.uniform() - 0.5) * 2.0;
        const double a2 = (rng.uniform() - 0.5) * 2.0;
        const double a3 = (rng.uniform() - 0.5) * 1.0;
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const double dy = y - cy, dx = x - cx;
                const double g = std::exp(-(dy * dy + dx * dx) / (2.0 * width * width));
                const double uy = H > 1 ? 2.0 * y / (H - 1.0) - 1.0 : 0.0;
                const double ux = W > 1 ? 2.0 * x / (W - 1.0) - 1.0 : 0.0;
                const double phase = a0 + a1 * ux + a2 * uy + a3 * ux * uy;
                mag[(c * H + y) * W + x] = g;
                cm.maps.set_cval((c * H + y) * W + x, std::polar(g, phase));
            }
    }
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            double s2 = 0.0;
            for (std::size_t c = 0; c < n_coils; ++c) {
                const double g = mag[(c * H + y) * W + x];
                s2 += g * g;
            }
            const double inv = 1.0 / std::sqrt(s2);
            for (std::size_t c = 0; c < n_coils; ++c) {
                const std::size_t i = (c * H + y) * W + x;
                cm.maps.set_cval(i, cm.maps.cval(i) * inv);
            }
        }
    return cm;
}

// ---------------------------------------------------------------------------
// Operator base

Tensor LinearOperator::apply(const Tensor& x) const {
    if (!shape_eq(x.shape(), input_shape_))
        throw ArgumentError(std::string("apply[") + op_kind_name(kind_) + "]: input shape " +
                            shape_str(x.shape()) + " != " + shape_str(input_shape_));
    if (x.is_complex() && !input_complex_ok())
        throw ArgumentError(std::string("apply[") + op_kind_name(kind_) +
                            "]: complex input unsupported");
    return do_apply(x);
}

Tensor LinearOperator::adjoint(const Tensor& u) const {
    if (!shape_eq(u.shape(), output_shape_))
        throw ArgumentError(std::string("adjoint[") + op_kind_name(kind_) + "]: input shape " +
                            shape_str(u.shape()) + " != " + shape_str(output_shape_));
    return do_adjoint(u);
}

namespace {

struct SpatialLayout {
    std::size_t channels, H, W, comps;
};

SpatialLayout spatial_layout(const Shape& shape, bool complex) {
    if (shape.size() < 2) throw ArgumentError("operator expects at least 2 spatial dims");
    SpatialLayout l;
    l.W = shape.back();
    l.H = shape[shape.size() - 2];
    l.channels = 1;
    for (std::size_t i = 0; i + 2 < shape.size(); ++i) l.channels *= shape[i];
    l.comps = complex ? 2 : 1;
    return l;
}

// ---------------------------------------------------------------------------
// identity

class IdentityOp final : public LinearOperator {
  public:
    explicit IdentityOp(Shape shape) : LinearOperator(OpKind::identity, shape, shape) {}
    double norm_bound() const override { return 1.0; }

  protected:
    Tensor do_apply(const Tensor& x) const override { return x; }
    Tensor do_adjoint(const Tensor& u) const override { return u; }
    void write_payload(std::ostream& os) const override;
};

// ---------------------------------------------------------------------------
// dense

class DenseOp final : public LinearOperator {
  public:
    DenseOp(Tensor matrix, Shape in, Shape out)
        : LinearOperator(OpKind::dense, std::move(in), std::move(out)), m_(std::move(matrix)) {
        if (m_.shape().size() != 2 || m_.is_complex())
            throw ArgumentError("make_dense: expected a real (m, n) matrix");
        if (shape_numel(input_shape()) != m_.shape()[1] ||
            shape_numel(output_shape()) != m_.shape()[0])
            throw ArgumentError("make_dense: shapes incompatible with the matrix dimensions");
        norm_ = estimate_norm();
    }

    double norm_bound() const override { return norm_; }
    const Tensor& matrix() const { return m_; }

  protected:
    bool input_complex_ok() const override { return false; }

    Tensor do_apply(const Tensor& x) const override {
        const std::size_t m = m_.shape()[0], n = m_.shape()[1];
        Tensor y = Tensor::zeros(output_shape());
        Eigen::Map<Eigen::VectorXd>(y.data(), m) =
            Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                m_.data(), m, n) *
            Eigen::Map<const Eigen::VectorXd>(x.data(), n);
        return y;
    }

    Tensor do_adjoint(const Tensor& u) const override {
        const std::size_t m = m_.shape()[0], n = m_.shape()[1];
        Tensor y = Tensor::zeros(input_shape());
        Eigen::Map<Eigen::VectorXd>(y.data(), n) =
            Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                m_.data(), m, n)
                .transpose() *
            Eigen::Map<const Eigen::VectorXd>(u.data(), m);
        return y;
    }

    void write_payload(std::ostream& os) const override;

  private:
    double estimate_norm() const {
        const std::size_t n = m_.shape()[1];
        Rng rng(0x9D15EULL);
        Tensor v = rng.randn({n});
        double lambda = 0.0;
        for (int it = 0; it < 64; ++it) {
            Tensor w = do_adjoint(do_apply(v));
            lambda = std::sqrt(w.dot(w)) / std::max(1e-300, std::sqrt(v.dot(v)));
            const double nw = std::sqrt(w.dot(w));
            if (nw == 0.0) return 0.0;
            v = scaled(w, 1.0 / nw);
        }
        return lambda * 1.05;
    }

    Tensor m_;
    double norm_ = 1.0;
};

// ---------------------------------------------------------------------------
// blur

class BlurOp final : public LinearOperator {
  public:
    BlurOp(Shape image_shape, std::size_t size, double s1, double s2, double angle, Tensor kernel)
        : LinearOperator(OpKind::blur, image_shape, image_shape),
          size_(size),
          s1_(s1),
          s2_(s2),
          angle_(angle),
          kernel_(std::move(kernel)) {}

    double norm_bound() const override { return 1.0; }  // kernel is nonneg with sum 1

    std::optional<Tensor> spectrum() const override {
        const SpatialLayout l = spatial_layout(input_shape(), false);
        Tensor spec = Tensor::zeros({l.H, l.W}, /*complex=*/true);
        const long c = static_cast<long>(size_) / 2;
        for (std::size_t u = 0; u < l.H; ++u)
            for (std::size_t v = 0; v < l.W; ++v) {
                std::complex<double> acc = 0.0;
                for (std::size_t ky = 0; ky < size_; ++ky)
                    for (std::size_t kx = 0; kx < size_; ++kx) {
                        const double dy = static_cast<double>(static_cast<long>(ky) - c);
                        const double dx = static_cast<double>(static_cast<long>(kx) - c);
                        const double ph =
                            -2.0 * M_PI * (u * dy / static_cast<double>(l.H) + v * dx / static_cast<double>(l.W));
                        acc += kernel_[ky * size_ + kx] * std::complex<double>(std::cos(ph), std::sin(ph));
                    }
                spec.set_cval(u * l.W + v, acc);
            }
        return spec;
    }

    const Tensor& kernel() const { return kernel_; }

  protected:
    Tensor do_apply(const Tensor& x) const override { return convolve(x, /*adjoint=*/false); }
    Tensor do_adjoint(const Tensor& u) const override { return convolve(u, /*adjoint=*/true); }
    void write_payload(std::ostream& os) const override;

  private:
    Tensor convolve(const Tensor& x, bool adjoint) const {
        const SpatialLayout l = spatial_layout(input_shape(), x.is_complex());
        Tensor out = Tensor::zeros(x.shape(), x.is_complex());
        const long c = static_cast<long>(size_) / 2;
        const long H = static_cast<long>(l.H), W = static_cast<long>(l.W);
        for (std::size_t ch = 0; ch < l.channels; ++ch) {
            const double* in = x.data() + ch * l.H * l.W * l.comps;
            double* dst = out.data() + ch * l.H * l.W * l.comps;
            for (long y = 0; y < H; ++y)
                for (long xx = 0; xx < W; ++xx) {
                    double acc[2] = {0.0, 0.0};
                    for (long ky = 0; ky < static_cast<long>(size_); ++ky)
                        for (long kx = 0; kx < static_cast<long>(size_); ++kx) {
                            const double kv = kernel_[ky * size_ + kx];
                            const long dy = ky - c, dx = kx - c;
                            long sy = adjoint ? y + dy : y - dy;
                            long sx = adjoint ? xx + dx : xx - dx;
                            sy = ((sy % H) + H) % H;
                            sx = ((sx % W) + W) % W;
                            const double* src = in + (sy * W + sx) * l.comps;
                            for (std::size_t j = 0; j < l.comps; ++j) acc[j] += kv * src[j];
                        }
                    for (std::size_t j = 0; j < l.comps; ++j) dst[(y * W + xx) * l.comps + j] = acc[j];
                }
        }
        return out;
    }

    std::size_t size_;
    double s1_, s2_, angle_;
    Tensor kernel_;  // (size, size), nonnegative, sums to 1
};

// ---------------------------------------------------------------------------
// superres

class SuperresOp final : public LinearOperator {
  public:
    SuperresOp(Shape in, Shape out, std::size_t factor)
        : LinearOperator(OpKind::superres, std::move(in), std::move(out)), factor_(factor) {}

    double norm_bound() const override { return 1.0 / (static_cast<double>(factor_) * factor_); }
    std::size_t factor() const { return factor_; }

  protected:
    Tensor do_apply(const Tensor& x) const override {
        const SpatialLayout l = spatial_layout(input_shape(), x.is_complex());
        const std::size_t Ho = l.H / factor_, Wo = l.W / factor_;
        Tensor y = Tensor::zeros(output_shape(), x.is_complex());
        const double inv = 1.0 / (static_cast<double>(factor_) * factor_);
        for (std::size_t ch = 0; ch < l.channels; ++ch)
            for (std::size_t oy = 0; oy < Ho; ++oy)
                for (std::size_t ox = 0; ox < Wo; ++ox)
                    for (std::size_t j = 0; j < l.comps; ++j) {
                        double acc = 0.0;
                        for (std::size_t dy = 0; dy < factor_; ++dy)
                            for (std::size_t dx = 0; dx < factor_; ++dx)
                                acc += x[((ch * l.H + oy * factor_ + dy) * l.W + ox * factor_ + dx) *
                                             l.comps +
                                         j];
                        y[((ch * Ho + oy) * Wo + ox) * l.comps + j] = acc * inv;
                    }
        return y;
    }

    Tensor do_adjoint(const Tensor& u) const override {
        const SpatialLayout l = spatial_layout(input_shape(), u.is_complex());
        const std::size_t Ho = l.H / factor_, Wo = l.W / factor_;
        Tensor y = Tensor::zeros(input_shape(), u.is_complex());
        const double inv = 1.0 / (static_cast<double>(factor_) * factor_);
        for (std::size_t ch = 0; ch < l.channels; ++ch)
            for (std::size_t oy = 0; oy < Ho; ++oy)
                for (std::size_t ox = 0; ox < Wo; ++ox)
                    for (std::size_t j = 0; j < l.comps; ++j) {
                        const double v = u[((ch * Ho + oy) * Wo + ox) * l.comps + j] * inv;
                        for (std::size_t dy = 0; dy < factor_; ++dy)
                            for (std::size_t dx = 0; dx < factor_; ++dx)
                                y[((ch * l.H + oy * factor_ + dy) * l.W + ox * factor_ + dx) * l.comps +
                                  j] = v;
                    }
        return y;
    }

    void write_payload(std::ostream& os) const override;

  private:
    std::size_t factor_;
};

// ---------------------------------------------------------------------------
// inpaint

class InpaintOp final : public LinearOperator {
  public:
    InpaintOp(Shape shape, double drop_p, Tensor mask)
        : LinearOperator(OpKind::inpaint, shape, shape), drop_p_(drop_p), mask_(std::move(mask)) {}

    double norm_bound() const override { return 1.0; }
    double drop_p() const { return drop_p_; }
    const Tensor& mask() const { return mask_; }
    double kept_fraction() const { return mask_.sum() / static_cast<double>(mask_.numel()); }

    std::optional<Tensor> output_support() const override {
        const SpatialLayout l = spatial_layout(output_shape(), false);
        Tensor s = Tensor::zeros(output_shape());
        for (std::size_t ch = 0; ch < l.channels; ++ch)
            for (std::size_t i = 0; i < l.H * l.W; ++i) s[ch * l.H * l.W + i] = mask_[i];
        return s;
    }

  protected:
    Tensor do_apply(const Tensor& x) const override { return masked(x); }
    Tensor do_adjoint(const Tensor& u) const override { return masked(u); }
    void write_payload(std::ostream& os) const override;

  private:
    Tensor masked(const Tensor& x) const {
        const SpatialLayout l = spatial_layout(input_shape(), x.is_complex());
        Tensor out = x;
        for (std::size_t ch = 0; ch < l.channels; ++ch)
            for (std::size_t i = 0; i < l.H * l.W; ++i)
                if (mask_[i] == 0.0)
                    for (std::size_t j = 0; j < l.comps; ++j)
                        out[(ch * l.H * l.W + i) * l.comps + j] = 0.0;
        return out;
    }

    double drop_p_;
    Tensor mask_;  // (H, W) of 0/1, 1 = kept
};

// ---------------------------------------------------------------------------
// mri

class MriOp final : public LinearOperator {
  public:
    MriOp(std::size_t H, std::size_t W, std::size_t n_coils, MaskSpec spec, Tensor mask, Tensor coils)
        : LinearOperator(OpKind::mri, Shape{2, H, W}, Shape{n_coils, H, W}),
          H_(H),
          W_(W),
          n_coils_(n_coils),
          spec_(spec),
          mask_(std::move(mask)),
          coils_(std::move(coils)) {}

    // S is pointwise-normalized, F unitary, M a projector, so ||A^T A|| <= 1.
    double norm_bound() const override { return 1.0; }

    std::optional<Tensor> output_support() const override {
        Tensor s = Tensor::zeros(output_shape());
        for (std::size_t c = 0; c < n_coils_; ++c)
            for (std::size_t i = 0; i < H_ * W_; ++i) s[c * H_ * W_ + i] = mask_[i];
        return s;
    }

    const Tensor& mask() const { return mask_; }
    const Tensor& coil_maps() const { return coils_; }
    const MaskSpec& mask_spec() const { return spec_; }

  protected:
    bool output_complex() const override { return true; }
    bool input_complex_ok() const override { return false; }

    Tensor do_apply(const Tensor& x) const override {
        Tensor y = Tensor::zeros(output_shape(), /*complex=*/true);
        std::vector<std::complex<double>> tmp(H_ * W_);
        for (std::size_t c = 0; c < n_coils_; ++c) {
            for (std::size_t i = 0; i < H_ * W_; ++i) {
                const std::complex<double> z(x[i], x[H_ * W_ + i]);
                tmp[i] = z * coils_.cval(c * H_ * W_ + i);
            }
            detail::fft2_unitary(tmp.data(), H_, W_, /*inverse=*/false);
            for (std::size_t i = 0; i < H_ * W_; ++i)
                y.set_cval(c * H_ * W_ + i, mask_[i] != 0.0 ? tmp[i] : 0.0);
        }
        return y;
    }

    Tensor do_adjoint(const Tensor& u) const override {
        if (!u.is_complex()) throw ArgumentError("mri adjoint: expected complex k-space input");
        Tensor x = Tensor::zeros(input_shape());
        std::vector<std::complex<double>> tmp(H_ * W_);
        for (std::size_t c = 0; c < n_coils_; ++c) {
            for (std::size_t i = 0; i < H_ * W_; ++i)
                tmp[i] = mask_[i] != 0.0 ? u.cval(c * H_ * W_ + i) : 0.0;
            detail::fft2_unitary(tmp.data(), H_, W_, /*inverse=*/true);
            for (std::size_t i = 0; i < H_ * W_; ++i) {
                const std::complex<double> z = std::conj(coils_.cval(c * H_ * W_ + i)) * tmp[i];
                x[i] += z.real();
                x[H_ * W_ + i] += z.imag();
            }
        }
        return x;
    }

    void write_payload(std::ostream& os) const override;

  private:
    std::size_t H_, W_, n_coils_;
    MaskSpec spec_;
    Tensor mask_;   // (H, W)
    Tensor coils_;  // complex (n_coils, H, W)
};

}  // namespace

// ---------------------------------------------------------------------------
// Factories

LinOpPtr make_identity(Shape shape) {
    if (shape.empty()) throw ArgumentError("make_identity: empty shape");
    return std::make_shared<IdentityOp>(std::move(shape));
}

LinOpPtr make_dense(Tensor matrix) {
    if (matrix.shape().size() != 2) throw ArgumentError("make_dense: expected a (m, n) matrix");
    Shape in{matrix.shape()[1]}, out{matrix.shape()[0]};
    return std::make_shared<DenseOp>(std::move(matrix), std::move(in), std::move(out));
}

LinOpPtr make_dense(Tensor matrix, Shape input_shape, Shape output_shape) {
    return std::make_shared<DenseOp>(std::move(matrix), std::move(input_shape),
                                     std::move(output_shape));
}

LinOpPtr make_gaussian_blur(Shape image_shape, std::size_t size, double sigma1, double sigma2,
                            double angle) {
    if (size % 2 == 0 || size == 0) throw ArgumentError("make_gaussian_blur: size must be odd");
    if (sigma1 <= 0.0 || sigma2 <= 0.0) throw ArgumentError("make_gaussian_blur: sigmas must be > 0");
    spatial_layout(image_shape, false);  // validates >= 2 dims

    // Sigma^-1 = R diag(1/s1^2, 1/s2^2) R^T with R the rotation by `angle`.
    const double cs = std::cos(angle), sn = std::sin(angle);
    const double i1 = 1.0 / (sigma1 * sigma1), i2 = 1.0 / (sigma2 * sigma2);
    const double qxx = cs * cs * i1 + sn * sn * i2;
    const double qyy = sn * sn * i1 + cs * cs * i2;
    const double qxy = cs * sn * (i1 - i2);

    const long c = static_cast<long>(size) / 2;
    Tensor kernel = Tensor::zeros({size, size});
    double total = 0.0;
    for (long ky = 0; ky < static_cast<long>(size); ++ky)
        for (long kx = 0; kx < static_cast<long>(size); ++kx) {
            const double dy = static_cast<double>(ky - c), dx = static_cast<double>(kx - c);
            const double q = 0.5 * (qxx * dx * dx + 2.0 * qxy * dx * dy + qyy * dy * dy);
            const double v = std::exp(-q);
            kernel[ky * size + kx] = v;
            total += v;
        }
    for (std::size_t i = 0; i < size * size; ++i) kernel[i] /= total;
    return std::make_shared<BlurOp>(std::move(image_shape), size, sigma1, sigma2, angle,
                                    std::move(kernel));
}

LinOpPtr make_superres(Shape image_shape, std::size_t factor) {
    if (factor == 0) throw ArgumentError("make_superres: factor must be >= 1");
    const SpatialLayout l = spatial_layout(image_shape, false);
    if (l.H % factor || l.W % factor)
        throw ArgumentError("make_superres: factor " + std::to_string(factor) +
                            " does not divide image extents " + shape_str(image_shape));
    Shape out = image_shape;
    out[out.size() - 2] = l.H / factor;
    out[out.size() - 1] = l.W / factor;
    return std::make_shared<SuperresOp>(std::move(image_shape), std::move(out), factor);
}

LinOpPtr make_inpainting(double drop_p, Shape image_shape, Rng& rng) {
    if (drop_p < 0.0 || drop_p >= 1.0)
        throw ArgumentError("make_inpainting: drop_p must be in [0, 1)");
    const SpatialLayout l = spatial_layout(image_shape, false);
    MaskSpec spec{MaskSpec::Pattern::dust, drop_p, rng.fork_seed()};
    Tensor mask = drop_p == 0.0 ? Tensor::full({l.H, l.W}, 1.0) : realize_mask(spec, l.H, l.W);
    return std::make_shared<InpaintOp>(std::move(image_shape), drop_p, std::move(mask));
}

LinOpPtr make_mri(Shape image_shape, std::size_t n_coils, const MaskSpec& mask, Rng& rng) {
    if (n_coils < 1) throw ArgumentError("make_mri: n_coils must be >= 1");
    if (image_shape.size() != 2) throw ArgumentError("make_mri: image_shape must be (H, W)");
    const std::size_t H = image_shape[0], W = image_shape[1];
    Tensor m = realize_mask(mask, H, W);
    CoilMaps cm = make_coil_maps(n_coils, H, W, rng);
    return std::make_shared<MriOp>(H, W, n_coils, mask, std::move(m), std::move(cm.maps));
}

// ---------------------------------------------------------------------------
// Measurement helpers

Tensor data_fidelity_gradient(const LinearOperator& op, const Tensor& x, const Measurement& meas) {
    Tensor r = op.apply(x);
    check_same_layout(r, meas.y, "data_fidelity_gradient");
    for (std::size_t i = 0; i < r.raw_size(); ++i) r[i] -= meas.y[i];
    return op.adjoint(r);
}

Measurement measure(const LinOpPtr& op, const Tensor& x, double sigma_y, Rng& rng) {
    if (!op) throw ArgumentError("measure: null operator");
    if (sigma_y < 0.0) throw ArgumentError("measure: sigma_y must be >= 0");
    Tensor y = op->apply(x);
    if (sigma_y > 0.0) {
        Tensor n = rng.randn(y.shape(), y.is_complex());
        const auto support = op->output_support();
        const std::size_t comps = y.is_complex() ? 2 : 1;
        for (std::size_t i = 0; i < y.numel(); ++i) {
            const double keep = support ? (*support)[i] : 1.0;
            for (std::size_t j = 0; j < comps; ++j) y[i * comps + j] += sigma_y * keep * n[i * comps + j];
        }
    }
    return Measurement{std::move(y), sigma_y, op};
}

// ---------------------------------------------------------------------------
// Blob serialization: magic "DUOP", version u16, kind u16, payload.

namespace {

constexpr char kOpMagic[4] = {'D', 'U', 'O', 'P'};
constexpr std::uint16_t kOpVersion = 1;

void write_shape(std::ostream& os, const Shape& s) {
    io::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(s.size()));
    for (std::size_t d : s) io::write_le<std::uint64_t>(os, d);
}

Shape read_shape(std::istream& is) {
    const std::uint8_t nd = io::read_le<std::uint8_t>(is);
    Shape s(nd);
    for (auto& d : s) d = io::read_le<std::uint64_t>(is);
    return s;
}

}  // namespace

void IdentityOp::write_payload(std::ostream& os) const {
    write_shape(os, input_shape());
}

void DenseOp::write_payload(std::ostream& os) const {
    io::write_le<std::uint64_t>(os, m_.shape()[0]);
    io::write_le<std::uint64_t>(os, m_.shape()[1]);
    write_shape(os, input_shape());
    write_shape(os, output_shape());
    io::write_f64s(os, m_.raw());
}

void BlurOp::write_payload(std::ostream& os) const {
    write_shape(os, input_shape());
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(size_));
    io::write_f64(os, s1_);
    io::write_f64(os, s2_);
    io::write_f64(os, angle_);
    io::write_f64s(os, kernel_.raw());
}

void SuperresOp::write_payload(std::ostream& os) const {
    write_shape(os, input_shape());
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(factor_));
}

void InpaintOp::write_payload(std::ostream& os) const {
    write_shape(os, input_shape());
    io::write_f64(os, drop_p_);
    for (std::size_t i = 0; i < mask_.numel(); ++i)
        io::write_le<std::uint8_t>(os, mask_[i] != 0.0 ? 1 : 0);
}

void MriOp::write_payload(std::ostream& os) const {
    io::write_le<std::uint64_t>(os, H_);
    io::write_le<std::uint64_t>(os, W_);
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(n_coils_));
    io::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(spec_.pattern));
    io::write_f64(os, spec_.accel);
    io::write_le<std::uint64_t>(os, spec_.seed);
    for (std::size_t i = 0; i < H_ * W_; ++i) io::write_le<std::uint8_t>(os, mask_[i] != 0.0 ? 1 : 0);
    io::write_f64s(os, coils_.raw());
}

void LinearOperator::write_blob(std::ostream& os) const {
    os.write(kOpMagic, 4);
    io::write_le<std::uint16_t>(os, kOpVersion);
    io::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(kind_));
    write_payload(os);
}

void save_operator_blob(const LinearOperator& op, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path + " for writing");
    op.write_blob(f);
    if (!f) throw DataError("failed writing operator blob to " + path);
}

LinOpPtr read_operator_blob(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kOpMagic, 4) != 0)
        throw IntegrityError("operator blob: bad magic bytes");
    const std::uint16_t version = io::read_le<std::uint16_t>(is);
    if (version != kOpVersion)
        throw IntegrityError("operator blob: unsupported version " + std::to_string(version));
    const auto kind = static_cast<OpKind>(io::read_le<std::uint16_t>(is));
    switch (kind) {
        case OpKind::identity:
            return make_identity(read_shape(is));
        case OpKind::dense: {
            const std::size_t m = io::read_le<std::uint64_t>(is);
            const std::size_t n = io::read_le<std::uint64_t>(is);
            Shape in = read_shape(is);
            Shape out = read_shape(is);
            std::vector<double> data;
            io::read_f64s(is, data, m * n);
            return make_dense(Tensor::from_raw({m, n}, std::move(data)), std::move(in),
                              std::move(out));
        }
        case OpKind::blur: {
            Shape shape = read_shape(is);
            const std::size_t size = io::read_le<std::uint32_t>(is);
            const double s1 = io::read_f64(is), s2 = io::read_f64(is), angle = io::read_f64(is);
            std::vector<double> ker;
            io::read_f64s(is, ker, size * size);
            return std::make_shared<BlurOp>(std::move(shape), size, s1, s2, angle,
                                            Tensor::from_raw({size, size}, std::move(ker)));
        }
        case OpKind::superres: {
            Shape shape = read_shape(is);
            const std::size_t factor = io::read_le<std::uint32_t>(is);
            return make_superres(std::move(shape), factor);
        }
        case OpKind::inpaint: {
            Shape shape = read_shape(is);
            const double drop_p = io::read_f64(is);
            const SpatialLayout l = spatial_layout(shape, false);
            Tensor mask = Tensor::zeros({l.H, l.W});
            for (std::size_t i = 0; i < l.H * l.W; ++i) mask[i] = io::read_le<std::uint8_t>(is) ? 1.0 : 0.0;
            return std::make_shared<InpaintOp>(std::move(shape), drop_p, std::move(mask));
        }
        case OpKind::mri: {
            const std::size_t H = io::read_le<std::uint64_t>(is);
            const std::size_t W = io::read_le<std::uint64_t>(is);
            const std::size_t n_coils = io::read_le<std::uint32_t>(is);
            MaskSpec spec;
            spec.pattern = static_cast<MaskSpec::Pattern>(io::read_le<std::uint16_t>(is));
            spec.accel = io::read_f64(is);
            spec.seed = io::read_le<std::uint64_t>(is);
            Tensor mask = Tensor::zeros({H, W});
            for (std::size_t i = 0; i < H * W; ++i) mask[i] = io::read_le<std::uint8_t>(is) ? 1.0 : 0.0;
            std::vector<double> coils;
            io::read_f64s(is, coils, n_coils * H * W * 2);
            return std::make_shared<MriOp>(H, W, n_coils, spec, std::move(mask),
                                           Tensor::from_raw({n_coils, H, W}, std::move(coils), true));
        }
    }
    throw IntegrityError("operator blob: unknown kind tag");
}

LinOpPtr load_operator_blob(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open operator blob " + path);
    return read_operator_blob(f);
}

namespace {
constexpr char kMeasMagic[4] = {'D', 'U', 'M', 'E'};
constexpr std::uint16_t kMeasVersion = 1;
}  // namespace

void save_measurement(const std::string& path, const Measurement& meas) {
    if (!meas.op) throw ArgumentError("save_measurement: measurement has no operator");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path + " for writing");
    f.write(kMeasMagic, 4);
    io::write_le<std::uint16_t>(f, kMeasVersion);
    io::write_f64(f, meas.sigma_y);
    io::write_tensor(f, meas.y);
    meas.op->write_blob(f);
    if (!f) throw DataError("failed writing measurement to " + path);
}

Measurement load_measurement(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open measurement file " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMeasMagic, 4) != 0)
        throw IntegrityError("measurement file: bad magic bytes");
    const std::uint16_t version = io::read_le<std::uint16_t>(f);
    if (version != kMeasVersion)
        throw IntegrityError("measurement file: unsupported version " + std::to_string(version));
    Measurement meas;
    meas.sigma_y = io::read_f64(f);
    meas.y = io::read_tensor(f);
    meas.op = read_operator_blob(f);
    if (!shape_eq(meas.y.shape(), meas.op->output_shape()))
        throw IntegrityError("measurement file: y shape " + shape_str(meas.y.shape()) +
                             " does not match operator output " +
                             shape_str(meas.op->output_shape()));
    return meas;
}

}  // namespace dufold
