#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

#include "dufold/rng.hpp"
#include "dufold/tensor.hpp"

namespace dufold {

enum class OpKind : std::uint16_t {
    identity = 0,
    dense = 1,
    blur = 2,
    superres = 3,
    inpaint = 4,
    mri = 5,
};

const char* op_kind_name(OpKind k);

/// k-space (or pixel) sampling mask recipe; realization is a pure function
/// of the spec, so the same seed always yields the same mask.
struct MaskSpec {
    enum class Pattern : std::uint16_t { uniform1d = 0, gaussian1d = 1, gaussian2d = 2, dust = 3 };
    Pattern pattern = Pattern::uniform1d;
    /// Acceleration factor for the sampling patterns; drop probability for dust.
    double accel = 4.0;
    std::uint64_t seed = 0;
};

/// Realized 0/1 mask of shape (H, W).
Tensor realize_mask(const MaskSpec& spec, std::size_t H, std::size_t W);

/// Smooth complex sensitivity profiles with sum_c |S_c|^2 == 1 pointwise.
struct CoilMaps {
    std::size_t n_coils = 0;
    Tensor maps;  // complex (n_coils, H, W)
};

CoilMaps make_coil_maps(std::size_t n_coils, std::size_t H, std::size_t W, Rng& rng);

/// Linear forward model A with an exact adjoint. Immutable after
/// construction; apply/adjoint are pure and safe to call concurrently.
class LinearOperator {
  public:
    virtual ~LinearOperator() = default;

    OpKind kind() const { return kind_; }
    const Shape& input_shape() const { return input_shape_; }
    const Shape& output_shape() const { return output_shape_; }

    Tensor apply(const Tensor& x) const;
    Tensor adjoint(const Tensor& u) const;

    /// Upper estimate of ||A^T A||, used to scale unfolding step sizes.
    virtual double norm_bound() const = 0;
    /// Fourier eigenvalues for operators diagonalized by the DFT (blur).
    virtual std::optional<Tensor> spectrum() const { return std::nullopt; }
    /// 0/1 support of the measurement in output layout, when the operator
    /// only observes part of its output space (inpainting, MRI masks).
    virtual std::optional<Tensor> output_support() const { return std::nullopt; }

    void write_blob(std::ostream& os) const;

  protected:
    LinearOperator(OpKind kind, Shape in, Shape out)
        : kind_(kind), input_shape_(std::move(in)), output_shape_(std::move(out)) {}

    virtual Tensor do_apply(const Tensor& x) const = 0;
    virtual Tensor do_adjoint(const Tensor& u) const = 0;
    virtual void write_payload(std::ostream& os) const = 0;
    virtual bool output_complex() const { return false; }
    virtual bool input_complex_ok() const { return true; }

  private:
    OpKind kind_;
    Shape input_shape_;
    Shape output_shape_;
};

using LinOpPtr = std::shared_ptr<const LinearOperator>;

struct Measurement {
    Tensor y;
    double sigma_y = 0.0;
    LinOpPtr op;  // operator that produced y
};

LinOpPtr make_identity(Shape shape);
/// Explicit real matrix (m, n) acting on vectors of shape (n).
LinOpPtr make_dense(Tensor matrix);
/// Dense matrix acting between arbitrary layouts (flattened row-major);
/// element counts must match the matrix dimensions.
LinOpPtr make_dense(Tensor matrix, Shape input_shape, Shape output_shape);
/// Circular (periodic-boundary) convolution with a normalized Gaussian
/// kernel; exactly diagonal in the Fourier basis.
LinOpPtr make_gaussian_blur(Shape image_shape, std::size_t size, double sigma1, double sigma2,
                            double angle);
/// Non-overlapping block averaging; the adjoint replicates scaled by 1/f^2.
LinOpPtr make_superres(Shape image_shape, std::size_t factor);
/// Diagonal 0/1 mask. Dust-like clumping: Bernoulli drop seeds (rate
/// calibrated so the post-dilation drop fraction targets drop_p) followed by
/// one 3x3 dilation of the dropped set.
LinOpPtr make_inpainting(double drop_p, Shape image_shape, Rng& rng);
/// A = M . F . S over a 2-channel real image layout (2, H, W): per-coil
/// sensitivity weighting, unitary 2-D FFT, then a binary k-space mask.
/// Output is complex (n_coils, H, W).
LinOpPtr make_mri(Shape image_shape, std::size_t n_coils, const MaskSpec& mask, Rng& rng);

/// A^T (A x - y).
Tensor data_fidelity_gradient(const LinearOperator& op, const Tensor& x, const Measurement& meas);

/// y = A x + sigma_y * n, with the noise restricted to the operator's
/// output support (unobserved entries stay exactly zero).
Measurement measure(const LinOpPtr& op, const Tensor& x, double sigma_y, Rng& rng);

void save_operator_blob(const LinearOperator& op, const std::string& path);
LinOpPtr read_operator_blob(std::istream& is);
LinOpPtr load_operator_blob(const std::string& path);

/// Measurement file (magic "DUME"): sigma_y, the y tensor, and the embedded
/// operator blob that produced it.
void save_measurement(const std::string& path, const Measurement& meas);
Measurement load_measurement(const std::string& path);

}  // namespace dufold
