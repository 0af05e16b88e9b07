#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace dufold {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool shape_eq(const Shape& a, const Shape& b);

/// Dense row-major tensor of 64-bit scalars.
///
/// Complex tensors store interleaved (re, im) pairs in the same flat buffer;
/// `real_view()` / `complex_view()` convert bijectively between a complex
/// tensor of shape S and a real tensor of shape S + [2].
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool complex = false);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);
    static Tensor from_raw(Shape shape, std::vector<double> raw, bool complex = false);

    const Shape& shape() const { return shape_; }
    std::size_t numel() const { return numel_; }
    bool is_complex() const { return complex_; }
    bool empty() const { return data_.empty() && shape_.empty(); }

    /// Length of the flat real buffer (2x numel for complex tensors).
    std::size_t raw_size() const { return data_.size(); }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::complex<double> cval(std::size_t i) const;
    void set_cval(std::size_t i, std::complex<double> v);

    Tensor real_view() const;
    Tensor complex_view() const;

    Tensor reshaped(Shape s) const;

    double sum() const;
    double min() const;
    double max() const;
    double max_abs() const;
    /// Real inner product over the flat buffer (= Re<a, b> for complex).
    double dot(const Tensor& o) const;
    double norm() const;
    bool all_finite() const;

  private:
    Shape shape_;
    std::size_t numel_ = 0;
    bool complex_ = false;
    std::vector<double> data_;
};

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scaled(const Tensor& a, double c);
/// dst += c * src (shapes must match).
void axpy(Tensor& dst, double c, const Tensor& src);
void check_same_layout(const Tensor& a, const Tensor& b, const char* where);

}  // namespace dufold
