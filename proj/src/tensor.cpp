#include "dufold/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dufold/errors.hpp"

namespace dufold {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

bool shape_eq(const Shape& a, const Shape& b) {
    return a == b;
}

Tensor Tensor::zeros(Shape shape, bool complex) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.numel_ = shape_numel(t.shape_);
    t.complex_ = complex;
    t.data_.assign(t.numel_ * (complex ? 2 : 1), 0.0);
    return t;
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::scalar(double value) {
    Tensor t = zeros(Shape{});
    t.data_[0] = value;
    return t;
}

Tensor Tensor::from_raw(Shape shape, std::vector<double> raw, bool complex) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.numel_ = shape_numel(t.shape_);
    t.complex_ = complex;
    if (raw.size() != t.numel_ * (complex ? 2u : 1u))
        throw ArgumentError("Tensor::from_raw: buffer length " + std::to_string(raw.size()) +
                            " does not match shape " + shape_str(t.shape_));
    t.data_ = std::move(raw);
    return t;
}

std::complex<double> Tensor::cval(std::size_t i) const {
    if (!complex_) return {data_[i], 0.0};
    return {data_[2 * i], data_[2 * i + 1]};
}

void Tensor::set_cval(std::size_t i, std::complex<double> v) {
    if (!complex_) throw ContractError("set_cval on a real tensor");
    data_[2 * i] = v.real();
    data_[2 * i + 1] = v.imag();
}

Tensor Tensor::real_view() const {
    if (!complex_) throw ContractError("real_view: tensor is already real");
    Shape s = shape_;
    s.push_back(2);
    return from_raw(std::move(s), data_, false);
}

Tensor Tensor::complex_view() const {
    if (complex_) throw ContractError("complex_view: tensor is already complex");
    if (shape_.empty() || shape_.back() != 2)
        throw ArgumentError("complex_view requires a trailing extent-2 axis, got " + shape_str(shape_));
    Shape s(shape_.begin(), shape_.end() - 1);
    return from_raw(std::move(s), data_, true);
}

Tensor Tensor::reshaped(Shape s) const {
    if (shape_numel(s) != numel_)
        throw ArgumentError("reshape " + shape_str(shape_) + " -> " + shape_str(s) + ": element count differs");
    return from_raw(std::move(s), data_, complex_);
}

double Tensor::sum() const {
    double acc = 0.0;
    for (double v : data_) acc += v;
    return acc;
}

double Tensor::min() const {
    double m = data_.empty() ? 0.0 : data_[0];
    for (double v : data_) m = std::min(m, v);
    return m;
}

double Tensor::max() const {
    double m = data_.empty() ? 0.0 : data_[0];
    for (double v : data_) m = std::max(m, v);
    return m;
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

double Tensor::dot(const Tensor& o) const {
    check_same_layout(*this, o, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) acc += data_[i] * o.data_[i];
    return acc;
}

double Tensor::norm() const {
    double acc = 0.0;
    for (double v : data_) acc += v * v;
    return std::sqrt(acc);
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void check_same_layout(const Tensor& a, const Tensor& b, const char* where) {
    if (!shape_eq(a.shape(), b.shape()) || a.is_complex() != b.is_complex())
        throw ArgumentError(std::string(where) + ": layout mismatch " + shape_str(a.shape()) +
                            (a.is_complex() ? "c" : "r") + " vs " + shape_str(b.shape()) +
                            (b.is_complex() ? "c" : "r"));
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_layout(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.raw_size(); ++i) out[i] += b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_layout(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.raw_size(); ++i) out[i] -= b[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_layout(a, b, "mul");
    Tensor out = a;
    for (std::size_t i = 0; i < out.raw_size(); ++i) out[i] *= b[i];
    return out;
}

Tensor scaled(const Tensor& a, double c) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.raw_size(); ++i) out[i] *= c;
    return out;
}

void axpy(Tensor& dst, double c, const Tensor& src) {
    check_same_layout(dst, src, "axpy");
    for (std::size_t i = 0; i < dst.raw_size(); ++i) dst[i] += c * src[i];
}

}  // namespace dufold
