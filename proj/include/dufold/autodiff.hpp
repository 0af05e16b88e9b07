#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dufold/tensor.hpp"

namespace dufold {
class LinearOperator;
}

namespace dufold::ad {

/// Trainable leaf tensor: value plus accumulated gradient of matching shape.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
        grad = Tensor::zeros(value.shape(), value.is_complex());
    }
    void zero_grad() { grad = Tensor::zeros(value.shape(), value.is_complex()); }
};

void zero_grads(const std::vector<Param*>& params);

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // populated during backward
    bool requires_grad = false;
    Param* param = nullptr;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;
};

bool grad_enabled();

/// Scope guard that stops ops from recording the tape (pure inference).
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

Var constant(Tensor v);
Var leaf(Param& p);
double val(const Var& v);  // scalar value

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise, real only
Var smul(const Var& a, double c);
Var neg(const Var& a);
/// x scaled by a traced real scalar s.
Var scale_by(const Var& x, const Var& s);
Var sum(const Var& a);   // real only
Var mean(const Var& a);  // real only
Var dot(const Var& a, const Var& b);
Var sum_squares(const Var& a);
Var silu(const Var& a);
Var softplus(const Var& a);
Var exp(const Var& a);
/// Same element count, new shape; gradient passes through unchanged.
Var reshape(const Var& a, Shape s);
/// Hard clamp; gradient passes through strictly inside (lo, hi).
Var clamp(const Var& a, double lo, double hi);
/// W [out,in] * x [in] + b [out].
Var affine(const Var& W, const Var& x, const Var& b);
/// Same-padded stride-1 2-D convolution: x [C,H,W], w [O,C,k,k], k odd.
Var conv2d(const Var& x, const Var& w);
/// x [C,H,W] + b [C] broadcast over the spatial axes.
Var bias_channels(const Var& x, const Var& b);
Var avgpool2(const Var& x);
Var upsample2(const Var& x);
/// Forward-operator application, treated as a constant linear map. The
/// operator is held by reference: it must outlive backward() on any graph
/// that uses it.
Var linop_apply(const LinearOperator& op, const Var& x);
Var linop_adjoint(const LinearOperator& op, const Var& u);

/// Accumulates d(loss)/d(param) into every reachable Param's grad.
/// Repeated calls accumulate until grads are zeroed.
void backward(const Var& loss);

/// Central-difference gradient of f at x, coordinate by coordinate over the
/// flat buffer (complex tensors are perturbed per real component).
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double h);

}  // namespace dufold::ad
