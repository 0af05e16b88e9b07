#include "dufold/autodiff.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <unordered_set>

#include "dufold/errors.hpp"
#include "dufold/linop.hpp"

namespace dufold::ad {

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using MapRMConst = Eigen::Map<const RowMat>;

void accumulate(Node& n, const Tensor& contribution) {
    if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape(), n.value.is_complex());
    for (std::size_t i = 0; i < n.grad.raw_size(); ++i) n.grad[i] += contribution[i];
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bp) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (g_grad_enabled) {
        bool rg = false;
        for (const auto& p : parents) rg = rg || p->requires_grad;
        if (rg) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->backprop = std::move(bp);
        }
    }
    return n;
}

void require_real(const Var& v, const char* op) {
    if (v->value.is_complex()) throw ArgumentError(std::string(op) + ": complex tensors unsupported");
}

}  // namespace

void zero_grads(const std::vector<Param*>& params) {
    for (Param* p : params) p->zero_grad();
}

bool grad_enabled() {
    return g_grad_enabled;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) {
    g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() {
    g_grad_enabled = prev_;
}

Var constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    return n;
}

Var leaf(Param& p) {
    auto n = std::make_shared<Node>();
    n->value = p.value;
    if (g_grad_enabled) {
        n->requires_grad = true;
        n->param = &p;
    }
    return n;
}

double val(const Var& v) {
    if (v->value.numel() != 1 || v->value.is_complex())
        throw ContractError("val: node is not a real scalar");
    return v->value[0];
}

Var add(const Var& a, const Var& b) {
    check_same_layout(a->value, b->value, "ad::add");
    Tensor out = dufold::add(a->value, b->value);
    Node* pa = a.get();
    Node* pb = b.get();
    return make_node(std::move(out), {a, b}, [pa, pb](Node& n) {
        if (pa->requires_grad) accumulate(*pa, n.grad);
        if (pb->requires_grad) accumulate(*pb, n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_layout(a->value, b->value, "ad::sub");
    Tensor out = dufold::sub(a->value, b->value);
    Node* pa = a.get();
    Node* pb = b.get();
    return make_node(std::move(out), {a, b}, [pa, pb](Node& n) {
        if (pa->requires_grad) accumulate(*pa, n.grad);
        if (pb->requires_grad) accumulate(*pb, scaled(n.grad, -1.0));
    });
}

Var mul(const Var& a, const Var& b) {
    require_real(a, "ad::mul");
    require_real(b, "ad::mul");
    check_same_layout(a->value, b->value, "ad::mul");
    Tensor out = dufold::mul(a->value, b->value);
    Node* pa = a.get();
    Node* pb = b.get();
    return make_node(std::move(out), {a, b}, [pa, pb](Node& n) {
        if (pa->requires_grad) accumulate(*pa, dufold::mul(n.grad, pb->value));
        if (pb->requires_grad) accumulate(*pb, dufold::mul(n.grad, pa->value));
    });
}

Var smul(const Var& a, double c) {
    Node* pa = a.get();
    return make_node(scaled(a->value, c), {a}, [pa, c](Node& n) {
        if (pa->requires_grad) accumulate(*pa, scaled(n.grad, c));
    });
}

Var neg(const Var& a) {
    return smul(a, -1.0);
}

Var scale_by(const Var& x, const Var& s) {
    if (s->value.numel() != 1 || s->value.is_complex())
        throw ArgumentError("scale_by: scale must be a real scalar node");
    const double c = s->value[0];
    Node* px = x.get();
    Node* ps = s.get();
    return make_node(scaled(x->value, c), {x, s}, [px, ps, c](Node& n) {
        if (px->requires_grad) accumulate(*px, scaled(n.grad, c));
        if (ps->requires_grad) accumulate(*ps, Tensor::scalar(px->value.dot(n.grad)));
    });
}

Var sum(const Var& a) {
    require_real(a, "ad::sum");
    Node* pa = a.get();
    return make_node(Tensor::scalar(a->value.sum()), {a}, [pa](Node& n) {
        if (pa->requires_grad) accumulate(*pa, Tensor::full(pa->value.shape(), n.grad[0]));
    });
}

Var mean(const Var& a) {
    require_real(a, "ad::mean");
    const double inv = 1.0 / static_cast<double>(a->value.numel());
    return smul(sum(a), inv);
}

Var dot(const Var& a, const Var& b) {
    check_same_layout(a->value, b->value, "ad::dot");
    Node* pa = a.get();
    Node* pb = b.get();
    return make_node(Tensor::scalar(a->value.dot(b->value)), {a, b}, [pa, pb](Node& n) {
        const double g = n.grad[0];
        if (pa->requires_grad) accumulate(*pa, scaled(pb->value, g));
        if (pb->requires_grad) accumulate(*pb, scaled(pa->value, g));
    });
}

Var sum_squares(const Var& a) {
    Node* pa = a.get();
    return make_node(Tensor::scalar(a->value.dot(a->value)), {a}, [pa](Node& n) {
        if (pa->requires_grad) accumulate(*pa, scaled(pa->value, 2.0 * n.grad[0]));
    });
}

Var silu(const Var& a) {
    require_real(a, "ad::silu");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.raw_size(); ++i) {
        const double x = out[i];
        out[i] = x / (1.0 + std::exp(-x));
    }
    Node* pa = a.get();
    return make_node(std::move(out), {a}, [pa](Node& n) {
        if (!pa->requires_grad) return;
        Tensor g = n.grad;
        for (std::size_t i = 0; i < g.raw_size(); ++i) {
            const double x = pa->value[i];
            const double s = 1.0 / (1.0 + std::exp(-x));
            g[i] *= s * (1.0 + x * (1.0 - s));
        }
        accumulate(*pa, g);
    });
}

namespace {
double softplus_scalar(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}
}  // namespace

Var softplus(const Var& a) {
    require_real(a, "ad::softplus");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.raw_size(); ++i) out[i] = softplus_scalar(out[i]);
    Node* pa = a.get();
    return make_node(std::move(out), {a}, [pa](Node& n) {
        if (!pa->requires_grad) return;
        Tensor g = n.grad;
        for (std::size_t i = 0; i < g.raw_size(); ++i)
            g[i] *= 1.0 / (1.0 + std::exp(-pa->value[i]));
        accumulate(*pa, g);
    });
}

Var exp(const Var& a) {
    require_real(a, "ad::exp");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.raw_size(); ++i) out[i] = std::exp(out[i]);
    Node* pa = a.get();
    return make_node(out, {a}, [pa, out](Node& n) {
        if (pa->requires_grad) accumulate(*pa, dufold::mul(n.grad, out));
    });
}

Var reshape(const Var& a, Shape s) {
    Tensor out = a->value.reshaped(std::move(s));
    Node* pa = a.get();
    return make_node(std::move(out), {a}, [pa](Node& n) {
        if (pa->requires_grad) accumulate(*pa, n.grad.reshaped(pa->value.shape()));
    });
}

Var clamp(const Var& a, double lo, double hi) {
    require_real(a, "ad::clamp");
    if (!(lo < hi)) throw ArgumentError("ad::clamp: lo must be < hi");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.raw_size(); ++i) out[i] = std::clamp(out[i], lo, hi);
    Node* pa = a.get();
    return make_node(std::move(out), {a}, [pa, lo, hi](Node& n) {
        if (!pa->requires_grad) return;
        Tensor g = n.grad;
        for (std::size_t i = 0; i < g.raw_size(); ++i) {
            const double x = pa->value[i];
            if (!(x > lo && x < hi)) g[i] = 0.0;
        }
        accumulate(*pa, g);
    });
}

Var affine(const Var& W, const Var& x, const Var& b) {
    require_real(W, "ad::affine");
    require_real(x, "ad::affine");
    require_real(b, "ad::affine");
    if (W->value.shape().size() != 2 || x->value.shape().size() != 1 || b->value.shape().size() != 1)
        throw ArgumentError("affine: expected W [out,in], x [in], b [out]");
    const std::size_t out_dim = W->value.shape()[0];
    const std::size_t in_dim = W->value.shape()[1];
    if (x->value.numel() != in_dim || b->value.numel() != out_dim)
        throw ArgumentError("affine: dimension mismatch");

    Tensor y = Tensor::zeros({out_dim});
    for (std::size_t i = 0; i < out_dim; ++i) {
        double acc = b->value[i];
        const double* wrow = W->value.data() + i * in_dim;
        for (std::size_t j = 0; j < in_dim; ++j) acc += wrow[j] * x->value[j];
        y[i] = acc;
    }
    Node* pw = W.get();
    Node* px = x.get();
    Node* pb = b.get();
    return make_node(std::move(y), {W, x, b}, [pw, px, pb, out_dim, in_dim](Node& n) {
        if (pw->requires_grad) {
            Tensor gw = Tensor::zeros(pw->value.shape());
            for (std::size_t i = 0; i < out_dim; ++i)
                for (std::size_t j = 0; j < in_dim; ++j)
                    gw[i * in_dim + j] = n.grad[i] * px->value[j];
            accumulate(*pw, gw);
        }
        if (px->requires_grad) {
            Tensor gx = Tensor::zeros(px->value.shape());
            for (std::size_t i = 0; i < out_dim; ++i) {
                const double* wrow = pw->value.data() + i * in_dim;
                for (std::size_t j = 0; j < in_dim; ++j) gx[j] += wrow[j] * n.grad[i];
            }
            accumulate(*px, gx);
        }
        if (pb->requires_grad) accumulate(*pb, n.grad);
    });
}

namespace {

// cols is [C*k*k, H*W] row-major.
void im2col(const double* x, std::size_t C, std::size_t H, std::size_t W, std::size_t k,
            std::vector<double>& cols) {
    const std::size_t pad = k / 2;
    const std::size_t HW = H * W;
    cols.assign(C * k * k * HW, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                double* row = cols.data() + ((c * k + ky) * k + kx) * HW;
                const long dy = static_cast<long>(ky) - static_cast<long>(pad);
                const long dx = static_cast<long>(kx) - static_cast<long>(pad);
                for (long y = 0; y < static_cast<long>(H); ++y) {
                    const long sy = y + dy;
                    if (sy < 0 || sy >= static_cast<long>(H)) continue;
                    const long x0 = std::max(0l, -dx);
                    const long x1 = std::min(static_cast<long>(W), static_cast<long>(W) - dx);
                    const double* src = x + (c * H + sy) * W + (x0 + dx);
                    double* dst = row + y * W + x0;
                    for (long xx = x0; xx < x1; ++xx) *dst++ = *src++;
                }
            }
        }
    }
}

void col2im(const double* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t k,
            double* gx) {
    const std::size_t pad = k / 2;
    const std::size_t HW = H * W;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const double* row = cols + ((c * k + ky) * k + kx) * HW;
                const long dy = static_cast<long>(ky) - static_cast<long>(pad);
                const long dx = static_cast<long>(kx) - static_cast<long>(pad);
                for (long y = 0; y < static_cast<long>(H); ++y) {
                    const long sy = y + dy;
                    if (sy < 0 || sy >= static_cast<long>(H)) continue;
                    const long x0 = std::max(0l, -dx);
                    const long x1 = std::min(static_cast<long>(W), static_cast<long>(W) - dx);
                    double* dst = gx + (c * H + sy) * W + (x0 + dx);
                    const double* src = row + y * W + x0;
                    for (long xx = x0; xx < x1; ++xx) *dst++ += *src++;
                }
            }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& w) {
    require_real(x, "ad::conv2d");
    require_real(w, "ad::conv2d");
    const Shape& xs = x->value.shape();
    const Shape& ws = w->value.shape();
    if (xs.size() != 3 || ws.size() != 4)
        throw ArgumentError("conv2d: expected x [C,H,W] and w [O,C,k,k]");
    const std::size_t C = xs[0], H = xs[1], W = xs[2];
    const std::size_t O = ws[0], k = ws[2];
    if (ws[1] != C || ws[3] != k || k % 2 == 0)
        throw ArgumentError("conv2d: weight shape " + shape_str(ws) + " incompatible with input " +
                            shape_str(xs));

    const std::size_t HW = H * W;
    const std::size_t K = C * k * k;
    std::vector<double> cols;
    im2col(x->value.data(), C, H, W, k, cols);
    Tensor y = Tensor::zeros({O, H, W});
    MapRM(y.data(), O, HW) = MapRMConst(w->value.data(), O, K) * MapRMConst(cols.data(), K, HW);

    Node* px = x.get();
    Node* pw = w.get();
    return make_node(std::move(y), {x, w}, [px, pw, C, H, W, O, k](Node& n) {
        const std::size_t HW = H * W;
        const std::size_t K = C * k * k;
        MapRMConst gy(n.grad.data(), O, HW);
        if (pw->requires_grad) {
            // cols are recomputed rather than cached; im2col is cheap next to the GEMMs
            std::vector<double> cols;
            im2col(px->value.data(), C, H, W, k, cols);
            Tensor gw = Tensor::zeros(pw->value.shape());
            MapRM(gw.data(), O, K) = gy * MapRMConst(cols.data(), K, HW).transpose();
            accumulate(*pw, gw);
        }
        if (px->requires_grad) {
            std::vector<double> gcols(K * HW);
            MapRM(gcols.data(), K, HW) = MapRMConst(pw->value.data(), O, K).transpose() * gy;
            Tensor gx = Tensor::zeros(px->value.shape());
            col2im(gcols.data(), C, H, W, k, gx.data());
            accumulate(*px, gx);
        }
    });
}

Var bias_channels(const Var& x, const Var& b) {
    require_real(x, "ad::bias_channels");
    require_real(b, "ad::bias_channels");
    const Shape& xs = x->value.shape();
    if (xs.size() != 3 || b->value.shape() != Shape{xs[0]})
        throw ArgumentError("bias_channels: expected x [C,H,W], b [C]");
    const std::size_t C = xs[0], HW = xs[1] * xs[2];
    Tensor y = x->value;
    for (std::size_t c = 0; c < C; ++c) {
        const double bv = b->value[c];
        double* row = y.data() + c * HW;
        for (std::size_t i = 0; i < HW; ++i) row[i] += bv;
    }
    Node* px = x.get();
    Node* pb = b.get();
    return make_node(std::move(y), {x, b}, [px, pb, C, HW](Node& n) {
        if (px->requires_grad) accumulate(*px, n.grad);
        if (pb->requires_grad) {
            Tensor gb = Tensor::zeros({C});
            for (std::size_t c = 0; c < C; ++c) {
                const double* row = n.grad.data() + c * HW;
                double acc = 0.0;
                for (std::size_t i = 0; i < HW; ++i) acc += row[i];
                gb[c] = acc;
            }
            accumulate(*pb, gb);
        }
    });
}

Var avgpool2(const Var& x) {
    require_real(x, "ad::avgpool2");
    const Shape& xs = x->value.shape();
    if (xs.size() != 3 || xs[1] % 2 || xs[2] % 2)
        throw ArgumentError("avgpool2: expected x [C,H,W] with even H, W, got " + shape_str(xs));
    const std::size_t C = xs[0], H = xs[1], W = xs[2], Ho = H / 2, Wo = W / 2;
    Tensor y = Tensor::zeros({C, Ho, Wo});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < Ho; ++i)
            for (std::size_t j = 0; j < Wo; ++j) {
                const double* p = x->value.data() + (c * H + 2 * i) * W + 2 * j;
                y[(c * Ho + i) * Wo + j] = 0.25 * (p[0] + p[1] + p[W] + p[W + 1]);
            }
    Node* px = x.get();
    return make_node(std::move(y), {x}, [px, C, H, W, Ho, Wo](Node& n) {
        if (!px->requires_grad) return;
        Tensor gx = Tensor::zeros(px->value.shape());
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < Ho; ++i)
                for (std::size_t j = 0; j < Wo; ++j) {
                    const double g = 0.25 * n.grad[(c * Ho + i) * Wo + j];
                    double* p = gx.data() + (c * H + 2 * i) * W + 2 * j;
                    p[0] += g;
                    p[1] += g;
                    p[W] += g;
                    p[W + 1] += g;
                }
        accumulate(*px, gx);
    });
}

Var upsample2(const Var& x) {
    require_real(x, "ad::upsample2");
    const Shape& xs = x->value.shape();
    if (xs.size() != 3) throw ArgumentError("upsample2: expected x [C,H,W]");
    const std::size_t C = xs[0], H = xs[1], W = xs[2];
    Tensor y = Tensor::zeros({C, 2 * H, 2 * W});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j) {
                const double v = x->value[(c * H + i) * W + j];
                double* p = y.data() + (c * 2 * H + 2 * i) * 2 * W + 2 * j;
                p[0] = v;
                p[1] = v;
                p[2 * W] = v;
                p[2 * W + 1] = v;
            }
    Node* px = x.get();
    return make_node(std::move(y), {x}, [px, C, H, W](Node& n) {
        if (!px->requires_grad) return;
        Tensor gx = Tensor::zeros(px->value.shape());
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < H; ++i)
                for (std::size_t j = 0; j < W; ++j) {
                    const double* p = n.grad.data() + (c * 2 * H + 2 * i) * 2 * W + 2 * j;
                    gx[(c * H + i) * W + j] += p[0] + p[1] + p[2 * W] + p[2 * W + 1];
                }
        accumulate(*px, gx);
    });
}

Var linop_apply(const LinearOperator& op, const Var& x) {
    Tensor y = op.apply(x->value);
    Node* px = x.get();
    const LinearOperator* pop = &op;
    return make_node(std::move(y), {x}, [px, pop](Node& n) {
        if (px->requires_grad) accumulate(*px, pop->adjoint(n.grad));
    });
}

Var linop_adjoint(const LinearOperator& op, const Var& u) {
    Tensor y = op.adjoint(u->value);
    Node* pu = u.get();
    const LinearOperator* pop = &op;
    return make_node(std::move(y), {u}, [pu, pop](Node& n) {
        if (pu->requires_grad) accumulate(*pu, pop->apply(n.grad));
    });
}

void backward(const Var& loss) {
    if (loss->value.numel() != 1 || loss->value.is_complex())
        throw ContractError("backward: loss must be a real scalar, got " +
                            shape_str(loss->value.shape()));

    // Iterative post-order DFS over parents: parents precede children.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    struct Frame {
        Node* node;
        std::size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.get(), 0});
    seen.insert(loss.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->parents.size()) {
            Node* p = f.node->parents[f.next++].get();
            if (seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    for (Node* n : order) n->grad = Tensor();
    loss->grad = Tensor::scalar(1.0).reshaped(loss->value.shape());
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
    for (Node* n : order)
        if (n->param && !n->grad.empty()) {
            for (std::size_t i = 0; i < n->grad.raw_size(); ++i) n->param->grad[i] += n->grad[i];
        }
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double h) {
    if (h <= 0.0) throw ArgumentError("finite_difference_gradient: h must be positive");
    Tensor g = Tensor::zeros(x.shape(), x.is_complex());
    Tensor xp = x;
    for (std::size_t i = 0; i < x.raw_size(); ++i) {
        const double orig = x[i];
        xp[i] = orig + h;
        const double fp = f(xp);
        xp[i] = orig - h;
        const double fm = f(xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace dufold::ad
