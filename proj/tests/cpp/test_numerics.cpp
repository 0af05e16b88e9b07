#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dufold/autodiff.hpp"
#include "dufold/errors.hpp"
#include "dufold/linop.hpp"
#include "dufold/rng.hpp"
#include "support.hpp"

using namespace dufold;
using dufold::test::audit_rel_err;
using dufold::test::rel_err;

TEST_CASE("tensor shape and raw-buffer invariants") {
    Tensor t = Tensor::zeros({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.raw_size() == 6);
    Tensor c = Tensor::zeros({2, 3}, true);
    CHECK(c.numel() == 6);
    CHECK(c.raw_size() == 12);
    CHECK_THROWS_AS(Tensor::from_raw({2, 3}, std::vector<double>(5)), ArgumentError);
}

TEST_CASE("complex tensors expose a bijective real view") {
    Rng rng(3);
    Tensor c = rng.randn({4, 5}, true);
    Tensor r = c.real_view();
    CHECK(r.shape() == Shape{4, 5, 2});
    CHECK_FALSE(r.is_complex());
    Tensor back = r.complex_view();
    CHECK(back.shape() == c.shape());
    CHECK(test::max_abs_diff(back, c) == 0.0);
    CHECK_THROWS_AS(r.real_view(), ContractError);
    CHECK_THROWS_AS(Tensor::zeros({3}).complex_view(), ArgumentError);
}

TEST_CASE("backward of sum is all ones") {
    Rng rng(1);
    ad::Param p("p", rng.randn({3, 4}));
    ad::backward(ad::sum(ad::leaf(p)));
    for (std::size_t i = 0; i < p.grad.raw_size(); ++i) CHECK(p.grad[i] == 1.0);
}

TEST_CASE("backward of half squared norm is the point itself") {
    Rng rng(2);
    ad::Param p("p", rng.randn({7}));
    ad::backward(ad::smul(ad::sum_squares(ad::leaf(p)), 0.5));
    CHECK(test::max_abs_diff(p.grad, p.value) < 1e-15);
}

TEST_CASE("backward of ||Wv - b||^2 matches central differences") {
    Rng rng(7);
    const Tensor W = rng.randn({4, 4});
    const Tensor b = rng.randn({4});
    const Tensor v0 = rng.randn({4});
    const double err = audit_rel_err(v0, [&](const ad::Var& v) {
        ad::Var zero_bias = ad::constant(Tensor::zeros({4}));
        ad::Var r = ad::sub(ad::affine(ad::constant(W), v, zero_bias), ad::constant(b));
        return ad::sum_squares(r);
    });
    CHECK(err < 1e-6);
}

TEST_CASE("backward rejects non-scalar losses") {
    ad::Param p("p", Tensor::zeros({3}));
    CHECK_THROWS_AS(ad::backward(ad::smul(ad::leaf(p), 2.0)), ContractError);
}

TEST_CASE("repeated backward calls accumulate until grads are zeroed") {
    ad::Param p("p", Tensor::full({2}, 3.0));
    ad::Var loss = ad::sum(ad::leaf(p));
    ad::backward(loss);
    ad::backward(loss);
    CHECK(p.grad[0] == 2.0);
    p.zero_grad();
    ad::backward(loss);
    CHECK(p.grad[0] == 1.0);
}

TEST_CASE("finite differences: quadratic, sum, and symmetric form") {
    auto square = [](const Tensor& x) { return x[0] * x[0]; };
    Tensor g = ad::finite_difference_gradient(square, Tensor::full({1}, 3.0), 1e-6);
    CHECK(g[0] == doctest::Approx(6.0).epsilon(1e-6));

    auto total = [](const Tensor& x) { return x.sum(); };
    Tensor g2 = ad::finite_difference_gradient(total, Tensor::zeros({5}), 1e-6);
    for (std::size_t i = 0; i < 5; ++i) CHECK(g2[i] == doctest::Approx(1.0).epsilon(1e-8));

    Rng rng(11);
    Tensor m = rng.randn({3, 3});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < i; ++j) m[i * 3 + j] = m[j * 3 + i];
    const Tensor x0 = rng.randn({3});
    auto quad = [&](const Tensor& x) {
        double acc = 0.0;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) acc += x[i] * m[i * 3 + j] * x[j];
        return acc;
    };
    Tensor g3 = ad::finite_difference_gradient(quad, x0, 1e-6);
    Tensor want = Tensor::zeros({3});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) want[i] += 2.0 * m[i * 3 + j] * x0[j];
    CHECK(rel_err(g3, want) < 1e-6);

    CHECK_THROWS_AS(ad::finite_difference_gradient(square, Tensor::zeros({1}), 0.0), ArgumentError);
    CHECK_THROWS_AS(ad::finite_difference_gradient(square, Tensor::zeros({1}), -1e-6), ArgumentError);
}

TEST_CASE("randn moments and determinism") {
    Rng rng(42);
    Tensor big = rng.randn({1000000});
    double mean = big.sum() / 1e6;
    CHECK(std::abs(mean) < 4.0 / 1000.0);
    double var = 0.0;
    for (std::size_t i = 0; i < big.raw_size(); ++i) var += (big[i] - mean) * (big[i] - mean);
    var /= 1e6;
    CHECK(var == doctest::Approx(1.0).epsilon(0.01));

    Rng a(9), b(9);
    Tensor ta = a.randn({64}), tb = b.randn({64});
    CHECK(test::max_abs_diff(ta, tb) == 0.0);

    Rng c(5);
    Tensor scalar = c.randn({});
    CHECK(scalar.numel() == 1);
    CHECK(scalar.shape().empty());
}

TEST_CASE("rng replays bit-identically from the same seed and counter") {
    Rng a(123);
    std::vector<std::uint64_t> first;
    for (int i = 0; i < 100; ++i) first.push_back(a.next_u64());
    Rng b(123);
    for (int i = 0; i < 100; ++i) CHECK(b.next_u64() == first[i]);
    CHECK(a.counter() == 100);
}

TEST_CASE("every recorded op matches finite differences") {
    Rng rng(1234);
    const Tensor img = rng.randn({2, 8, 8});
    const Tensor other = rng.randn({2, 8, 8});

    auto check = [&](const std::string& name, const Tensor& x0,
                     const std::function<ad::Var(const ad::Var&)>& build) {
        INFO("op: " << name);
        CHECK(audit_rel_err(x0, build) < 1e-4);
    };

    check("add+mul", img, [&](const ad::Var& x) {
        return ad::sum(ad::mul(ad::add(x, ad::constant(other)), x));
    });
    check("sub/smul/neg", img, [&](const ad::Var& x) {
        return ad::sum_squares(ad::sub(ad::smul(x, 1.7), ad::neg(x)));
    });
    check("scale_by", rng.randn({5}), [&](const ad::Var& x) {
        ad::Var s = ad::smul(ad::sum(x), 0.3);
        return ad::sum_squares(ad::scale_by(x, s));
    });
    check("mean/dot", img, [&](const ad::Var& x) {
        return ad::add(ad::mean(x), ad::dot(x, ad::constant(other)));
    });
    check("silu", img, [&](const ad::Var& x) { return ad::sum(ad::silu(x)); });
    check("softplus", img, [&](const ad::Var& x) { return ad::sum(ad::softplus(x)); });
    check("exp", scaled(img, 0.1), [&](const ad::Var& x) { return ad::sum(ad::exp(x)); });
    check("reshape", img, [&](const ad::Var& x) {
        return ad::sum_squares(ad::reshape(x, Shape{8, 16}));
    });
    check("clamp", scaled(img, 2.0), [&](const ad::Var& x) {
        return ad::sum(ad::clamp(x, -1.0, 1.0));
    });
    const Tensor wmat = rng.randn({4, 6});
    const Tensor wbias = rng.randn({4});
    const Tensor win = rng.randn({6});
    check("affine-x", win, [&](const ad::Var& x) {
        return ad::sum_squares(ad::affine(ad::constant(wmat), x, ad::constant(wbias)));
    });
    check("affine-W", wmat, [&](const ad::Var& w) {
        return ad::sum_squares(ad::affine(w, ad::constant(win), ad::constant(wbias)));
    });
    const Tensor cw = rng.randn({3, 2, 3, 3});
    check("conv2d-x", img, [&](const ad::Var& x) {
        return ad::sum_squares(ad::conv2d(x, ad::constant(cw)));
    });
    check("conv2d-w", cw, [&](const ad::Var& w) {
        return ad::sum_squares(ad::conv2d(ad::constant(img), w));
    });
    const Tensor cbias = rng.randn({2});
    check("bias_channels-x", img, [&](const ad::Var& x) {
        return ad::sum_squares(ad::bias_channels(x, ad::constant(cbias)));
    });
    check("bias_channels-b", cbias, [&](const ad::Var& b) {
        return ad::sum_squares(ad::bias_channels(ad::constant(img), b));
    });
    check("avgpool2", img, [&](const ad::Var& x) { return ad::sum_squares(ad::avgpool2(x)); });
    check("upsample2", img, [&](const ad::Var& x) { return ad::sum_squares(ad::upsample2(x)); });

    Rng op_rng(77);
    LinOpPtr dense = make_dense(op_rng.randn({5, 6}));
    check("linop_apply", rng.randn({6}), [&](const ad::Var& x) {
        return ad::sum_squares(ad::linop_apply(*dense, x));
    });
    check("linop_adjoint", rng.randn({5}), [&](const ad::Var& u) {
        return ad::sum_squares(ad::linop_adjoint(*dense, u));
    });
}

TEST_CASE("no-grad mode skips recording") {
    ad::Param p("p", Tensor::full({2}, 1.0));
    ad::NoGradGuard ng;
    ad::Var loss = ad::sum(ad::leaf(p));
    CHECK_FALSE(loss->requires_grad);
    CHECK(loss->parents.empty());
}
