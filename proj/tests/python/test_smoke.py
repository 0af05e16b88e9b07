"""Smoke tests for the python bindings.

Run against an installed wheel, or against a local CMake build with
PYTHONPATH pointing at the build directory.
"""

import numpy as np
import pytest

dufold = pytest.importorskip("dufold")


def test_edm_grid_endpoints():
    sched = dufold.NoiseSchedule("edm")
    sigmas = dufold.step_grid(sched, 18)
    assert len(sigmas) == 19
    assert sigmas[0] == pytest.approx(80.0, abs=1e-12)
    assert sigmas[17] == pytest.approx(0.002, abs=1e-12)
    assert sigmas[18] == 0.0
    assert all(a > b for a, b in zip(sigmas, sigmas[1:]))


def test_preconditioner_values():
    c_skip, c_out, c_in, _ = dufold.precondition_coeffs(1.0, 0.5)
    assert c_skip == pytest.approx(0.2, abs=1e-12)
    assert c_out == pytest.approx(0.4472135954999579, abs=1e-12)
    assert c_in == pytest.approx(0.8944271909999159, abs=1e-12)
    c_skip0, c_out0, c_in0, _ = dufold.precondition_coeffs(0.0, 0.5)
    assert (c_skip0, c_out0, c_in0) == (1.0, 0.0, 2.0)


@pytest.mark.parametrize(
    "make",
    [
        lambda: dufold.make_gaussian_blur([1, 16, 16], 7, 1.5, 0.8, 0.4),
        lambda: dufold.make_superres([1, 16, 16], 2),
        lambda: dufold.make_inpainting(0.4, [1, 16, 16], seed=3),
        lambda: dufold.make_mri([16, 16], coils=3, pattern="uniform1d", accel=4.0, seed=5),
        lambda: dufold.make_identity([1, 16, 16]),
    ],
)
def test_adjoint_identity(make):
    op = make()
    rng = np.random.default_rng(0)
    x = rng.standard_normal(op.input_shape)
    u = rng.standard_normal(op.output_shape)
    if op.kind == "mri":
        u = u + 1j * rng.standard_normal(op.output_shape)
    ax = op.apply(x)
    atu = op.adjoint(u)
    lhs = np.vdot(u, ax).real
    rhs = np.vdot(atu, x).real
    denom = np.linalg.norm(ax) * np.linalg.norm(u) + 1e-30
    assert abs(lhs - rhs) / denom < 1e-10


def test_oracle_reference_values():
    mean = np.zeros(1)
    cov = np.ones((1, 1))
    A = np.ones((1, 1))
    y = np.ones(1)
    post_mean, post_cov = dufold.gaussian_posterior(mean, cov, A, 0.5, y)
    assert post_mean[0] == pytest.approx(0.8, abs=1e-12)
    assert post_cov[0, 0] == pytest.approx(0.2, abs=1e-12)

    x_t = np.full(1, 0.5)
    d = dufold.gaussian_mmse(mean, cov, A, 0.5, y, 1.0, x_t)
    assert d[0] == pytest.approx(0.75, abs=1e-12)
    s = dufold.gaussian_conditional_score(mean, cov, A, 0.5, y, 1.0, x_t)
    assert d[0] == pytest.approx(x_t[0] + s[0], abs=1e-12)
    arg = dufold.composite_argmin_quadratic(mean, cov, A, 0.5, y, 1.0, x_t)
    assert arg[0] == pytest.approx(0.75, abs=1e-10)


def test_oracle_sweep():
    res_b, res_a = dufold.oracle_sweep(100, 7)
    assert res_b < 1e-10
    assert res_a < 1e-8


def test_metrics():
    rng = np.random.default_rng(1)
    img = rng.random((1, 16, 16))
    assert dufold.psnr(img, img) == 99.0
    off = img + 0.1
    assert dufold.psnr(off, img) == pytest.approx(20.0, abs=1e-9)
    assert dufold.ssim(img, img) == pytest.approx(1.0, abs=1e-12)


def test_measure_and_fidelity_gradient():
    op = dufold.make_superres([1, 8, 8], 2)
    x = np.random.default_rng(2).random((1, 8, 8))
    meas = dufold.measure(op, x, sigma_y=0.0, seed=0)
    assert np.allclose(meas.y, op.apply(x))
    g = dufold.data_fidelity_gradient(op, x, meas)
    assert np.allclose(g, 0.0, atol=1e-14)


def test_untrained_model_sampling_runs():
    model = dufold.Model("denoiser.channels = 4\ndenoiser.k = 2\nsampler.nfe = 4\n")
    op = dufold.make_inpainting(0.3, [1, 16, 16], seed=9)
    clean = dufold.gen_synthetic("shapes", 1, 16, seed=4)[0]
    meas = dufold.measure(op, clean, sigma_y=0.05, seed=1)
    x0 = model.sample(meas, seed=11)
    assert x0.shape == (1, 16, 16)
    assert np.isfinite(x0).all()
    # determinism
    x1 = model.sample(meas, seed=11)
    assert np.array_equal(x0, x1)


def test_synthetic_and_png_roundtrip(tmp_path):
    imgs = dufold.gen_synthetic("shapes", 2, 16, seed=7)
    assert imgs[0].min() >= 0.0 and imgs[0].max() <= 1.0
    path = str(tmp_path / "img.png")
    dufold.save_png(path, imgs[0])
    back = dufold.load_png(path)
    assert back.shape == imgs[0].shape
    assert np.abs(back - imgs[0]).max() <= 1 / 255 + 1e-12


def test_config_fingerprint_strictness():
    fp1 = dufold.config_fingerprint("sampler.nfe = 24")
    fp2 = dufold.config_fingerprint("sampler.nfe = 24  # comment")
    fp3 = dufold.config_fingerprint("")
    assert fp1 == fp2
    assert fp1 != fp3
    with pytest.raises(ValueError):
        dufold.config_fingerprint("unknown.key = 1")
