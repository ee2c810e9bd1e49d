import numpy as np
import pytest

from ioi_attack import kernels

BACKENDS = kernels.backends()
needs_compiled = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled kernels not built")


def test_backend_is_selected():
    assert kernels.BACKEND in BACKENDS


SHAPES = [(1, 1), (2, 3), (3, 3), (5, 8), (31, 17)]


@needs_compiled
@pytest.mark.parametrize("shape", SHAPES)
def test_stencils_are_bitwise_identical(rng, shape):
    x = rng.random(shape)
    x[0, 0] = 0.0
    cy, py = BACKENDS["cython"], BACKENDS["numpy"]
    for a, b in zip(cy.box3_stats(x), py.box3_stats(x)):
        assert np.array_equal(a, b)
    assert np.array_equal(cy.box3_relstd(x, 1e-6), py.box3_relstd(x, 1e-6))
    assert np.array_equal(cy.sobel_magnitude(x), py.sobel_magnitude(x))


@needs_compiled
def test_laplace_pair_agrees(rng):
    x = rng.random((9, 11))
    cy, py = BACKENDS["cython"], BACKENDS["numpy"]
    assert np.allclose(cy.laplace_valid(x), py.laplace_valid(x), rtol=0, atol=1e-14)
    g = rng.random((7, 9))
    assert np.allclose(cy.laplace_adjoint(g, 9, 11), py.laplace_adjoint(g, 9, 11), rtol=0, atol=1e-14)


@needs_compiled
@pytest.mark.parametrize("channels, stride", [(1, 1), (3, 1), (3, 2), (1, 2)])
def test_conv_agrees_across_backends(rng, channels, stride):
    x = rng.random((13, 10, channels))
    w = rng.normal(size=(5, channels, 3, 3))
    b = rng.normal(size=5)
    cy, py = BACKENDS["cython"], BACKENDS["numpy"]
    assert cy.conv_softplus_mean(x, w, b, stride) == pytest.approx(py.conv_softplus_mean(x, w, b, stride), rel=1e-13)
    va, ga = cy.conv_softplus_mean_grad(x, w, b, stride)
    vb, gb = py.conv_softplus_mean_grad(x, w, b, stride)
    assert va == pytest.approx(vb, rel=1e-13)
    assert np.abs(ga - gb).max() <= 1e-13 * np.abs(gb).max()


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_laplace_adjoint_is_the_transpose(rng, name):
    k = BACKENDS[name]
    x = rng.random((6, 7))
    g = rng.random((4, 5))
    assert np.sum(k.laplace_valid(x) * g) == pytest.approx(np.sum(x * k.laplace_adjoint(g, 6, 7)), rel=1e-12)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_box3_variance_is_zero_on_constants(name):
    mean, var = BACKENDS[name].box3_stats(np.full((5, 6), 0.3))
    assert not var.any()
    assert np.allclose(mean, 0.3)


def test_pure_python_switch(monkeypatch):
    import importlib
    monkeypatch.setenv("IOI_ATTACK_PURE_PYTHON", "1")
    forced = importlib.reload(kernels)
    try:
        assert forced.BACKEND == "numpy"
    finally:
        monkeypatch.delenv("IOI_ATTACK_PURE_PYTHON")
        importlib.reload(kernels)
