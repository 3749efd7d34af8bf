"""Backend parity: the compiled kernels must match the pure-numpy fallback."""

import numpy as np
import pytest

from flowpde import kernels


@pytest.fixture
def data(rng):
    a = rng.random((9, 11)) + 0.5
    u = rng.standard_normal((9, 11))
    r = rng.standard_normal((7, 9))
    ub = rng.standard_normal((8, 12))
    rb = rng.standard_normal((7, 12))
    w = rng.standard_normal((8, 12))
    return a, u, r, ub, rb, w


def _backends():
    return list(kernels.ALL_BACKENDS.items())


@pytest.mark.parametrize("kappa", [0.0, 0.7])
def test_elliptic_kernels_agree_across_backends(data, kappa):
    a, u, r, *_ = data
    results_apply = {}
    results_adj = {}
    results_coeff = {}
    for name, impl in _backends():
        results_apply[name] = impl.elliptic_apply(a, u, kappa, 1 / 8, 1 / 10)
        results_adj[name] = impl.elliptic_adjoint(a, r, kappa, 1 / 8, 1 / 10)
        results_coeff[name] = impl.elliptic_coeff_adjoint(u, r, 1 / 8, 1 / 10)
    ref_a, ref_j, ref_c = (results_apply["python"], results_adj["python"], results_coeff["python"])
    for name in results_apply:
        assert np.allclose(results_apply[name], ref_a, atol=1e-13)
        assert np.allclose(results_adj[name], ref_j, atol=1e-13)
        assert np.allclose(results_coeff[name], ref_c, atol=1e-13)


@pytest.mark.parametrize("conservative", [False, True])
def test_burgers_kernels_agree_across_backends(data, conservative):
    *_, ub, rb, w = data
    outs = {}
    for name, impl in _backends():
        outs[name] = (
            impl.burgers_apply(ub, 0.03, 1 / 7, 1 / 12, conservative),
            impl.burgers_adjoint(ub, rb, 0.03, 1 / 7, 1 / 12, conservative),
            impl.burgers_jvp(ub, w, 0.03, 1 / 7, 1 / 12, conservative),
        )
    for name, triple in outs.items():
        for got, ref in zip(triple, outs["python"]):
            assert np.allclose(got, ref, atol=1e-13)


def test_gelu_kernels_agree_across_backends(rng):
    x = rng.standard_normal((5, 7)) * 3.0
    g = rng.standard_normal((5, 7))
    ref_y, ref_th = kernels.ALL_BACKENDS["python"].gelu_forward(x)
    ref_b = kernels.ALL_BACKENDS["python"].gelu_backward(x, ref_th, g)
    for name, impl in _backends():
        y, th = impl.gelu_forward(x)
        assert np.allclose(y, ref_y, atol=1e-15)
        assert np.allclose(th, ref_th, atol=1e-15)
        assert np.allclose(impl.gelu_backward(x, th, g), ref_b, atol=1e-14)


def test_gelu_backward_matches_finite_differences(rng):
    x = rng.standard_normal(64)
    for name, impl in _backends():
        y0, th = impl.gelu_forward(x)
        eps = 1e-6
        fd = (impl.gelu_forward(x + eps)[0] - impl.gelu_forward(x - eps)[0]) / (2 * eps)
        got = impl.gelu_backward(x, th, np.ones_like(x))
        assert np.allclose(got, fd, atol=1e-8), name
