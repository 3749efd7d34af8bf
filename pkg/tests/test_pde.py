import numpy as np
import pytest

from helpers import central_fd, rel_err

from flowpde.errors import ConfigurationError
from flowpde.grids import Field, Grid, GrfConfig, grf_sample
from flowpde.pde import (ADVECTIVE, CONSERVATIVE, NormalizedResidual, PdeProblem, pde_error,
                         residual, residual_jvp, residual_sq_grad, residual_vjp)


def _random_poisson(n=8, seed=0):
    g = Grid("spatial2d", n, n)
    rng = np.random.default_rng(seed)
    a = Field(g, rng.random((1, n, n)) + 0.5)
    f = Field(g, rng.standard_normal((1, n, n)))
    return PdeProblem.poisson(g, f=f, a=a), g, rng


def test_poisson_zero_case(grid8):
    p = PdeProblem.poisson(grid8, f=Field.zeros(grid8))
    assert np.all(residual(p, Field.zeros(grid8)).values == 0.0)


def test_helmholtz_manufactured_truncation_order():
    # Oracle: R(u_exact) is pure truncation error, O(h^2) for the 5-point stencil.
    norms = []
    for n in (17, 33, 65):
        g = Grid("spatial2d", n, n)
        x, y = g.coordinates()
        u = np.sin(np.pi * x) * np.sin(np.pi * y)
        f = (2.0 * np.pi**2 + 1.0) * u
        p = PdeProblem.helmholtz(g, f=Field(g, f[None]), kappa=1.0)
        norms.append(np.max(np.abs(residual(p, Field(g, u[None])).values)))
    assert norms[0] / norms[1] >= 3.5
    assert norms[1] / norms[2] >= 3.5


def test_variable_coefficient_truncation_order():
    # Manufactured -div(a grad u) = f with smooth a; forcing computed analytically.
    norms = []
    for n in (17, 33, 65):
        g = Grid("spatial2d", n, n)
        x, y = g.coordinates()
        u = np.sin(np.pi * x) * np.sin(np.pi * y)
        ux = np.pi * np.cos(np.pi * x) * np.sin(np.pi * y)
        uy = np.pi * np.sin(np.pi * x) * np.cos(np.pi * y)
        lap = -2.0 * np.pi**2 * u
        a = 1.0 + 0.5 * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
        ax = np.pi * np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y)
        ay = -np.pi * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
        f = -(ax * ux + ay * uy + a * lap)
        p = PdeProblem.poisson(g, f=Field(g, f[None]), a=Field(g, a[None]))
        norms.append(np.max(np.abs(residual(p, Field(g, u[None])).values)))
    assert norms[0] / norms[1] >= 3.48  # empirical rate >= O(h^1.8)
    assert norms[1] / norms[2] >= 3.48


def test_burgers_constant_field_annihilated():
    g = Grid("spacetime1d", 8, 8)
    for form in (ADVECTIVE, CONSERVATIVE):
        p = PdeProblem.burgers(g, nu=0.1, advection=form)
        u = Field(g, np.full((1, 8, 8), 2.5))
        assert np.allclose(residual(p, u).values, 0.0, atol=1e-12)


def test_family_grid_mismatch_raises(grid8):
    with pytest.raises(ConfigurationError):
        PdeProblem.burgers(grid8, nu=0.1)
    with pytest.raises(ConfigurationError):
        PdeProblem.poisson(Grid("spacetime1d", 8, 8), f=None)


def test_coefficient_positivity_enforced(grid8):
    bad = Field(grid8, np.zeros((1, 8, 8)))
    with pytest.raises(ConfigurationError):
        PdeProblem.poisson(grid8, f=Field.zeros(grid8), a=bad)


# -- gradients ----------------------------------------------------------------


def test_residual_sq_grad_zero_at_exact_solution(grid8):
    # u == 0 with f == 0 is the exact discrete solution.
    p = PdeProblem.poisson(grid8, f=Field.zeros(grid8))
    g = residual_sq_grad(p, Field.zeros(grid8))
    assert np.all(g == 0.0)


def test_poisson_sq_grad_matches_finite_differences():
    p, g, rng = _random_poisson(8, seed=3)
    u = rng.standard_normal((8, 8))
    grad = residual_sq_grad(p, u[None])[0]
    fd = central_fd(lambda v: np.sum(residual(p, v[None]).values ** 2), u)
    assert rel_err(grad, fd) < 1e-6


def test_helmholtz_sq_grad_matches_finite_differences(grid8, rng):
    f = Field(grid8, rng.standard_normal((1, 8, 8)))
    p = PdeProblem.helmholtz(grid8, f=f, kappa=2.0)
    u = rng.standard_normal((8, 8))
    grad = residual_sq_grad(p, u[None])[0]
    fd = central_fd(lambda v: np.sum(residual(p, v[None]).values ** 2), u)
    assert rel_err(grad, fd) < 1e-6


@pytest.mark.parametrize("form", [ADVECTIVE, CONSERVATIVE])
def test_burgers_sq_grad_matches_finite_differences(form, rng):
    g = Grid("spacetime1d", 8, 8)
    p = PdeProblem.burgers(g, nu=0.07, advection=form)
    u = rng.standard_normal((8, 8))
    grad = residual_sq_grad(p, u[None])[0]
    fd = central_fd(lambda v: np.sum(residual(p, v[None]).values ** 2), u)
    assert rel_err(grad, fd) < 1e-5


def test_stacked_gradients_match_finite_differences(rng):
    # Two-channel operands: gradient flows into both the input channel and u.
    g = Grid("spatial2d", 8, 8)
    fz = Field.zeros(g)
    cases = [
        PdeProblem.poisson(g, f=fz),
        PdeProblem.helmholtz(g, f=fz, kappa=1.5),
        PdeProblem.darcy(g, a=Field(g, np.ones((1, 8, 8)))),
    ]
    for p in cases:
        stack = rng.standard_normal((2, 8, 8))
        if p.family == "darcy":
            stack[0] = np.abs(stack[0]) + 0.5  # keep the sampled coefficient positive
        grad = residual_sq_grad(p, stack)
        fd = central_fd(lambda v: np.sum(residual(p, v).values ** 2), stack)
        assert rel_err(grad, fd) < 1e-6, p.family


def test_jvp_matches_vjp_adjoint_identity(rng):
    g = Grid("spacetime1d", 8, 10)
    p = PdeProblem.burgers(g, nu=0.05)
    u = rng.standard_normal((1, 8, 10))
    w = rng.standard_normal((1, 8, 10))
    r = rng.standard_normal((7, 10))
    lhs = np.sum(residual_jvp(p, u, w) * r)
    rhs = np.sum(w * residual_vjp(p, u, r))
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


# -- pde_error ----------------------------------------------------------------


def test_pde_error_examples(grid8):
    ones = Field(grid8, np.ones((1, 8, 8)))
    p = PdeProblem.poisson(grid8, f=ones)
    assert pde_error(p, Field.zeros(grid8)) == pytest.approx(1.0)  # R = -1 on the interior
    # quadratic homogeneity: with f == 0, doubling u doubles R pointwise
    p0 = PdeProblem.poisson(grid8, f=Field.zeros(grid8))
    rng = np.random.default_rng(0)
    u = rng.standard_normal((1, 8, 8))
    assert pde_error(p0, 2.0 * u) == pytest.approx(4.0 * pde_error(p0, u))


# -- structural invariants ------------------------------------------------------


def test_elliptic_affine_decomposition(rng):
    # R(alpha u + beta v) = alpha A(u) + beta A(v) - f  with A(u) = R(u) + f.
    p, g, _ = _random_poisson(8, seed=9)
    u = rng.standard_normal((1, 8, 8))
    v = rng.standard_normal((1, 8, 8))
    f_int = p.f.values[0][1:-1, 1:-1]
    alpha, beta = 1.7, -0.4
    lhs = residual(p, alpha * u + beta * v).values
    au = residual(p, u).values + f_int
    av = residual(p, v).values + f_int
    assert np.allclose(lhs, alpha * au + beta * av - f_int, atol=1e-11)


def test_elliptic_adjoint_consistency(rng):
    p, g, _ = _random_poisson(10, seed=4)
    u = rng.standard_normal((1, 10, 10))
    w = rng.standard_normal((8, 8))
    au = residual(p, u).values + p.f.values[0][1:-1, 1:-1]
    atw = residual_vjp(p, u, w)[0]
    lhs = np.sum(au * w)
    rhs = np.sum(u[0] * atw)
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


def test_normalized_residual_chain_rule(rng):
    g = Grid("spatial2d", 8, 8)
    p = PdeProblem.poisson(g, f=Field.zeros(g))
    nr = NormalizedResidual(p, mean=[0.3, -0.1], std=[2.0, 0.5])
    z = rng.standard_normal((2, 8, 8))
    grad = nr.sq_grad(z)
    fd = central_fd(lambda v: float(np.sum(nr.value(v) ** 2)), z)
    assert rel_err(grad, fd) < 1e-6
    # jvp/vjp adjoint identity through the normalization
    w = rng.standard_normal((2, 8, 8))
    r = rng.standard_normal((6, 6))
    assert abs(np.sum(nr.jvp(z, w) * r) - np.sum(w * nr.vjp(z, r))) < 1e-12
