import numpy as np
import pytest

from flowpde.errors import ConfigurationError, SolverError
from flowpde.grids import Field, Grid, GrfConfig, grf_sample
from flowpde.pde import ADVECTIVE, CONSERVATIVE, PdeProblem, pde_error
from flowpde.solvers import (DatasetParams, conjugate_gradient, conjugate_residual,
                             dataset_pde_errors, generate_dataset, load_dataset, save_dataset,
                             solve_burgers, solve_elliptic)


def test_zero_forcing_gives_zero_solution(grid16):
    p = PdeProblem.poisson(grid16, f=Field.zeros(grid16))
    u = solve_elliptic(p, tol=1e-12)
    assert np.all(u.values == 0.0)


def test_manufactured_poisson_second_order_convergence():
    errs = []
    for n in (17, 33, 65):
        g = Grid("spatial2d", n, n)
        x, y = g.coordinates()
        exact = np.sin(np.pi * x) * np.sin(np.pi * y)
        f = Field(g, (2.0 * np.pi**2 * exact)[None])
        u = solve_elliptic(PdeProblem.poisson(g, f=f), tol=1e-12)
        errs.append(np.max(np.abs(u.values[0] - exact)))
    assert errs[0] / errs[1] >= 3.5
    assert errs[1] / errs[2] >= 3.5


def test_helmholtz_dominant_reaction_limit(grid16):
    # kappa -> inf with fixed smooth f: u -> f / kappa pointwise, since the
    # leftover |lap u| ~ |lap f| / kappa is O(pi^2 / kappa) relative to f.
    x, y = grid16.coordinates()
    f = Field(grid16, (np.sin(2 * np.pi * x) * np.sin(np.pi * y))[None])
    p = PdeProblem.helmholtz(grid16, f=f, kappa=1e4)
    u = solve_elliptic(p, tol=1e-12)
    interior = (slice(1, -1), slice(1, -1))
    err = np.max(np.abs(1e4 * u.values[0][interior] - f.values[0][interior]))
    assert err <= 1e-2 * np.max(np.abs(f.values))


def test_solver_residual_trace_is_monotone():
    for trial in range(10):
        g = Grid("spatial2d", 20, 20)
        a = Field(g, np.exp(0.5 * grf_sample(g, GrfConfig(0.1, 2.0, 1.0), seed=trial).values))
        f = grf_sample(g, GrfConfig(0.1, 2.0, 1.0), seed=100 + trial)
        p = PdeProblem.poisson(g, f=f, a=a)
        _, trace = solve_elliptic(p, tol=1e-10, record_residuals=True)
        diffs = np.diff(trace)
        assert np.all(diffs <= 1e-12 * np.asarray(trace[:-1]))


def test_sign_equivariance(grid16):
    a = Field(grid16, np.exp(0.4 * grf_sample(grid16, GrfConfig(0.1, 2.0, 1.0), seed=8).values))
    f = grf_sample(grid16, GrfConfig(0.1, 2.0, 1.0), seed=9)
    up = solve_elliptic(PdeProblem.poisson(grid16, f=f, a=a), tol=1e-12)
    fneg = Field(grid16, -f.values)
    un = solve_elliptic(PdeProblem.poisson(grid16, f=fneg, a=a), tol=1e-12)
    assert np.allclose(up.values, -un.values, atol=1e-11)


def test_nonconvergence_within_cap_raises():
    diag = np.linspace(1.0, 100.0, 40)
    with pytest.raises(SolverError):
        conjugate_gradient(lambda v: diag * v, np.ones(40), tol=1e-14, maxiter=3)
    with pytest.raises(SolverError):
        conjugate_residual(lambda v: diag * v, np.ones(40), tol=1e-14, maxiter=3)


# -- burgers -------------------------------------------------------------------


def test_burgers_constant_initial_condition():
    g = Grid("spacetime1d", 16, 8)
    p = PdeProblem.burgers(g, nu=0.01, advection=CONSERVATIVE)
    u = solve_burgers(p, np.full(8, 0.4))
    assert np.allclose(u.values, 0.4, atol=1e-14)


def test_burgers_scheme_consistency_by_construction():
    g = Grid("spacetime1d", 64, 16)
    p = PdeProblem.burgers(g, nu=0.004, advection=CONSERVATIVE)
    rng = np.random.default_rng(2)
    u0 = 0.3 * np.sin(2 * np.pi * np.arange(16) / 16) + 0.05 * rng.standard_normal(16)
    traj = solve_burgers(p, u0)
    assert np.array_equal(traj.values[0, 0], u0)
    assert pde_error(p, traj) <= 1e-10
    # the advective-form residual differs only at the O(h^2) level
    p_adv = PdeProblem.burgers(g, nu=0.004, advection=ADVECTIVE)
    assert 0.0 < pde_error(p_adv, traj) < 1e-2


def test_burgers_energy_decay_viscous_dissipation():
    g = Grid("spacetime1d", 256, 32)
    p = PdeProblem.burgers(g, nu=0.05, advection=CONSERVATIVE)
    x = np.arange(32) / 32
    traj = solve_burgers(p, np.sin(2 * np.pi * x))
    energy = (traj.values[0] ** 2).sum(axis=1)
    assert np.all(np.diff(energy) < 0.0)


def test_burgers_mass_conservation():
    g = Grid("spacetime1d", 128, 24)
    p = PdeProblem.burgers(g, nu=0.02, advection=CONSERVATIVE)
    x = np.arange(24) / 24
    traj = solve_burgers(p, 0.5 * np.sin(2 * np.pi * x) + 0.1)
    mass = traj.values[0].sum(axis=1)
    assert np.max(np.abs(mass - mass[0])) <= 1e-10


def test_burgers_stability_violation_raises():
    g = Grid("spacetime1d", 8, 32)  # ht = 1/7 far above the diffusive limit
    p = PdeProblem.burgers(g, nu=0.05)
    with pytest.raises(ConfigurationError):
        solve_burgers(p, 0.5 * np.sin(2 * np.pi * np.arange(32) / 32))


# -- datasets ------------------------------------------------------------------


@pytest.mark.parametrize("family,kind", [("poisson", "spatial2d"), ("helmholtz", "spatial2d"),
                                         ("darcy", "spatial2d"), ("burgers", "spacetime1d")])
def test_dataset_determinism_and_residuals(family, kind):
    grid = Grid(kind, 16, 16)
    params = DatasetParams(grf=GrfConfig(0.1, 2.0, 1.0), nu=0.02, ic_amplitude=0.3)
    ds1 = generate_dataset(family, 3, grid, seed=5, params=params)
    ds2 = generate_dataset(family, 3, grid, seed=5, params=params)
    for f1, f2 in zip(ds1.fields, ds2.fields):
        assert np.array_equal(f1.values, f2.values)
    assert np.all(dataset_pde_errors(ds1) <= 10 * params.tol)


def test_poisson_dataset_mean_symmetry():
    # GRF forcing is sign-symmetric, so E[u] = 0; Monte Carlo bound on the mean.
    grid = Grid("spatial2d", 16, 16)
    ds = generate_dataset("poisson", 64, grid, seed=17,
                          params=DatasetParams(grf=GrfConfig(0.1, 2.0, 1.0)))
    u = ds.stacked()[:, 1]
    mean = u.mean(axis=0)
    std = u.std(axis=0) + 1e-300
    assert np.all(np.abs(mean) <= 5.0 * std / np.sqrt(64))


def test_darcy_coefficients_are_binary():
    grid = Grid("spatial2d", 16, 16)
    params = DatasetParams(grf=GrfConfig(0.1, 2.0, 1.0), a_lo=0.4, a_hi=2.5)
    ds = generate_dataset("darcy", 2, grid, seed=1, params=params)
    a = ds.stacked()[:, 0]
    assert set(np.unique(a)) <= {0.4, 2.5}


def test_dataset_round_trip(tmp_path):
    grid = Grid("spacetime1d", 16, 16)
    params = DatasetParams(grf=GrfConfig(0.15, 2.0, 1.0), nu=0.02, ic_amplitude=0.25)
    ds = generate_dataset("burgers", 3, grid, seed=5, params=params)
    path = tmp_path / "ds.bin"
    save_dataset(path, ds)
    back = load_dataset(path)
    assert back.family == ds.family and back.count == ds.count and back.grid == ds.grid
    assert np.array_equal(back.stacked(), ds.stacked())
    assert np.allclose(back.mean, ds.mean) and np.allclose(back.std, ds.std)
    assert back.params == ds.params


def test_dataset_error_carries_pair_index():
    grid = Grid("spacetime1d", 8, 16)  # unstable time step for this nu
    with pytest.raises(SolverError, match="pair 0"):
        generate_dataset("burgers", 1, grid, seed=0,
                         params=DatasetParams(grf=GrfConfig(0.1, 2.0, 1.0), nu=0.05,
                                              ic_amplitude=0.5))
