import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowpde.grids import Field, Grid, GrfConfig
from flowpde.metrics import (SampleEnsemble, ensemble_pde_error, mean_ensemble_variance, mean_mse,
                             oracle_std, reconstruction_error, std_mse)
from flowpde.pde import PdeProblem
from flowpde.samplers import TaskSpec
from flowpde.solvers import DatasetParams, generate_dataset


def _ens(samples, truth=None, problem=None):
    return SampleEnsemble(np.asarray(samples, dtype=np.float64), truth=truth, problem=problem)


def test_reconstruction_error_examples(rng):
    truth = rng.standard_normal((1, 4, 4))
    ens = _ens(np.stack([truth, truth, truth]), truth=truth)
    assert reconstruction_error(ens) == 0.0
    off = _ens(truth[None] + 1.0, truth=truth)
    assert reconstruction_error(off) == pytest.approx(1.0)


def test_re_always_at_least_mmse(rng):
    samples = rng.standard_normal((6, 2, 5, 5))
    truth = rng.standard_normal((2, 5, 5))
    ens = _ens(samples, truth=truth)
    assert reconstruction_error(ens) >= mean_mse(ens) - 1e-15


def test_mean_mse_examples(rng):
    truth = rng.standard_normal((1, 4, 4))
    delta = rng.standard_normal((1, 4, 4))
    sym = _ens(np.stack([truth + delta, truth - delta]), truth=truth)
    assert mean_mse(sym) == pytest.approx(0.0, abs=1e-28)
    single = _ens(rng.standard_normal((1, 1, 4, 4)), truth=truth)
    assert mean_mse(single) == pytest.approx(reconstruction_error(single))


def test_hand_ensemble_arithmetic():
    # ensemble {0, 2} against truth 0 on every point: mean 1, MMSE 1, std 1
    zeros = np.zeros((1, 4, 4))
    twos = np.full((1, 4, 4), 2.0)
    ens = _ens(np.stack([zeros, twos]), truth=zeros)
    assert mean_mse(ens) == pytest.approx(1.0)
    assert reconstruction_error(ens) == pytest.approx(2.0)
    assert std_mse(ens, np.zeros((1, 4, 4))) == pytest.approx(1.0)  # population std = 1


def test_std_mse_examples(rng):
    s = rng.standard_normal((1, 4, 4))
    identical = _ens(np.stack([s, s, s]))
    assert std_mse(identical, np.zeros((1, 4, 4))) == pytest.approx(0.0)
    samples = rng.standard_normal((5, 1, 4, 4))
    ref = np.abs(rng.standard_normal((1, 4, 4)))
    base = std_mse(_ens(samples), ref)
    scaled = std_mse(_ens(3.0 * samples), 3.0 * ref)
    assert scaled == pytest.approx(9.0 * base, rel=1e-12)


def test_ensemble_pde_error_examples(grid8):
    ones = Field(grid8, np.ones((1, 8, 8)))
    p = PdeProblem.poisson(grid8, f=ones)
    zero_sample = np.zeros((1, 1, 8, 8))
    assert ensemble_pde_error(_ens(zero_sample), p) == pytest.approx(1.0)
    # adding an exact solution (here of the f=0 problem) cannot increase the metric
    p0 = PdeProblem.poisson(grid8, f=Field.zeros(grid8))
    rng = np.random.default_rng(0)
    bad = rng.standard_normal((3, 1, 8, 8))
    with_exact = np.concatenate([bad, np.zeros((1, 1, 8, 8))])
    assert ensemble_pde_error(_ens(with_exact), p0) <= ensemble_pde_error(_ens(bad), p0)


def test_exact_solution_ensemble_below_solver_tolerance(grid8):
    ds = generate_dataset("poisson", 3, grid8, seed=2,
                          params=DatasetParams(grf=GrfConfig(0.15, 2.0, 1.0)))
    ens = _ens(ds.stacked(), problem=ds.problem())
    assert ensemble_pde_error(ens) <= 10 * ds.params.tol


@settings(max_examples=25, deadline=None)
@given(e=st.integers(2, 7), seed=st.integers(0, 10_000))
def test_variance_decomposition_identity(e, seed):
    # RE = MMSE + mean ensemble variance (population convention), to 1e-12
    rng = np.random.default_rng(seed)
    samples = rng.standard_normal((e, 2, 4, 4))
    truth = rng.standard_normal((2, 4, 4))
    ens = _ens(samples, truth=truth)
    lhs = reconstruction_error(ens)
    rhs = mean_mse(ens) + mean_ensemble_variance(ens)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_metrics_invariant_under_sample_permutation(rng):
    samples = rng.standard_normal((6, 1, 5, 5))
    truth = rng.standard_normal((1, 5, 5))
    perm = rng.permutation(6)
    a = _ens(samples, truth=truth)
    b = _ens(samples[perm], truth=truth)
    assert reconstruction_error(a) == pytest.approx(reconstruction_error(b), rel=1e-14)
    assert mean_mse(a) == pytest.approx(mean_mse(b), rel=1e-14)
    ref = np.abs(rng.standard_normal((1, 5, 5)))
    assert std_mse(a, ref) == pytest.approx(std_mse(b, ref), rel=1e-14)


def test_oracle_std_zero_for_fully_determined_regimes(grid16):
    params = DatasetParams(grf=GrfConfig(0.1, 2.0, 1.0))
    std, rule = oracle_std("poisson", grid16, params, TaskSpec("forward"),
                           np.ones(grid16.shape, dtype=bool), np.zeros(256), 8, seed=0)
    assert np.all(std == 0.0)
    assert "zero" in rule


def test_oracle_std_conditional_shrinks_near_observations(grid16):
    # observing forcing points should shrink the oracle spread at those points
    params = DatasetParams(grf=GrfConfig(0.12, 2.0, 1.0), tol=1e-8)
    task = TaskSpec("joint_sparse", obs_fraction=0.3, sigma_obs=0.01)
    mask = np.zeros(grid16.shape, dtype=bool)
    mask[4:12:2, 4:12:2] = True
    rng = np.random.default_rng(5)
    y = rng.standard_normal(int(mask.sum())) * 0.05
    std, rule = oracle_std("poisson", grid16, params, task, mask, y, 24, seed=3)
    assert "conditional" in rule
    prior_std, _ = oracle_std("poisson", grid16, params,
                              TaskSpec("inverse", sigma_obs=0.01),
                              np.zeros(grid16.shape, dtype=bool), np.zeros(0), 24, seed=3)
    assert std[0][mask].mean() < 0.35 * prior_std[0][mask].mean()
