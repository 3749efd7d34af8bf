"""Ground-truth forward solvers and dataset generation.

Elliptic problems are solved by matrix-free conjugate gradients on the
interior unknowns (the flux stencil with a > 0 is symmetric positive
definite, as is the Helmholtz operator with kappa > 0); the zero-Dirichlet
boundary is enforced by construction.  Burgers trajectories are produced by
explicit time stepping with the same spatial stencils as the residual
operator, using the conservative advection form D_x(u^2/2), so stored
trajectories satisfy the conservative-form discrete equation to rounding.

Datasets stack channels per family: (f, u) for poisson/helmholtz, (a, u) for
darcy, and a single space-time channel for burgers.  Per-pair randomness is
drawn from ``Philox(SeedSequence(seed, spawn_key=(index,)))``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import kernels
from .errors import ConfigurationError, SolverError
from .grids import SPACETIME1D, SPATIAL2D, Field, Grid, GrfConfig, grf_draw, grf_draw_1d, make_rng
from .pde import BURGERS, CONSERVATIVE, DARCY, ELLIPTIC, HELMHOLTZ, POISSON, PdeProblem, pde_error

_DATASET_MAGIC = b"FPDS"
_DATASET_VERSION = 1


def conjugate_gradient(apply_op, b, tol=1e-10, maxiter=None, record_residuals=False):
    """Matrix-free CG for SPD systems; stops at ||A x - b|| <= tol * ||b||.

    Returns (x, iterations, residual_trace).  Raises SolverError when the
    iteration cap is hit before convergence.
    """
    b = np.asarray(b, dtype=np.float64)
    if maxiter is None:
        maxiter = 10 * b.size
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = float(np.linalg.norm(b))
    trace = []
    if bnorm == 0.0:
        return x, 0, trace
    p = r.copy()
    rs = float(np.dot(r.ravel(), r.ravel()))
    if record_residuals:
        trace.append(np.sqrt(rs))
    for it in range(1, maxiter + 1):
        ap = apply_op(p)
        alpha = rs / float(np.dot(p.ravel(), ap.ravel()))
        x += alpha * p
        r -= alpha * ap
        rs_new = float(np.dot(r.ravel(), r.ravel()))
        if record_residuals:
            trace.append(np.sqrt(rs_new))
        if np.sqrt(rs_new) <= tol * bnorm:
            return x, it, trace
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise SolverError(f"CG did not converge within {maxiter} iterations "
                      f"(relative residual {np.sqrt(rs) / bnorm:.3e})")


def conjugate_residual(apply_op, b, tol=1e-10, maxiter=None, record_residuals=False):
    """Conjugate-residual Krylov iteration for SPD systems.

    Same interface as :func:`conjugate_gradient`; minimizes the residual
    2-norm over the Krylov space at every step, so the recorded residual
    norms are non-increasing by construction (plain CG minimizes the A-norm
    of the error and its 2-norm residuals can transiently grow).
    """
    b = np.asarray(b, dtype=np.float64)
    if maxiter is None:
        maxiter = 10 * b.size
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = float(np.linalg.norm(b))
    trace = []
    if bnorm == 0.0:
        return x, 0, trace
    if record_residuals:
        trace.append(bnorm)
    p = r.copy()
    ar = apply_op(r)
    ap = ar.copy()
    rar = float(np.dot(r.ravel(), ar.ravel()))
    for it in range(1, maxiter + 1):
        denom = float(np.dot(ap.ravel(), ap.ravel()))
        alpha = rar / denom
        x += alpha * p
        r -= alpha * ap
        rnorm = float(np.linalg.norm(r))
        if record_residuals:
            trace.append(rnorm)
        if rnorm <= tol * bnorm:
            return x, it, trace
        ar = apply_op(r)
        rar_new = float(np.dot(r.ravel(), ar.ravel()))
        beta = rar_new / rar
        p = r + beta * p
        ap = ar + beta * ap
        rar = rar_new
    raise SolverError(f"CR did not converge within {maxiter} iterations "
                      f"(relative residual {rnorm / bnorm:.3e})")


def solve_elliptic(p: PdeProblem, tol: float = 1e-10, record_residuals=False):
    """Solve the elliptic problem to ||A u - f|| / ||f|| <= tol.

    The SPD interior system is solved by the conjugate-residual iteration (a
    residual-minimizing sibling of CG; see :func:`conjugate_residual`), so
    reported residual norms decrease monotonically.  Returns the solution
    Field (zero boundary); with record_residuals=True returns
    (Field, residual_trace) instead.
    """
    if p.family not in ELLIPTIC:
        raise ConfigurationError(f"solve_elliptic does not handle family {p.family!r}")
    if tol <= 0:
        raise ConfigurationError("tolerance must be positive")
    a = p.coefficient_array()
    f = p.forcing_array()[1:-1, 1:-1]
    h0, h1 = p.grid.spacing
    n0, n1 = p.grid.shape
    full = np.zeros((n0, n1))

    def apply_interior(v):
        full[1:-1, 1:-1] = v
        return kernels.elliptic_apply(a, full, p.kappa, h0, h1)

    u_int, _its, trace = conjugate_residual(
        apply_interior, f, tol=tol, maxiter=10 * n0 * n1, record_residuals=record_residuals
    )
    u = np.zeros((n0, n1))
    u[1:-1, 1:-1] = u_int
    fld = Field(p.grid, u[None])
    if record_residuals:
        return fld, trace
    return fld


def burgers_stability_limit(nu: float, hx: float, umax: float) -> float:
    """Largest stable explicit time step min(hx^2/(2 nu), hx/umax)."""
    dt_diff = hx * hx / (2.0 * nu)
    dt_adv = hx / umax if umax > 0 else np.inf
    return min(dt_diff, dt_adv)


def solve_burgers(p: PdeProblem, u0, safety: float = 0.9) -> Field:
    """Explicit space-time trajectory from the initial condition `u0`.

    Steps in conservative form u_{k+1} = u_k - ht*D_x(u_k^2/2) + ht*nu*D_xx u_k,
    so the first row equals `u0` and the stored trajectory has zero
    conservative-form residual by construction.  Raises ConfigurationError
    before stepping when ht exceeds the stability bound scaled by `safety`.
    """
    if p.family != BURGERS:
        raise ConfigurationError("solve_burgers requires a burgers problem")
    u0 = np.asarray(u0, dtype=np.float64).reshape(-1)
    nt, nx = p.grid.shape
    if u0.size != nx:
        raise ConfigurationError(f"initial condition has {u0.size} points, grid has nx={nx}")
    ht, hx = p.grid.spacing
    limit = burgers_stability_limit(p.nu, hx, float(np.max(np.abs(u0))))
    if ht > safety * limit:
        raise ConfigurationError(
            f"time step {ht:.3e} violates stability bound {safety * limit:.3e} "
            f"(nu={p.nu}, hx={hx:.3e}, max|u0|={np.max(np.abs(u0)):.3e})"
        )
    u = np.empty((nt, nx))
    u[0] = u0
    inv_hx2 = 1.0 / (hx * hx)
    for k in range(nt - 1):
        uk = u[k]
        up = np.roll(uk, -1)
        um = np.roll(uk, 1)
        adv = (up * up - um * um) / (4.0 * hx)
        u[k + 1] = uk + ht * (p.nu * (up - 2.0 * uk + um) * inv_hx2 - adv)
        if not np.all(np.isfinite(u[k + 1])):
            raise SolverError(f"burgers stepping produced non-finite values at level {k + 1}")
    return Field(p.grid, u[None])


@dataclass(frozen=True)
class DatasetParams:
    """Family-specific knobs for dataset generation."""

    grf: GrfConfig = dc_field(default_factory=GrfConfig)
    kappa: float = 1.0
    nu: float = 0.005
    a_lo: float = 0.3
    a_hi: float = 3.0
    ic_amplitude: float = 0.3
    tol: float = 1e-10


@dataclass
class Dataset:
    """Paired fields plus per-channel standardization statistics."""

    family: str
    grid: Grid
    fields: list
    seed: int
    params: DatasetParams
    mean: np.ndarray = None
    std: np.ndarray = None

    def __post_init__(self):
        if len(self.fields) < 1:
            raise ConfigurationError("dataset must contain at least one pair")
        if self.mean is None or self.std is None:
            stacked = self.stacked()
            self.mean = stacked.mean(axis=(0, 2, 3))
            std = stacked.std(axis=(0, 2, 3))
            self.std = np.where(std > 1e-12, std, 1.0)

    @property
    def count(self) -> int:
        return len(self.fields)

    @property
    def channels(self) -> int:
        return self.fields[0].channels

    def stacked(self) -> np.ndarray:
        return np.stack([f.values for f in self.fields])

    def normalized(self) -> np.ndarray:
        m = self.mean.reshape(1, -1, 1, 1)
        s = self.std.reshape(1, -1, 1, 1)
        return (self.stacked() - m) / s

    def problem(self) -> PdeProblem:
        """Family problem with dataset-level coefficients (pair channel 0 supplies the rest)."""
        return make_problem(self.family, self.grid, self.params)


def make_problem(family: str, grid: Grid, params: DatasetParams,
                 coefficient: Field | None = None, forcing: Field | None = None) -> PdeProblem:
    if family == POISSON:
        f = forcing if forcing is not None else Field.zeros(grid)
        return PdeProblem.poisson(grid, f=f)
    if family == HELMHOLTZ:
        f = forcing if forcing is not None else Field.zeros(grid)
        return PdeProblem.helmholtz(grid, f=f, kappa=params.kappa)
    if family == DARCY:
        a = coefficient if coefficient is not None else Field(grid, np.full((1,) + grid.shape, params.a_lo))
        return PdeProblem.darcy(grid, a=a)
    if family == BURGERS:
        return PdeProblem.burgers(grid, nu=params.nu, advection=CONSERVATIVE)
    raise ConfigurationError(f"unknown family {family!r}")


def threshold_coefficient(g: np.ndarray, a_lo: float, a_hi: float) -> np.ndarray:
    """Binary permeability a_lo + (a_hi - a_lo) * 1[g > 0]."""
    return a_lo + (a_hi - a_lo) * (g > 0.0)


def generate_pair(family: str, grid: Grid, params: DatasetParams, rng) -> Field:
    """One (input, solution) pair; see module docstring for channel layout."""
    if family in (POISSON, HELMHOLTZ):
        f = Field(grid, grf_draw(grid, params.grf, rng))
        p = make_problem(family, grid, params, forcing=f)
        u = solve_elliptic(p, tol=params.tol)
        return Field(grid, np.concatenate([f.values, u.values]))
    if family == DARCY:
        g = grf_draw(grid, params.grf, rng)[0]
        a = Field(grid, threshold_coefficient(g, params.a_lo, params.a_hi)[None])
        p = make_problem(family, grid, params, coefficient=a)
        u = solve_elliptic(p, tol=params.tol)
        return Field(grid, np.concatenate([a.values, u.values]))
    if family == BURGERS:
        ic_cfg = GrfConfig(params.grf.length_scale, params.grf.power, params.ic_amplitude)
        u0 = grf_draw_1d(grid.n1, ic_cfg, rng)
        p = make_problem(family, grid, params)
        return solve_burgers(p, u0)
    raise ConfigurationError(f"unknown family {family!r}")


def generate_dataset(family: str, count: int, grid: Grid, seed: int,
                     params: DatasetParams | None = None) -> Dataset:
    """Deterministically generate `count` solved pairs for `family`."""
    if count < 1:
        raise ConfigurationError("dataset count must be >= 1")
    if params is None:
        params = DatasetParams()
    if family == BURGERS and grid.kind != SPACETIME1D:
        raise ConfigurationError("burgers datasets require a spacetime1d grid")
    if family in ELLIPTIC and grid.kind != SPATIAL2D:
        raise ConfigurationError(f"{family} datasets require a spatial2d grid")
    fields = []
    for i in range(count):
        rng = make_rng(seed, i)
        try:
            fields.append(generate_pair(family, grid, params, rng))
        except (SolverError, ConfigurationError) as exc:
            raise SolverError(f"pair {i}: {exc}") from exc
    return Dataset(family, grid, fields, seed, params)


def dataset_pde_errors(ds: Dataset) -> np.ndarray:
    """Per-pair mean squared residual, evaluated with the matching stencils."""
    p = ds.problem()
    return np.array([pde_error(p, f) for f in ds.fields])


def save_dataset(path, ds: Dataset) -> None:
    meta = {
        "family": ds.family,
        "kind": ds.grid.kind,
        "n0": ds.grid.n0,
        "n1": ds.grid.n1,
        "count": ds.count,
        "channels": ds.channels,
        "seed": ds.seed,
        "mean": [float(v) for v in ds.mean],
        "std": [float(v) for v in ds.std],
        "params": {
            "grf": {
                "length_scale": ds.params.grf.length_scale,
                "power": ds.params.grf.power,
                "amplitude": ds.params.grf.amplitude,
            },
            "kappa": ds.params.kappa,
            "nu": ds.params.nu,
            "a_lo": ds.params.a_lo,
            "a_hi": ds.params.a_hi,
            "ic_amplitude": ds.params.ic_amplitude,
            "tol": ds.params.tol,
        },
    }
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", _DATASET_MAGIC, _DATASET_VERSION, len(blob)))
        fh.write(blob)
        fh.write(ds.stacked().astype("<f8").tobytes(order="C"))


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        magic, version, meta_len = struct.unpack("<4sII", fh.read(12))
        if magic != _DATASET_MAGIC:
            raise ConfigurationError(f"{path}: not a dataset file")
        if version != _DATASET_VERSION:
            raise ConfigurationError(f"{path}: unsupported dataset version {version}")
        meta = json.loads(fh.read(meta_len).decode())
        grid = Grid(meta["kind"], meta["n0"], meta["n1"])
        shape = (meta["count"], meta["channels"], meta["n0"], meta["n1"])
        data = np.frombuffer(fh.read(8 * int(np.prod(shape))), dtype="<f8").reshape(shape)
    pm = meta["params"]
    params = DatasetParams(
        grf=GrfConfig(pm["grf"]["length_scale"], pm["grf"]["power"], pm["grf"]["amplitude"]),
        kappa=pm["kappa"], nu=pm["nu"], a_lo=pm["a_lo"], a_hi=pm["a_hi"],
        ic_amplitude=pm["ic_amplitude"], tol=pm["tol"],
    )
    fields = [Field(grid, data[i].astype(np.float64)) for i in range(meta["count"])]
    return Dataset(meta["family"], grid, fields, meta["seed"], params,
                   mean=np.array(meta["mean"]), std=np.array(meta["std"]))
