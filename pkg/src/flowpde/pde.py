"""Discrete PDE residual operators, their adjoints, and the PDE-error metric.

Residual conventions:

* poisson / darcy:  R(u) = -div(a grad u) - f on interior points, 5-point
  variable-coefficient flux stencil with face-averaged a.
* helmholtz:        R(u) = -lap(u) + kappa*u - f on interior points.
* burgers:          R(u) = D_t u + u * D_x u - nu * D_xx u on time levels
  0..nt-2 (forward difference in time, centered periodic differences in
  space).  A conservative advection variant D_x(u^2/2) is available; the
  forward solver steps in conservative form, so trajectories are residual-free
  under that variant, while the default advective form matches the governing
  equation literally and differs by O(h^2).

Boundary values are read as part of the operand: elliptic residual rows near
the boundary see whatever values the field carries there, so fields violating
the zero-Dirichlet convention show up through their neighboring rows.

Two-channel fields (coefficient-or-forcing stacked with the solution) are
supported by deriving the instance data from channel 0: poisson/helmholtz
read the forcing there, darcy reads the permeability.  That makes residuals
and gradients well defined for jointly generated samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import kernels
from .errors import ConfigurationError, ShapeError
from .grids import SPACETIME1D, SPATIAL2D, Field, Grid

POISSON = "poisson"
HELMHOLTZ = "helmholtz"
DARCY = "darcy"
BURGERS = "burgers"
ELLIPTIC = (POISSON, HELMHOLTZ, DARCY)
FAMILIES = ELLIPTIC + (BURGERS,)

ADVECTIVE = "advective"
CONSERVATIVE = "conservative"


@dataclass
class PdeProblem:
    """Tagged union of the four PDE families.

    ``a`` (diffusivity/permeability) applies to poisson and darcy, ``f``
    (forcing) to the elliptic families, ``kappa`` to helmholtz, ``nu`` and
    ``advection`` to burgers.  Elliptic problems use the zero-Dirichlet
    convention, burgers is periodic in space.
    """

    family: str
    grid: Grid
    a: Field | None = None
    f: Field | None = None
    kappa: float = 0.0
    nu: float = 0.0
    advection: str = ADVECTIVE

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown PDE family {self.family!r}")
        if self.family in ELLIPTIC:
            if self.grid.kind != SPATIAL2D:
                raise ConfigurationError(f"{self.family} requires a spatial2d grid")
            if self.family == HELMHOLTZ:
                if self.kappa <= 0:
                    raise ConfigurationError("helmholtz requires kappa > 0")
                if self.a is not None:
                    raise ConfigurationError("helmholtz has unit diffusivity; a must be None")
            if self.a is not None:
                self._check_field(self.a, "a")
                if np.any(self.a.values <= 0):
                    raise ConfigurationError("coefficient a must be strictly positive")
            if self.f is not None:
                self._check_field(self.f, "f")
        else:
            if self.grid.kind != SPACETIME1D:
                raise ConfigurationError("burgers requires a spacetime1d grid")
            if self.nu <= 0:
                raise ConfigurationError("burgers requires nu > 0")
            if self.advection not in (ADVECTIVE, CONSERVATIVE):
                raise ConfigurationError(f"unknown advection form {self.advection!r}")

    def _check_field(self, fld: Field, name: str):
        if fld.grid != self.grid or fld.channels != 1:
            raise ConfigurationError(f"{name} must be a single-channel field on the problem grid")

    @property
    def boundary(self) -> str:
        return "periodic_in_space" if self.family == BURGERS else "dirichlet_zero"

    # -- convenience constructors ------------------------------------------

    @staticmethod
    def poisson(grid: Grid, f: Field, a: Field | None = None) -> "PdeProblem":
        if a is None:
            a = Field(grid, np.ones((1,) + grid.shape))
        return PdeProblem(POISSON, grid, a=a, f=f)

    @staticmethod
    def helmholtz(grid: Grid, f: Field, kappa: float) -> "PdeProblem":
        return PdeProblem(HELMHOLTZ, grid, f=f, kappa=kappa)

    @staticmethod
    def darcy(grid: Grid, a: Field, f: Field | None = None) -> "PdeProblem":
        if f is None:
            f = Field(grid, np.ones((1,) + grid.shape))
        return PdeProblem(DARCY, grid, a=a, f=f)

    @staticmethod
    def burgers(grid: Grid, nu: float, advection: str = ADVECTIVE) -> "PdeProblem":
        return PdeProblem(BURGERS, grid, nu=nu, advection=advection)

    def coefficient_array(self) -> np.ndarray:
        """Dense diffusivity (ones when a is unset / helmholtz)."""
        if self.a is not None:
            return self.a.values[0]
        return np.ones(self.grid.shape)

    def forcing_array(self) -> np.ndarray:
        if self.f is not None:
            return self.f.values[0]
        return np.zeros(self.grid.shape)


@dataclass
class Residual:
    """Residual values on the stencil support of the owning problem."""

    problem: PdeProblem
    values: np.ndarray = dc_field(repr=False)

    def norm_sq(self) -> float:
        return float(np.sum(self.values**2))

    def mean_sq(self) -> float:
        return float(np.mean(self.values**2))


def _split_stack(p: PdeProblem, values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """(a, u, f, kappa) arrays for a 1- or 2-channel operand."""
    if values.ndim == 2:
        values = values[None]
    chans = values.shape[0]
    if p.family == BURGERS:
        if chans != 1:
            raise ConfigurationError("burgers residual expects a single-channel field")
        return np.empty(0), values[0], np.empty(0), 0.0
    if chans == 1:
        return p.coefficient_array(), values[0], p.forcing_array(), p.kappa
    if chans == 2:
        if p.family == DARCY:
            return values[0], values[1], p.forcing_array(), 0.0
        return p.coefficient_array(), values[1], values[0], p.kappa
    raise ConfigurationError(f"residual expects 1 or 2 channels, got {chans}")


def _as_values(p: PdeProblem, u) -> np.ndarray:
    if isinstance(u, Field):
        if u.grid != p.grid:
            raise ConfigurationError("field grid does not match problem grid")
        return u.values
    v = np.asarray(u, dtype=np.float64)
    if v.shape[-2:] != p.grid.shape:
        raise ShapeError(f"operand shape {v.shape} does not match grid {p.grid.shape}")
    return v


def residual(p: PdeProblem, u) -> Residual:
    """Discrete residual of `u` (Field or array, 1 or 2 channels)."""
    values = _as_values(p, u)
    a, uu, f, kappa = _split_stack(p, values)
    h0, h1 = p.grid.spacing
    if p.family == BURGERS:
        r = kernels.burgers_apply(uu, p.nu, h0, h1, p.advection == CONSERVATIVE)
    else:
        r = kernels.elliptic_apply(a, uu, kappa, h0, h1) - f[1:-1, 1:-1]
    return Residual(p, r)


def residual_sq_grad(p: PdeProblem, u) -> np.ndarray:
    """Gradient of sum(R(u)^2) with respect to u, same shape as u's values."""
    values = _as_values(p, u)
    squeeze = values.ndim == 2
    if squeeze:
        values = values[None]
    r = residual(p, values).values
    g = 2.0 * residual_vjp(p, values, r)
    return g[0] if squeeze else g


def residual_vjp(p: PdeProblem, values: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Adjoint of the residual linearization at `values`, applied to `r`."""
    a, uu, _f, kappa = _split_stack(p, values)
    h0, h1 = p.grid.spacing
    if values.ndim == 2:
        values = values[None]
    chans = values.shape[0]
    if p.family == BURGERS:
        gu = kernels.burgers_adjoint(uu, r, p.nu, h0, h1, p.advection == CONSERVATIVE)
        return gu[None]
    gu = kernels.elliptic_adjoint(a, r, kappa, h0, h1)
    if chans == 1:
        return gu[None]
    if p.family == DARCY:
        ga = kernels.elliptic_coeff_adjoint(uu, r, h0, h1)
    else:
        ga = np.zeros(p.grid.shape)
        ga[1:-1, 1:-1] = -r  # dR/df = -I on the interior
    return np.stack([ga, gu])


def residual_jvp(p: PdeProblem, values: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Directional derivative of the residual at `values` along `w`."""
    a, uu, _f, kappa = _split_stack(p, values)
    h0, h1 = p.grid.spacing
    if w.ndim == 2:
        w = w[None]
    if p.family == BURGERS:
        return kernels.burgers_jvp(uu, w[0], p.nu, h0, h1, p.advection == CONSERVATIVE)
    if w.shape[0] == 1:
        return kernels.elliptic_apply(a, w[0], kappa, h0, h1)
    dr = kernels.elliptic_apply(a, w[1], kappa, h0, h1)
    if p.family == DARCY:
        dr = dr + kernels.elliptic_apply(w[0], uu, 0.0, h0, h1)
    else:
        dr = dr - w[0][1:-1, 1:-1]
    return dr


def pde_error(p: PdeProblem, u) -> float:
    """Mean squared residual over the stencil support."""
    return residual(p, u).mean_sq()


class NormalizedResidual:
    """Residual operator acting on per-channel standardized fields.

    Wraps a problem together with (mean, std) per channel so samplers can
    work in normalized units while the residual is evaluated on physical
    values; gradients are chained through the de-normalization.
    """

    def __init__(self, problem: PdeProblem, mean, std):
        self.problem = problem
        self.mean = np.asarray(mean, dtype=np.float64).reshape(-1, 1, 1)
        self.std = np.asarray(std, dtype=np.float64).reshape(-1, 1, 1)
        if np.any(self.std <= 0):
            raise ConfigurationError("normalization std must be positive")

    @staticmethod
    def identity(problem: PdeProblem, channels: int) -> "NormalizedResidual":
        return NormalizedResidual(problem, np.zeros(channels), np.ones(channels))

    def denormalize(self, z: np.ndarray) -> np.ndarray:
        return z * self.std + self.mean

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def value(self, z: np.ndarray) -> np.ndarray:
        return residual(self.problem, self.denormalize(z)).values

    def norm_sq(self, z: np.ndarray) -> float:
        return float(np.sum(self.value(z) ** 2))

    def sq_grad(self, z: np.ndarray) -> np.ndarray:
        return residual_sq_grad(self.problem, self.denormalize(z)) * self.std

    def vjp(self, z: np.ndarray, r: np.ndarray) -> np.ndarray:
        return residual_vjp(self.problem, self.denormalize(z), r) * self.std

    def jvp(self, z: np.ndarray, w: np.ndarray) -> np.ndarray:
        return residual_jvp(self.problem, self.denormalize(z), w * self.std)

    def pde_error(self, z: np.ndarray) -> float:
        return pde_error(self.problem, self.denormalize(z))
