"""Flow-matching priors over discretized PDE fields with guided sampling.

Subpackages and modules:

* ``grids``     grids, fields, masks, and the Gaussian reference measure
* ``pde``       discrete residual operators, adjoints, PDE-error metric
* ``solvers``   classical forward solvers and dataset generation
* ``model``     spectral velocity network with explicit tape and VJPs
* ``training``  flow-matching loss and Adam training loop
* ``samplers``  guided and baseline sampling algorithms
* ``metrics``   ensemble metrics (RE / MMSE / SMSE / PDE error)
* ``experiment`` configuration-driven pipeline stages
* ``kernels``   compiled stencil kernels with a pure-python fallback
"""

__version__ = "0.1.0"

from .grids import Field, Grid, GrfConfig, ObservationSpec, apply_mask, grf_sample, interpolant
from .pde import PdeProblem, pde_error, residual, residual_sq_grad

__all__ = [
    "Field",
    "Grid",
    "GrfConfig",
    "ObservationSpec",
    "PdeProblem",
    "apply_mask",
    "grf_sample",
    "interpolant",
    "pde_error",
    "residual",
    "residual_sq_grad",
]
