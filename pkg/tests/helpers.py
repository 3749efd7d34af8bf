"""Shared test oracles: central finite differences and tiny model builders."""

import numpy as np

from flowpde.grids import Grid
from flowpde.model import ModelConfig, VelocityModel, init_model


def central_fd(fun, x, eps=1e-6):
    """Dense central-difference gradient of a scalar function of an array."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = fun(x)
        flat[i] = old - eps
        fm = fun(x)
        flat[i] = old
        gf[i] = (fp - fm) / (2.0 * eps)
    return g


def directional_fd(fun, x, d, eps=1e-6):
    """Central difference of scalar fun along direction d."""
    x = np.asarray(x, dtype=np.float64)
    return (fun(x + eps * d) - fun(x - eps * d)) / (2.0 * eps)


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(b), 1e-300)
    return np.linalg.norm(a - b) / denom


def tiny_model(grid=None, channels=1, width=3, layers=1, modes=2, emb=2, seed=0,
               activation="gelu") -> VelocityModel:
    grid = grid if grid is not None else Grid("spatial2d", 4, 4)
    cfg = ModelConfig(grid, state_channels=channels, width=width, layers=layers,
                      modes=modes, time_emb_dim=emb, activation=activation)
    return init_model(cfg, seed=seed)


def zero_model(grid, channels=1, **kw) -> VelocityModel:
    m = tiny_model(grid, channels=channels, **kw)
    for k in m.params:
        if k != "time_freq":
            m.params[k] = np.zeros_like(m.params[k])
    return m


def constant_model(grid, const, **kw) -> VelocityModel:
    """Model whose output is identically `const` (per channel)."""
    const = np.atleast_1d(np.asarray(const, dtype=np.float64))
    m = zero_model(grid, channels=const.size, **kw)
    m.params["proj_b"] = const.copy()
    return m
