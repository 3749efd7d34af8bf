"""Flow-matching training of the velocity model on generated datasets.

Each step draws a batch of data fields u1, pairs every sample with a fresh
reference draw u0 and a time t ~ U(0, 1) (in that per-sample order), forms
the bridge state u_t = (1-t) u0 + t u1, and regresses the model output onto
the straight-line velocity u1 - u0 under a mean squared loss averaged over
batch, channels, and grid points.  Parameters are updated with textbook
Adam.  A single Philox stream seeded by the config drives batch indices and
per-sample draws, so runs are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, SolverError
from .grids import Grid, GrfConfig, grf_draw
from .model import VelocityModel, forward_with_tape, vjp_params
from .grids import make_rng


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    batch_size: int = 16
    iterations: int = 2000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    save_every: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ShapeError("learning_rate must be nonnegative")
        if self.batch_size < 1:
            raise ShapeError("batch_size must be >= 1")


def ffm_loss_terms(model: VelocityModel, u1: np.ndarray, u0: np.ndarray, t: np.ndarray):
    """Loss and parameter gradient for explicit (u1, u0, t) draws.

    Arrays are (B, C, n0, n1) with t of shape (B,).  Loss is the mean of
    (v_theta(u_t, t) - (u1 - u0))^2 over all entries.
    """
    u1 = np.asarray(u1, dtype=np.float64)
    u0 = np.asarray(u0, dtype=np.float64)
    if u1.shape != u0.shape:
        raise ShapeError("u1 and u0 batches must have identical shapes")
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    tb = t[:, None, None, None]
    ut = (1.0 - tb) * u0 + tb * u1
    target = u1 - u0
    tape = forward_with_tape(model, ut, t)
    diff = tape.out - target
    loss = float(np.mean(diff**2))
    cot = (2.0 / diff.size) * diff
    grads = vjp_params(model, ut, t, cot, tape=tape)
    return loss, grads


def draw_pairs(grid: Grid, channels: int, mu0: GrfConfig, batch: int, rng):
    """Per-sample reference draw then time draw, in batch order."""
    u0 = np.empty((batch, channels) + grid.shape)
    t = np.empty(batch)
    for i in range(batch):
        u0[i] = grf_draw(grid, mu0, rng, channels=channels)
        t[i] = rng.uniform()
    return u0, t


def ffm_loss(model: VelocityModel, u1_batch: np.ndarray, mu0: GrfConfig, seed: int):
    """Seeded flow-matching loss over a batch of data fields."""
    u1_batch = np.asarray(u1_batch, dtype=np.float64)
    if u1_batch.ndim != 4 or u1_batch.shape[0] < 1:
        raise ShapeError("expected a nonempty (B, C, n0, n1) batch")
    rng = make_rng(seed)
    u0, t = draw_pairs(model.cfg.grid, u1_batch.shape[1], mu0, u1_batch.shape[0], rng)
    return ffm_loss_terms(model, u1_batch, u0, t)


class AdamState:
    """Textbook Adam recurrence over a dict of parameter tensors."""

    def __init__(self, names):
        self.m = {k: None for k in names}
        self.v = {k: None for k in names}
        self.step = 0

    def update(self, params: dict, grads: dict, cfg: TrainConfig) -> None:
        self.step += 1
        b1, b2 = cfg.beta1, cfg.beta2
        bc1 = 1.0 - b1**self.step
        bc2 = 1.0 - b2**self.step
        for k, g in grads.items():
            if self.m[k] is None:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            mhat = self.m[k] / bc1
            vhat = self.v[k] / bc2
            params[k] -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.eps)


def train(model: VelocityModel, data: np.ndarray, cfg: TrainConfig, mu0: GrfConfig,
          on_step=None):
    """Train in place on normalized data fields (N, C, n0, n1).

    Returns (model, loss_trace).  Per step: batch indices first, then the
    per-sample (u0, t) draws, all from one seeded stream.  Aborts with the
    step index if the loss becomes non-finite.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 4:
        raise ShapeError("training data must be (N, C, n0, n1)")
    if data.shape[1] != model.cfg.state_channels or data.shape[2:] != model.cfg.grid.shape:
        raise ShapeError("dataset dims do not match the model configuration")
    rng = make_rng(cfg.seed)
    adam = AdamState(model.trainable_names())
    trace = np.empty(cfg.iterations)
    for step in range(cfg.iterations):
        idx = rng.integers(0, data.shape[0], size=cfg.batch_size)
        u0, t = draw_pairs(model.cfg.grid, data.shape[1], mu0, cfg.batch_size, rng)
        loss, grads = ffm_loss_terms(model, data[idx], u0, t)
        if not np.isfinite(loss):
            raise SolverError(f"non-finite training loss at step {step}")
        adam.update(model.params, grads, cfg)
        trace[step] = loss
        if on_step is not None:
            on_step(step, loss, model)
    return model, trace


def smoothed(trace: np.ndarray, window: int = 100) -> np.ndarray:
    """Running mean with the given window (shorter prefix averaged as-is)."""
    trace = np.asarray(trace, dtype=np.float64)
    out = np.empty_like(trace)
    csum = np.concatenate([[0.0], np.cumsum(trace)])
    for i in range(trace.size):
        lo = max(0, i - window + 1)
        out[i] = (csum[i + 1] - csum[lo]) / (i + 1 - lo)
    return out


def save_loss_trace(path, trace: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("step,loss\n")
        for i, v in enumerate(trace):
            fh.write(f"{i},{v!r}\n")
