"""Spectral velocity-field network with explicit forward tape and VJPs.

The network maps a state field and a homotopy time t in [0, 1] to a velocity
field of the same shape:

    concat(state, time embedding, coordinates)
      -> lift (1x1 linear)
      -> L x [spectral conv (truncate to M modes per axis, per-mode channel
              mix, inverse transform) + pointwise linear, GELU]
      -> project (1x1 linear)

The time embedding uses fixed (never trained) Gaussian Fourier features
[sin(2*pi*f_i*t), cos(2*pi*f_i*t)] broadcast over the grid; coordinates are
the grid's normalized axis values.  Everything is float64 numpy; reverse-mode
gradients are computed by hand from a per-layer activation tape, so forward
and both VJPs are bit-reproducible given identical inputs.

Spectral convolution keeps the nonnegative-frequency corner block
[0:M, 0:M]; the real part of the inverse transform is taken, which reflects
energy onto the conjugate modes but never above M in per-axis frequency
magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass

import json
import struct

import numpy as np

from . import kernels
from .errors import ConfigurationError, ShapeError, StateError
from .grids import Field, Grid, make_rng

_CKPT_MAGIC = b"FPCK"
_CKPT_VERSION = 1

TRAINABLE_EXCLUDED = ("time_freq",)


def gelu(x):
    return kernels.gelu_forward(np.asarray(x, dtype=np.float64))[0]


def _mix(w, z):
    """Channel mix (O, C) x (B, C, n0, n1) -> (B, O, n0, n1) via batched matmul."""
    b, c, n0, n1 = z.shape
    return np.matmul(w, z.reshape(b, c, n0 * n1)).reshape(b, -1, n0, n1)


def _mix_accum(cot, z):
    """Weight gradient: sum over batch and grid of outer products, (O, C)."""
    return np.tensordot(cot, z, axes=((0, 2, 3), (0, 2, 3)))


@dataclass(frozen=True)
class ModelConfig:
    grid: Grid
    state_channels: int
    width: int = 16
    layers: int = 2
    modes: int = 8
    time_emb_dim: int = 8
    activation: str = "gelu"  # "identity" strips the nonlinearity (testing)

    def __post_init__(self):
        if self.modes > min(self.grid.n0, self.grid.n1) // 2:
            raise ConfigurationError(
                f"modes={self.modes} exceeds Nyquist limit for grid {self.grid.shape}"
            )
        if self.time_emb_dim % 2 != 0 or self.time_emb_dim < 2:
            raise ConfigurationError("time_emb_dim must be a positive even number")
        if self.activation not in ("gelu", "identity"):
            raise ConfigurationError(f"unknown activation {self.activation!r}")

    @property
    def in_channels(self) -> int:
        return self.state_channels + self.time_emb_dim + 2


@dataclass
class VelocityModel:
    cfg: ModelConfig
    params: dict

    def trainable_names(self):
        return [k for k in self.params if k not in TRAINABLE_EXCLUDED]

    def copy(self) -> "VelocityModel":
        return VelocityModel(self.cfg, {k: v.copy() for k, v in self.params.items()})


def _param_layout(cfg: ModelConfig):
    """Ordered (name, shape) pairs; also the init draw order."""
    w, m = cfg.width, cfg.modes
    layout = [("time_freq", (cfg.time_emb_dim // 2,)),
              ("lift_w", (w, cfg.in_channels)), ("lift_b", (w,))]
    for l in range(cfg.layers):
        layout += [(f"spec{l}_re", (w, w, m, m)), (f"spec{l}_im", (w, w, m, m)),
                   (f"pw{l}_w", (w, w)), (f"pw{l}_b", (w,))]
    layout += [("proj_w", (cfg.state_channels, w)), ("proj_b", (cfg.state_channels,))]
    return layout


def _fan_in(name: str, cfg: ModelConfig) -> int:
    if name.startswith("lift"):
        return cfg.in_channels
    return cfg.width


def init_model(cfg: ModelConfig, seed: int) -> VelocityModel:
    """All tensors (biases included) drawn N(0, 1/fan_in); frequencies N(0, 1)."""
    rng = make_rng(seed)
    params = {}
    for name, shape in _param_layout(cfg):
        if name == "time_freq":
            params[name] = rng.standard_normal(shape)
        else:
            params[name] = rng.standard_normal(shape) / np.sqrt(_fan_in(name, cfg))
    return VelocityModel(cfg, params)


def parameter_count(cfg: ModelConfig, trainable_only: bool = True) -> int:
    total = 0
    for name, shape in _param_layout(cfg):
        if trainable_only and name in TRAINABLE_EXCLUDED:
            continue
        total += int(np.prod(shape))
    return total


def time_embedding(model: VelocityModel, t: np.ndarray) -> np.ndarray:
    """(B, time_emb_dim) features [sin(2 pi f t), cos(2 pi f t)]."""
    f = model.params["time_freq"]
    phase = 2.0 * np.pi * np.outer(t, f)
    return np.concatenate([np.sin(phase), np.cos(phase)], axis=1)


@dataclass
class Tape:
    """Per-layer activations stored by the forward pass for VJP reuse."""

    u: np.ndarray
    t: np.ndarray
    z0: np.ndarray
    layer_inputs: list
    x_modes: list
    preacts: list
    tanh_cache: list
    z_last: np.ndarray
    out: np.ndarray

    def matches(self, u, t) -> bool:
        return self.u.shape == u.shape and np.array_equal(self.u, u) and np.array_equal(self.t, t)


def _prepare(model: VelocityModel, u, t):
    cfg = model.cfg
    u = np.asarray(u, dtype=np.float64)
    squeeze = u.ndim == 3
    if squeeze:
        u = u[None]
    if u.ndim != 4 or u.shape[1] != cfg.state_channels or u.shape[2:] != cfg.grid.shape:
        raise ShapeError(
            f"state shape {u.shape} incompatible with model "
            f"(channels={cfg.state_channels}, grid={cfg.grid.shape})"
        )
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if t.size == 1 and u.shape[0] > 1:
        t = np.full(u.shape[0], t[0])
    if t.size != u.shape[0]:
        raise ShapeError("time batch does not match state batch")
    return u, t, squeeze


def forward_with_tape(model: VelocityModel, u, t) -> Tape:
    cfg = model.cfg
    u, t, _ = _prepare(model, u, t)
    B = u.shape[0]
    n0, n1 = cfg.grid.shape
    m = cfg.modes
    p = model.params

    emb = time_embedding(model, t)  # (B, E)
    emb_b = np.broadcast_to(emb[:, :, None, None], (B, emb.shape[1], n0, n1))
    c0, c1 = cfg.grid.coordinates()
    coords = np.broadcast_to(np.stack([c0, c1])[None], (B, 2, n0, n1))
    z0 = np.concatenate([u, emb_b, coords], axis=1)

    z = _mix(p["lift_w"], z0) + p["lift_b"][None, :, None, None]
    layer_inputs, x_modes, preacts, tanh_cache = [], [], [], []
    for l in range(cfg.layers):
        layer_inputs.append(z)
        wc = p[f"spec{l}_re"] + 1j * p[f"spec{l}_im"]
        # the retained corner block of the full transform equals the rfft2 corner
        xm = np.ascontiguousarray(np.fft.rfft2(z, axes=(-2, -1))[:, :, :m, :m])
        x_modes.append(xm)
        ym = np.einsum("ioyx,biyx->boyx", wc, xm)
        yfull = np.zeros((B, cfg.width, n0, n1), dtype=np.complex128)
        yfull[:, :, :m, :m] = ym
        s = np.real(np.fft.ifft2(yfull, axes=(-2, -1)))
        pre = s + _mix(p[f"pw{l}_w"], z) + p[f"pw{l}_b"][None, :, None, None]
        preacts.append(pre)
        if cfg.activation == "gelu":
            z, th = kernels.gelu_forward(pre)
            tanh_cache.append(th)
        else:
            z = pre
            tanh_cache.append(None)
    out = _mix(p["proj_w"], z) + p["proj_b"][None, :, None, None]
    return Tape(u=u, t=t, z0=z0, layer_inputs=layer_inputs, x_modes=x_modes,
                preacts=preacts, tanh_cache=tanh_cache, z_last=z, out=out)


def forward_values(model: VelocityModel, u, t) -> np.ndarray:
    _, _, squeeze = _prepare(model, u, t)
    out = forward_with_tape(model, u, t).out
    return out[0] if squeeze else out


def forward(model: VelocityModel, u_t: Field, t: float) -> Field:
    """Velocity field evaluation; output shape equals the state shape."""
    if u_t.grid != model.cfg.grid:
        raise ShapeError("field grid does not match the model's training grid")
    return Field(u_t.grid, forward_values(model, u_t.values, t))


def _get_tape(model, u, t, tape):
    u_arr, t_arr, squeeze = _prepare(model, u, t)
    if tape is None:
        tape = forward_with_tape(model, u_arr, t_arr)
    elif not tape.matches(u_arr, t_arr):
        raise StateError("tape reuse requested for a different (state, time) input")
    return tape, u_arr, squeeze


def _backward(model: VelocityModel, tape: Tape, cot: np.ndarray,
              want_input: bool, want_params: bool):
    cfg = model.cfg
    p = model.params
    B = tape.u.shape[0]
    n0, n1 = cfg.grid.shape
    m = cfg.modes
    npts = n0 * n1
    grads = {}

    zbar = _mix(p["proj_w"].T, cot)
    if want_params:
        grads["proj_w"] = _mix_accum(cot, tape.z_last)
        grads["proj_b"] = cot.sum(axis=(0, 2, 3))

    for l in reversed(range(cfg.layers)):
        if cfg.activation == "gelu":
            pre_bar = kernels.gelu_backward(tape.preacts[l], tape.tanh_cache[l], zbar)
        else:
            pre_bar = zbar
        z_in = tape.layer_inputs[l]
        if want_params:
            grads[f"pw{l}_w"] = _mix_accum(pre_bar, z_in)
            grads[f"pw{l}_b"] = pre_bar.sum(axis=(0, 2, 3))
        zbar = _mix(p[f"pw{l}_w"].T, pre_bar)

        gc = np.conj(np.fft.rfft2(pre_bar, axes=(-2, -1))[:, :, :m, :m])
        xm = tape.x_modes[l]
        if want_params:
            cw = np.einsum("bojk,bijk->iojk", gc, xm)
            grads[f"spec{l}_re"] = np.real(cw) / npts
            grads[f"spec{l}_im"] = -np.imag(cw) / npts
        wc = p[f"spec{l}_re"] + 1j * p[f"spec{l}_im"]
        q = np.einsum("bojk,iojk->bijk", gc, wc)
        qfull = np.zeros((B, cfg.width, n0, n1), dtype=np.complex128)
        qfull[:, :, :m, :m] = q
        zbar = zbar + np.real(np.fft.fft2(qfull, axes=(-2, -1))) / npts

    if want_params:
        grads["lift_w"] = _mix_accum(zbar, tape.z0)
        grads["lift_b"] = zbar.sum(axis=(0, 2, 3))
    input_bar = None
    if want_input:
        input_bar = _mix(p["lift_w"].T, zbar)[:, : cfg.state_channels]
    return input_bar, grads


def vjp_input(model: VelocityModel, u, t, cotangent, tape: Tape | None = None) -> np.ndarray:
    """Gradient of <cotangent, forward(u, t)> with respect to the state u."""
    tape, u_arr, squeeze = _get_tape(model, u, t, tape)
    cot = np.asarray(cotangent, dtype=np.float64)
    if cot.ndim == 3:
        cot = cot[None]
    if cot.shape != tape.out.shape:
        raise ShapeError(f"cotangent shape {cot.shape} does not match output {tape.out.shape}")
    gbar, _ = _backward(model, tape, cot, want_input=True, want_params=False)
    return gbar[0] if squeeze else gbar


def vjp_params(model: VelocityModel, u, t, cotangent, tape: Tape | None = None) -> dict:
    """Gradient of <cotangent, forward(u, t)> over every trainable tensor."""
    tape, _, _ = _get_tape(model, u, t, tape)
    cot = np.asarray(cotangent, dtype=np.float64)
    if cot.ndim == 3:
        cot = cot[None]
    if cot.shape != tape.out.shape:
        raise ShapeError(f"cotangent shape {cot.shape} does not match output {tape.out.shape}")
    _, grads = _backward(model, tape, cot, want_input=False, want_params=True)
    return grads


def zero_grads(model: VelocityModel) -> dict:
    return {k: np.zeros_like(v) for k, v in model.params.items() if k not in TRAINABLE_EXCLUDED}


def save_model(path, model: VelocityModel, extra_meta: dict | None = None) -> None:
    """Versioned checkpoint: JSON header + named little-endian float64 blocks."""
    cfg = model.cfg
    names = [name for name, _ in _param_layout(cfg)]
    meta = {
        "config": {
            "grid": {"kind": cfg.grid.kind, "n0": cfg.grid.n0, "n1": cfg.grid.n1},
            "state_channels": cfg.state_channels,
            "width": cfg.width,
            "layers": cfg.layers,
            "modes": cfg.modes,
            "time_emb_dim": cfg.time_emb_dim,
            "activation": cfg.activation,
        },
        "blocks": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
        "extra": extra_meta or {},
    }
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", _CKPT_MAGIC, _CKPT_VERSION, len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(model.params[n].astype("<f8").tobytes(order="C"))


def load_model(path):
    """Returns (model, extra_meta)."""
    with open(path, "rb") as fh:
        magic, version, meta_len = struct.unpack("<4sII", fh.read(12))
        if magic != _CKPT_MAGIC:
            raise ConfigurationError(f"{path}: not a checkpoint file")
        if version != _CKPT_VERSION:
            raise ConfigurationError(f"{path}: unsupported checkpoint version {version}")
        meta = json.loads(fh.read(meta_len).decode())
        c = meta["config"]
        cfg = ModelConfig(
            grid=Grid(c["grid"]["kind"], c["grid"]["n0"], c["grid"]["n1"]),
            state_channels=c["state_channels"], width=c["width"], layers=c["layers"],
            modes=c["modes"], time_emb_dim=c["time_emb_dim"], activation=c["activation"],
        )
        params = {}
        for block in meta["blocks"]:
            shape = tuple(block["shape"])
            raw = fh.read(8 * int(np.prod(shape)))
            params[block["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    return VelocityModel(cfg, params), meta.get("extra", {})
