"""Pure-numpy stencil kernels (fallback for the compiled extension).

All kernels operate on plain 2-D float64 arrays.  Elliptic operators act on
interior points of a zero-based (n0, n1) grid; the residual support is the
(n0-2, n1-2) interior block.  Boundary values of ``u`` are read as given
(they are part of the operand, not clamped), so the interior-supported
operator has full-grid columns and its adjoint scatters back to the full
grid.  Burgers kernels act on (nt, nx) space-time arrays, periodic in x,
with residual support on time levels 0..nt-2.
"""

import numpy as np

BACKEND = "python"

_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


def gelu_forward(x):
    """Tanh-formulation GELU; returns (activation, tanh cache for backward)."""
    th = np.tanh(_GELU_C * (x + _GELU_A * x * x * x))
    return 0.5 * x * (1.0 + th), th


def gelu_backward(x, th, gbar):
    """gbar * gelu'(x) using the cached tanh values."""
    return gbar * (0.5 * (1.0 + th)
                   + 0.5 * x * (1.0 - th * th) * _GELU_C * (1.0 + 3.0 * _GELU_A * x * x))


def _faces(a):
    """Face-averaged coefficients (aS, aN, aW, aE) on the interior block."""
    ai = a[1:-1, 1:-1]
    aS = 0.5 * (a[:-2, 1:-1] + ai)
    aN = 0.5 * (a[2:, 1:-1] + ai)
    aW = 0.5 * (a[1:-1, :-2] + ai)
    aE = 0.5 * (a[1:-1, 2:] + ai)
    return aS, aN, aW, aE


def elliptic_apply(a, u, kappa, h0, h1):
    """(-div(a grad u) + kappa*u) at interior points, 5-point flux stencil."""
    aS, aN, aW, aE = _faces(a)
    ui = u[1:-1, 1:-1]
    r = (aS * (ui - u[:-2, 1:-1]) + aN * (ui - u[2:, 1:-1])) / (h0 * h0)
    r += (aW * (ui - u[1:-1, :-2]) + aE * (ui - u[1:-1, 2:])) / (h1 * h1)
    if kappa != 0.0:
        r = r + kappa * ui
    return r


def elliptic_adjoint(a, r, kappa, h0, h1):
    """Adjoint of :func:`elliptic_apply`: interior cotangent -> full-grid array."""
    aS, aN, aW, aE = _faces(a)
    g = np.zeros((r.shape[0] + 2, r.shape[1] + 2))
    c0 = (aS + aN) / (h0 * h0) + (aW + aE) / (h1 * h1) + kappa
    g[1:-1, 1:-1] += c0 * r
    g[:-2, 1:-1] -= (aS / (h0 * h0)) * r
    g[2:, 1:-1] -= (aN / (h0 * h0)) * r
    g[1:-1, :-2] -= (aW / (h1 * h1)) * r
    g[1:-1, 2:] -= (aE / (h1 * h1)) * r
    return g


def elliptic_coeff_adjoint(u, r, h0, h1):
    """Gradient of <r, -div(a grad u)> with respect to the coefficient a."""
    ui = u[1:-1, 1:-1]
    tS = r * (ui - u[:-2, 1:-1]) / (h0 * h0)
    tN = r * (ui - u[2:, 1:-1]) / (h0 * h0)
    tW = r * (ui - u[1:-1, :-2]) / (h1 * h1)
    tE = r * (ui - u[1:-1, 2:]) / (h1 * h1)
    g = np.zeros((r.shape[0] + 2, r.shape[1] + 2))
    g[1:-1, 1:-1] += 0.5 * (tS + tN + tW + tE)
    g[:-2, 1:-1] += 0.5 * tS
    g[2:, 1:-1] += 0.5 * tN
    g[1:-1, :-2] += 0.5 * tW
    g[1:-1, 2:] += 0.5 * tE
    return g


def burgers_apply(u, nu, ht, hx, conservative):
    """Burgers residual rows 0..nt-2: D_t u + advection - nu*D_xx u."""
    uk = u[:-1]
    up = np.roll(uk, -1, axis=1)
    um = np.roll(uk, 1, axis=1)
    if conservative:
        adv = (up * up - um * um) / (4.0 * hx)
    else:
        adv = uk * (up - um) / (2.0 * hx)
    return (u[1:] - uk) / ht + adv - nu * (up - 2.0 * uk + um) / (hx * hx)


def burgers_adjoint(u, r, nu, ht, hx, conservative):
    """Adjoint of the Burgers residual linearized at u: cotangent -> full grid."""
    g = np.zeros_like(u)
    uk = u[:-1]
    up = np.roll(uk, -1, axis=1)
    um = np.roll(uk, 1, axis=1)
    g[1:] += r / ht
    g[:-1] += -r / ht + (2.0 * nu / (hx * hx)) * r
    if conservative:
        sp = r * up / (2.0 * hx) - (nu / (hx * hx)) * r
        sm = -r * um / (2.0 * hx) - (nu / (hx * hx)) * r
    else:
        g[:-1] += r * (up - um) / (2.0 * hx)
        sp = r * uk / (2.0 * hx) - (nu / (hx * hx)) * r
        sm = -r * uk / (2.0 * hx) - (nu / (hx * hx)) * r
    g[:-1] += np.roll(sp, 1, axis=1)
    g[:-1] += np.roll(sm, -1, axis=1)
    return g


def burgers_jvp(u, w, nu, ht, hx, conservative):
    """Directional derivative of the Burgers residual at u along w."""
    uk, wk = u[:-1], w[:-1]
    up = np.roll(uk, -1, axis=1)
    um = np.roll(uk, 1, axis=1)
    wp = np.roll(wk, -1, axis=1)
    wm = np.roll(wk, 1, axis=1)
    if conservative:
        dadv = (up * wp - um * wm) / (2.0 * hx)
    else:
        dadv = wk * (up - um) / (2.0 * hx) + uk * (wp - wm) / (2.0 * hx)
    return (w[1:] - wk) / ht + dadv - nu * (wp - 2.0 * wk + wm) / (hx * hx)
