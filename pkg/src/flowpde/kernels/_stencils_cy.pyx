# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the stencil kernels in ``_stencils_py``.

Same math, explicit loops.  Selected at import time by ``flowpde.kernels``
unless FLOWPDE_PURE_PYTHON is set or the extension failed to build.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport tanh

BACKEND = "cython"

ctypedef cnp.float64_t f64

cdef double _GELU_C = 0.7978845608028654  # sqrt(2/pi)
cdef double _GELU_A = 0.044715


def gelu_forward(x):
    """Tanh-formulation GELU; returns (activation, tanh cache for backward)."""
    cdef cnp.ndarray[f64, ndim=1] xf = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef Py_ssize_t n = xf.shape[0], i
    cdef cnp.ndarray[f64, ndim=1] y = np.empty(n)
    cdef cnp.ndarray[f64, ndim=1] th = np.empty(n)
    cdef double xi, t
    for i in range(n):
        xi = xf[i]
        t = tanh(_GELU_C * (xi + _GELU_A * xi * xi * xi))
        th[i] = t
        y[i] = 0.5 * xi * (1.0 + t)
    shape = np.shape(x)
    return y.reshape(shape), th.reshape(shape)


def gelu_backward(x, th, gbar):
    """gbar * gelu'(x) using the cached tanh values."""
    cdef cnp.ndarray[f64, ndim=1] xf = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef cnp.ndarray[f64, ndim=1] tf = np.ascontiguousarray(th, dtype=np.float64).ravel()
    cdef cnp.ndarray[f64, ndim=1] gf = np.ascontiguousarray(gbar, dtype=np.float64).ravel()
    cdef Py_ssize_t n = xf.shape[0], i
    cdef cnp.ndarray[f64, ndim=1] out = np.empty(n)
    cdef double xi, t
    for i in range(n):
        xi = xf[i]
        t = tf[i]
        out[i] = gf[i] * (0.5 * (1.0 + t)
                          + 0.5 * xi * (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * xi * xi))
    return out.reshape(np.shape(x))


def elliptic_apply(cnp.ndarray[f64, ndim=2] a, cnp.ndarray[f64, ndim=2] u,
                   double kappa, double h0, double h1):
    cdef Py_ssize_t n0 = u.shape[0], n1 = u.shape[1]
    cdef cnp.ndarray[f64, ndim=2] r = np.empty((n0 - 2, n1 - 2))
    cdef double ih0 = 1.0 / (h0 * h0), ih1 = 1.0 / (h1 * h1)
    cdef double aS, aN, aW, aE, ui
    cdef Py_ssize_t i, j
    for i in range(1, n0 - 1):
        for j in range(1, n1 - 1):
            ui = u[i, j]
            aS = 0.5 * (a[i - 1, j] + a[i, j])
            aN = 0.5 * (a[i + 1, j] + a[i, j])
            aW = 0.5 * (a[i, j - 1] + a[i, j])
            aE = 0.5 * (a[i, j + 1] + a[i, j])
            r[i - 1, j - 1] = (aS * (ui - u[i - 1, j]) + aN * (ui - u[i + 1, j])) * ih0 \
                + (aW * (ui - u[i, j - 1]) + aE * (ui - u[i, j + 1])) * ih1 \
                + kappa * ui
    return r


def elliptic_adjoint(cnp.ndarray[f64, ndim=2] a, cnp.ndarray[f64, ndim=2] r,
                     double kappa, double h0, double h1):
    cdef Py_ssize_t m0 = r.shape[0], m1 = r.shape[1]
    cdef cnp.ndarray[f64, ndim=2] g = np.zeros((m0 + 2, m1 + 2))
    cdef double ih0 = 1.0 / (h0 * h0), ih1 = 1.0 / (h1 * h1)
    cdef double aS, aN, aW, aE, rij
    cdef Py_ssize_t i, j
    for i in range(1, m0 + 1):
        for j in range(1, m1 + 1):
            rij = r[i - 1, j - 1]
            aS = 0.5 * (a[i - 1, j] + a[i, j])
            aN = 0.5 * (a[i + 1, j] + a[i, j])
            aW = 0.5 * (a[i, j - 1] + a[i, j])
            aE = 0.5 * (a[i, j + 1] + a[i, j])
            g[i, j] += ((aS + aN) * ih0 + (aW + aE) * ih1 + kappa) * rij
            g[i - 1, j] -= aS * ih0 * rij
            g[i + 1, j] -= aN * ih0 * rij
            g[i, j - 1] -= aW * ih1 * rij
            g[i, j + 1] -= aE * ih1 * rij
    return g


def elliptic_coeff_adjoint(cnp.ndarray[f64, ndim=2] u, cnp.ndarray[f64, ndim=2] r,
                           double h0, double h1):
    cdef Py_ssize_t m0 = r.shape[0], m1 = r.shape[1]
    cdef cnp.ndarray[f64, ndim=2] g = np.zeros((m0 + 2, m1 + 2))
    cdef double ih0 = 1.0 / (h0 * h0), ih1 = 1.0 / (h1 * h1)
    cdef double tS, tN, tW, tE, rij, ui
    cdef Py_ssize_t i, j
    for i in range(1, m0 + 1):
        for j in range(1, m1 + 1):
            rij = r[i - 1, j - 1]
            ui = u[i, j]
            tS = rij * (ui - u[i - 1, j]) * ih0
            tN = rij * (ui - u[i + 1, j]) * ih0
            tW = rij * (ui - u[i, j - 1]) * ih1
            tE = rij * (ui - u[i, j + 1]) * ih1
            g[i, j] += 0.5 * (tS + tN + tW + tE)
            g[i - 1, j] += 0.5 * tS
            g[i + 1, j] += 0.5 * tN
            g[i, j - 1] += 0.5 * tW
            g[i, j + 1] += 0.5 * tE
    return g


def burgers_apply(cnp.ndarray[f64, ndim=2] u, double nu, double ht, double hx,
                  bint conservative):
    cdef Py_ssize_t nt = u.shape[0], nx = u.shape[1]
    cdef cnp.ndarray[f64, ndim=2] r = np.empty((nt - 1, nx))
    cdef double ihx2 = 1.0 / (hx * hx)
    cdef double up, um, uk, adv
    cdef Py_ssize_t k, j, jp, jm
    for k in range(nt - 1):
        for j in range(nx):
            jp = j + 1 if j + 1 < nx else 0
            jm = j - 1 if j > 0 else nx - 1
            uk = u[k, j]
            up = u[k, jp]
            um = u[k, jm]
            if conservative:
                adv = (up * up - um * um) / (4.0 * hx)
            else:
                adv = uk * (up - um) / (2.0 * hx)
            r[k, j] = (u[k + 1, j] - uk) / ht + adv - nu * (up - 2.0 * uk + um) * ihx2
    return r


def burgers_adjoint(cnp.ndarray[f64, ndim=2] u, cnp.ndarray[f64, ndim=2] r,
                    double nu, double ht, double hx, bint conservative):
    cdef Py_ssize_t nt = u.shape[0], nx = u.shape[1]
    cdef cnp.ndarray[f64, ndim=2] g = np.zeros((nt, nx))
    cdef double ihx2 = 1.0 / (hx * hx)
    cdef double rkj, uk, up, um
    cdef Py_ssize_t k, j, jp, jm
    for k in range(nt - 1):
        for j in range(nx):
            jp = j + 1 if j + 1 < nx else 0
            jm = j - 1 if j > 0 else nx - 1
            rkj = r[k, j]
            uk = u[k, j]
            up = u[k, jp]
            um = u[k, jm]
            g[k + 1, j] += rkj / ht
            g[k, j] += -rkj / ht + 2.0 * nu * ihx2 * rkj
            if conservative:
                g[k, jp] += rkj * up / (2.0 * hx) - nu * ihx2 * rkj
                g[k, jm] += -rkj * um / (2.0 * hx) - nu * ihx2 * rkj
            else:
                g[k, j] += rkj * (up - um) / (2.0 * hx)
                g[k, jp] += rkj * uk / (2.0 * hx) - nu * ihx2 * rkj
                g[k, jm] += -rkj * uk / (2.0 * hx) - nu * ihx2 * rkj
    return g


def burgers_jvp(cnp.ndarray[f64, ndim=2] u, cnp.ndarray[f64, ndim=2] w,
                double nu, double ht, double hx, bint conservative):
    cdef Py_ssize_t nt = u.shape[0], nx = u.shape[1]
    cdef cnp.ndarray[f64, ndim=2] dr = np.empty((nt - 1, nx))
    cdef double ihx2 = 1.0 / (hx * hx)
    cdef double uk, up, um, wk, wp, wm, dadv
    cdef Py_ssize_t k, j, jp, jm
    for k in range(nt - 1):
        for j in range(nx):
            jp = j + 1 if j + 1 < nx else 0
            jm = j - 1 if j > 0 else nx - 1
            uk = u[k, j]
            up = u[k, jp]
            um = u[k, jm]
            wk = w[k, j]
            wp = w[k, jp]
            wm = w[k, jm]
            if conservative:
                dadv = (up * wp - um * wm) / (2.0 * hx)
            else:
                dadv = wk * (up - um) / (2.0 * hx) + uk * (wp - wm) / (2.0 * hx)
            dr[k, j] = (w[k + 1, j] - wk) / ht + dadv - nu * (wp - 2.0 * wk + wm) * ihx2
    return dr
