"""Stencil kernel backend selection.

The compiled Cython kernels are used when available; setting the environment
variable ``FLOWPDE_PURE_PYTHON=1`` (or a failed extension build) selects the
pure-numpy fallback.  Both backends implement identical math and are kept
interchangeable by the test suite.
"""

import os

from . import _stencils_py

if os.environ.get("FLOWPDE_PURE_PYTHON"):
    _impl = _stencils_py
else:
    try:
        from . import _stencils_cy as _impl
    except ImportError:
        _impl = _stencils_py

BACKEND = _impl.BACKEND

elliptic_apply = _impl.elliptic_apply
elliptic_adjoint = _impl.elliptic_adjoint
elliptic_coeff_adjoint = _impl.elliptic_coeff_adjoint
burgers_apply = _impl.burgers_apply
burgers_adjoint = _impl.burgers_adjoint
burgers_jvp = _impl.burgers_jvp
gelu_forward = _impl.gelu_forward
gelu_backward = _impl.gelu_backward

ALL_BACKENDS = {"python": _stencils_py}
try:
    from . import _stencils_cy

    ALL_BACKENDS["cython"] = _stencils_cy
except ImportError:
    pass
