"""Kernel backend selection.

The compiled Cython extension is preferred; the pure-numpy reference is the
fallback.  Override with BSNQ_KERNELS=compiled|numpy|auto.  Both backends use
the same arithmetic ordering, so results are identical either way.
"""

import os

import numpy as np

from . import reference

_choice = os.environ.get("BSNQ_KERNELS", "auto")
if _choice not in ("auto", "compiled", "numpy"):
    raise RuntimeError(
        "BSNQ_KERNELS must be 'auto', 'compiled' or 'numpy', got %r" % _choice
    )

_impl = None
if _choice in ("auto", "compiled"):
    try:
        from . import _accel as _impl
    except ImportError:
        if _choice == "compiled":
            raise RuntimeError(
                "BSNQ_KERNELS=compiled but the bsnq.kernels._accel extension "
                "is not built; reinstall the package or use BSNQ_KERNELS=numpy"
            )
if _impl is None:
    _impl = reference

BACKEND = "numpy" if _impl is reference else "compiled"


def _as_c_double(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def solve_tridiag_batch(dl, d, du, b):
    """Solve nbatch tridiagonal systems; all inputs shaped (nbatch, n).

    dl[:, 0] and du[:, n-1] are ignored.  Returns the solutions, (nbatch, n).
    """
    dl = _as_c_double(dl)
    d = _as_c_double(d)
    du = _as_c_double(du)
    b = _as_c_double(b)
    out = np.empty_like(d)
    work = np.empty_like(d)
    _impl.thomas_batch(dl, d, du, b, work, out)
    return out


def ddz(f, dz):
    """d/dz along axis 1 of a (Nx, Nz) array, one-sided at the edges."""
    f = _as_c_double(f)
    out = np.empty_like(f)
    _impl.ddz_apply(f, float(dz), out)
    return out


def d2z(f, dz):
    """d2/dz2 along axis 1 of a (Nx, Nz) array, one-sided at the edges."""
    f = _as_c_double(f)
    out = np.empty_like(f)
    _impl.d2z_apply(f, float(dz), out)
    return out
