"""Fourth-order finite differences and the quadrature rules used by the diagnostics."""

from __future__ import annotations

from functools import lru_cache
from math import factorial

import numpy as np
from scipy.integrate import simpson

ORDER = 4


@lru_cache(maxsize=None)
def stencil_weights(offsets: tuple[int, ...], deriv: int) -> np.ndarray:
    """Weights w with sum_j w_j f(x + offsets_j h) ~ h**deriv * f^(deriv)(x).

    Solves the Taylor-matching Vandermonde system; exact for polynomials of
    degree < len(offsets).
    """
    z = np.asarray(offsets, dtype=float)
    n = len(z)
    a = np.vander(z, n, increasing=True).T / np.array([factorial(k) for k in range(n)])[:, None]
    rhs = np.zeros(n)
    rhs[deriv] = 1.0
    w = np.linalg.solve(a, rhs)
    w.setflags(write=False)
    return w


# (offsets at the first edge point, offsets at the second edge point)
_EDGE = {
    1: ((0, 1, 2, 3, 4), (-1, 0, 1, 2, 3)),
    2: ((0, 1, 2, 3, 4, 5), (-1, 0, 1, 2, 3, 4)),
}


def derivative(f: np.ndarray, h: float, deriv: int = 1, axis: int = -1) -> np.ndarray:
    """Fourth-order derivative along ``axis``.

    Central five-point stencils in the interior and one-sided fourth-order
    stencils on the two outermost points at each end, so the result has the
    shape of ``f`` and no boundary assumption is made.
    """
    if deriv not in (1, 2):
        raise ValueError("only first and second derivatives are supported")
    f = np.moveaxis(np.asarray(f), axis, -1)
    n = f.shape[-1]
    if n < 6:
        raise ValueError("need at least 6 samples along the derivative axis")
    out = np.empty(f.shape, dtype=np.result_type(f.dtype, float))
    w = stencil_weights((-2, -1, 0, 1, 2), deriv)
    out[..., 2:-2] = (
        w[0] * f[..., :-4] + w[1] * f[..., 1:-3] + w[2] * f[..., 2:-2]
        + w[3] * f[..., 3:-1] + w[4] * f[..., 4:]
    )
    for i, offs in enumerate(_EDGE[deriv]):
        wl = stencil_weights(offs, deriv)
        out[..., i] = sum(wk * f[..., i + o] for wk, o in zip(wl, offs))
        wr = stencil_weights(tuple(-o for o in offs), deriv)
        j = n - 1 - i
        out[..., j] = sum(wk * f[..., j - o] for wk, o in zip(wr, offs))
    out /= h**deriv
    return np.moveaxis(out, -1, axis)


def dirichlet_d2(u: np.ndarray, h: float, out: np.ndarray | None = None) -> np.ndarray:
    """Central fourth-order second derivative with zero values beyond both ends.

    This is the spatial operator of the solver.  It is symmetric and negative
    semidefinite, so ``-<u, dirichlet_d2(u)>`` is a nonnegative discrete
    Dirichlet form.
    """
    if out is None:
        out = np.empty_like(u)
    c = 1.0 / (12.0 * h * h)
    out[2:-2] = (-u[4:] + 16.0 * u[3:-1] - 30.0 * u[2:-2] + 16.0 * u[1:-3] - u[:-4]) * c
    out[0] = (-30.0 * u[0] + 16.0 * u[1] - u[2]) * c
    out[1] = (16.0 * u[0] - 30.0 * u[1] + 16.0 * u[2] - u[3]) * c
    out[-1] = (-30.0 * u[-1] + 16.0 * u[-2] - u[-3]) * c
    out[-2] = (16.0 * u[-1] - 30.0 * u[-2] + 16.0 * u[-3] - u[-4]) * c
    return out


def space_integral(y: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    """Composite trapezoid rule in x."""
    return np.trapezoid(y, dx=h, axis=axis)


def time_integral(y: np.ndarray, dt: float, axis: int = 0) -> np.ndarray:
    """Composite Simpson rule over uniformly recorded samples."""
    y = np.asarray(y)
    if y.shape[axis] < 3:
        return np.trapezoid(y, dx=dt, axis=axis)
    return simpson(y, dx=dt, axis=axis)


def observed_orders(spacings, errors) -> list[float | None]:
    """log2-style observed orders between consecutive refinement levels.

    Returns ``None`` where either error is zero (order undefined).
    """
    out: list[float | None] = []
    for (h0, e0), (h1, e1) in zip(zip(spacings, errors), zip(spacings[1:], errors[1:])):
        if e0 <= 0.0 or e1 <= 0.0:
            out.append(None)
        else:
            out.append(float(np.log(e0 / e1) / np.log(h0 / h1)))
    return out
