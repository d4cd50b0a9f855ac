"""Model problem: parameters, potentials, angular-mode reduction and initial data.

The field lives on R_t x R_x x S^2 and satisfies

    (-d_t^2 + d_x^2 + V (Lap_S - N) + i eps W) psi = 0,   V = 1/(1+x^2).

All coefficients are independent of the angle, so each spherical harmonic
psi = psi_l(t, x) Y_lm evolves on its own with the real potential
(l(l+1) + N) V(x).  The package simulates these 1+1 dimensional fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import SupportError

# Gaussian data are cut where the envelope drops below this relative level.
TRUNCATION = 1e-16
CAUSALITY_MARGIN = 10.0


@dataclass(frozen=True)
class ModelParams:
    """Scalar parameters of the model and of the windowed-Fourier argument.

    ``alpha`` is the frequency rescaling exponent of the refined multiplier and
    ``m_const`` the large constant multiplying the near-trap functional.
    """

    epsilon: float = 0.01
    big_n: float = 20.0
    delta: float = 0.05
    alpha: float = 0.4
    m_const: float = 700.0
    t_horizon: float = 50.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.big_n <= 0:
            raise ValueError("big_n must be > 0")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if not 0.0 <= self.alpha <= 0.5:
            raise ValueError("alpha must lie in [0, 1/2]")
        if self.m_const <= 0:
            raise ValueError("m_const must be > 0")
        floor = 2.0 if self.epsilon == 0 else max(-math.log(self.epsilon), 2.0)
        if not self.t_horizon > floor:
            raise ValueError(f"t_horizon must exceed {floor:.6g}")


@dataclass(frozen=True)
class PotentialProfile:
    """Shape of the imaginary potential W.

    ``bump`` is the standard smooth bump with unit peak; ``scaled_bump`` is the
    same bump multiplied by ``amplitude``.
    """

    shape: Literal["bump", "scaled_bump"] = "bump"
    center: float = 0.0
    width: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.shape not in ("bump", "scaled_bump"):
            raise ValueError(f"unknown potential shape {self.shape!r}")
        if self.width <= 0:
            raise ValueError("width must be > 0")
        if not 0.0 < self.amplitude <= 1.0:
            raise ValueError("amplitude must lie in (0, 1]")

    @property
    def peak(self) -> float:
        return 1.0 if self.shape == "bump" else self.amplitude

    @property
    def support(self) -> tuple[float, float]:
        return (self.center - self.width, self.center + self.width)


DEFAULT_PROFILE = PotentialProfile()


@dataclass(frozen=True)
class Mode:
    ell: int

    def __post_init__(self):
        if self.ell < 0 or int(self.ell) != self.ell:
            raise ValueError("ell must be a nonnegative integer")

    @property
    def multiplicity(self) -> int:
        return 2 * self.ell + 1

    @property
    def eigenvalue(self) -> int:
        """Angular eigenvalue l(l+1), the per-mode value of |d_omega psi|^2 / |psi|^2."""
        return self.ell * (self.ell + 1)


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on [-L, L] with a fixed time step."""

    half_length: float
    n_points: int
    dt: float

    def __post_init__(self):
        if self.half_length <= 0 or self.n_points < 7:
            raise ValueError("grid needs half_length > 0 and at least 7 points")
        if not 0 < self.dt <= self.spacing * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} violates dt <= h={self.spacing} (cfl_factor <= 1)")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_length / (self.n_points - 1)

    @property
    def cfl_factor(self) -> float:
        return self.dt / self.spacing

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.half_length, self.half_length, self.n_points)

    @classmethod
    def for_run(cls, spacing: float, t_extent: float, support_radius: float,
                cfl: float = 0.5, half_length: float | None = None) -> "GridSpec":
        """Grid whose boundary is never reached by a signal within ``t_extent``.

        The time step is the largest value ``1/m`` (integer ``m``) not above
        ``cfl * spacing``, so integer times are always step boundaries.
        """
        need = t_extent + support_radius + CAUSALITY_MARGIN
        if half_length is None:
            cells = math.ceil(2 * need / spacing - 1e-9)
            cells += cells % 2
            half_length = cells * spacing / 2
        elif half_length < need:
            raise SupportError(f"half_length {half_length} < required {need:.6g}")
        n = int(round(2 * half_length / spacing)) + 1
        m = math.ceil(1.0 / (cfl * spacing) - 1e-9)
        return cls(half_length=half_length, n_points=n, dt=1.0 / m)


@dataclass(frozen=True, eq=False)
class ModeState:
    """One angular mode at one instant: field ``u``, velocity ``v`` on points ``x``."""

    u: np.ndarray
    v: np.ndarray
    time: float
    x: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.u.shape != self.v.shape or self.u.shape != self.x.shape:
            raise ValueError("u, v and x must have identical shapes")

    def boundary_quiet(self, width: int = 5, tol: float = 1e-12) -> bool:
        edge = np.concatenate([self.u[:width], self.u[-width:], self.v[:width], self.v[-width:]])
        return bool(np.all(np.abs(edge) < tol))

    def scaled(self, c: complex) -> "ModeState":
        return ModeState(c * self.u, c * self.v, self.time, self.x)


def potential_v(x):
    """The trapping potential 1/(1+x^2); maximal at the trapped set x = 0."""
    x = np.asarray(x, dtype=float)
    return 1.0 / (1.0 + x * x)


def potential_v_prime(x):
    x = np.asarray(x, dtype=float)
    return -2.0 * x / (1.0 + x * x) ** 2


def potential_w(profile: PotentialProfile, x):
    """Smooth compactly supported bump, zero outside ``[center-width, center+width]``."""
    r = (np.asarray(x, dtype=float) - profile.center) / profile.width
    inside = np.abs(r) < 1.0
    r2 = np.where(inside, r * r, 0.0)
    w = np.where(inside, np.exp(1.0 - 1.0 / (1.0 - r2)), 0.0)
    return profile.peak * w


def mode_equation_coefficient(params: ModelParams, mode: Mode, x):
    """Per-mode real potential (l(l+1) + N) V(x).

    The mode then obeys -u_tt + u_xx - [this] u + i eps W u = 0.
    """
    return (mode.eigenvalue + params.big_n) * potential_v(x)


def gaussian_support_radius(width: float) -> float:
    return width * math.sqrt(-math.log(TRUNCATION))


def initial_data_gaussian(grid: GridSpec, center: float = 0.0, width: float = 1.0,
                          wavenumber: float = 0.0,
                          phase: Literal["real", "imaginary", "complex"] = "complex",
                          rightward: bool = False, amplitude: complex = 1.0) -> ModeState:
    """Truncated Gaussian packet at t = 0.

    ``phase`` selects ``Re(g e^{ikx})`` (real), ``i Re(g e^{ikx})`` (imaginary)
    or ``g e^{ikx}`` (complex).  With ``rightward`` the velocity is ``-u_x``,
    which moves the packet to the right at unit speed where the potential is
    negligible; otherwise the velocity is zero.
    """
    if width <= 0:
        raise ValueError("width must be > 0")
    radius = gaussian_support_radius(width)
    lo, hi = -grid.half_length + CAUSALITY_MARGIN, grid.half_length - CAUSALITY_MARGIN
    if center - radius < lo or center + radius > hi:
        raise SupportError(
            f"Gaussian support [{center - radius:.4g}, {center + radius:.4g}] "
            f"leaves the causality window [{lo:.4g}, {hi:.4g}]"
        )
    x = grid.x
    y = (x - center) / width
    env = np.where(np.abs(y) * width <= radius, np.exp(-y * y), 0.0)
    carrier = np.exp(1j * wavenumber * x)
    # d/dx of env * carrier
    d_env = -2.0 * y / width * env
    if phase == "complex":
        u = env * carrier
        ux = (d_env + 1j * wavenumber * env) * carrier
    elif phase in ("real", "imaginary"):
        u = env * np.cos(wavenumber * x) + 0j
        ux = d_env * np.cos(wavenumber * x) - wavenumber * env * np.sin(wavenumber * x) + 0j
        if phase == "imaginary":
            u, ux = 1j * u, 1j * ux
    else:
        raise ValueError(f"unknown phase {phase!r}")
    v = -ux if rightward else np.zeros_like(u)
    return ModeState(amplitude * u, amplitude * v, 0.0, x)


def zero_data(grid: GridSpec) -> ModeState:
    x = grid.x
    return ModeState(np.zeros(x.shape, complex), np.zeros(x.shape, complex), 0.0, x)
