"""Windowed time-Fourier analysis near the trapped set.

u1 = chi1 chix psi is compactly supported in t, so its transform

    u1_hat(tau, x) = dt * sum_n u1(t_n, x) exp(-i tau t_n)

is computed with an FFT over a zero-padded record of odd length.  The
frequency grid then has spacing 2 pi / (n_pad dt), is symmetric about 0 and
spans one full period, which makes the discrete Parseval identity

    sum_k |u1_hat_k|^2 dtau = 2 pi sum_n |u1_n|^2 dt

exact up to roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fd
from .errors import CoverageError, NyquistError
from .model import ModelParams, potential_v, potential_w
from .multipliers import WindowSet, combined_weight, lemma_min_scan
from .solver import Trajectory

J_EXPONENT = 6.0 / 5.0
NORM_CONVENTION = "u_hat(tau) = dt * sum_n u(t_n) exp(-i tau t_n); dtau = 2 pi / (n_pad dt)"


@dataclass(frozen=True, eq=False)
class WindowedFields:
    """Cutoff fields and sources on a (t, x) slab for one mode.

    ``f_src`` and ``g_src`` are the two source terms produced by applying the
    wave operator to u1: the time-cutoff part (supported where chi1' != 0)
    and the space-cutoff part (supported where chix' != 0).
    """

    window: WindowSet
    ell: int
    t: np.ndarray
    x: np.ndarray
    dt: float
    h: float
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray
    f_src: np.ndarray
    g_src: np.ndarray


def build_windowed_fields(traj: Trajectory, t_horizon: float, window: WindowSet | None = None) -> WindowedFields:
    """u1 = chi1 chix psi, u2 = chi2 chix psi, u3 = chi1 psi and the sources

        F = -2 chi1' (u2)_t - chi1'' u2,   G = 2 chix' (u3)_x + chix'' u3.

    Needs the trajectory on t in [-2, T+2] and x in a window containing [-2, 2].
    """
    T = float(t_horizon)
    window = window or WindowSet.for_horizon(T)
    if not traj.covers(-2.0, T + 2.0):
        raise CoverageError(f"trajectory must cover [-2, {T + 2}]")
    if traj.x[0] > -2.0 or traj.x[-1] < 2.0:
        raise CoverageError("trajectory window must contain |x| <= 2")
    sl = traj.slab(-2.0, T + 2.0)
    t = traj.times[sl]
    x = traj.x
    psi, psi_t = traj.u[sl], traj.v[sl]
    psi_x = fd.derivative(psi, traj.h, 1, axis=1)

    c1, c1p, c1pp = (window.chi1(t, k)[:, None] for k in range(3))
    c2, c2p = window.chi2(t)[:, None], window.chi2(t, 1)[:, None]
    cx, cxp, cxpp = (window.chix(x, k)[None, :] for k in range(3))

    u1 = c1 * cx * psi
    u2 = c2 * cx * psi
    u3 = c1 * psi
    u2_t = c2p * cx * psi + c2 * cx * psi_t
    u3_x = c1 * psi_x
    f_src = -2.0 * c1p * u2_t - c1pp * u2
    g_src = 2.0 * cxp * u3_x + cxpp * u3
    return WindowedFields(window, traj.mode.ell, t, x, traj.dt, traj.h, u1, u2, u3, f_src, g_src)


def approx_divergence_residual(wf: WindowedFields, params: ModelParams, profile) -> float:
    """L1 norm of (wave operator applied to u1) - (F + G), derivatives by finite differences."""
    lam = wf.ell * (wf.ell + 1)
    u1 = wf.u1
    op = (-fd.derivative(u1, wf.dt, 2, axis=0) + fd.derivative(u1, wf.h, 2, axis=1)
          - (lam + params.big_n) * potential_v(wf.x)[None, :] * u1
          + 1j * params.epsilon * potential_w(profile, wf.x)[None, :] * u1)
    r = op - (wf.f_src + wf.g_src)
    return float(np.sum(np.abs(r[2:-2, 2:-2])) * wf.dt * wf.h)


def approx_divergence_scale(wf: WindowedFields) -> float:
    """L1 norm of F + G on the same interior points; normalizes the residual above."""
    return float(np.sum(np.abs((wf.f_src + wf.g_src)[2:-2, 2:-2])) * wf.dt * wf.h)


@dataclass(frozen=True, eq=False)
class SpectralData:
    tau: np.ndarray
    u1_hat: np.ndarray  # shape (len(tau), len(x))
    x: np.ndarray
    dtau: float
    h: float
    tau_max: float
    norm_convention: str = NORM_CONVENTION

    def band(self) -> np.ndarray:
        return np.abs(self.tau) <= self.tau_max + 1e-12


def dft_time(wf: WindowedFields, tau_max: float = 64.0, pad_factor: float = 1.0) -> SpectralData:
    """Time transform of u1 on a symmetric frequency grid covering a full period.

    Raises :class:`NyquistError` unless 1/dt >= 4 tau_max / (2 pi).
    """
    if 1.0 / wf.dt < 4.0 * tau_max / (2.0 * math.pi) * (1 - 1e-12):
        raise NyquistError(f"sampling rate {1 / wf.dt:.4g} below 4 tau_max/(2 pi) = {4 * tau_max / (2 * math.pi):.4g}")
    n = len(wf.t)
    n_pad = n + int(math.ceil(pad_factor * n))
    n_pad += 1 - n_pad % 2  # odd length -> symmetric grid
    data = np.zeros((n_pad, wf.u1.shape[1]), complex)
    data[:n] = wf.u1
    spec = np.fft.fftshift(np.fft.fft(data, axis=0), axes=0)
    tau = np.fft.fftshift(np.fft.fftfreq(n_pad, d=wf.dt)) * 2.0 * math.pi
    # the record starts at t0, not 0
    spec *= wf.dt * np.exp(-1j * tau * wf.t[0])[:, None]
    return SpectralData(tau, spec, wf.x, float(tau[1] - tau[0]), wf.h, float(tau_max))


def parseval_error(wf: WindowedFields, sd: SpectralData) -> float:
    lhs = float(np.sum(np.abs(sd.u1_hat) ** 2)) * sd.dtau * sd.h
    rhs = 2.0 * math.pi * float(np.sum(np.abs(wf.u1) ** 2)) * wf.dt * wf.h
    return abs(lhs - rhs) / rhs if rhs > 0 else abs(lhs)


def tau_moment(sd: SpectralData, power: float) -> float:
    """sum over (tau, x) of |tau|^power |u1_hat|^2 dtau dx."""
    w = np.abs(sd.tau) ** power if power != 0 else np.ones_like(sd.tau)
    return float(np.sum(w[:, None] * np.abs(sd.u1_hat) ** 2)) * sd.dtau * sd.h


def j_functional(sd: SpectralData, exponent: float = J_EXPONENT) -> float:
    """The |tau|^{6/5}-weighted spectral mass of u1 (6/5 = 3 alpha at alpha = 2/5)."""
    return tau_moment(sd, exponent)


def spectral_density(sd: SpectralData) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(tau, sum_x |u1_hat|^2 dx, |tau|^{6/5} times that) restricted to |tau| <= tau_max."""
    b = sd.band()
    dens = np.sum(np.abs(sd.u1_hat[b]) ** 2, axis=1) * sd.h
    return sd.tau[b], dens, np.abs(sd.tau[b]) ** J_EXPONENT * dens


def source_norms(wf: WindowedFields) -> tuple[float, float]:
    """L2 norms of F and G over the slab."""
    def l2(a):
        return math.sqrt(float(np.sum(np.abs(a) ** 2)) * wf.dt * wf.h)
    return l2(wf.f_src), l2(wf.g_src)


@dataclass(frozen=True)
class WeightDomination:
    min_ratio: float  # min of combined weight / |tau|^{3 alpha} over tau != 0, |x| <= 2
    lemma_min: float
    at_zero_exact: bool

    @property
    def passed(self) -> bool:
        return self.min_ratio >= self.lemma_min * (1 - 1e-9) and self.at_zero_exact and self.lemma_min > 0


def weight_domination(params: ModelParams, tau: np.ndarray, x: np.ndarray) -> WeightDomination:
    """Check the combined weight dominates |tau|^{3 alpha} on supp chix."""
    tau = np.asarray(tau, dtype=float)
    tau = tau[tau != 0]
    x = np.asarray(x, dtype=float)
    x = x[np.abs(x) <= 2.0]
    a = params.alpha
    w = combined_weight(tau[:, None], a, params.m_const, x[None, :])
    base = np.abs(tau[:, None]) ** (3 * a)
    lemma, _ = lemma_min_scan(params.m_const, 10.0, 1_000_000)
    at0 = combined_weight(tau, a, params.m_const, 0.0)
    return WeightDomination(float(np.min(w / base)), lemma,
                            bool(np.allclose(at0, np.abs(tau) ** (3 * a), rtol=1e-13, atol=0)))


@dataclass(frozen=True)
class RefinedCheck:
    j: float
    energy_sum: float  # E(0) + E(T)
    constant: float
    weights: WeightDomination


def refined_morawetz_check(j_value: float, e0: float, eT: float, params: ModelParams,
                           tau: np.ndarray, x: np.ndarray) -> RefinedCheck:
    """J against E(0) + E(T), plus the pointwise weight domination behind it."""
    total = e0 + eT
    c = j_value / total if total > 0 else math.nan
    return RefinedCheck(j_value, total, c, weight_domination(params, tau, x))


@dataclass(frozen=True)
class ClosingReport:
    tau1_moment: float  # int |tau| |u1_hat|^2
    l2_mass: float  # int |u1_hat|^2 = 2 pi ||u1||^2
    j: float
    i_value: float
    interpolation_ok: bool  # tau1 <= l2 + J
    interpolation_ratio: float  # tau1 / (2 pi I + J)
    w_pairing: float  # |int W Im(conj(u1) d_t u1)|
    pairing_bound: float  # tau1 / (2 pi)
    e0: float
    eT: float
    closing_constant: float  # (E(T) - E(0)) / (eps (E(T) + E(0)))
    implied_ratio: float  # (1 + C eps)/(1 - C eps) for C = closing_constant
    measured_ratio: float  # E(T)/E(0)


def w_pairing(wf: WindowedFields, profile) -> float:
    """|int int W Im(conj(u1) d_t u1) dx dt| with d_t by finite differences."""
    W = potential_w(profile, wf.x)[None, :]
    u1_t = fd.derivative(wf.u1, wf.dt, 1, axis=0)
    return abs(float(np.sum(W * np.imag(np.conj(wf.u1) * u1_t))) * wf.dt * wf.h)


def closing_estimate_check(wf: WindowedFields, sd: SpectralData, i_value: float,
                           e0: float, eT: float, params: ModelParams, profile) -> ClosingReport:
    """Assemble the energy-closing chain for one mode (or for mode sums, via the fields).

    Uses |tau| <= 1 + |tau|^{6/5} to bound int |tau| |u1_hat|^2 by the L2 mass
    plus J, and the L2 mass by 2 pi I.
    """
    t1 = tau_moment(sd, 1.0)
    l2 = tau_moment(sd, 0.0)
    j = j_functional(sd)
    return _closing(t1, l2, j, i_value, w_pairing(wf, profile), e0, eT, params)


def _closing(t1, l2, j, i_value, pairing, e0, eT, params) -> ClosingReport:
    eps = params.epsilon
    denom = 2 * math.pi * i_value + j
    c = (eT - e0) / (eps * (eT + e0)) if eps > 0 and (eT + e0) > 0 else 0.0
    ce = max(c, 0.0) * eps
    implied = (1 + ce) / (1 - ce) if ce < 1 else math.inf
    return ClosingReport(t1, l2, j, i_value, t1 <= l2 + j + 1e-12 * max(1.0, t1),
                         t1 / denom if denom > 0 else math.nan, pairing, t1 / (2 * math.pi),
                         e0, eT, c, implied, eT / e0 if e0 > 0 else math.nan)


def combine_closing(parts: list[tuple[float, float, float, float]], i_value: float,
                    e0: float, eT: float, params: ModelParams) -> ClosingReport:
    """Mode-summed closing report from per-mode (tau1, l2, J, pairing) tuples."""
    t1 = sum(p[0] for p in parts)
    l2 = sum(p[1] for p in parts)
    j = sum(p[2] for p in parts)
    pairing = sum(p[3] for p in parts)
    return _closing(t1, l2, j, i_value, pairing, e0, eT, params)


__all__ = [
    "WindowedFields", "SpectralData", "build_windowed_fields", "approx_divergence_residual",
    "approx_divergence_scale",
    "dft_time", "parseval_error", "tau_moment", "j_functional", "spectral_density",
    "source_norms", "weight_domination", "refined_morawetz_check", "closing_estimate_check",
    "combine_closing", "w_pairing",
]
