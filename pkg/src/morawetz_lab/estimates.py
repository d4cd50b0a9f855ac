"""Energies, the indefinite conserved charge, and the space-time Morawetz functionals.

Spatial integrals use the trapezoid rule on the grid.  The Dirichlet part
of the energy is the discrete form ``-<u, D2 u>`` built from the solver's own
second difference, so for eps = 0 the semi-discrete energy is exactly
conserved and for eps > 0 it obeys the energy identity exactly before time
discretization.  Time integrals use Simpson's rule on recorded samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fd
from .errors import CoverageError
from .model import (
    DEFAULT_PROFILE,
    Mode,
    ModelParams,
    ModeState,
    PotentialProfile,
    mode_equation_coefficient,
    potential_v,
    potential_w,
)
from .multipliers import MultiplierSet, classical_multiplier
from .solver import Trajectory

# Coefficient of eps * int W Re(u) Im(u) in the conserved charge.  Follows from
# multiplying the real part of the equation by Re(u_t), the imaginary part by
# Im(u_t), and subtracting; calibrate_noether_kappa confirms it numerically.
NOETHER_KAPPA = 1.0


def _dirichlet_form(u: np.ndarray, h: float) -> np.ndarray:
    """Pointwise density whose sum is -<u, D2 u>; sums to ~ int |u_x|^2."""
    return -np.real(np.conj(u) * fd.dirichlet_d2(u, h))


def energy_density(u, v, x, h, mode: Mode, params: ModelParams):
    c = mode_equation_coefficient(params, mode, x)
    return 0.5 * (np.abs(v) ** 2 + _dirichlet_form(u, h) + c * np.abs(u) ** 2)


def energy(state: ModeState, mode: Mode, params: ModelParams) -> float:
    """1/2 int |v|^2 + |u_x|^2 + V (l(l+1) + N) |u|^2 dx for one mode.

    The state must live on the full solver grid (zero beyond both ends).
    """
    h = float(state.x[1] - state.x[0])
    return float(fd.space_integral(energy_density(state.u, state.v, state.x, h, mode, params), h))


def _real_energy(a, b, x, h, mode, params):
    """Energy of a real pair (field a, velocity b)."""
    c = mode_equation_coefficient(params, mode, x)
    dens = 0.5 * (b * b - a * fd.dirichlet_d2(a, h) + c * a * a)
    return float(fd.space_integral(dens, h))


def noether_charge(state: ModeState, mode: Mode, params: ModelParams,
                   profile: PotentialProfile = DEFAULT_PROFILE, kappa: float = NOETHER_KAPPA) -> float:
    """E[Re u, Re v] - E[Im u, Im v] + eps kappa int W Re(u) Im(u) dx.

    Conserved by the evolution and indefinite: purely imaginary data give a
    negative value.
    """
    x = state.x
    h = float(x[1] - x[0])
    er = _real_energy(state.u.real, state.v.real, x, h, mode, params)
    ei = _real_energy(state.u.imag, state.v.imag, x, h, mode, params)
    cross = fd.space_integral(potential_w(profile, x) * state.u.real * state.u.imag, h)
    return er - ei + params.epsilon * kappa * float(cross)


def energy_series(traj: Trajectory) -> np.ndarray:
    _need_full(traj)
    h = traj.h
    dens = 0.5 * (np.abs(traj.v) ** 2
                  + np.stack([_dirichlet_form(u, h) for u in traj.u])
                  + mode_equation_coefficient(traj.params, traj.mode, traj.x) * np.abs(traj.u) ** 2)
    return fd.space_integral(dens, h, axis=1)


def noether_series(traj: Trajectory, kappa: float = NOETHER_KAPPA) -> np.ndarray:
    _need_full(traj)
    return np.array([noether_charge(s, traj.mode, traj.params, traj.profile, kappa) for s in traj.states])


def calibrate_noether_kappa(traj: Trajectory, candidates=(-2.0, -1.0, 1.0, 2.0)) -> tuple[float, dict]:
    """Pick the cross-term coefficient whose charge drifts least along ``traj``."""
    drifts = {}
    for k in candidates:
        q = noether_series(traj, k)
        drifts[k] = float(np.max(np.abs(q - q[0])))
    best = min(drifts, key=drifts.get)
    return best, drifts


def _need_full(traj: Trajectory):
    if not traj.is_full:
        raise CoverageError("energies need trajectories recorded on the full grid")


@dataclass
class EnergyReport:
    times: np.ndarray
    e_total: np.ndarray
    e_per_mode: dict[int, np.ndarray]
    noether: np.ndarray | None = None
    ratios: np.ndarray = field(init=False)

    def __post_init__(self):
        e0 = self.e_total[self.index(0.0)] if self.times[0] <= 0.0 <= self.times[-1] else self.e_total[0]
        self.ratios = self.e_total / e0 if e0 > 0 else np.zeros_like(self.e_total)

    def index(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    @classmethod
    def from_trajectories(cls, trajs: list[Trajectory]) -> "EnergyReport":
        times = trajs[0].times
        per = {}
        total = np.zeros(len(times))
        charge = np.zeros(len(times))
        for tr in trajs:
            if len(tr.times) != len(times) or not np.allclose(tr.times, times):
                raise CoverageError("mode trajectories must share sample times")
            per[tr.mode.ell] = energy_series(tr)
            total = total + per[tr.mode.ell]
            charge = charge + noether_series(tr)
        return cls(times, total, per, charge)

    def drift(self) -> float:
        """max |E(t) - E(0)| / E(0); zero for zero energy."""
        e0 = self.e_total[self.index(0.0)]
        return float(np.max(np.abs(self.e_total - e0)) / e0) if e0 > 0 else 0.0


@dataclass(frozen=True)
class BalanceResult:
    lhs: float
    rhs: float
    residual: float


def balance_rhs_density(traj: Trajectory) -> np.ndarray:
    """-eps int W Im(conj(v) u) dx at each recorded time."""
    W = potential_w(traj.profile, traj.x)
    dens = -traj.params.epsilon * W[None, :] * np.imag(np.conj(traj.v) * traj.u)
    return fd.space_integral(dens, traj.h, axis=1)


def energy_balance_check(traj: Trajectory, t1: float, t2: float,
                         energy_traj: Trajectory | None = None) -> BalanceResult:
    """Compare E(t2) - E(t1) with the slab integral of -eps W Im(conj(u_t) u).

    ``traj`` must contain supp W in its x-window; energies are read from
    ``energy_traj`` (default ``traj``), which must be a full-grid record.
    """
    etr = energy_traj if energy_traj is not None else traj
    lo, hi = traj.profile.support
    if traj.x[0] > lo or traj.x[-1] < hi:
        raise CoverageError("trajectory window does not contain supp W")
    lhs = energy(etr.state(t2), etr.mode, etr.params) - energy(etr.state(t1), etr.mode, etr.params)
    rhs = float(fd.time_integral(balance_rhs_density(traj)[traj.slab(t1, t2)], traj.dt))
    return BalanceResult(lhs, rhs, abs(lhs - rhs))


def exponential_bound_check(report: EnergyReport, params: ModelParams,
                            tol: float = 1e-3) -> tuple[bool, float]:
    """E(t) <= exp(eps t) E(0) (1 + tol) for every recorded t >= 0.

    Returns (holds, worst slack) with slack measured in units of E(0).
    """
    k0 = report.index(0.0)
    e0 = report.e_total[k0]
    t = report.times[k0:]
    e = report.e_total[k0:]
    if e0 == 0:
        ok = bool(np.all(e == 0))
        return ok, 0.0
    slack = (np.exp(params.epsilon * t) * e0 * (1.0 + tol) - e) / e0
    worst = float(np.min(slack))
    return worst >= 0.0, worst


# -- Morawetz functionals -----------------------------------------------------


@dataclass(frozen=True)
class ClassicalBulk:
    weighted_form: float
    arctan_form: float
    weight_ratio_sup: float  # sup of x^2/(1+x^2) / arctan(x)^2 on the grid


def _slab(traj, t1, t2):
    if not traj.covers(t1, t2):
        raise CoverageError(f"trajectory does not cover [{t1}, {t2}]")
    return traj.slab(t1, t2)


def classical_densities(u, v, x, h: float, lam: float, axis: int = -1):
    """Weighted-form and arctan-form classical Morawetz integrands.

    weighted form: |u_x|^2/(1+x^2) + x^2/(1+x^2) (lam |u|^2/(1+|x|^3) + |u_t|^2/(1+x^2)) + |u|^2/(1+|x|^3)
    arctan form:  the same with x^2/(1+x^2) replaced by arctan(x)^2
    """
    ux = fd.derivative(u, h, 1, axis=axis)
    x2 = x * x
    cube = 1.0 + np.abs(x) ** 3
    au2 = np.abs(u) ** 2
    inner = lam * au2 / cube + np.abs(v) ** 2 / (1.0 + x2)
    common = np.abs(ux) ** 2 / (1.0 + x2) + au2 / cube
    return common + (x2 / (1.0 + x2)) * inner, common + np.arctan(x) ** 2 * inner


def weight_ratio_sup(x) -> float:
    """sup over nonzero grid points of (x^2/(1+x^2)) / arctan(x)^2; equals 1, approached at x -> 0."""
    x = np.asarray(x, dtype=float)
    x = x[x != 0]
    if not len(x):
        return 1.0
    return float(np.max(x * x / (1.0 + x * x) / np.arctan(x) ** 2))


def classical_morawetz_bulk(traj: Trajectory, t1: float, t2: float) -> ClassicalBulk:
    """Slab integrals of the weighted-form and arctan-form classical integrands for one mode."""
    sl = _slab(traj, t1, t2)
    thm, arc = classical_densities(traj.u[sl], traj.v[sl], traj.x, traj.h, traj.mode.eigenvalue, axis=1)

    def integrate(d):
        return float(fd.time_integral(fd.space_integral(d, traj.h, axis=1), traj.dt))

    return ClassicalBulk(integrate(thm), integrate(arc), weight_ratio_sup(traj.x))


@dataclass(frozen=True)
class RefinedBulk:
    value: float
    weighted_u2: float
    weighted_v2: float

    @property
    def cauchy_schwarz_ok(self) -> bool:
        return self.value**2 <= self.weighted_u2 * self.weighted_v2 * (1 + 1e-12) + 1e-300


def refined_densities(u, v, x):
    """|u| |u_t|, |u|^2 and |u_t|^2, each over 1 + |x|^3."""
    w = 1.0 / (1.0 + np.abs(x) ** 3)
    au, av = np.abs(u), np.abs(v)
    return w * au * av, w * au * au, w * av * av


def refined_morawetz_bulk(traj: Trajectory, t1: float, t2: float) -> RefinedBulk:
    """Slab integral of |u| |u_t| / (1 + |x|^3) with its Cauchy-Schwarz factors."""
    sl = _slab(traj, t1, t2)

    def integrate(d):
        return float(fd.time_integral(fd.space_integral(d, traj.h, axis=1), traj.dt))

    return RefinedBulk(*(integrate(d) for d in refined_densities(traj.u[sl], traj.v[sl], traj.x)))


def gen_energy(state: ModeState, ms: MultiplierSet) -> float:
    """int Re(f conj(u_x) v) + Re(q conj(u) v) dx."""
    x = state.x
    h = float(x[1] - x[0])
    ux = fd.derivative(state.u, h, 1)
    dens = np.real(ms.f(x) * np.conj(ux) * state.v) + np.real(ms.q(x) * np.conj(state.u) * state.v)
    return float(fd.space_integral(dens, h))


def gen_energy_constant(ms: MultiplierSet, mode: Mode, params: ModelParams, x) -> float:
    """C with |gen_energy| <= C * energy: sup|f| + sup |q| / sqrt(V (l(l+1)+N)).

    The first term bounds the f part by Cauchy-Schwarz against |u_x|^2 and
    |v|^2, the second the q part against |v|^2 and the potential term.
    """
    x = np.asarray(x, dtype=float)
    c = mode_equation_coefficient(params, mode, x)
    return float(np.max(np.abs(ms.f(x))) + np.max(np.abs(ms.q(x)) / np.sqrt(c)))


def i_functional(traj: Trajectory, t_horizon: float) -> float:
    """int_{-2}^{T+2} int_{-2}^{2} x^2 |u_t|^2 + |u_x|^2 + |u|^2 dx dt for one mode."""
    T = float(t_horizon)
    sl = _slab(traj, -2.0, T + 2.0)
    if traj.x[0] > -2.0 or traj.x[-1] < 2.0:
        raise CoverageError("trajectory window must contain |x| <= 2")
    u, v = traj.u[sl], traj.v[sl]
    ux = fd.derivative(u, traj.h, 1, axis=1)
    inside = np.abs(traj.x) <= 2.0 + 1e-12
    x = traj.x[inside]
    dens = (x * x * np.abs(v[:, inside]) ** 2 + np.abs(ux[:, inside]) ** 2 + np.abs(u[:, inside]) ** 2)
    return float(fd.time_integral(fd.space_integral(dens, traj.h, axis=1), traj.dt))


@dataclass
class MorawetzReport:
    classical_bulk: float
    arctan_bulk: float
    refined_bulk: float
    i_functional: float
    gen_energy: np.ndarray
    empirical_constants: dict[str, float]


def empirical_ratio(value: float, denominator: float) -> float:
    return value / denominator if denominator > 0 else math.nan


PROBE_NAMES = ("energy", "noether", "balance_rhs", "classical", "arctan",
               "refined", "refined_u2", "refined_v2", "gen_energy")


def mode_probes(mode: Mode, params: ModelParams, profile: PotentialProfile, x: np.ndarray,
                ms: MultiplierSet | None = None, names=PROBE_NAMES) -> dict:
    """Spatial integrals over the full grid, as functions of (u, v), for solver probes.

    ``classical``, ``arctan``, ``refined*`` and ``balance_rhs`` are densities in
    time; integrate them over a slab to get the bulk quantities.  ``names``
    selects a subset.  Each probe is a trapezoid-weighted dot product against
    weights computed once here; pointwise squares are shared between probes
    evaluated on the same state.
    """
    unknown = set(names) - set(PROBE_NAMES)
    if unknown:
        raise ValueError(f"unknown probes {sorted(unknown)}")
    ms = ms or classical_multiplier(params.delta)
    x = np.asarray(x, dtype=float)
    h = float(x[1] - x[0])
    lam = mode.eigenvalue
    tw = np.full(len(x), h)
    tw[0] = tw[-1] = 0.5 * h
    c = mode_equation_coefficient(params, mode, x)
    W = potential_w(profile, x)
    x2 = x * x
    cube = 1.0 + np.abs(x) ** 3
    a2 = np.arctan(x) ** 2
    w_ux = tw / (1.0 + x2)
    thm_u = tw * (1.0 / cube + x2 / (1.0 + x2) * lam / cube)
    thm_v = tw * x2 / (1.0 + x2) ** 2
    arc_u = tw * (1.0 / cube + a2 * lam / cube)
    arc_v = tw * a2 / (1.0 + x2)
    w_ref = tw / cube
    w_bal = -params.epsilon * W * tw
    w_f, w_q = tw * ms.f(x), tw * ms.q(x)
    memo = {"key": None}

    def sq(u, v):
        if memo["key"] is None or memo["key"][0] is not u or memo["key"][1] is not v:
            ux = fd.derivative(u, h, 1)
            au2, av2 = (u.real * u.real + u.imag * u.imag), (v.real * v.real + v.imag * v.imag)
            memo.update(key=(u, v), ux=ux, au2=au2, av2=av2,
                        aux2=ux.real * ux.real + ux.imag * ux.imag, auv=np.sqrt(au2 * av2))
        return memo

    def energy_fn(u, v):
        m = sq(u, v)
        return float(0.5 * (tw @ (m["av2"] + _dirichlet_form(u, h) + c * m["au2"])))

    def noether_fn(u, v):
        return noether_charge(ModeState(u, v, 0.0, x), mode, params, profile)

    def balance_fn(u, v):
        return float(w_bal @ np.imag(np.conj(v) * u))

    def classical_fn(u, v):
        m = sq(u, v)
        return float(w_ux @ m["aux2"] + thm_u @ m["au2"] + thm_v @ m["av2"])

    def arctan_fn(u, v):
        m = sq(u, v)
        return float(w_ux @ m["aux2"] + arc_u @ m["au2"] + arc_v @ m["av2"])

    def refined_fn(key):
        return lambda u, v: float(w_ref @ sq(u, v)[key])

    def gen_fn(u, v):
        m = sq(u, v)
        return float(w_f @ np.real(np.conj(m["ux"]) * v) + w_q @ np.real(np.conj(u) * v))

    table = {"energy": energy_fn, "noether": noether_fn, "balance_rhs": balance_fn,
             "classical": classical_fn, "arctan": arctan_fn, "refined": refined_fn("auv"),
             "refined_u2": refined_fn("au2"), "refined_v2": refined_fn("av2"), "gen_energy": gen_fn}
    return {name: table[name] for name in names}
